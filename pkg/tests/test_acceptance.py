"""Acceptance criteria, one test each. Every test prints a single PASS/FAIL line.

Most criteria run the matching experiment from configs/acceptance.ini, so the
numbers here are the ones the ``suite`` command reports.
"""

import math
import os
import time

import numpy as np
import pytest

from kdv5lab.config import load_config
from kdv5lab.duhamel import Coefficients, a2_duhamel, a2_spectral
from kdv5lab.experiments import psi_threshold, run
from kdv5lab.norms import h_sa_norm
from kdv5lab.solver import (PRESET_LENGTH, SolverConfig, conserved_l2, evolve, lax_profile,
                            random_smooth_data)
from kdv5lab.spectral import (FrequencyGrid, PeriodicGrid, SpectralField, apply_propagator,
                              forward_transform, inverse_transform)

CONFIG = os.path.join(os.path.dirname(__file__), "..", "configs", "acceptance.ini")
SPECS = {s.id: s for s in load_config(CONFIG)}


@pytest.fixture
def report(capsys):
    def emit(number, title, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {number:2d}] {'PASS' if ok else 'FAIL'} {title}: {detail}")
        return ok
    return emit


def _checks(bundle):
    return ", ".join(f"{c.name}={c.value:.4g} ({c.threshold})"
                     + ("" if c.passed else " FAIL") for c in bundle.checks)


def _run_ids(*ids):
    return [run(SPECS[i]) for i in ids]


def test_criterion_01_a2_oracle_equivalence(report):
    start = time.perf_counter()
    co = Coefficients(0.0, 1.0, 2.0)
    grid = FrequencyGrid(0.05, 64)
    xi = grid.nodes
    data = {
        "gaussian": SpectralField(grid, np.exp(-xi ** 2), hermitian=True),
        "band-limited": SpectralField(grid, np.where(np.abs(xi) < 1.5,
                                                     np.cos(math.pi * xi / 3) ** 2, 0.0),
                                      hermitian=True),
    }
    worst = 0.0
    for u in data.values():
        for t in (0.05, 0.1, 0.5):
            a, b = a2_spectral(u, t, co), a2_duhamel(u, t, co)
            worst = max(worst, h_sa_norm(a - b, 0, 0) / h_sa_norm(b, 0, 0))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-6 and elapsed <= 30.0
    assert report(1, "A2 spectral vs Duhamel", ok,
                  f"max rel diff {worst:.3g} (<= 1e-6), {elapsed:.1f} s (<= 30 s)")


def test_criterion_02_c2_failure_rate(report):
    (b,) = _run_ids("growth-c2")
    assert report(2, "A2(phi_N) growth slope", b.passed, _checks(b))


def test_criterion_03_norm_inflation_floor(report):
    (b,) = _run_ids("inflation")
    assert report(3, "norm inflation floor and data decay", b.passed, _checks(b))


def test_criterion_04_psi_rate(report):
    b, grow = _run_ids("psi-rate", "psi-rate-growing")
    slope = b.checks[0].value
    formula = psi_threshold(-0.5, -0.5, 0.15)
    literal = 1.0 - 0.15
    detail = (f"slope {slope:.4g}; stated bound {literal} "
              f"{'met' if slope >= literal else 'not met'}; "
              f"formula bound {formula:.4g} {'met' if b.passed else 'not met'}; "
              f"(s,a)=(-1.5,-0.5): {_checks(grow)}")
    assert report(4, "psi_N rate", slope >= literal, detail)


@pytest.mark.slow
def test_criterion_05_cubic_rate(report):
    (b,) = _run_ids("cubic-rate")
    assert report(5, "A3(phi_N) rate", b.passed, f"{_checks(b)}, {b.seconds:.0f} s")


def test_criterion_06_appendix_geometry(report):
    (b,) = _run_ids("appendix")
    assert report(6, "appendix convolution bounds", b.passed, _checks(b))


def test_criterion_07_necessary_condition_thresholds(report):
    bundles = _run_ids("sweep-ex2", "sweep-ex3b")
    ok = all(b.passed and b.seconds <= 300.0 for b in bundles)
    detail = "; ".join(f"{b.id}: {_checks(b)}, {b.seconds:.1f} s (<= 300 s)" for b in bundles)
    assert report(7, "be3 slope sign change", ok, detail)


def test_criterion_08_measure_bounds(report):
    bundles = _run_ids("measure-m", "measure-m1")
    ok = all(b.passed for b in bundles)
    assert report(8, "measure bounds", ok, "; ".join(f"{b.id}: {_checks(b)}" for b in bundles))


def test_criterion_09_ttstar_identity(report):
    (b,) = _run_ids("multipliers")
    assert report(9, "TT* identity and composition", b.passed, _checks(b))


def test_criterion_10_conservation(report):
    (b,) = _run_ids("conservation")
    assert report(10, "Lax preset conservation", b.passed, _checks(b))


def test_criterion_11_solver_order(report):
    g = PeriodicGrid(PRESET_LENGTH, 256)
    u0 = lax_profile(g)
    lax = Coefficients.integrable(5.0)
    runs = [evolve(u0, SolverConfig(g, dt, 0.01, lax, save_every=10 ** 6)).final
            for dt in (2e-5, 1e-5, 5e-6)]
    ratio = np.abs(runs[0] - runs[1]).max() / np.abs(runs[1] - runs[2]).max()
    g2 = PeriodicGrid(2 * math.pi, 64)
    v0 = random_smooth_data(g2, np.random.default_rng(0), modes=8, amplitude=1.0)
    traj = evolve(v0, SolverConfig(g2, 1e-3, 0.05, Coefficients.linear(), save_every=50))
    exact = inverse_transform(apply_propagator(forward_transform(v0, g2), 0.05), g2)
    lin = float(np.abs(traj.final - exact).max())
    ok = ratio >= 11 and lin <= 1e-10 and conserved_l2(traj).max() <= 1e-12
    assert report(11, "solver order", ok,
                  f"dt-halving ratio {ratio:.3g} (>= 11), linear-limit error {lin:.3g} (<= 1e-10)")


def test_criterion_12_scaling_inequality(report):
    (b,) = _run_ids("scaling")
    assert report(12, "scaling inequality", b.passed, _checks(b))


def test_criterion_13_apriori_bound(report):
    (b,) = _run_ids("apriori")
    assert report(13, "a-priori ratio", b.passed, _checks(b))


def test_criterion_14_norm_invariants(report):
    import test_norms as tn

    suite = [tn.test_homogeneity, tn.test_block_additivity_high_part,
             tn.test_z_norm_decomposition, tn.test_embedding_chain_sampled,
             tn.test_admissibility_truth_table, tn.test_monotonicity]
    failed = []
    for fn in suite:
        try:
            fn()
        except AssertionError as exc:
            failed.append(f"{fn.__name__}: {exc}")
    ok = not failed
    detail = f"{len(suite) - len(failed)}/{len(suite)} invariant groups pass"
    if failed:
        detail += "; " + "; ".join(failed)
    assert report(14, "norm-space invariants", ok, detail)
