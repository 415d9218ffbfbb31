"""Experiment runners: each kind computes CSV tables, then judges them.

Judging reads only the emitted tables and the experiment parameters, so the
pass/fail summary can be recomputed from the CSV files alone.
"""

import csv
import io
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import counterexamples as cx
from . import estimates as est
from . import solver as sv
from .duhamel import Coefficients, a2_bands, a3_bands
from .errors import KdvLabError
from .norms import h_sa_norm
from .spectral import PeriodicGrid

CSV_VERSION = "v1"


@dataclass
class Table:
    columns: tuple
    rows: list = field(default_factory=list)

    def column(self, name):
        i = self.columns.index(name)
        return [r[i] for r in self.rows]

    def to_csv(self, title):
        buf = io.StringIO()
        buf.write(f"# kdv5lab {title} {CSV_VERSION}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([_fmt(v) for v in row])
        return buf.getvalue()


@dataclass
class Check:
    name: str
    value: float
    threshold: str
    passed: bool


@dataclass
class ReportBundle:
    id: str
    kind: str
    tables: dict
    checks: list
    notes: list
    seconds: float = 0.0

    @property
    def passed(self):
        return bool(self.checks) and all(c.passed for c in self.checks)

    def summary_rows(self):
        return [(self.id, self.kind, c.name, c.value, c.threshold, c.passed) for c in self.checks]

    def write(self, out_dir):
        d = os.path.join(out_dir, self.id)
        os.makedirs(d, exist_ok=True)
        for name, table in self.tables.items():
            with open(os.path.join(d, f"{name}.csv"), "w", encoding="utf-8", newline="") as fh:
                fh.write(table.to_csv(f"{self.kind}.{name}"))
        summary = Table(SUMMARY_COLUMNS, self.summary_rows())
        with open(os.path.join(d, "summary.csv"), "w", encoding="utf-8", newline="") as fh:
            fh.write(summary.to_csv("summary"))
        if self.notes:
            with open(os.path.join(d, "notes.txt"), "w", encoding="utf-8") as fh:
                fh.write("\n".join(self.notes) + "\n")
        return d


SUMMARY_COLUMNS = ("id", "kind", "check", "value", "threshold", "passed")


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _guard(notes, what, fn, *args, **kw):
    """fn(*args) or nan when it raises a package error (noted, run continues)."""
    try:
        return fn(*args, **kw)
    except KdvLabError as exc:
        notes.append(f"{what}: {type(exc).__name__}: {exc}")
        return math.nan


def _slope(table, x="N", y="norm"):
    pts = list(zip(table.column(x), table.column(y)))
    try:
        return cx.growth_fit(pts)[0]
    except KdvLabError:
        return math.nan


def _check(name, value, op, bound):
    if op == ">=":
        ok = value >= bound
    elif op == "<=":
        ok = value <= bound
    else:
        raise ValueError(op)
    return Check(name, float(value), f"{op} {bound!r}", bool(ok and math.isfinite(value)))


# ---------------------------------------------------------------------------
# quadratic and cubic growth


def _c23(p):
    return Coefficients(0.0, p["c2"], p["c3"])


def compute_a2_growth(p, notes):
    t = Table(("N", "norm"))
    for N in p["N"]:
        data = cx.phi_n_c2(N, p["s"], p["symmetric"])
        val = _guard(notes, f"N={N}", lambda: h_sa_norm(a2_bands(data, p["t"], _c23(p)),
                                                          p["s"], p["a"]))
        t.rows.append((N, val))
    return {"norms": t}


def judge_a2_growth(p, tables):
    return [_check("slope", _slope(tables["norms"]), ">=", p["min_slope"])]


def compute_a2_inflation(p, notes):
    t = Table(("N", "value", "value_over_delta2", "data_norm"))
    d2 = p["delta"] ** 2
    for N in p["N"]:
        data = cx.phi_n_delta(N, p["delta"], p["a"])
        val = _guard(notes, f"N={N}", lambda: h_sa_norm(a2_bands(data, p["t"], _c23(p)),
                                                          p["s"], p["a"]))
        dn = h_sa_norm(data, p["s"] + p["data_shift"], p["a"])
        t.rows.append((N, val, val / d2, dn))
    return {"norms": t}


def judge_a2_inflation(p, tables):
    t = tables["norms"]
    floor = min(t.column("value_over_delta2"))
    ds = _slope(t, "N", "data_norm")
    return [_check("min_value_over_delta2", floor, ">=", p["floor"]),
            _check("data_norm_slope", ds, "<=", p["max_data_slope"]),
            _check("data_slope_rate_gap", abs(ds - p["rate"]), "<=", p["rate_tol"])]


def psi_threshold(s, a, margin):
    """max{-2(s + 2a + 2), 4(a + 1/4)} - margin."""
    return max(-2.0 * (s + 2.0 * a + 2.0), 4.0 * (a + 0.25)) - margin


def compute_psi_growth(p, notes):
    t = Table(("N", "norm"))
    for N in p["N"]:
        data = cx.psi_n(N, p["s"], p["a"])
        val = _guard(notes, f"N={N}", lambda: h_sa_norm(a2_bands(data, p["t"], _c23(p)),
                                                          p["s"], p["a"]))
        t.rows.append((N, val))
    return {"norms": t}


def judge_psi_growth(p, tables):
    bound = p["min_slope"]
    if math.isnan(bound):
        bound = psi_threshold(p["s"], p["a"], p["margin"])
    return [_check("slope", _slope(tables["norms"]), ">=", bound)]


def compute_a3_growth(p, notes):
    t = Table(("N", "norm", "data_norm"))
    co = Coefficients(p["c1"], p["c2"], p["c3"])
    for N in p["N"]:
        data = cx.phi_n_cubic(N, p["s"])
        val = _guard(notes, f"N={N}", lambda: h_sa_norm(a3_bands(data, p["t"], co, tol=p["tol"]),
                                                          p["s"], p["a"]))
        t.rows.append((N, val, h_sa_norm(data, p["s"], p["a"])))
    return {"norms": t}


def judge_a3_growth(p, tables):
    m = _slope(tables["norms"])
    return [_check("slope_lower", m, ">=", p["slope_lo"]),
            _check("slope_upper", m, "<=", p["slope_hi"])]


# ---------------------------------------------------------------------------
# appendix geometry and bilinear sweeps


def compute_be3_sweep(p, notes):
    ex = p["example"]
    rows = Table(("example_id", "s", "a", "b", "N", "ratio"))
    pairs = {N: cx.example_pair(ex, N)[:2] for N in p["N"]}
    for b in p["b"]:
        for N in p["N"]:
            r = _guard(notes, f"b={b} N={N}", est.be3_ratio, *pairs[N], p["s"], p["a"], b)
            rows.rows.append((ex, p["s"], p["a"], b, N, r))
    return {"ratios": rows}


def sweep_slopes(table):
    out = []
    for b in sorted(set(table.column("b"))):
        pts = [(r[4], r[5]) for r in table.rows if r[3] == b]
        try:
            out.append((b, cx.growth_fit(pts)[0]))
        except KdvLabError:
            out.append((b, math.nan))
    return out


def judge_be3_sweep(p, tables):
    slopes = sweep_slopes(tables["ratios"])
    target = p["target"]
    if math.isnan(target):
        target = est.threshold(p["example"], p["s"], p["a"])
    crossing = est.sign_change(slopes)
    return [_check("crossing_gap", abs(crossing - target), "<=", p["window"])]


def _examples(p):
    return [e.strip() for e in p["examples"].split(",") if e.strip()]


def supplemental_region(example_id, N):
    """Ex.2 output window centred where P1 * Q peaks (xi = N + 2 N^-3/2)."""
    if example_id != "2":
        raise KeyError(example_id)
    r = cx.appendix_rects(N)["R2"]
    w = float(N) ** -1.5
    return cx.ShearedRect.at(r.xi_anchor, 2.0 * w, 0.25 * w, r.shear_slope, r.shear_offset,
                             r.tau_halfheight)


def compute_appendix_conv(p, notes):
    mins = Table(("example_id", "N", "region", "min_value", "min_over_w"))
    grid = Table(("example_id", "N", "cells", "deviation"))
    for ex in _examples(p):
        for N in p["N"]:
            f, g, region = cx.example_pair(ex, N)
            surf = est.convolve_exact(f, g)
            w = float(N) ** -1.5
            m = surf.region_minimum(region)
            mins.rows.append((ex, N, cx.EXAMPLE_PAIRS[ex][2], m, m / w))
            if ex == "2":
                m2 = surf.region_minimum(supplemental_region(ex, N))
                mins.rows.append((ex, N, "R2+2w", m2, m2 / w))
        for N in p["grid_N"]:
            grid.rows.append((ex, N, p["cells"], est.grid_vs_exact(ex, N, p["cells"])[0]))
    return {"minima": mins, "grid": grid}


def judge_appendix_conv(p, tables):
    checks = []
    t = tables["minima"]
    for ex in _examples(p):
        for region in sorted({r[2] for r in t.rows if r[0] == ex}):
            worst = min(r[4] for r in t.rows if r[0] == ex and r[2] == region)
            checks.append(_check(f"ex{ex}_{region}_min_over_w", worst, ">=", p["c_min"]))
    dev = max(tables["grid"].column("deviation"))
    checks.append(_check("grid_deviation", dev, "<=", p["max_dev"]))
    return checks


# ---------------------------------------------------------------------------
# measure bounds and multiplier norms


def compute_measure_check(p, notes):
    lemma = p["lemma"]
    if lemma not in ("m", "m1"):
        raise KdvLabError(f"lemma must be 'm' or 'm1', got {lemma!r}")
    out = {}
    for name, res in (("areas", p["resolution"]), ("areas_refined", 2 * p["resolution"])):
        rows, _ = est.measure_suite(p["count"], p["seed"], res, lemma)
        out[name] = Table(("config_id", "area", "bound", "ratio"), rows)
    return out


def judge_measure_check(p, tables):
    c1 = max(tables["areas"].column("ratio"))
    c2 = max(tables["areas_refined"].column("ratio"))
    return [_check("fitted_constant", c1, "<=", 1e6),
            _check("constant_refinement_change", abs(c2 - c1) / c1, "<=", p["stability"])]


def compute_multiplier_check(p, notes):
    rng = np.random.default_rng(p["seed"])
    k = p["k"]
    tt = Table(("instance", "n", "lhs", "rhs", "rel_gap"))
    comp = Table(("instance", "n", "k1", "k2", "lhs", "rhs"))
    for i in range(p["instances"]):
        n = int(rng.integers(3, p["n_max"] + 1))
        inst = est.random_multiplier(n, k + 1, rng)
        lhs, rhs, gap = est.ttstar_check(inst, p["restarts"], seed=int(rng.integers(2**31)))
        tt.rows.append((i, n, lhs, rhs, gap))
        k1, k2 = (int(v) for v in rng.integers(1, 3, size=2))
        n2 = int(rng.integers(3, 9))
        m1 = est.random_multiplier(n2, k1 + 1, rng)
        m2 = est.random_multiplier(n2, k2 + 1, rng)
        l2, r2 = est.composition_check(m1, m2, p["restarts"], seed=int(rng.integers(2**31)))
        comp.rows.append((i, n2, k1, k2, l2, r2))
    return {"ttstar": tt, "composition": comp}


def judge_multiplier_check(p, tables):
    gap = max(tables["ttstar"].column("rel_gap"))
    comp = tables["composition"]
    excess = max(l / r - 1.0 for l, r in zip(comp.column("lhs"), comp.column("rhs")))
    return [_check("ttstar_max_rel_gap", gap, "<=", p["gap_tol"]),
            _check("composition_max_excess", excess, "<=", 1e-9)]


# ---------------------------------------------------------------------------
# solver runs


def _preset_cfg(p, grid, coeffs, dt=None, **kw):
    return sv.SolverConfig(grid, dt or p["dt"], p["T"], coeffs, **kw)


def compute_solve(p, notes):
    grid, u0 = sv.preset_data(p["seed"], p["n"], p["length"], p["modes"], p["amplitude"])
    cs = (p["c1"], p["c2"], p["c3"])
    if any(math.isnan(c) for c in cs):
        if not all(math.isnan(c) for c in cs):
            raise KdvLabError("give all of c1, c2, c3 or none")
        co = Coefficients.integrable(p["alpha"])
    else:
        co = Coefficients(*cs, allow_degenerate=True)
    cfg = _preset_cfg(p, grid, co, save_every=p["save_every"], monitor_a=p["monitor_a"])
    traj = sv.evolve(u0, cfg)
    notes.extend(traj.warnings)
    t = Table(sv.MONITOR_COLUMNS, list(zip(traj.times, traj.l2, traj.h1, traj.h1a)))
    return {"monitors": t}


def judge_solve(p, tables):
    t = tables["monitors"]
    final = t.column("t")[-1]
    return [_check("reached_T", final, ">=", p["T"] * (1 - 1e-12))]


def compute_conservation(p, notes):
    grid = sv.PeriodicGrid(p["length"], p["n"])
    u0 = sv.lax_profile(grid, p["amplitude"])
    t = Table(("variant", "max_l2_drift", "max_h1_drift", "final_tail"))
    for name, co in (("preset", Coefficients.integrable(p["alpha"])),
                     ("unsquared_c1", Coefficients.integrable_unsquared(p["alpha"]))):
        traj = sv.evolve(u0, _preset_cfg(p, grid, co, save_every=10))
        notes.extend(f"{name}: {w}" for w in traj.warnings)
        t.rows.append((name, float(sv.conserved_l2(traj).max()), float(sv.h1_drift(traj).max()),
                       sv.spectral_tail(traj.final, grid)))
    return {"drifts": t}


def judge_conservation(p, tables):
    rows = {r[0]: r for r in tables["drifts"].rows}
    return [_check("preset_l2_drift", rows["preset"][1], "<=", p["l2_budget"]),
            _check("preset_h1_drift", rows["preset"][2], "<=", p["h1_budget"]),
            _check("foil_h1_drift", rows["unsquared_c1"][2], ">=", p["foil_min"])]


def compute_apriori(p, notes):
    t = Table(("member", "dt", "lhs", "rhs_bracket", "ratio"))
    co = Coefficients.integrable(p["alpha"])
    rng = np.random.default_rng(p["seed"])
    seeds = [int(v) for v in rng.integers(2**31, size=p["members"])]
    for i, seed in enumerate(seeds):
        grid, u0 = sv.preset_data(seed, p["n"], p["length"], p["modes"], p["amplitude"])
        for dt in (p["dt"], 0.5 * p["dt"]):
            traj = sv.evolve(u0, _preset_cfg(p, grid, co, dt=dt, save_every=10))
            lhs, rhs, ratio = sv.apriori_check(traj, p["a"], p["T"])
            t.rows.append((i, dt, lhs, rhs, ratio))
    return {"ratios": t}


def judge_apriori(p, tables):
    t = tables["ratios"]
    coarse = max(r[4] for r in t.rows if r[1] == p["dt"])
    fine = max(r[4] for r in t.rows if r[1] != p["dt"])
    return [_check("max_ratio", coarse, "<=", 1e6),
            _check("refinement_change", abs(fine - coarse) / coarse, "<=", p["stability"])]


def compute_scaling(p, notes):
    t = Table(("member", "lambda", "lhs", "rhs", "holds"))
    rng = np.random.default_rng(p["seed"])
    grid = sv.PeriodicGrid(p["length"], p["n"])
    for i in range(p["members"]):
        u0 = sv.random_smooth_data(grid, rng, modes=p["modes"], amplitude=1.0)
        for lam in p["lambdas"]:
            lhs, rhs, ok = sv.scaling_check(u0, grid, lam, p["s"], p["a"])
            t.rows.append((i, lam, lhs, rhs, ok))
    return {"norms": t}


def judge_scaling(p, tables):
    t = tables["norms"]
    worst = max(l / r for l, r in zip(t.column("lhs"), t.column("rhs")))
    return [_check("max_lhs_over_rhs", worst, "<=", 1.0 + 1e-12)]


RUNNERS = {
    "solve": (compute_solve, judge_solve),
    "a2-growth": (compute_a2_growth, judge_a2_growth),
    "a2-inflation": (compute_a2_inflation, judge_a2_inflation),
    "psi-growth": (compute_psi_growth, judge_psi_growth),
    "a3-growth": (compute_a3_growth, judge_a3_growth),
    "be3-sweep": (compute_be3_sweep, judge_be3_sweep),
    "appendix-conv": (compute_appendix_conv, judge_appendix_conv),
    "measure-check": (compute_measure_check, judge_measure_check),
    "multiplier-check": (compute_multiplier_check, judge_multiplier_check),
    "conservation": (compute_conservation, judge_conservation),
    "apriori": (compute_apriori, judge_apriori),
    "scaling": (compute_scaling, judge_scaling),
}


def run(spec):
    """Run one experiment; package errors become a failed check, not a crash."""
    compute, judge = RUNNERS[spec.kind]
    notes = []
    start = time.perf_counter()
    try:
        tables = compute(spec.params, notes)
        checks = judge(spec.params, tables)
    except KdvLabError as exc:
        notes.append(f"{type(exc).__name__}: {exc}")
        tables, checks = {}, [Check("completed", math.nan, "no error", False)]
    return ReportBundle(spec.id, spec.kind, tables, checks, notes, time.perf_counter() - start)


_TEXT_COLUMNS = {"id", "kind", "check", "threshold", "variant", "region", "example_id"}


def _parse_cell(text):
    if text in ("true", "false"):
        return text == "true"
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def read_table(path):
    """Load a CSV written by Table.to_csv (header comment row skipped)."""
    with open(path, encoding="utf-8", newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    cols = tuple(rows[0])
    keep = [c in _TEXT_COLUMNS for c in cols]
    return Table(cols, [tuple(c if k else _parse_cell(c) for c, k in zip(r, keep))
                        for r in rows[1:]])


def rejudge(spec, out_dir):
    """Recompute the checks of ``spec`` from the CSV files under out_dir/spec.id."""
    d = os.path.join(out_dir, spec.id)
    tables = {os.path.splitext(f)[0]: read_table(os.path.join(d, f))
              for f in sorted(os.listdir(d)) if f.endswith(".csv") and f != "summary.csv"}
    return RUNNERS[spec.kind][1](spec.params, tables)
