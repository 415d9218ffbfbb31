import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from kdv5lab.bands import Band, BandSpectrum
from kdv5lab.errors import DIVERGENT, InvalidParameter
from kdv5lab.norms import (DyadicIndex, NormKind, WeightParams, admissible, bracket,
                           dual_l2l1_norm, dyadic_index, h_sa_norm, norm_row, p_high, p_low,
                           region_classify, s_a, x21_norm, xl_a_norm, xl_branch, xsab_norm,
                           z_norm)
from kdv5lab.spectral import (FrequencyGrid, SpaceTimeField, SpaceTimeGrid, SpectralField,
                              UniformAxis)


def _cell(xi0, tau0, amp=1.0, dx=1e-3, dt=1e-3):
    """Field with a single nonzero node at (tau0, xi0)."""
    grid = SpaceTimeGrid(UniformAxis(dx, 1, xi0), UniformAxis(dt, 1, tau0))
    vals = np.zeros(grid.shape, dtype=complex)
    vals[1, 1] = amp
    return SpaceTimeField(grid, vals)


def _box(xi_lo, xi_hi, tau_lo, tau_hi, M=100):
    """Indicator of a rectangle with cell midpoints as nodes."""
    nx = 2 * M + 1
    xi = UniformAxis((xi_hi - xi_lo) / nx, M, 0.5 * (xi_lo + xi_hi))
    tau = UniformAxis((tau_hi - tau_lo) / nx, M, 0.5 * (tau_lo + tau_hi))
    grid = SpaceTimeGrid(xi, tau)
    return SpaceTimeField(grid, np.ones(grid.shape))


def _random_st(rng, xi_half=3.0, tau_half=40.0, M=24, low_only=False, high_only=False):
    xi = UniformAxis(xi_half / M, M, 0.0)
    tau = UniformAxis(tau_half / M, M, 0.0)
    grid = SpaceTimeGrid(xi, tau)
    vals = rng.normal(size=grid.shape) + 1j * rng.normal(size=grid.shape)
    f = SpaceTimeField(grid, vals)
    f = f.masked(grid.mesh()[1] != 0)
    if low_only:
        f = p_low(f)
    if high_only:
        f = f.masked(np.abs(grid.mesh()[1]) > 1.0)
    return f


def test_dyadic_index_examples():
    assert dyadic_index(0.0, 0.0) == DyadicIndex(0, 0)
    assert dyadic_index(7.0 ** 5, 7.0) == DyadicIndex(2, 0)
    assert dyadic_index(100.0, 0.0).k == 6


def test_region_classify_examples():
    assert region_classify(40.0, 0.125) == "D1"
    assert region_classify(10.0, 0.125) == "D2"
    assert region_classify(0.0, 2.0) == "high"
    assert region_classify(32.0, 0.125) == "D1"
    assert region_classify(1e300, 0.0) == "D2"


def test_admissibility_truth_table():
    table = {
        (-0.25, -0.5): True,
        (-0.25, -0.875): False,
        (0.0, -1.0): True,
        (-0.25, -0.25): True,
        (-0.3, -0.5): False,
        (0.0, -1.5): False,
        (1.0, -1.49): True,
        (0.9, -1.49): False,
        (0.0, -0.2): False,
        (-0.2, -0.875): True,
    }
    for (s, a), want in table.items():
        assert admissible(s, a) is want, (s, a)
    assert s_a(-0.5) == -1.0


def test_h_sa_examples():
    unit = BandSpectrum((Band.from_interval(1.0, 2.0, 1.0),))
    assert abs(h_sa_norm(unit, 0.0, 0.0) - 1.0) < 1e-12
    origin = BandSpectrum((Band.from_interval(0.0, 1.0, 1.0),))
    assert h_sa_norm(origin, 0.0, -0.75) == DIVERGENT
    assert math.isfinite(h_sa_norm(origin, 0.0, -0.4))
    grid = FrequencyGrid(0.01, 200)
    f = SpectralField(grid, np.ones(grid.size))
    assert h_sa_norm(f, 0.0, -0.5) == DIVERGENT


def test_h_sa_grid_origin_cell_matches_closed_form():
    # |xi|^(2a) integrated exactly over the origin cell
    grid = FrequencyGrid(0.1, 10)
    vals = np.zeros(grid.size)
    vals[10] = 1.0
    f = SpectralField(grid, vals)
    a = -0.25
    want = math.sqrt(2 * 0.05 ** (2 * a + 1) / (2 * a + 1))
    assert abs(h_sa_norm(f, a, a) - want) < 1e-14


def test_xsab_examples():
    grid = SpaceTimeGrid(UniformAxis(0.5, 1), UniformAxis(0.5, 1))
    assert xsab_norm(SpaceTimeField(grid, np.zeros(grid.shape)), 0, 0, 0) == 0.0
    f = _cell(1.0, 0.0, dx=0.01, dt=0.02)
    assert abs(xsab_norm(f, 0, 0, 0) - math.sqrt(0.01 * 0.02)) < 1e-15
    box = _box(1.0, 2.0, 0.0, 1.0, M=150)
    ref, _ = integrate.dblquad(lambda tau, xi: bracket(tau - xi ** 5), 1, 2, 0, 1,
                               epsabs=0, epsrel=1e-10)
    assert abs(xsab_norm(box, 0, 0, 0.5) / math.sqrt(ref) - 1) < 1e-4


def test_x21_examples():
    # nodes (0, 0) and (5^5, 5) share k = 0 and sit in j = 0 and j = 2
    shift = 5.0 ** 5
    grid = SpaceTimeGrid(UniformAxis(5.0, 1, 0.0), UniformAxis(shift, 1, 0.0))
    unit = 1.0 / math.sqrt(grid.cell_area)
    vals = np.zeros(grid.shape, dtype=complex)
    vals[1, 1] = unit
    vals[2, 2] = unit
    assert abs(x21_norm(SpaceTimeField(grid, vals), 0.0) - math.sqrt(2.0)) < 1e-12
    # nodes (0, 0) and (5^5, 0) share j = 0 with different k; unit weighted mass each
    vals = np.zeros(grid.shape, dtype=complex)
    vals[1, 1] = unit
    vals[2, 1] = unit / math.sqrt(bracket(shift))
    assert abs(x21_norm(SpaceTimeField(grid, vals), 0.0) - 2.0) < 1e-12


def test_x21_single_block_bracket():
    xi0 = 5.0
    tau0 = xi0 ** 5 + 10.0
    f = _cell(xi0, tau0, amp=1 / math.sqrt(1e-6))
    assert dyadic_index(tau0, xi0) == DyadicIndex(2, 3)
    val = x21_norm(f, 0.0)
    assert 2 ** 1.5 <= val <= 4.0
    assert abs(val - math.sqrt(bracket(10.0))) < 1e-12


def test_xl_a_examples():
    grid = SpaceTimeGrid(UniformAxis(0.1, 2), UniformAxis(0.1, 2))
    zero = SpaceTimeField(grid, np.zeros(grid.shape))
    for a in (-0.25, -0.5, -0.875, -1.2):
        assert xl_a_norm(zero, WeightParams(s=1.0, a=a)) == 0.0
    xi0, tau0 = 0.1, 5.0 + 0.1 ** 5
    assert region_classify(tau0, xi0) == "D2"
    assert dyadic_index(tau0, xi0).k == 2
    for a, want in ((-0.25, 2 ** 1.5), (-0.5, 2 ** 1.2)):
        amp = 1.0 / (xi0 ** a * math.sqrt(1e-6))
        got = xl_a_norm(_cell(xi0, tau0, amp), WeightParams(s=0.0, a=a))
        assert abs(got - want) < 1e-12
    with pytest.raises(InvalidParameter):
        xl_a_norm(zero, WeightParams(s=0.0, a=-0.2))
    assert [xl_branch(a) for a in (-0.25, -0.5, -0.875, -1.2)] == [
        "quarter", "middle", "endpoint", "low"]


def test_weight_params_eps_bounds():
    with pytest.raises(InvalidParameter):
        WeightParams(s=-0.25, a=-0.875).resolved_eps1()
    with pytest.raises(InvalidParameter):
        WeightParams(s=0.0, a=-1.0, eps2=0.5).resolved_eps2()
    assert WeightParams(s=0.25, a=-1.0).resolved_eps1() == 0.25


def test_z_norm_decomposition():
    rng = np.random.default_rng(3)
    params = WeightParams(s=0.0, a=-0.5)
    hi = _random_st(rng, high_only=True).masked(
        np.abs(_random_st(rng).grid.mesh()[1]) >= 2.0)
    assert abs(z_norm(hi, params) - x21_norm(hi, 0.0)) < 1e-12 * x21_norm(hi, 0.0)
    lo = _random_st(rng).masked(np.abs(_random_st(rng).grid.mesh()[1]) <= 0.5)
    assert abs(z_norm(lo, params) - xl_a_norm(lo, params)) <= 1e-12 * xl_a_norm(lo, params)
    mixed = _random_st(rng).masked(np.abs(_random_st(rng).grid.mesh()[1]) != 1.0)
    pieces = x21_norm(p_high(mixed), 0.0) + xl_a_norm(p_low(mixed), params)
    assert abs(z_norm(mixed, params) - pieces) <= 1e-12 * pieces


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_block_additivity_high_part(seed):
    rng = np.random.default_rng(seed)
    f = _random_st(rng, xi_half=6.0, high_only=True)
    params = WeightParams(s=0.5, a=-0.5)
    _, xi = f.grid.mesh()
    j = np.floor(np.log2(bracket(xi))).astype(int)
    parts = sum(z_norm(f.masked(j == jj), params) ** 2 for jj in np.unique(j))
    total = z_norm(f, params) ** 2
    assert abs(total - parts) <= 1e-12 * total


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-5, 5).filter(lambda v: abs(v) > 1e-3))
def test_homogeneity(seed, lam):
    rng = np.random.default_rng(seed)
    f = _random_st(rng)
    g = f.with_values(lam * f.values)
    params = WeightParams(s=0.0, a=-0.5)
    for fn in (lambda h: xsab_norm(h, 0.0, -0.25, 0.5), lambda h: x21_norm(h, 0.5),
               lambda h: xl_a_norm(p_low(h), params), lambda h: z_norm(h, params),
               lambda h: dual_l2l1_norm(h, 0.0, -0.25)):
        assert abs(fn(g) - abs(lam) * fn(f)) <= 1e-12 * abs(lam) * fn(f)
    grid = FrequencyGrid(0.1, 30)
    sf = SpectralField(grid, rng.normal(size=grid.size))
    assert abs(h_sa_norm(sf.scaled(lam), 0.3, -0.3) - abs(lam) * h_sa_norm(sf, 0.3, -0.3)) \
        <= 1e-12 * abs(lam) * h_sa_norm(sf, 0.3, -0.3)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-1, 1), st.floats(0, 1))
def test_monotonicity(seed, b, db):
    rng = np.random.default_rng(seed)
    f = _random_st(rng)
    assert xsab_norm(f, 0.0, -0.25, b + db) >= xsab_norm(f, 0.0, -0.25, b)
    grid = FrequencyGrid(0.1, 40)
    vals = np.where(np.abs(grid.nodes) >= 1, rng.normal(size=grid.size), 0.0)
    sf = SpectralField(grid, vals)
    assert h_sa_norm(sf, b + db, -0.3) >= h_sa_norm(sf, b, -0.3)


def test_embedding_chain_sampled():
    rng = np.random.default_rng(7)
    eps = 0.05
    upper, lower = [], []
    for a in (-0.25, -0.5, -1.0):
        params = WeightParams(s=0.0, a=a)
        for _ in range(10):
            f = _random_st(rng)
            z = z_norm(f, params)
            upper.append(z / xsab_norm(f, 0.0, a, 0.75 + eps))
            lower.append(xsab_norm(f, 0.0, a, 0.375) / z)
    # fitted constants of both embeddings stay of order one
    assert max(upper) < 5.0
    assert max(lower) < 5.0


def test_dual_norm_examples():
    grid = SpaceTimeGrid(UniformAxis(0.5, 1), UniformAxis(0.5, 1))
    assert dual_l2l1_norm(SpaceTimeField(grid, np.zeros(grid.shape)), 0, 0) == 0.0
    box = _box(1.0, 2.0, 0.0, 1.0, M=150)
    inner = lambda xi: integrate.quad(lambda tau: 1 / bracket(tau - xi ** 5), 0, 1,
                                      epsabs=0, epsrel=1e-12)[0]
    ref, _ = integrate.quad(lambda xi: inner(xi) ** 2, 1, 2, epsabs=0, epsrel=1e-10)
    assert abs(dual_l2l1_norm(box, 0, 0) / math.sqrt(ref) - 1) < 1e-4


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 0.4))
def test_dual_norm_schwarz_bound(seed, eps):
    rng = np.random.default_rng(seed)
    f = _random_st(rng)
    tau, xi = f.grid.mesh()
    const = math.sqrt(np.max(np.sum(bracket(tau - xi ** 5) ** (-1 - 2 * eps), axis=0))
                      * f.grid.tau.spacing)
    lhs = dual_l2l1_norm(f, 0.0, -0.25)
    rhs = const * xsab_norm(f, 0.0, -0.25, -0.5 + eps)
    assert lhs <= rhs * (1 + 1e-12)


def test_norm_row():
    row = norm_row(NormKind.Hsa, 0, -0.75, 0.5, DIVERGENT)
    assert row["value"] == "inf" and row["divergent_flag"] == 1
    assert norm_row("Xsab", 0, 0, 0.5, 2.0)["divergent_flag"] == 0
