import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kdv5lab.duhamel import (Coefficients, a2_duhamel, a2_spectral, a3_1_spectral,
                             a3_duhamel, a3_duhamel_components, phi_factor, resonance_q1,
                             resonance_q2)
from kdv5lab.errors import InvalidParameter
from kdv5lab.estimates import lemma_companion_residual, lemma_identity_residual
from kdv5lab.norms import h_sa_norm
from kdv5lab.spectral import FrequencyGrid, SpectralField

floats = st.floats(-10, 10, allow_nan=False)


def _gauss(d=0.05, M=64, width=1.0):
    grid = FrequencyGrid(d, M)
    return SpectralField(grid, np.exp(-(grid.nodes / width) ** 2), hermitian=True)


def _rel(a, b):
    return h_sa_norm(a - b, 0, 0) / h_sa_norm(b, 0, 0)


def test_coefficients():
    with pytest.raises(InvalidParameter):
        Coefficients(1.0, 1.0, 0.0)
    lax = Coefficients.integrable(5.0)
    assert (lax.c1, lax.c2, lax.c3) == (-10.0, 5.0, 10.0)
    assert Coefficients.integrable_unsquared(5.0).c1 == -2.0
    assert Coefficients.linear().is_linear


def test_resonance_examples():
    assert resonance_q1(1, 1) == 30
    assert resonance_q1(3.7, -3.7) == 0
    assert resonance_q1(2, 3) == 2850
    assert resonance_q2(1, 1, 1) == 240
    assert resonance_q2(1, -1, 4.2) == 0
    # 6^5 - 1 - 32 - 243
    assert resonance_q2(1, 2, 3) == 7500


def test_resonance_q1_identity_bulk():
    rng = np.random.default_rng(0)
    x1, x2 = rng.uniform(-10, 10, (2, 10_000))
    direct = (x1 + x2) ** 5 - x1 ** 5 - x2 ** 5
    scale = np.maximum(np.abs(x1), np.abs(x2)) ** 5 + np.abs(x1 + x2) ** 5
    assert np.max(np.abs(resonance_q1(x1, x2) - direct) / scale) <= 1e-9


@given(floats, floats, floats)
def test_resonance_q2_symmetric_and_exact(a, b, c):
    base = resonance_q2(a, b, c)
    for p in ((b, a, c), (c, b, a), (a, c, b), (b, c, a), (c, a, b)):
        assert resonance_q2(*p) == pytest.approx(base, rel=1e-12, abs=1e-9)
    direct = (a + b + c) ** 5 - a ** 5 - b ** 5 - c ** 5
    scale = 1 + abs(a) ** 5 + abs(b) ** 5 + abs(c) ** 5 + abs(a + b + c) ** 5
    assert abs(base - direct) <= 1e-9 * scale


def test_phi_factor_examples():
    assert phi_factor(0.0, 2.0) == 2j
    assert abs(phi_factor(math.pi, 1.0) - 2 / math.pi) < 1e-15
    # series (1 - e^{-iqt})/q = i t + q t^2 / 2 + O(q^2)
    assert abs(phi_factor(1e-12, 1.0) - 1j) <= 1e-10


@given(st.floats(-1e4, 1e4), st.floats(-5, 5))
def test_phi_factor_bound(q, t):
    val = abs(phi_factor(q, t))
    cap = abs(t) if q == 0 else min(2 / abs(q), abs(t))
    assert val <= cap * (1 + 1e-12) + 1e-300


def test_a2_vanishes_at_zero_time():
    u = _gauss()
    co = Coefficients(0, 1, 2)
    assert not np.any(a2_spectral(u, 0.0, co).values)
    assert not np.any(a2_duhamel(u, 0.0, co).values)


def test_a2_equal_c2_c3_reduces_to_cubed_symbol():
    # with c2 = c3 only (c3/2) xi^3 survives; short-time limit is i t (c3/2) xi^3 (u*u)/(2 pi)
    u = _gauss()
    t = 1e-9
    out = a2_spectral(u, t, Coefficients(0, 2, 2))
    conv = np.convolve(u.values, u.values) * u.grid.delta_xi
    want = 1j * t * out.xi ** 3 * conv[:out.xi.size] / (2 * math.pi)
    assert np.abs(out.values - want).max() <= 1e-6 * np.abs(want).max()
    w = out.values * np.exp(-1j * t * out.xi ** 5)
    assert np.abs(w.real).max() <= 1e-3 * np.abs(w.imag).max()
    assert np.abs(w.imag + w.imag[::-1]).max() <= 1e-12 * np.abs(w).max()


def test_a2_spectral_matches_duhamel_on_gaussian():
    u = _gauss()
    co = Coefficients(0, 1, 2)
    assert _rel(a2_spectral(u, 0.1, co), a2_duhamel(u, 0.1, co)) <= 1e-6


def test_a2_duhamel_self_convergence_and_reality():
    u = _gauss()
    co = Coefficients(0, 1, 2)
    a16 = a2_duhamel(u, 0.1, co, n_quad=16)
    a32 = a2_duhamel(u, 0.1, co, n_quad=32)
    assert _rel(a16, a32) <= 1e-10
    assert a16.hermitian
    v = a16.values
    assert np.abs(v - np.conj(v[::-1])).max() <= 1e-12 * np.abs(v).max()


def test_a3_cubic_piece_matches_spectral_formula():
    u = _gauss(d=0.1, M=32)
    comps = a3_duhamel_components(u, 0.05, Coefficients(1.0, 1.0, 2.0))
    ref = a3_1_spectral(u, 0.05, 1.0)
    assert _rel(comps.cubic, ref) <= 1e-6


def test_a3_zero_time_and_trilinearity():
    u = _gauss(d=0.1, M=24)
    co = Coefficients(1.0, 1.0, 2.0)
    assert not np.any(a3_duhamel(u, 0.0, co).values)
    base = a3_duhamel(u, 0.1, co)
    lam = 1.7
    scaled = a3_duhamel(u.scaled(lam), 0.1, co)
    assert _rel(scaled, base.scaled(lam ** 3)) <= 1e-12


@given(floats, floats, floats, floats)
def test_lemma_identities(tau, xi, tau1, xi1):
    scale = 1 + max(abs(tau), abs(tau1)) + max(abs(xi), abs(xi1), abs(xi - xi1)) ** 5
    assert abs(lemma_identity_residual(tau, xi, tau1, xi1)) <= 1e-12 * scale
    assert abs(lemma_companion_residual(tau, xi, tau1, xi1)) <= 1e-12 * scale


def test_lemma_identity_spot_values():
    assert lemma_identity_residual(0.0, 2.0, 0.0, 1.0) == 0.0
    lhs = (0.0 - 2.0 ** 5 / 16) - (0.0 - 0.0) - ((0.0 - 0.0) - 2.0 ** 5)
    assert lhs == 30.0
    assert lemma_identity_residual(0.0, 2.0, 0.0, 0.0) == 0.0
