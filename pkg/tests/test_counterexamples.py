import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kdv5lab.bands import BandSpectrum
from kdv5lab.counterexamples import (EXAMPLE_PAIRS, RectSpectrum, ShearedRect, appendix_rects,
                                     example_pair, growth_fit, phi_n_c2, phi_n_cubic,
                                     phi_n_delta, psi_n)
from kdv5lab.errors import InvalidInput, InvalidParameter
from kdv5lab.norms import h_sa_norm

NS = (8, 16, 32, 64)


def _band_ratio(values):
    return max(values) / min(values)


def test_n_must_be_at_least_four():
    with pytest.raises(InvalidParameter):
        phi_n_c2(3, 0.0)
    with pytest.raises(InvalidParameter):
        phi_n_delta(8, 0.0, -1.0)


def test_phi_n_c2_norm_and_mass():
    norms = [h_sa_norm(phi_n_c2(N, 0.0), 0.0, 0.0) for N in NS]
    assert _band_ratio(norms) < 1.5
    for s in (0.0, -0.5, 1.0):
        hs = [h_sa_norm(phi_n_c2(N, s), s, 0.0) for N in NS]
        assert _band_ratio(hs) < 2.0
    for N in NS:
        spec = phi_n_c2(N, 0.3)
        want = N ** (-0.6 + 4) * 2 * N ** -4.0 + N ** 4.0 * N ** -4.0 / 2
        assert spec.l2_mass_squared() == pytest.approx(want, rel=1e-12)
        lo, hi = sorted(spec.bands, key=lambda b: b.xi_lo)
        assert lo.xi_hi < hi.xi_lo
    assert not phi_n_c2(8, 0.0).hermitian
    assert phi_n_c2(8, 0.0, symmetric=True).hermitian


def test_phi_n_delta_scaling():
    delta = 0.1
    for s, a in ((0.0, -1.0), (-0.25, -0.5), (0.5, -0.25)):
        r = [h_sa_norm(phi_n_delta(N, delta, a), s, a) / (delta * N ** (s + 2 * a + 2))
             for N in NS]
        assert _band_ratio(r) < 1.1
    crit = [h_sa_norm(phi_n_delta(N, delta, -0.75), -0.5, -0.75) / delta for N in NS]
    assert _band_ratio(crit) < 1.1
    assert phi_n_delta(16, delta, -1.0).hermitian


def test_psi_n_norm_and_bands():
    for s, a in ((-0.5, -0.5), (0.0, -1.0), (-0.25, -0.25)):
        norms = [h_sa_norm(psi_n(N, s, a), s, a) for N in NS]
        assert _band_ratio(norms) < 1.5
    for N in NS:
        spec = psi_n(N, -0.5, -0.5)
        ivs = sorted((b.xi_lo, b.xi_hi) for b in spec.bands)
        assert all(h0 < l1 for (_, h0), (l1, _) in zip(ivs, ivs[1:]))
        low = [b for b in spec.bands if abs(b.anchor) < 1][0]
        g = N ** -4.0
        assert abs(low.amp) ** 2 * low.width == pytest.approx(N ** (8 * -0.5 + 4) * g, rel=1e-12)


def test_phi_n_cubic_norm_and_mass():
    for s in (-0.5, 0.0):
        norms = [h_sa_norm(phi_n_cubic(N, s), s, -0.5) for N in NS]
        assert _band_ratio(norms) < 1.2
    for N in NS:
        spec = phi_n_cubic(N, -0.5)
        want = 2 * N ** (1.0 + 1.5) * 2 * N ** -1.5
        assert spec.l2_mass_squared() == pytest.approx(want, rel=1e-12)
        assert spec.hermitian


def test_band_text_round_trip():
    spec = psi_n(8, -0.5, -0.5)
    back = BandSpectrum.from_text(spec.to_text())
    xi = np.linspace(-9, 9, 20001)
    assert np.array_equal(back.evaluate(xi), spec.evaluate(xi))
    with pytest.raises(InvalidInput):
        BandSpectrum.from_text("1 2 3\n")


def test_appendix_rects_geometry():
    for N in (8, 16, 32, 64, 128):
        rects = appendix_rects(N)
        assert {r.shear_slope for r in rects.values()} == {5.0 * N ** 4}
        p1, p2 = rects["P1"], rects["P2"]
        assert p2.xi_center == -N
        assert p2.shear_offset == 4.0 * N ** 5
        assert p2 == p1.reflected()
        assert p2.reflected() == p1
        # R1 lies inside the xi-support of P1 + P2
        r1 = rects["R1"]
        assert p1.xi_lo + p2.xi_lo <= r1.xi_lo and r1.xi_hi <= p1.xi_hi + p2.xi_hi


@settings(max_examples=30, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2))
def test_reflection_maps_points(u, v):
    p1 = appendix_rects(8)["P1"]
    xi = p1.xi_center + u * p1.xi_halfwidth
    tau = p1.shear_slope * xi + p1.shear_offset + v * p1.tau_halfheight
    assert bool(p1.contains(tau, xi)) == bool(p1.reflected().contains(-tau, -xi))


def test_rect_spectrum_validation():
    r = ShearedRect(0.0, 1.0, 2.0, 0.0, 1.0)
    with pytest.raises(InvalidInput):
        RectSpectrum((r, r))
    with pytest.raises(InvalidParameter):
        ShearedRect(0.0, 0.0, 1.0, 0.0, 1.0)
    assert RectSpectrum((r,)).common_slope == 2.0
    assert set(EXAMPLE_PAIRS) == {"1", "2", "3a", "3b"}
    with pytest.raises(InvalidParameter):
        example_pair("4", 8)


def test_growth_fit():
    pts = [(N, float(N)) for N in NS]
    slope, _, res = growth_fit(pts)
    assert slope == pytest.approx(1.0, abs=1e-12) and res < 1e-12
    slope, intercept, _ = growth_fit([(N, 3.5 * N ** 0.5) for N in NS])
    assert slope == pytest.approx(0.5, abs=1e-12)
    assert intercept == pytest.approx(math.log(3.5), abs=1e-12)
    with pytest.raises(InvalidInput):
        growth_fit([(8, 1.0), (16, 0.0), (32, 1.0)])
    with pytest.raises(InvalidInput):
        growth_fit([(8, 1.0), (16, 2.0)])
