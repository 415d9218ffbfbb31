"""Weighted Sobolev and Bourgain-type norms, dyadic shells and admissibility.

Weights are written with the Japanese bracket <x> = (1 + x^2)^(1/2). A norm
that is infinite because |xi|^a is not square integrable at the origin is
reported as ``DIVERGENT`` (``math.inf``) rather than as a large number.
"""

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import integrate

from .bands import BandSpectrum, QuadratureSpectrum
from .errors import DIVERGENT, InvalidInput, InvalidParameter
from .spectral import SpaceTimeField, SpectralField

ORIGIN_RTOL = 1e-12
# relative slack so that |tau| = |xi|^(-5/3) lands in the closed set D1
BOUNDARY_RTOL = 1e-14


def bracket(x):
    return np.sqrt(1.0 + np.square(x))


class NormKind(str, enum.Enum):
    Hsa = "Hsa"
    Xsab = "Xsab"
    X21 = "X21"
    XLab = "XLab"
    XLab1 = "XLab1"
    XLa = "XLa"
    Zsa = "Zsa"
    DualL2L1 = "DualL2L1"


class DyadicIndex(NamedTuple):
    j: int
    k: int


@dataclass(frozen=True)
class WeightParams:
    """Exponents (s, a, b) plus the small parameters of the X_L^a branches.

    ``eps1``/``eps2`` default to half of their largest allowed value.
    """

    s: float
    a: float
    b: float = 0.5
    eps1: float = None
    eps2: float = None

    def resolved_eps1(self):
        top = self.s + 0.25
        eps = 0.5 * top if self.eps1 is None else self.eps1
        if not 0 < eps <= top:
            raise InvalidParameter(f"eps1={eps} outside (0, s+1/4] for s={self.s}")
        return eps

    def resolved_eps2(self):
        top = -(self.a + 0.875)
        eps = 0.5 * top if self.eps2 is None else self.eps2
        if not 0 < eps <= top:
            raise InvalidParameter(f"eps2={eps} outside (0, -(a+7/8)] for a={self.a}")
        return eps


def s_a(a):
    """Critical regularity -2a-2 attached to the low-frequency exponent a."""
    return -2.0 * a - 2.0


def admissible(s, a):
    if not -1.5 < a <= -0.25:
        return False
    if s < max(-0.25, s_a(a)):
        return False
    return not (s == -0.25 and a == -0.875)


def dyadic_index(tau, xi):
    j = int(math.floor(math.log2(math.hypot(1.0, xi))))
    k = int(math.floor(math.log2(math.hypot(1.0, tau - xi**5))))
    return DyadicIndex(j, k)


def _dyadic_arrays(tau, xi):
    j = np.floor(np.log2(bracket(xi))).astype(int)
    k = np.floor(np.log2(bracket(tau - xi**5))).astype(int)
    return j, k


def region_classify(tau, xi):
    """'D1', 'D2' or 'high'.

    xi = 0 is put in D2: the threshold |xi|^(-5/3) is infinite there, so no
    finite tau reaches it.
    """
    if abs(xi) > 1:
        return "high"
    if xi == 0:
        return "D2"
    thr = abs(xi) ** (-5.0 / 3.0)
    return "D1" if abs(tau) >= thr * (1.0 - BOUNDARY_RTOL) else "D2"


def _in_d1(tau, xi):
    ax = np.abs(xi)
    with np.errstate(divide="ignore"):
        thr = np.where(ax > 0, ax ** (-5.0 / 3.0), np.inf)
    return (ax <= 1) & (np.abs(tau) >= thr * (1.0 - BOUNDARY_RTOL))


# ---------------------------------------------------------------------------
# pointwise weights


def xi_weight_sq(xi, s, a, delta=None):
    """<xi>^(2(s-a)) |xi|^(2a), with the origin node replaced by a cell average.

    For a node at xi = 0 of a grid with spacing ``delta`` the value is the mean
    of |xi|^(2a) over the origin cell, or ``inf`` when that integral diverges.
    """
    xi = np.asarray(xi, dtype=float)
    ax = np.abs(xi)
    out = bracket(xi) ** (2.0 * (s - a))
    nz = ax > 0
    out = np.where(nz, out * np.where(nz, ax, 1.0) ** (2.0 * a), out)
    zero = ~nz
    if np.any(zero) and a != 0:
        if a > 0:
            cell = 0.0
        elif delta is not None and 2 * a > -1:
            cell = (0.5 * delta) ** (2 * a) / (2 * a + 1)
        else:
            cell = np.inf
        out = np.where(zero, cell, out)
    return out


def _weighted_sum(weights, mag2):
    """sum(weights * mag2) with inf * 0 treated as 0 and inf * x as DIVERGENT."""
    live = mag2 > 0
    w = weights[live]
    if np.any(np.isinf(w)):
        return DIVERGENT
    return float(np.sum(w * mag2[live]))


def _sqrt(x):
    return DIVERGENT if math.isinf(x) else math.sqrt(x)


# ---------------------------------------------------------------------------
# H^{s,a}


def _origin_cell_field(f, s, a):
    """Contribution of the cell around xi = 0 for a grid spectrum."""
    grid = f.grid
    if grid.origin != 0.0:
        return 0.0
    M = grid.half_extent
    vals = f.values
    d = grid.delta_xi
    peak = np.abs(vals).max()
    u0 = vals[M]
    half = 0.5 * d
    if abs(u0) > ORIGIN_RTOL * peak:
        if 2 * a > -1:
            return abs(u0) ** 2 * 2 * half ** (2 * a + 1) / (2 * a + 1)
        return DIVERGENT
    # amplitude vanishes at the origin: model it as linear across the cell
    slope = (vals[M + 1] - vals[M - 1]) / (2 * d)
    if abs(slope) * d <= ORIGIN_RTOL * peak:
        return 0.0
    if 2 * a + 3 > 0:
        return abs(slope) ** 2 * 2 * half ** (2 * a + 3) / (2 * a + 3)
    return DIVERGENT


def _h_sa_field(f, s, a):
    if not np.any(f.values):
        return 0.0
    xi = f.xi
    w = xi_weight_sq(xi, s, a)
    mag2 = np.abs(f.values) ** 2
    inner = xi != 0
    total = _weighted_sum(w[inner], mag2[inner]) * f.grid.delta_xi
    total += _origin_cell_field(f, s, a)
    return _sqrt(total)


def _band_piece(anchor, lo, hi, s, a):
    """Integral of the H^{s,a} weight over anchor + [lo, hi]."""
    xa, xb = anchor + lo, anchor + hi
    if xa < 0 < xb:
        return (_band_piece(0.0, xa, 0.0, s, a) + _band_piece(0.0, 0.0, xb, s, a))
    if xa == 0.0 or xb == 0.0:
        if 2 * a <= -1:
            return DIVERGENT
        length = abs(xb - xa)
        smooth = lambda x: (1.0 + x * x) ** (s - a)
        val, _ = integrate.quad(smooth, 0.0, length, weight="alg", wvar=(2 * a, 0.0),
                                epsabs=0.0, epsrel=1e-12, limit=200)
        return val
    # away from the origin: integrate in offset coordinates to keep the
    # width of very narrow bands exact
    fn = lambda x: xi_weight_sq(anchor + x, s, a)
    val, _ = integrate.quad(fn, lo, hi, epsabs=0.0, epsrel=1e-12, limit=200)
    return val


def _h_sa_bands(spec, s, a):
    total = 0.0
    for b in spec.bands:
        if b.amp == 0:
            continue
        piece = _band_piece(b.anchor, b.lo, b.hi, s, a)
        if math.isinf(piece):
            return DIVERGENT
        total += abs(b.amp) ** 2 * piece
    return _sqrt(total)


def _h_sa_quadrature(q, s, a):
    w = xi_weight_sq(q.xi, s, a)
    if np.any(q.xi == 0):
        raise InvalidInput("quadrature spectra must not sample xi = 0")
    return _sqrt(float(np.sum(q.weights * w * np.abs(q.values) ** 2)))


def h_sa_norm(f, s, a):
    """||<xi>^(s-a) |xi|^a f_hat||_{L^2} for grid, band or quadrature spectra."""
    if isinstance(f, SpectralField):
        return _h_sa_field(f, s, a)
    if isinstance(f, BandSpectrum):
        return _h_sa_bands(f, s, a)
    if isinstance(f, QuadratureSpectrum):
        return _h_sa_quadrature(f, s, a)
    raise InvalidInput(f"unsupported spectrum type {type(f).__name__}")


# ---------------------------------------------------------------------------
# space-time norms


def _st_arrays(f):
    if not isinstance(f, SpaceTimeField):
        raise InvalidInput("expected a SpaceTimeField")
    tau, xi = f.grid.mesh()
    return tau, xi, np.abs(f.values) ** 2


def xsab_norm(f, s, a, b):
    """||<xi>^(s-a) |xi|^a <tau - xi^5>^b f||_{L^2_{tau,xi}}."""
    tau, xi, mag2 = _st_arrays(f)
    w = xi_weight_sq(xi, s, a, f.grid.xi.spacing) * bracket(tau - xi**5) ** (2 * b)
    return _sqrt(_weighted_sum(w, mag2) * f.grid.cell_area)


def x21_norm(f, s):
    """l^2 over frequency shells A_j of l^1 over modulation shells B_k."""
    tau, xi, mag2 = _st_arrays(f)
    live = mag2 > 0
    if not np.any(live):
        return 0.0
    w = bracket(xi) ** (2 * s) * bracket(tau - xi**5)
    j, k = _dyadic_arrays(tau[live], xi[live])
    contrib = w[live] * mag2[live] * f.grid.cell_area
    blocks = {}
    for jj, kk, c in zip(j.tolist(), k.tolist(), contrib.tolist()):
        blocks[(jj, kk)] = blocks.get((jj, kk), 0.0) + c
    per_j = {}
    for (jj, _), mass in blocks.items():
        per_j[jj] = per_j.get(jj, 0.0) + math.sqrt(mass)
    return math.sqrt(sum(v * v for v in per_j.values()))


def _xl_ab(f, a, b, mask):
    tau, xi, mag2 = _st_arrays(f)
    w = xi_weight_sq(xi, a, a, f.grid.xi.spacing) * bracket(tau - xi**5) ** (2 * b)
    return _sqrt(_weighted_sum(w[mask], mag2[mask]) * f.grid.cell_area)


def _xl_ab1(f, a, b, mask):
    tau, xi, mag2 = _st_arrays(f)
    w = xi_weight_sq(xi, a, a, f.grid.xi.spacing)
    sel = mask & (mag2 > 0)
    if not np.any(sel):
        return 0.0
    if np.any(np.isinf(w[sel])):
        return DIVERGENT
    _, k = _dyadic_arrays(tau[sel], xi[sel])
    mass = np.bincount(k, weights=w[sel] * mag2[sel]) * f.grid.cell_area
    ks = np.arange(mass.size)
    return float(np.sum(2.0 ** (b * ks) * np.sqrt(mass)))


def xl_branch(a):
    """Name of the X_L^a branch selected by ``a``."""
    if not -1.5 < a <= -0.25:
        raise InvalidParameter(f"a={a} outside (-3/2, -1/4]")
    if math.isclose(a, -0.25, abs_tol=1e-12):
        return "quarter"
    if math.isclose(a, -0.875, abs_tol=1e-12):
        return "endpoint"
    return "middle" if a > -0.875 else "low"


def xl_middle_exponent(a):
    return 0.6 * a + 0.9


def xl_a_norm(f, params):
    """Low-frequency norm; only the part of ``f`` with |xi| <= 1 is seen."""
    a = params.a
    branch = xl_branch(a)
    tau, xi, _ = _st_arrays(f)
    low = np.abs(xi) <= 1.0
    if branch == "quarter":
        d1 = _in_d1(tau, xi) & low
        return _xl_ab(f, a, 0.75, d1) + _xl_ab1(f, a, 0.75, low & ~d1)
    if branch == "middle":
        return _xl_ab1(f, a, xl_middle_exponent(a), low)
    if branch == "endpoint":
        return _xl_ab(f, a, 0.375 + 0.5 * params.resolved_eps1(), low)
    return _xl_ab(f, a, 0.375 + 0.5 * params.resolved_eps2(), low)


def p_high(f):
    _, xi = f.grid.mesh()
    return f.masked(np.abs(xi) >= 1.0)


def p_low(f):
    _, xi = f.grid.mesh()
    return f.masked(np.abs(xi) <= 1.0)


def z_norm(f, params):
    return x21_norm(p_high(f), params.s) + xl_a_norm(p_low(f), params)


def dual_l2l1_norm(f, s, a):
    """||<xi>^(s-a) |xi|^a <tau - xi^5>^(-1) f||_{L^2_xi L^1_tau}."""
    tau, xi, mag2 = _st_arrays(f)
    w2 = xi_weight_sq(xi[0], s, a, f.grid.xi.spacing)
    inner = np.sum(np.sqrt(mag2) / bracket(tau - xi**5), axis=0) * f.grid.tau.spacing
    return _sqrt(_weighted_sum(w2, inner**2) * f.grid.xi.spacing)


def norm_row(kind, s, a, b, value):
    """CSV row (norm_kind, s, a, b, value, divergent_flag)."""
    kind = NormKind(kind).value
    div = math.isinf(value)
    return {"norm_kind": kind, "s": s, "a": a, "b": b,
            "value": "inf" if div else repr(float(value)), "divergent_flag": int(div)}
