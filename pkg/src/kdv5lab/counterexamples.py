"""Exact data families for the ill-posedness experiments and sheared rectangles.

Every one-dimensional family is a :class:`~kdv5lab.bands.BandSpectrum`: a few
constant-amplitude bands of width comparable to N^-4 or N^-3/2 placed next to
frequencies of size N. Space-time test functions are unions of parallelograms
``|xi - xi0| <= w, |tau - (c xi + d)| <= h`` that all share the slope c.
"""

import math
from dataclasses import dataclass

import numpy as np

from .bands import Band, BandSpectrum
from .errors import InvalidInput, InvalidParameter, InvalidResolution


def _check_n(N):
    if not N >= 4:
        raise InvalidParameter(f"N must be >= 4, got {N}")
    return float(N)


def _band(anchor, lo, hi, amp):
    """Band on anchor + [lo, hi] that must stay distinguishable in floating point."""
    if not (anchor + hi > anchor + lo):
        raise InvalidResolution(
            f"band of width {hi - lo:.3e} at {anchor} is below floating-point resolution")
    return Band(float(anchor), float(lo), float(hi), complex(amp))


def _spectrum(bands, symmetric=False):
    bands = list(bands)
    if symmetric:
        bands += [b.reflected() for b in bands]
    return BandSpectrum(tuple(bands))


def phi_n_c2(N, s, symmetric=False):
    """High band of height N^(2-s) at N plus a low band of height N^2 on [g/2, g], g = N^-4.

    ``symmetric=True`` adds the reflected, conjugated bands so that the datum is real.
    """
    N = _check_n(N)
    g = N ** -4
    high = _band(N, -g, g, N ** (2.0 - s))
    low = _band(0.0, 0.5 * g, g, N ** 2)
    return _spectrum([high, low], symmetric)


def phi_n_delta(N, delta, a):
    """delta N^(2a+4) on the two bands [+-N - g, +-N + g], g = N^-4 (real datum)."""
    N = _check_n(N)
    if not 0 < delta <= 1:
        raise InvalidParameter("delta must lie in (0, 1]")
    g = N ** -4
    return _spectrum([_band(N, -g, g, delta * N ** (2.0 * a + 4.0))], symmetric=True)


def psi_n(N, s, a):
    """N^(2-s) on [+-N - g, +-N + g] plus N^(4a+2) on [g/2, 3g/2], g = N^-4."""
    N = _check_n(N)
    g = N ** -4
    high = _band(N, -g, g, N ** (2.0 - s))
    low = _band(0.0, 0.5 * g, 1.5 * g, N ** (4.0 * a + 2.0))
    return _spectrum([high, high.reflected(), low])


def phi_n_cubic(N, s):
    """N^(3/4-s) on [+-N - w, +-N + w], w = N^-3/2 (real datum)."""
    N = _check_n(N)
    w = N ** -1.5
    return _spectrum([_band(N, -w, w, N ** (0.75 - s))], symmetric=True)


# ---------------------------------------------------------------------------
# sheared rectangles


@dataclass(frozen=True)
class ShearedRect:
    """``amplitude`` on {|xi - xi_center| <= xi_halfwidth, |tau - (c xi + d)| <= tau_halfheight}.

    ``xi_center`` is stored as an anchor plus an offset so that centres such
    as N + 2 N^-3/2 keep their offset exactly.
    """

    xi_center: float
    xi_halfwidth: float
    shear_slope: float
    shear_offset: float
    tau_halfheight: float
    amplitude: complex = 1.0
    xi_anchor: float = 0.0

    def __post_init__(self):
        if not (self.xi_halfwidth > 0 and self.tau_halfheight > 0):
            raise InvalidParameter("rectangle half-width and half-height must be positive")

    @classmethod
    def at(cls, anchor, offset, halfwidth, slope, shear_offset, halfheight, amplitude=1.0):
        """Rectangle centred at ``anchor + offset`` with the anchor kept separately."""
        return cls(anchor + offset, halfwidth, slope, shear_offset, halfheight,
                   complex(amplitude), float(anchor))

    @property
    def xi_offset(self):
        """Centre relative to ``xi_anchor``."""
        return self.xi_center - self.xi_anchor

    @property
    def xi_lo(self):
        return self.xi_center - self.xi_halfwidth

    @property
    def xi_hi(self):
        return self.xi_center + self.xi_halfwidth

    def v_interval(self):
        """Extent of v = tau - c xi."""
        return (self.shear_offset - self.tau_halfheight, self.shear_offset + self.tau_halfheight)

    def contains(self, tau, xi):
        tau = np.asarray(tau, dtype=float)
        xi = np.asarray(xi, dtype=float)
        return ((np.abs(xi - self.xi_center) <= self.xi_halfwidth)
                & (np.abs(tau - (self.shear_slope * xi + self.shear_offset)) <= self.tau_halfheight))

    def evaluate(self, tau, xi):
        return np.where(self.contains(tau, xi), self.amplitude, 0.0)

    def reflected(self):
        """Image under (tau, xi) -> (-tau, -xi)."""
        return ShearedRect(-self.xi_center, self.xi_halfwidth, self.shear_slope,
                           -self.shear_offset, self.tau_halfheight, self.amplitude,
                           -self.xi_anchor)

    def scaled(self, factor):
        return ShearedRect(self.xi_center, self.xi_halfwidth, self.shear_slope,
                           self.shear_offset, self.tau_halfheight,
                           factor * self.amplitude, self.xi_anchor)

    @property
    def area(self):
        return 4.0 * self.xi_halfwidth * self.tau_halfheight


@dataclass(frozen=True)
class RectSpectrum:
    """Finite union of non-overlapping sheared rectangles."""

    rects: tuple

    def __post_init__(self):
        rects = tuple(self.rects)
        object.__setattr__(self, "rects", rects)
        if not rects:
            raise InvalidInput("empty rectangle spectrum")
        for i, r in enumerate(rects):
            for q in rects[i + 1:]:
                if r.shear_slope != q.shear_slope:
                    continue
                xo = min(r.xi_hi, q.xi_hi) - max(r.xi_lo, q.xi_lo)
                (a0, a1), (b0, b1) = r.v_interval(), q.v_interval()
                if xo > 0 and min(a1, b1) - max(a0, b0) > 0:
                    raise InvalidInput("rectangles overlap")

    @property
    def common_slope(self):
        slopes = {r.shear_slope for r in self.rects}
        return slopes.pop() if len(slopes) == 1 else None

    def evaluate(self, tau, xi):
        out = 0.0
        for r in self.rects:
            out = out + r.evaluate(tau, xi)
        return out

    def scaled(self, factor):
        return RectSpectrum(tuple(r.scaled(factor) for r in self.rects))

    def reflected(self):
        return RectSpectrum(tuple(r.reflected() for r in self.rects))


def appendix_rects(N):
    """The six parallelograms P1, P2, Q, R1, R2, R3 at scale N.

    All have slope 5 N^4 and half-height 1/2; w = N^-3/2 sets the widths.
    """
    N = _check_n(N)
    c = 5.0 * N ** 4
    d = N ** 5
    w = N ** -1.5
    p1 = ShearedRect.at(N, 0.0, w, c, -4.0 * d, 0.5)
    return {
        "P1": p1,
        "P2": p1.reflected(),
        "Q": ShearedRect.at(0.0, 2.0 * w, w, c, 0.0, 0.5),
        "R1": ShearedRect.at(0.0, 0.625 * w, 0.125 * w, c, 0.0, 0.5),
        "R2": ShearedRect.at(N, 0.0, 0.25 * w, c, -4.0 * d, 0.5),
        "R3": ShearedRect.at(2.0 * N, 0.0, 0.5 * w, c, -8.0 * d, 0.5),
    }


# (f, g, output region) for each appendix example
EXAMPLE_PAIRS = {
    "1": ("P1", "P2", "R1"),
    "2": ("P1", "Q", "R2"),
    "3a": ("P1", "P1", "R3"),
    "3b": ("R3", "P2", "R2"),
}


def example_pair(example_id, N):
    """(f, g, region) rectangles for one of the examples '1', '2', '3a', '3b'."""
    if example_id not in EXAMPLE_PAIRS:
        raise InvalidParameter(f"unknown example id {example_id!r}")
    rects = appendix_rects(N)
    f, g, r = EXAMPLE_PAIRS[example_id]
    return rects[f], rects[g], rects[r]


def growth_fit(points):
    """Least-squares line through (log N, log value).

    Returns (slope, intercept, residual) with the residual the root mean
    square deviation in log space.
    """
    pts = list(points)
    if len(pts) < 3:
        raise InvalidInput("growth_fit needs at least 3 points")
    n = np.array([p[0] for p in pts], dtype=float)
    v = np.array([p[1] for p in pts], dtype=float)
    if np.any(~np.isfinite(v)) or np.any(v <= 0) or np.any(n <= 0):
        raise InvalidInput("growth_fit needs positive finite values")
    x, y = np.log(n), np.log(v)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    return float(slope), float(intercept), float(math.sqrt(np.mean(resid ** 2)))
