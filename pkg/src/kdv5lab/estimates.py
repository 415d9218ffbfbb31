"""Convolution engines, bilinear-ratio sweeps, measure checks and multiplier norms.

Sheared rectangles {|xi - xi0| <= w, |tau - (c xi + d)| <= h} with a common
slope c convolve separably: in the coordinates (xi, v = tau - c xi) each one
is a product of two intervals, the shear has unit Jacobian, and the
convolution is a product of two trapezoids. All weighted integrals below are
evaluated in offset coordinates (xi = anchor + x, v = offset + v~) so that the
N^-3/2-wide supports next to xi ~ N and tau ~ N^5 keep full precision.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from .counterexamples import RectSpectrum, ShearedRect, example_pair, growth_fit
from .errors import (DIVERGENT, AccuracyFailure, InvalidInput, InvalidParameter,
                     Unsupported)
from .norms import bracket, xsab_norm
from .quadrature import composite_rule, graded_breaks
from .spectral import SpaceTimeField, SpaceTimeGrid, UniformAxis

GRADE_LEVELS = 60


def _as_rects(f):
    if isinstance(f, ShearedRect):
        return (f,)
    if isinstance(f, RectSpectrum):
        return f.rects
    raise InvalidInput(f"expected ShearedRect or RectSpectrum, got {type(f).__name__}")


def _overlap(a0, a1, b0, b1):
    """Length of [a0, a1] intersected with [b0, b1], elementwise."""
    return np.maximum(np.minimum(a1, b1) - np.maximum(a0, b0), 0.0)


# ---------------------------------------------------------------------------
# exact convolution of sheared rectangles


@dataclass(frozen=True)
class _Term:
    """amp * Tx(xi) * Tv(v) for one pair of rectangles.

    The xi profile is |[lo_f, hi_f] cap (x - [lo_g, hi_g])| with x measured
    from ``anchor``; the v profile is |[-h_f, h_f] cap (v~ - [-h_g, h_g])|
    with v~ measured from ``offset``.
    """

    amp: complex
    anchor: float
    offset: float
    f_anchor: float
    xf: tuple
    xg: tuple
    hf: float
    hg: float

    @property
    def x_kinks(self):
        (lf, hf), (lg, hg) = self.xf, self.xg
        return sorted({lf + lg, lf + hg, hf + lg, hf + hg})

    @property
    def v_kinks(self):
        return sorted({-(self.hf + self.hg), -abs(self.hf - self.hg),
                       abs(self.hf - self.hg), self.hf + self.hg})

    def x_limits(self, x):
        (lf, hf), (lg, hg) = self.xf, self.xg
        return np.maximum(lf, x - hg), np.minimum(hf, x - lg)

    def x_profile(self, x):
        lo, hi = self.x_limits(x)
        return np.maximum(hi - lo, 0.0)

    def x_moment2(self, x):
        """int xi_1^2 over the overlap, with xi_1 = f_anchor + y."""
        lo, hi = self.x_limits(x)
        hi = np.maximum(hi, lo)
        A = self.f_anchor
        return A * A * (hi - lo) + A * (hi * hi - lo * lo) + (hi**3 - lo**3) / 3.0

    def v_profile(self, v):
        return _overlap(-self.hf, self.hf, v - self.hg, v + self.hg)


def _pair_term(rf, rg):
    return _Term(rf.amplitude * rg.amplitude,
                 rf.xi_anchor + rg.xi_anchor,
                 rf.shear_offset + rg.shear_offset,
                 rf.xi_anchor,
                 (rf.xi_offset - rf.xi_halfwidth, rf.xi_offset + rf.xi_halfwidth),
                 (rg.xi_offset - rg.xi_halfwidth, rg.xi_offset + rg.xi_halfwidth),
                 rf.tau_halfheight, rg.tau_halfheight)


@dataclass(frozen=True)
class PiecewiseBilinearSurface:
    """Exact f * g of two same-slope rectangle unions.

    A sum of separable terms Tx(xi) Tv(tau - c xi), each a product of a
    trapezoid in xi and a trapezoid in the sheared variable.
    """

    slope: float
    terms: tuple

    def value_at_offsets(self, anchor, offset, x, v):
        """Value at xi = anchor + x, tau - c xi = offset + v."""
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        out = np.zeros(np.broadcast(x, v).shape, dtype=complex)
        for t in self.terms:
            xt = x + (anchor - t.anchor)
            vt = v + (offset - t.offset)
            out = out + t.amp * t.x_profile(xt) * t.v_profile(vt)
        return out

    def value(self, tau, xi):
        tau = np.asarray(tau, dtype=float)
        xi = np.asarray(xi, dtype=float)
        return self.value_at_offsets(0.0, 0.0, xi, tau - self.slope * xi)

    def region_minimum(self, rect):
        """Exact minimum of |f * g| over a rectangle with the same slope.

        Every term is bilinear between its kinks, so the minimum over the
        region is attained on the grid of all kinks and region corners.
        """
        if rect.shear_slope != self.slope:
            raise Unsupported("region must share the surface slope")
        A, D = rect.xi_anchor, rect.shear_offset
        xlo, xhi = rect.xi_offset - rect.xi_halfwidth, rect.xi_offset + rect.xi_halfwidth
        vlo, vhi = -rect.tau_halfheight, rect.tau_halfheight
        xs, vs = {xlo, xhi}, {vlo, vhi}
        for t in self.terms:
            xs.update(k - (A - t.anchor) for k in t.x_kinks)
            vs.update(k - (D - t.offset) for k in t.v_kinks)
        xs = np.array(sorted(x for x in xs if xlo <= x <= xhi))
        vs = np.array(sorted(v for v in vs if vlo <= v <= vhi))
        vals = self.value_at_offsets(A, D, xs[:, None], vs[None, :])
        return float(np.min(np.abs(vals)))


def convolve_exact(f, g):
    """Exact convolution of two rectangle unions that share one slope."""
    rf, rg = _as_rects(f), _as_rects(g)
    slopes = {r.shear_slope for r in rf + rg}
    if len(slopes) != 1:
        raise Unsupported("exact convolution needs a common shear slope; rasterize instead")
    terms = tuple(_pair_term(a, b) for a in rf for b in rg)
    return PiecewiseBilinearSurface(slopes.pop(), terms)


# ---------------------------------------------------------------------------
# grid convolution and rasterization


def convolve_grid(f, g):
    """Discrete (tau, xi) convolution times the cell area.

    The output grid has the common spacings, origin equal to the sum of the
    input origins and half-extent equal to the sum of the half-extents.
    """
    gf, gg = f.grid, g.grid
    if not (math.isclose(gf.xi.spacing, gg.xi.spacing, rel_tol=1e-12)
            and math.isclose(gf.tau.spacing, gg.tau.spacing, rel_tol=1e-12)):
        raise InvalidInput("convolve_grid needs matching grid spacings")
    a, b = f.values, g.values
    if not (np.any(a.imag) or np.any(b.imag)):
        out = signal.fftconvolve(a.real, b.real)
    else:
        out = signal.fftconvolve(a, b)
    xi = UniformAxis(gf.xi.spacing, gf.xi.half_extent + gg.xi.half_extent,
                     gf.xi.origin + gg.xi.origin)
    tau = UniformAxis(gf.tau.spacing, gf.tau.half_extent + gg.tau.half_extent,
                      gf.tau.origin + gg.tau.origin)
    return SpaceTimeField(SpaceTimeGrid(xi, tau), out * gf.cell_area)


def _ramp_integral(z):
    z = np.maximum(z, 0.0)
    return 0.5 * z * z


def _overlap_antiderivative(u, a0, a1, b0, b1):
    """int_{-inf}^{u} |[a0, a1] cap [s + b0, s + b1]| ds."""
    return (_ramp_integral(u + b1 - a0) - _ramp_integral(u + b0 - a0)
            - _ramp_integral(u + b1 - a1) + _ramp_integral(u + b0 - a1))


def rect_coverage(rect, xi_axis, tau_axis):
    """Fraction of every (tau, xi) cell covered by ``rect`` (shape tau x xi)."""
    dx, dt = xi_axis.spacing, tau_axis.spacing
    xn = xi_axis.nodes
    tn = tau_axis.nodes
    # xi range inside each column
    x0 = np.maximum(xn - 0.5 * dx, rect.xi_lo)
    x1 = np.minimum(xn + 0.5 * dx, rect.xi_hi)
    live = x1 > x0
    cov = np.zeros((tn.size, xn.size))
    h, c, d = rect.tau_halfheight, rect.shear_slope, rect.shear_offset
    for j in np.nonzero(live)[0]:
        # cell rows [t - dt/2, t + dt/2] against [c xi + d - h, c xi + d + h]
        a0 = tn - 0.5 * dt - d
        a1 = tn + 0.5 * dt - d
        if c == 0.0:
            col = _overlap(a0, a1, -h, h) * (x1[j] - x0[j])
        else:
            u0, u1 = sorted((c * x0[j], c * x1[j]))
            col = (_overlap_antiderivative(u1, a0, a1, -h, h)
                   - _overlap_antiderivative(u0, a0, a1, -h, h)) / abs(c)
        cov[:, j] = col
    return cov / (dx * dt)


def rasterize(f, xi_axis, tau_axis):
    """Cell-averaged rasterization of a rectangle union onto a grid."""
    vals = np.zeros((tau_axis.size, xi_axis.size), dtype=complex)
    for r in _as_rects(f):
        vals += r.amplitude * rect_coverage(r, xi_axis, tau_axis)
    return SpaceTimeField(SpaceTimeGrid(xi_axis, tau_axis), vals)


def raster_axes(rect, dx, dt, aligned=True):
    """Axes with spacings (dx, dt) covering ``rect``.

    ``aligned=True`` places cell boundaries on the rectangle edges so the
    cells tile it; otherwise nodes sit on the lattices dx Z and dt Z.
    """
    mx = int(math.ceil(rect.xi_halfwidth / dx)) + 1
    span = abs(rect.shear_slope) * (rect.xi_halfwidth + dx) + rect.tau_halfheight
    mt = int(math.ceil(span / dt)) + 1
    t0 = rect.shear_slope * rect.xi_center + rect.shear_offset
    if aligned:
        x0 = rect.xi_lo + (mx - 0.5) * dx
        t0 = t0 - rect.tau_halfheight + (mt - 0.5) * dt
    else:
        x0 = round(rect.xi_center / dx) * dx
        t0 = round(t0 / dt) * dt
    return UniformAxis(dx, mx, x0), UniformAxis(dt, mt, t0)


def unsheared(f):
    """The same rectangles in the frame (xi, v = tau - c xi).

    The shear has unit Jacobian and commutes with convolution, so a grid
    convolution in this frame resolves each rectangle with as many cells per
    side as the grid provides, whatever the slope.
    """
    return RectSpectrum(tuple(
        ShearedRect(r.xi_center, r.xi_halfwidth, 0.0, r.shear_offset, r.tau_halfheight,
                    r.amplitude, r.xi_anchor) for r in _as_rects(f)))


def grid_vs_exact(example_id, N, cells=16, aligned=True):
    """Maximum deviation of the grid convolution from the exact one.

    Both inputs are rasterized in the sheared frame with ``cells`` cells per
    side of the first rectangle. Returns (deviation relative to the exact
    maximum, peak). Off-lattice edges (``aligned=False``) give an error of
    first order in the cell size.
    """
    f, g, _ = example_pair(example_id, N)
    dx = 2.0 * f.xi_halfwidth / cells
    dv = 2.0 * f.tau_halfheight / cells
    fu, gu = unsheared(f), unsheared(g)
    F = rasterize(fu, *raster_axes(fu.rects[0], dx, dv, aligned))
    G = rasterize(gu, *raster_axes(gu.rects[0], dx, dv, aligned))
    H = convolve_grid(F, G)
    v, xi = H.grid.mesh()
    ex = convolve_exact(f, g).value_at_offsets(0.0, 0.0, xi, v)
    peak = float(np.max(np.abs(ex)))
    return float(np.max(np.abs(H.values - ex))) / peak, peak


# ---------------------------------------------------------------------------
# the bilinear ratio


def _real_roots_in(coeffs, lo, hi):
    roots = np.roots(coeffs)
    out = []
    for r in roots:
        if abs(r.imag) <= 1e-9 * max(1.0, abs(r.real)) and lo < r.real < hi:
            out.append(float(r.real))
    return out


def _modulation_poly(A, c):
    """Coefficients (highest first) of c (A + x) - (A + x)^5 - c A + A^5 in x."""
    return [-1.0, -5.0 * A, -10.0 * A**2, -10.0 * A**3, c - 5.0 * A**4, 0.0]


@dataclass
class _Group:
    anchor: float
    offset: float
    slope: float
    items: list = field(default_factory=list)   # (amp, xprof, xkinks, vprof, vkinks)


def _group_integral(grp, s, a, b, xi_power, n):
    """int <xi>^{2(s-a)} |xi|^{2a} |xi|^{2 xi_power} <tau - xi^5>^{2b} |sum|^2."""
    A, D, c = grp.anchor, grp.offset, grp.slope
    xk = sorted({k for it in grp.items for k in it[2]})
    vk = sorted({k for it in grp.items for k in it[4]})
    xlo, xhi = xk[0], xk[-1]
    e = 2.0 * a + 2.0 * xi_power
    zero = -A
    has_zero = xlo <= zero <= xhi
    if has_zero and e <= -1.0:
        probe = sum(abs(it[0]) * float(np.max(it[1](np.array([zero]))))
                    for it in grp.items)
        if probe > 0:
            return DIVERGENT
    # grade toward xi = 0 and toward the zeros of the modulation shift
    poly = _modulation_poly(A, c)
    k0 = D + c * A - A**5
    poly[-1] = k0
    foci = _real_roots_in(poly, xlo, xhi)
    if has_zero:
        foci.append(zero)
    brk = set(xk)
    for fz in foci:
        brk.add(fz)
    brk = sorted(brk)
    fine = set(brk)
    for fz in foci:
        i = brk.index(fz)
        for nb in ([brk[i - 1]] if i > 0 else []) + ([brk[i + 1]] if i + 1 < len(brk) else []):
            lo, hi = min(nb, fz), max(nb, fz)
            fine.update(graded_breaks(lo, hi, fz, GRADE_LEVELS).tolist())
    X, WX = composite_rule(np.array(sorted(fine)), n)
    V, WV = composite_rule(np.array(vk), n)
    vals = np.zeros((X.size, V.size), dtype=complex)
    for amp, xprof, _, vprof, _ in grp.items:
        vals += amp * np.outer(xprof(X), vprof(V))
    xi = A + X
    with np.errstate(divide="ignore"):
        wx = bracket(xi) ** (2.0 * (s - a)) * np.abs(xi) ** e
    shift = np.polyval(poly, X)
    wv = bracket(V[None, :] + shift[:, None]) ** (2.0 * b)
    integrand = wx[:, None] * wv * np.abs(vals) ** 2
    return float(np.sum(WX[:, None] * WV[None, :] * integrand))


def _grouped(items_by_ref, slope):
    """Cluster (anchor, offset, item, x-range, v-range) by overlapping supports."""
    groups = []
    for anchor, offset, item, xr, vr in sorted(items_by_ref, key=lambda z: z[3][0]):
        placed = False
        for g in groups:
            gx, gv = g["xr"], g["vr"]
            if xr[0] <= gx[1] and gx[0] <= xr[1] and vr[0] <= gv[1] and gv[0] <= vr[1]:
                grp = g["grp"]
                dx, dv = anchor - grp.anchor, offset - grp.offset
                amp, xp, xk, vp, vk = item
                grp.items.append((amp, (lambda X, p=xp, d=dx: p(X - d)), [k + dx for k in xk],
                                  (lambda V, p=vp, d=dv: p(V - d)), [k + dv for k in vk]))
                g["xr"] = (min(gx[0], xr[0]), max(gx[1], xr[1]))
                g["vr"] = (min(gv[0], vr[0]), max(gv[1], vr[1]))
                placed = True
                break
        if not placed:
            grp = _Group(anchor, offset, slope, [item])
            groups.append({"grp": grp, "xr": xr, "vr": vr})
    return [g["grp"] for g in groups]


def _rect_items(f):
    out = []
    for r in _as_rects(f):
        lo, hi = r.xi_offset - r.xi_halfwidth, r.xi_offset + r.xi_halfwidth
        h = r.tau_halfheight
        item = (r.amplitude,
                (lambda X, lo=lo, hi=hi: ((X >= lo) & (X <= hi)).astype(float)), [lo, hi],
                (lambda V, h=h: ((V >= -h) & (V <= h)).astype(float)), [-h, h])
        out.append((r.xi_anchor, r.shear_offset, item,
                    (r.xi_lo, r.xi_hi), (r.shear_offset - h, r.shear_offset + h)))
    return out


def _surface_items(surf, moment):
    out = []
    for t in surf.terms:
        xp = t.x_moment2 if moment else t.x_profile
        xk = t.x_kinks
        vk = t.v_kinks
        item = (t.amp, xp, xk, t.v_profile, vk)
        out.append((t.anchor, t.offset, item,
                    (t.anchor + xk[0], t.anchor + xk[-1]), (t.offset + vk[0], t.offset + vk[-1])))
    return out


def xsab_norm_rects(f, s, a, b, n=16):
    """X^{s,a,b} norm of a rectangle union, by tensor Gauss-Legendre."""
    rects = _as_rects(f)
    slope = rects[0].shear_slope
    total = 0.0
    for grp in _grouped(_rect_items(f), slope):
        val = _group_integral(grp, s, a, b, 0.0, n)
        if math.isinf(val):
            return DIVERGENT
        total += val
    return math.sqrt(total)


def be3_lhs_rects(f, g, s, a, b, n=16):
    """|| xi ((xi^2 f) * g) ||_{X^{s,a,b-1}} for same-slope rectangle unions."""
    surf = convolve_exact(f, g)
    total = 0.0
    for grp in _grouped(_surface_items(surf, moment=True), surf.slope):
        val = _group_integral(grp, s, a, b - 1.0, 1.0, n)
        if math.isinf(val):
            return DIVERGENT
        total += val
    return math.sqrt(total)


def _be3_grid(f, g, s, a, b):
    _, xf = f.grid.mesh()
    h = convolve_grid(f.with_values(f.values * xf**2), g)
    _, xh = h.grid.mesh()
    lhs = xsab_norm(h.with_values(h.values * xh), s, a, b - 1.0)
    return lhs, xsab_norm(f, s, a, b), xsab_norm(g, s, a, b)


def be3_ratio(f, g, s, a, b, n=16):
    """|| xi ((xi^2 f) * g) ||_{X^{s,a,b-1}} / (||f||_{X^{s,a,b}} ||g||_{X^{s,a,b}}).

    Rectangle inputs use the exact separable route; SpaceTimeField inputs use
    grid convolution and grid norms.
    """
    if isinstance(f, SpaceTimeField) and isinstance(g, SpaceTimeField):
        lhs, nf, ng = _be3_grid(f, g, s, a, b)
    else:
        lhs = be3_lhs_rects(f, g, s, a, b, n)
        nf = xsab_norm_rects(f, s, a, b, n)
        ng = xsab_norm_rects(g, s, a, b, n)
    if math.isinf(lhs) or math.isinf(nf) or math.isinf(ng):
        return DIVERGENT
    if nf == 0 or ng == 0:
        raise InvalidInput("be3_ratio: a right-hand norm vanishes")
    return lhs / (nf * ng)


# predicted exponents of be3_ratio in N for each example pair
def predicted_slope(example_id, s, a, b):
    if example_id == "1":
        return -2.75 - 1.5 * a + 2.5 * b - 2.0 * s
    if example_id == "2":
        return 2.25 + 1.5 * a - 2.5 * b
    if example_id == "3a":
        return -2.75 - s + 5.0 * b
    if example_id == "3b":
        return 2.25 - s - 5.0 * b
    raise InvalidParameter(f"unknown example id {example_id!r}")


def threshold(example_id, s, a):
    """b at which the necessary condition of an example switches."""
    if example_id == "1":
        return 0.6 * a + 0.8 * s + 1.1
    if example_id == "2":
        return 0.6 * a + 0.9
    if example_id == "3a":
        return s / 5.0 + 0.55
    if example_id == "3b":
        return 0.45 - s / 5.0
    raise InvalidParameter(f"unknown example id {example_id!r}")


@dataclass
class SweepResult:
    example_id: str
    s: float
    a: float
    rows: list          # (b, N, ratio)
    slopes: list        # (b, slope)
    crossing: float     # b where the slope changes sign, or nan


def necessary_condition_sweep(example_id, s, a, b_list, N_list=(8, 16, 32, 64, 128), n=16):
    """Fit the growth exponent of be3_ratio in N for each b."""
    N_list = sorted(N_list)
    if len(N_list) < 3 or N_list[-1] < 4 * N_list[0]:
        raise InvalidParameter("N_list needs >= 3 values spanning a factor >= 4")
    rows, slopes = [], []
    pairs = {N: example_pair(example_id, N)[:2] for N in N_list}
    for b in b_list:
        pts = []
        for N in N_list:
            r = be3_ratio(*pairs[N], s, a, b, n)
            rows.append((b, N, r))
            pts.append((N, r))
        slopes.append((b, growth_fit(pts)[0]))
    return SweepResult(example_id, s, a, rows, slopes, sign_change(slopes))


def sign_change(slopes):
    """First b where the fitted slope changes sign (linear interpolation)."""
    pts = sorted(slopes)
    for (b0, m0), (b1, m1) in zip(pts, pts[1:]):
        if m0 == 0:
            return b0
        if m0 * m1 < 0:
            return b0 + (b1 - b0) * m0 / (m0 - m1)
    if pts and pts[-1][1] == 0:
        return pts[-1][0]
    return math.nan


# ---------------------------------------------------------------------------
# measure bounds


def _shell(k):
    """|sigma| range of the modulation shell <sigma> in [2^k, 2^(k+1))."""
    return math.sqrt(max(4.0**k - 1.0, 0.0)), math.sqrt(4.0 ** (k + 1) - 1.0)


def _z_range(center, spread, x):
    """z >= 0 with x^5/16 + (5/16) x z^2 (z^2 + 2 x^2) within center +- spread."""
    ax = abs(x)
    vals = sorted(math.copysign(1.0, x) * (c - x**5 / 16.0)
                  for c in (center - spread, center + spread))
    lo, hi = max(vals[0], 0.0), vals[1]
    if hi < 0:
        return None

    def zz(v):
        return math.sqrt(max(-x * x + math.sqrt(x**4 + 16.0 * v / (5.0 * ax)), 0.0))

    return zz(lo), zz(hi)


def _count_area(center, x, shell_a, shell_b, K, res):
    """Cell-count area of {(sigma, z > 0): |sigma| in A, |center - h(z) - sigma| in B, z >= K}.

    h(z) = x^5/16 + (5/16) x z^2 (z^2 + 2 x^2); the map to the original
    variables has unit Jacobian after folding z -> -z.
    """
    (a_lo, a_hi), (b_lo, b_hi) = shell_a, shell_b
    zr = _z_range(center, a_hi + b_hi, x)
    if zr is None:
        return 0.0
    z0, z1 = max(zr[0], K), zr[1]
    if not z1 > z0:
        return 0.0

    def h(z):
        return x**5 / 16.0 + 5.0 / 16.0 * x * z * z * (z * z + 2.0 * x * x)

    # sigma must also lie within b_hi of center - h(z) for some z in range
    hz = (h(z0), h(z1))
    s0 = max(-a_hi, center - max(hz) - b_hi)
    s1 = min(a_hi, center - min(hz) + b_hi)
    if not s1 > s0:
        return 0.0
    ds = (s1 - s0) / res
    dz = (z1 - z0) / res
    sig = s0 + ds * (np.arange(res) + 0.5)
    z = z0 + dz * (np.arange(res) + 0.5)
    sa = np.abs(sig)
    in_a = (sa >= a_lo) & (sa < a_hi)
    s2 = np.abs(center - h(z)[:, None] - sig[None, :])
    in_b = (s2 >= b_lo) & (s2 < b_hi)
    return float(np.count_nonzero(in_b & in_a[None, :])) * ds * dz


MAX_RESOLUTION = 4096


def _checked_area(center, x, sa, sb, K, res, stability):
    """Cell count at ``res`` cells per side, doubled until two counts agree."""
    area = _count_area(center, x, sa, sb, K, res)
    while True:
        fine = _count_area(center, x, sa, sb, K, 2 * res)
        scale = max(area, fine)
        if scale == 0 or abs(fine - area) <= stability * scale:
            return fine
        res *= 2
        if 2 * res > MAX_RESOLUTION:
            raise AccuracyFailure(
                f"cell count unstable under refinement ({area:.4e} vs {fine:.4e})")
        area = fine


def measure_bound_check(tau, xi, k1, k2, K, resolution=256, stability=0.02):
    """Area of {(tau1, xi1): <tau1 - xi1^5> in B_k1, <(tau - tau1) - (xi - xi1)^5> in B_k2,
    |2 xi1 - xi| >= K} against min{K^-3 2^(k1+k2) |xi|^-1, 2^(k1+k2) |xi|^-3/2}.

    Returns (area, bound, ratio). The area is computed on a ``resolution``^2
    cell grid and on one twice as fine; the finer value is returned.
    """
    if xi == 0:
        raise InvalidParameter("xi must be nonzero")
    if K < 0 or resolution < 64:
        raise InvalidParameter("need K >= 0 and resolution >= 64")
    area = _checked_area(tau, xi, _shell(k1), _shell(k2), K, resolution, stability)
    p = 2.0 ** (k1 + k2)
    bound = min(p * abs(xi) ** -1.5, p / (K**3 * abs(xi)) if K > 0 else math.inf)
    return area, bound, area / bound


def measure_bound_check_m1(tau1, xi1, k, k2, K1, resolution=256, stability=0.02):
    """Area of {(tau, xi): <tau - xi^5> in B_k, <(tau - tau1) - (xi - xi1)^5> in B_k2,
    |2 xi - xi1| >= K1} against min{K1^-3 |xi1|^-1 2^(k+k2), |xi1|^-3/2 2^(3k/4) 2^k2}.
    """
    if xi1 == 0:
        raise InvalidParameter("xi1 must be nonzero")
    if K1 < 0 or resolution < 64:
        raise InvalidParameter("need K1 >= 0 and resolution >= 64")
    area = _checked_area(tau1, xi1, _shell(k), _shell(k2), K1, resolution, stability)
    first = 2.0 ** (k + k2) / (K1**3 * abs(xi1)) if K1 > 0 else math.inf
    bound = min(first, abs(xi1) ** -1.5 * 2.0 ** (0.75 * k + k2))
    return area, bound, area / bound


def lemma_identity_residual(tau, xi, tau1, xi1):
    """(tau - xi^5/16) - (tau1 - xi1^5) - ((tau - tau1) - (xi - xi1)^5) minus its factorized form."""
    lhs = (tau - xi**5 / 16.0) - (tau1 - xi1**5) - ((tau - tau1) - (xi - xi1) ** 5)
    z = 2.0 * xi1 - xi
    return lhs - 5.0 / 16.0 * xi * z * z * (z * z + 2.0 * xi * xi)


def lemma_companion_residual(tau, xi, tau1, xi1):
    """(tau1 - xi1^5/16) - (tau - xi^5) + ((tau - tau1) - (xi - xi1)^5) minus its factorized form."""
    lhs = (tau1 - xi1**5 / 16.0) - (tau - xi**5) + ((tau - tau1) - (xi - xi1) ** 5)
    z = 2.0 * xi - xi1
    return lhs - 5.0 / 16.0 * xi1 * z * z * (z * z + 2.0 * xi1 * xi1)


def random_measure_configs(count, rng):
    """Random (center, xi, k1, k2, K) tuples whose admissible sets are nonempty.

    The offset of the centre from xi^5/16 is zero for a quarter of the draws
    and otherwise spread on both sides of the resonance; shell indices favour
    small values, where the ratio to the bound is largest. K is a random
    fraction of the largest admissible |z|.
    """
    out = []
    while len(out) < count:
        x = float(rng.choice([-1.0, 1.0]) * 2.0 ** rng.uniform(-2.0, 2.0))
        k1, k2 = (min(int(rng.exponential(1.0)), 4) for _ in range(2))
        spread = _shell(k1)[1] + _shell(k2)[1]
        shift = 0.0 if rng.random() < 0.25 else float(rng.uniform(-1.0, 2.0))
        center = x**5 / 16.0 + shift * spread
        zr = _z_range(center, spread, x)
        if zr is None:
            continue
        K = float(rng.uniform(0.0, 0.9)) * zr[1] if rng.random() < 0.7 else 0.0
        out.append((center, x, k1, k2, K))
    return out


def measure_suite(count=100, seed=0, resolution=256, lemma="m"):
    """Rows (config_id, area, bound, ratio) and the fitted constant max(ratio)."""
    rng = np.random.default_rng(seed)
    check = measure_bound_check if lemma == "m" else measure_bound_check_m1
    rows = []
    for i, cfg in enumerate(random_measure_configs(count, rng)):
        area, bound, ratio = check(*cfg, resolution=resolution)
        rows.append((i, area, bound, ratio))
    return rows, max(r[3] for r in rows)


# ---------------------------------------------------------------------------
# [k; Z] multiplier norms on cyclic groups


@dataclass(frozen=True)
class MultiplierInstance:
    """m on Gamma_k(Z_n), stored as values[xi_1, ..., xi_{k-1}] with xi_k = -(sum)."""

    n: int
    k: int
    values: np.ndarray

    def __post_init__(self):
        if self.n < 2 or self.k < 2:
            raise InvalidParameter("need n >= 2 and k >= 2")
        vals = np.asarray(self.values, dtype=complex)
        if vals.shape != (self.n,) * (self.k - 1):
            raise InvalidParameter(f"values must have shape {(self.n,) * (self.k - 1)}")
        object.__setattr__(self, "values", vals)

    def tensor(self):
        """Full array on Z_n^k, zero off the hyperplane."""
        n, k = self.n, self.k
        full = np.zeros((n,) * k, dtype=complex)
        idx = np.indices((n,) * (k - 1))
        last = (-idx.sum(axis=0)) % n
        full[tuple(idx) + (last,)] = self.values
        return full


@dataclass
class NormEstimate:
    value: float
    restarts: list

    @property
    def spread(self):
        return float(np.std(self.restarts))


def _contract_except(T, fs, skip):
    out = T
    # contract from the last axis down so indices stay valid
    for ax in reversed(range(len(fs))):
        if ax == skip:
            continue
        out = np.tensordot(out, fs[ax], axes=([ax], [0]))
    return out


def multiplier_norm(inst, restarts=20, tol=1e-12, max_iter=1000, seed=0):
    """Alternating maximization of |sum_Gamma m prod f_i| over unit f_i.

    Each step replaces one f_i by the normalized conjugate of its linear
    functional, which cannot decrease the form. The best value over random
    restarts is a certified lower bound for ||m||_{[k; Z_n]}.
    """
    rng = np.random.default_rng(seed)
    T = inst.tensor()
    k, n = inst.k, inst.n
    best, values = 0.0, []
    for _ in range(restarts):
        fs = [rng.standard_normal(n) + 1j * rng.standard_normal(n) for _ in range(k)]
        fs = [f / np.linalg.norm(f) for f in fs]
        val = 0.0
        for _ in range(max_iter):
            prev = val
            for i in range(k):
                L = _contract_except(T, fs, i)
                nl = np.linalg.norm(L)
                if nl == 0:
                    break
                fs[i] = np.conj(L) / nl
                val = nl
            if val - prev <= tol * max(val, 1e-300):
                break
        values.append(float(val))
        best = max(best, float(val))
    return NormEstimate(best, values)


def ttstar_multiplier(inst):
    """m(xi_1..xi_k) conj(m(-xi_{k+1}..-xi_{2k})) on Gamma_2k from m on Gamma_{k+1}."""
    n, k = inst.n, inst.k - 1
    m = inst.values
    neg = np.conj(m[tuple(np.ix_(*[(-np.arange(n)) % n] * k))])
    big = np.multiply.outer(m, neg)                   # axes xi_1..xi_2k
    # restrict to the first 2k-1 free variables on Gamma_2k
    idx = np.indices((n,) * (2 * k - 1))
    last = (-idx.sum(axis=0)) % n
    vals = big[tuple(idx) + (last,)]
    return MultiplierInstance(n, 2 * k, vals)


def ttstar_check(inst, restarts=20, seed=0):
    """Estimates (lhs, rhs, rel_gap) of the TT* identity for m on Gamma_{k+1}."""
    rhs = multiplier_norm(inst, restarts, seed=seed).value
    lhs = multiplier_norm(ttstar_multiplier(inst), restarts, seed=seed + 1).value
    return lhs, rhs, abs(lhs - rhs**2) / rhs**2


def product_multiplier(m1, m2):
    """m1(xi_1..xi_k1) m2(xi_{k1+1}..xi_{k1+k2}) on Gamma_{k1+k2}."""
    n = m1.n
    k1, k2 = m1.k - 1, m2.k - 1
    big = np.multiply.outer(m1.values, m2.values)
    kk = k1 + k2
    idx = np.indices((n,) * (kk - 1))
    last = (-idx.sum(axis=0)) % n
    return MultiplierInstance(n, kk, big[tuple(idx) + (last,)])


def composition_check(m1, m2, restarts=20, seed=0):
    """(lhs, rhs) with lhs = ||m1 m2||_{[k1+k2]} and rhs = ||m1||_{[k1+1]} ||m2||_{[k2+1]}."""
    lhs = multiplier_norm(product_multiplier(m1, m2), restarts, seed=seed).value
    rhs = (multiplier_norm(m1, restarts, seed=seed + 1).value
           * multiplier_norm(m2, restarts, seed=seed + 2).value)
    return lhs, rhs


def random_multiplier(n, k, rng):
    shape = (n,) * (k - 1)
    return MultiplierInstance(n, k, rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


# ---------------------------------------------------------------------------
# sampled boundedness of the bilinear form on dyadic blocks


def random_block_field(j, k, rng, dx, dt):
    """Random data on the block 2^j <= xi < 2^(j+1), <tau - xi^5> in [2^k, 2^(k+1))."""
    x0, x1 = 2.0 ** j, 2.0 ** (j + 1)
    xi = UniformAxis(dx, int(math.ceil(0.5 * (x1 - x0) / dx)), 0.5 * (x0 + x1))
    m_hi = 2.0 ** (k + 1)
    span = x1**5 - x0**5 + 2.0 * m_hi
    tau = UniformAxis(dt, int(math.ceil(0.5 * span / dt)) + 1, 0.5 * (x0**5 + x1**5))
    grid = SpaceTimeGrid(xi, tau)
    T, X = grid.mesh()
    mod = bracket(T - X**5)
    inside = (mod >= 2.0 ** k) & (mod < m_hi) & (X >= x0) & (X < x1)
    return SpaceTimeField(grid, np.where(inside, rng.uniform(0.5, 1.0, T.shape), 0.0))


def sampled_boundedness(s, a, b, scales=(-1, 0, 1), samples=4, seed=0, kmax=3):
    """Largest be3_ratio over random block data at each frequency scale j.

    Returns rows (j, max ratio). Blocks at one scale share a grid with 64
    cells per frequency block and a tau step of 1/4.
    """
    rng = np.random.default_rng(seed)
    rows = []
    for j in scales:
        dx, dt = 2.0 ** j / 64.0, 0.25
        best = 0.0
        for _ in range(samples):
            k1, k2 = (int(v) for v in rng.integers(0, kmax + 1, size=2))
            f = random_block_field(j, k1, rng, dx, dt)
            g = random_block_field(j, k2, rng, dx, dt)
            best = max(best, be3_ratio(f, g, s, a, b))
        rows.append((j, best))
    return rows
