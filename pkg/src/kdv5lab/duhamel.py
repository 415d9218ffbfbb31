"""Resonance functions and the quadratic/cubic Picard terms A2 and A3.

The equation is

    u_t - d_x^5 u + c1 d_x(u^3) + c2 d_x((d_x u)^2) + c3 d_x(u d_x^2 u) = 0,

so U(t) = exp(t d_x^5) multiplies by exp(i t xi^5). With the transform
u_hat = int u exp(-i x xi) dx the transform of a product is (1/2pi) times the
convolution of transforms; every spectral formula below carries that factor.

Two independent routes are provided for each term:

* ``*_spectral``: the s-integral is done in closed form, leaving a
  convolution over xi_1 (and xi_2) weighted by oscillatory factors.
* ``*_duhamel``: Gauss-Legendre quadrature of the Duhamel integral in s with
  the nonlinearity evaluated by zero-padded FFT products.

Band spectra (:class:`~kdv5lab.bands.BandSpectrum`) go through an exact
piecewise quadrature engine instead of a grid, which keeps N^-4 wide bands
cheap; the result is a :class:`~kdv5lab.bands.QuadratureSpectrum`.
"""

import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import product

import numpy as np
from scipy import special

from .bands import BandSpectrum, QuadratureSpectrum
from .errors import AccuracyFailure, InvalidInput, InvalidParameter
from .quadrature import _leggauss, composite_rule, graded_breaks
from .spectral import SpectralField

TWO_PI = 2.0 * math.pi
PHASE_PER_NODE = 0.6


@dataclass(frozen=True)
class Coefficients:
    c1: float
    c2: float
    c3: float
    allow_degenerate: bool = False

    def __post_init__(self):
        if self.c3 == 0 and not self.allow_degenerate:
            raise InvalidParameter("c3 must be nonzero")

    @classmethod
    def integrable(cls, alpha=5.0):
        """Lax-type preset: (c1, c2, c3) = (-(2/5) alpha^2, alpha, 2 alpha)."""
        return cls(-0.4 * alpha**2, float(alpha), 2.0 * alpha)

    @classmethod
    def integrable_unsquared(cls, alpha=5.0):
        """Preset with c1 = -(2/5) alpha; kept only as a regression foil."""
        return cls(-0.4 * alpha, float(alpha), 2.0 * alpha)

    @classmethod
    def linear(cls):
        return cls(0.0, 0.0, 0.0, allow_degenerate=True)

    @property
    def is_linear(self):
        return self.c1 == 0 and self.c2 == 0 and self.c3 == 0


# ---------------------------------------------------------------------------
# resonances and oscillatory factors


def _q1(total, x1, x2):
    return 2.5 * total * x1 * x2 * (total * total + x1 * x1 + x2 * x2)


def resonance_q1(xi1, xi2):
    """(xi1 + xi2)^5 - xi1^5 - xi2^5 in factorized form."""
    xi1 = np.asarray(xi1, dtype=float)
    xi2 = np.asarray(xi2, dtype=float)
    out = _q1(xi1 + xi2, xi1, xi2)
    return float(out) if out.ndim == 0 else out


def _q2(s12, s23, s31):
    return 2.5 * s12 * s23 * s31 * (s12 * s12 + s23 * s23 + s31 * s31)


def resonance_q2(xi1, xi2, xi3):
    """(xi1 + xi2 + xi3)^5 - xi1^5 - xi2^5 - xi3^5 in factorized form."""
    xi1, xi2, xi3 = (np.asarray(v, dtype=float) for v in (xi1, xi2, xi3))
    out = _q2(xi1 + xi2, xi2 + xi3, xi3 + xi1)
    return float(out) if out.ndim == 0 else out


def phi_factor(q, t):
    """(1 - exp(-i q t)) / q, continuous at q = 0 where it equals i t."""
    q = np.asarray(q, dtype=float)
    half = 0.5 * q * t
    out = 1j * t * np.exp(-1j * half) * np.sinc(half / math.pi)
    return complex(out) if out.ndim == 0 else out


def e_factor(q, t):
    """int_0^t exp(-i q s) ds."""
    return phi_factor(q, t) / 1j


def _j_moments(w, kmax):
    """J_k(w) = int_0^1 u^k exp(-i w u) du for k = 0..kmax."""
    w = np.asarray(w, dtype=float)
    out = np.zeros((kmax + 1,) + w.shape, dtype=complex)
    small = np.abs(w) <= 2.0
    if np.any(small):
        ws = w[small]
        z = -1j * ws
        for k in range(kmax + 1):
            term = np.ones_like(z)
            acc = term / (k + 1)
            for n in range(1, 40):
                term = term * z / n
                acc = acc + term / (n + k + 1)
            out[k][small] = acc
    big = ~small
    if np.any(big):
        wb = w[big]
        ex = np.exp(-1j * wb)
        jk = (1.0 - ex) / (1j * wb)
        out[0][big] = jk
        for k in range(1, kmax + 1):
            jk = (k * jk - ex) / (1j * wb)
            out[k][big] = jk
    return out


def pairing_kernel(q_out, q_in, q_tot, t):
    """[E(q_out, t) - E(q_tot, t)] / (i q_in) with q_tot = q_out + q_in.

    This is int_0^t exp(-i s q_out) E(q_in, s) ds, the time factor of a
    quadratic interaction fed by the quadratic term itself. Small ``q_in``
    uses a Taylor expansion of E about ``q_out``.
    """
    q_out, q_in, q_tot = np.broadcast_arrays(
        *(np.asarray(v, dtype=float) for v in (q_out, q_in, q_tot)))
    out = np.empty(q_out.shape, dtype=complex)
    direct = np.abs(q_in * t) >= 1e-3
    if np.any(direct):
        qo, qi, qt_ = q_out[direct], q_in[direct], q_tot[direct]
        out[direct] = (e_factor(qo, t) - e_factor(qt_, t)) / (1j * qi)
    ser = ~direct
    if np.any(ser):
        qo, h = q_out[ser], q_in[ser]
        J = _j_moments(qo * t, 4)
        # E^(k)(q) = (-i)^k t^(k+1) J_k(q t)
        derivs = [(-1j) ** k * t ** (k + 1) * J[k] for k in range(5)]
        acc = derivs[1] + h / 2 * derivs[2] + h**2 / 6 * derivs[3] + h**3 / 24 * derivs[4]
        out[ser] = -acc / 1j
    return out


def quadratic_symbol(xi1, xi2, coeffs, total=None):
    """Symbol m2 of c2 d_x((d_x u)^2) + c3 d_x(u d_x^2 u), symmetrized.

    The transform of the quadratic term is (1/2pi) int m2 u_hat u_hat.
    """
    total = xi1 + xi2 if total is None else total
    return -1j * total * (coeffs.c2 * xi1 * xi2 + 0.5 * coeffs.c3 * (xi1 * xi1 + xi2 * xi2))


def _a2_kernel(xi, xi1, xi2, t, coeffs):
    """Integrand weight of the closed-form A2 (without the outer phase)."""
    sym = (coeffs.c2 - coeffs.c3) * xi * xi1 * xi2 + 0.5 * coeffs.c3 * xi**3
    return phi_factor(_q1(xi, xi1, xi2), t) * sym


# ---------------------------------------------------------------------------
# grid helpers


def _check_grid_field(u0):
    if not isinstance(u0, SpectralField):
        raise InvalidInput("expected a SpectralField")
    if u0.grid.origin != 0.0:
        raise InvalidInput("grid routes need a grid centred on xi = 0")


def _next_pow2(n):
    return 1 << (int(n) - 1).bit_length()


class _PaddedFFT:
    """Transforms between modes -K..K (spacing delta) and a padded periodic grid."""

    def __init__(self, delta, n):
        self.delta = delta
        self.n = n
        self.length = TWO_PI / delta

    def to_physical(self, vals):
        K = (vals.shape[-1] - 1) // 2
        V = np.zeros(vals.shape[:-1] + (self.n,), dtype=complex)
        V[..., np.arange(-K, K + 1) % self.n] = vals
        return np.fft.ifft(V, axis=-1) * (self.n * self.delta / TWO_PI)

    def to_fourier(self, u, K):
        U = np.fft.fft(u, axis=-1) * (self.length / self.n)
        return U[..., np.arange(-K, K + 1) % self.n]


def _quadratic_term(fft, v, xi_in, xi_out, coeffs):
    """Transform of c2 d_x(u_x^2) + c3 d_x(u u_xx) for u with modes v."""
    u = fft.to_physical(v)
    ux = fft.to_physical(1j * xi_in * v)
    uxx = fft.to_physical(-xi_in**2 * v)
    prod = coeffs.c2 * ux * ux + coeffs.c3 * u * uxx
    K = (xi_out.size - 1) // 2
    return 1j * xi_out * fft.to_fourier(prod, K)


def _bilinear_term(fft, v, w, xi_v, xi_w, xi_out, coeffs):
    """Transform of the symmetric bilinear form B(u, w) behind the quadratic term."""
    u = fft.to_physical(v)
    ux = fft.to_physical(1j * xi_v * v)
    uxx = fft.to_physical(-xi_v**2 * v)
    z = fft.to_physical(w)
    zx = fft.to_physical(1j * xi_w * w)
    zxx = fft.to_physical(-xi_w**2 * w)
    prod = coeffs.c2 * ux * zx + 0.5 * coeffs.c3 * (u * zxx + z * uxx)
    K = (xi_out.size - 1) // 2
    return 1j * xi_out * fft.to_fourier(prod, K)


def _cubic_term(fft, v, xi_out, c1):
    u = fft.to_physical(v)
    K = (xi_out.size - 1) // 2
    return 1j * c1 * xi_out * fft.to_fourier(u * u * u, K)


def _phase_bound(u0, arity, rel=1e-15, samples=41):
    """Largest |resonance| over interactions whose amplitude product matters.

    Interactions whose amplitude product is below ``rel`` times the largest
    one are ignored; for arity 3 the bound covers |q_out| + |q_in| of the
    iterated quadratic interaction as well as the cubic resonance.
    """
    mag = np.abs(u0.values)
    live = np.nonzero(mag > rel * mag.max())[0]
    idx = np.unique(np.linspace(live[0], live[-1], samples).round().astype(int))
    xi, amp = u0.xi[idx], mag[idx] / mag.max()
    if arity == 2:
        keep = amp[:, None] * amp[None, :] > rel
        q = np.abs(resonance_q1(xi[:, None], xi[None, :]))
        return float(np.max(np.where(keep, q, 0.0)))
    a1, a2, a3 = (amp[:, None, None], amp[None, :, None], amp[None, None, :])
    x1, x2, x3 = (xi[:, None, None], xi[None, :, None], xi[None, None, :])
    keep = a1 * a2 * a3 > rel
    q = np.abs(_q1(x1 + x2 + x3, x1, x2 + x3)) + np.abs(resonance_q1(x2, x3))
    q = np.maximum(q, np.abs(resonance_q2(x1, x2, x3)))
    return float(np.max(np.where(keep, q, 0.0)))


def _time_rule(t, n_quad, max_phase, panels=None):
    if n_quad < 4:
        raise InvalidParameter("n_quad must be at least 4")
    if panels is None:
        panels = max(1, math.ceil(max_phase * abs(t) / (PHASE_PER_NODE * n_quad)))
    breaks = np.linspace(0.0, t, panels + 1)
    return breaks, panels


def _hermitian_out(vals, herm):
    if herm:
        vals = 0.5 * (vals + np.conj(vals[::-1]))
    return vals


# ---------------------------------------------------------------------------
# A2


def _a2_grid(u0, t, coeffs, tol=None):
    M = u0.grid.half_extent
    d = u0.grid.delta_xi
    out_grid = u0.grid.extended(2 * M)
    out = np.zeros(4 * M + 1, dtype=complex)
    coarse = np.zeros(4 * M + 1, dtype=complex)
    u = u0.values
    m = np.arange(-M, M + 1)
    ks = np.arange(-2 * M, 2 * M + 1)
    chunk = max(1, 2_000_000 // (2 * M + 1))
    for start in range(0, ks.size, chunk):
        k = ks[start:start + chunk][:, None]
        m2 = k - m[None, :]
        valid = np.abs(m2) <= M
        xi = k * d
        xi1 = m[None, :] * d
        xi2 = m2 * d
        kern = _a2_kernel(xi, xi1, xi2, t, coeffs)
        terms = np.where(valid, kern * u[None, :] * u[np.clip(m2, -M, M) + M], 0.0)
        out[start:start + chunk] = terms.sum(axis=1)
        if tol is not None:
            even = (m[None, :] % 2) == 0
            coarse[start:start + chunk] = 2 * np.where(even, terms, 0.0).sum(axis=1)
    xi_out = out_grid.nodes
    phase = np.exp(1j * t * xi_out**5) * d / TWO_PI
    vals = _hermitian_out(out * phase, u0.hermitian)
    if tol is not None:
        ref = np.linalg.norm(out)
        if ref > 0 and np.linalg.norm(out - coarse) > tol * ref:
            raise AccuracyFailure(
                f"xi_1 quadrature unresolved: stride-2 change "
                f"{np.linalg.norm(out - coarse) / ref:.2e} > {tol:.1e}")
    return SpectralField(out_grid, vals, u0.hermitian)


def a2_spectral(u0, t, coeffs, tol=None, **band_opts):
    """A2(u0)(t) from the closed-form s-integral.

    Grid input gives a grid output on twice the extent; the xi_1 sum is the
    trapezoid rule on the input grid and ``tol`` enables a stride-2
    resolution check. Band input goes to :func:`a2_bands`.
    """
    if isinstance(u0, BandSpectrum):
        return a2_bands(u0, t, coeffs, tol=1e-8 if tol is None else tol, **band_opts)
    _check_grid_field(u0)
    return _a2_grid(u0, t, coeffs, tol)


def a2_duhamel(u0, t, coeffs, n_quad=16, panels=None):
    """A2(u0)(t) by Gauss-Legendre quadrature of the Duhamel integral in s.

    ``n_quad`` nodes per panel; the panel count defaults to what the largest
    resonance on the effective support needs.
    """
    _check_grid_field(u0)
    M = u0.grid.half_extent
    d = u0.grid.delta_xi
    xi_in = u0.xi
    out_grid = u0.grid.extended(2 * M)
    xi_out = out_grid.nodes
    breaks, _ = _time_rule(t, n_quad, _phase_bound(u0, 2), panels)
    s, w = composite_rule(breaks, n_quad)
    fft = _PaddedFFT(d, _next_pow2(4 * M + 2))
    acc = np.zeros(xi_out.size, dtype=complex)
    for chunk in np.array_split(np.arange(s.size), max(1, s.size // 64)):
        sc = s[chunk][:, None]
        v = u0.values[None, :] * np.exp(1j * sc * xi_in**5)
        N = _quadratic_term(fft, v, xi_in, xi_out, coeffs)
        acc += np.sum(w[chunk][:, None] * np.exp(-1j * sc * xi_out**5) * N, axis=0)
    vals = -np.exp(1j * t * xi_out**5) * acc
    return SpectralField(out_grid, _hermitian_out(vals, u0.hermitian), u0.hermitian)


# ---------------------------------------------------------------------------
# A3 on grids


@dataclass(frozen=True)
class A3Components:
    pairing: SpectralField
    cubic: SpectralField

    @property
    def total(self):
        return self.pairing + self.cubic


def _integration_matrix(n):
    """S[i, j] = int_{-1}^{x_i} l_j(x) dx for the Lagrange basis on GL nodes."""
    x, _ = _leggauss(n)
    leg = np.polynomial.legendre
    coef = np.linalg.inv(leg.legvander(x, n - 1))
    S = np.empty((n, n))
    for j in range(n):
        S[:, j] = leg.legval(x, leg.legint(coef[:, j], lbnd=-1))
    return S


def a3_duhamel_components(u0, t, coeffs, n_quad=16, panels=None):
    """Both pieces of the third-order coefficient by iterated Duhamel.

    ``pairing`` is -int U(t-s) 2B(u1, A2(s)) ds and ``cubic`` is
    -int U(t-s) c1 d_x(u1^3) ds, with u1(s) = U(s) u0. A2(s) at every node is
    obtained from a spectral integration matrix inside each time panel.
    """
    _check_grid_field(u0)
    M = u0.grid.half_extent
    d = u0.grid.delta_xi
    xi1 = u0.xi
    g2 = u0.grid.extended(2 * M)
    g3 = u0.grid.extended(3 * M)
    xi2, xi3 = g2.nodes, g3.nodes
    breaks, npan = _time_rule(t, n_quad, _phase_bound(u0, 3), panels)
    fft = _PaddedFFT(d, _next_pow2(6 * M + 2))
    S = _integration_matrix(n_quad)
    x, wref = _leggauss(n_quad)
    w_state = np.zeros(xi2.size, dtype=complex)     # U(-s) A2(s)
    pair_acc = np.zeros(xi3.size, dtype=complex)
    cubic_acc = np.zeros(xi3.size, dtype=complex)
    for p in range(npan):
        a, b = breaks[p], breaks[p + 1]
        half = 0.5 * (b - a)
        s = a + half * (x + 1.0)
        wts = half * wref
        v = u0.values[None, :] * np.exp(1j * s[:, None] * xi1**5)
        g = -np.exp(-1j * s[:, None] * xi2**5) * _quadratic_term(fft, v, xi1, xi2, coeffs)
        ws = w_state[None, :] + half * (S @ g)
        a2 = np.exp(1j * s[:, None] * xi2**5) * ws
        w_state = w_state + wts @ g
        back = np.exp(-1j * s[:, None] * xi3**5)
        B = _bilinear_term(fft, v, a2, xi1, xi2, xi3, coeffs)
        pair_acc -= wts @ (back * 2.0 * B)
        if coeffs.c1 != 0:
            cubic_acc -= wts @ (back * _cubic_term(fft, v, xi3, coeffs.c1))
    phase = np.exp(1j * t * xi3**5)
    herm = u0.hermitian
    return A3Components(
        SpectralField(g3, _hermitian_out(phase * pair_acc, herm), herm),
        SpectralField(g3, _hermitian_out(phase * cubic_acc, herm), herm))


def a3_duhamel(u0, t, coeffs, n_quad=16, panels=None):
    return a3_duhamel_components(u0, t, coeffs, n_quad, panels).total


def a3_1_spectral(u0, t, c1, **band_opts):
    """Cubic-term part of A3 from the closed-form s-integral.

    -(c1 / 4pi^2) exp(i t xi^5) int int xi phi(q2, t) u_hat u_hat u_hat.
    """
    if isinstance(u0, BandSpectrum):
        coeffs = Coefficients(c1, 0.0, 0.0, allow_degenerate=True)
        return a3_bands_components(u0, t, coeffs, **band_opts)[1]
    _check_grid_field(u0)
    M = u0.grid.half_extent
    d = u0.grid.delta_xi
    g3 = u0.grid.extended(3 * M)
    u = u0.values
    m = np.arange(-M, M + 1)
    out = np.zeros(6 * M + 1, dtype=complex)
    uu = u[:, None] * u[None, :]
    m1, m2 = m[:, None], m[None, :]
    for idx, k in enumerate(range(-3 * M, 3 * M + 1)):
        m3 = k - m1 - m2
        valid = np.abs(m3) <= M
        if not np.any(valid):
            continue
        q = _q2((m1 + m2) * d, (m2 + m3) * d, (m3 + m1) * d)
        terms = phi_factor(q, t) * uu * u[np.clip(m3, -M, M) + M]
        out[idx] = k * d * np.sum(np.where(valid, terms, 0.0))
    xi = g3.nodes
    vals = -c1 / TWO_PI**2 * d * d * np.exp(1j * t * xi**5) * out
    return SpectralField(g3, _hermitian_out(vals, u0.hermitian), u0.hermitian)


# ---------------------------------------------------------------------------
# exact band engine
#
# Output frequencies are grouped into clusters of overlapping pieces
# anchor + [lo, hi]; each cluster gets composite Gauss-Legendre panels broken
# at every kink of the band convolutions. Inside one outer panel the inner
# breakpoints keep a fixed order and move affinely with the output offset, so
# one fractional template serves all output nodes of the panel at once.

MAX_PHASE_PANELS = 16


def _live_bands(spec):
    return [b for b in spec.bands if b.amp != 0]


def _band_radius(b):
    return abs(b.anchor) + max(abs(b.lo), abs(b.hi))


def _phase_panels(phase, n):
    return int(min(MAX_PHASE_PANELS, max(1, math.ceil(phase / (PHASE_PER_NODE * n)))))


def _grade_levels(width, scale):
    """Geometric levels needed to shrink ``width`` below ``scale``."""
    if width <= 0:
        return 0
    return int(min(60, max(8, math.ceil(math.log2(max(width / scale, 1.0))) + 6)))


def _fraction_template(n, pieces=1, grade=None, levels=0):
    """GL nodes/weights on [0, 1], optionally graded toward 0 ('lo') or 1 ('hi')."""
    if grade is None:
        fr = np.linspace(0.0, 1.0, pieces + 1)
    else:
        geo = 0.5 ** np.arange(1, levels + 1)
        fr = np.concatenate(([0.0], geo, [1.0]))
        if grade == "hi":
            fr = 1.0 - fr
        fr = np.unique(fr)
    return composite_rule(fr, n)


def _clusters(items):
    """Group output pieces (anchor, lo, hi, ...) whose intervals overlap."""
    items = sorted(items, key=lambda it: it[0] + it[1])
    groups = []
    for it in items:
        lo_abs, hi_abs = it[0] + it[1], it[0] + it[2]
        if groups and lo_abs <= groups[-1][1]:
            groups[-1][1] = max(groups[-1][1], hi_abs)
            groups[-1][2].append(it)
        else:
            groups.append([lo_abs, hi_abs, [it]])
    return [g[2] for g in groups]


def _outer_breaks(members, t, n, r_in):
    """Panel breakpoints (offsets from the cluster anchor) for one cluster."""
    anchor = members[0][0]
    pts = set()
    for A, lo, hi, kinks, _ in members:
        pts.update(k + (A - anchor) for k in kinks)
    pts = sorted(pts)
    zero = -anchor
    r_out = max(abs(anchor + pts[0]), abs(anchor + pts[-1]))
    rate = 5.0 * (r_out**4 + r_in**4) * abs(t)
    brk = set(pts)
    for a, b in zip(pts[:-1], pts[1:]):
        cnt = _phase_panels(rate * (b - a), n)
        brk.update(np.linspace(a, b, cnt + 1)[1:-1].tolist())
    if pts[0] <= zero <= pts[-1]:
        brk.add(zero)
        srt = sorted(brk)
        i = srt.index(zero)
        scale = 1.0 / (5.0 * max(r_in, 1.0) ** 4 * max(abs(t), 1e-300))
        for nb in ([srt[i - 1]] if i > 0 else []) + ([srt[i + 1]] if i + 1 < len(srt) else []):
            lv = _grade_levels(abs(nb - zero), scale)
            lo, hi = min(nb, zero), max(nb, zero)
            brk.update(graded_breaks(lo, hi, zero, lv)[1:-1].tolist())
    return anchor, np.array(sorted(brk))


def _band_pass(spec, t, n_outer, arity, evaluate, extra_breaks=None):
    """Evaluate ``evaluate(bands, combos, anchor, X)`` on every outer panel.

    ``X`` has shape (panels, n_outer); ``evaluate`` returns an array of shape
    (parts, panels, n_outer). Returns a list of QuadratureSpectrum, one per part.
    """
    bands = _live_bands(spec)
    pieces = []
    for combo in product(range(len(bands)), repeat=arity):
        bs = [bands[c] for c in combo]
        A = sum(b.anchor for b in bs)
        kinks = {sum(v) for v in product(*[(b.lo, b.hi) for b in bs])}
        if extra_breaks is not None:
            lo_k, hi_k = min(kinks), max(kinks)
            kinks.update(k for k in extra_breaks(bs) if lo_k < k < hi_k)
        kinks = sorted(kinks)
        pieces.append((A, kinks[0], kinks[-1], kinks, combo))
    r_in = max((_band_radius(b) for b in bands), default=0.0)
    gx, gw = _leggauss(n_outer)
    out = []
    for members in _clusters(pieces):
        anchor, brk = _outer_breaks(members, t, n_outer, r_in)
        a, b = brk[:-1], brk[1:]
        keep = b > a
        a, b = a[keep], b[keep]
        half = 0.5 * (b - a)
        X = a[:, None] + half[:, None] * (gx[None, :] + 1.0)
        W = half[:, None] * gw[None, :]
        vals = evaluate(bands, [m[4] for m in members], anchor, X)
        out.append((np.full(X.size, anchor), X.ravel(), W.ravel(),
                    vals.reshape(vals.shape[0], -1)))
    if not out:
        e = np.zeros(0)
        return e, e, e, np.zeros((1, 0), complex)
    anchors = np.concatenate([o[0] for o in out])
    offs = np.concatenate([o[1] for o in out])
    wts = np.concatenate([o[2] for o in out])
    vals = np.concatenate([o[3] for o in out], axis=1)
    return anchors, offs, wts, vals


def _weighted_mass(xi, weights, values, a):
    return float(np.sum(weights * np.abs(xi) ** (2 * a) * np.abs(values) ** 2))


def _refine(compute, n_outer, n_inner, tol, max_doublings, what):
    """Double both rule sizes until weighted L^2 masses settle within ``tol``.

    The check uses weights |xi|^0 and |xi|^-2 so that both the bulk and the
    low-frequency part of the output are converged.
    """
    prev = compute(n_outer, n_inner)
    for _ in range(max_doublings):
        n_outer, n_inner = 2 * n_outer, 2 * n_inner
        cur = compute(n_outer, n_inner)
        ok = True
        for a in (0.0, -1.0):
            xi_p = prev[0] + prev[1]
            xi_c = cur[0] + cur[1]
            m0 = _weighted_mass(xi_p, prev[2], prev[3].sum(axis=0), a)
            m1 = _weighted_mass(xi_c, cur[2], cur[3].sum(axis=0), a)
            if abs(math.sqrt(m1) - math.sqrt(m0)) > tol * math.sqrt(max(m1, 1e-300)):
                ok = False
        if ok:
            return cur
        prev = cur
    raise AccuracyFailure(f"{what}: quadrature did not settle to {tol:.1e}")


def _a2_band_eval(bands, combos, anchor, X, t, coeffs, n_inner):
    vals = np.zeros(X.shape, dtype=complex)
    xi = anchor + X
    tmpl_u, tmpl_w = _fraction_template(n_inner)
    for i, j in combos:
        bi, bj = bands[i], bands[j]
        xs = X + (anchor - (bi.anchor + bj.anchor))
        lo = np.maximum(bi.lo, xs - bj.hi)
        hi = np.minimum(bi.hi, xs - bj.lo)
        width = np.maximum(hi - lo, 0.0)
        y = lo[..., None] + width[..., None] * tmpl_u
        wy = width[..., None] * tmpl_w
        xi1 = bi.anchor + y
        xi2 = bj.anchor + (xs[..., None] - y)
        kern = _a2_kernel(xi[..., None], xi1, xi2, t, coeffs)
        vals += bi.amp * bj.amp * np.sum(wy * kern, axis=-1)
    return (vals * np.exp(1j * t * xi**5) / TWO_PI)[None]


def _q_as_spectrum(res, part=None):
    anchors, offs, wts, vals = res
    v = vals.sum(axis=0) if part is None else vals[part]
    return QuadratureSpectrum(anchors, offs, wts, v)


def a2_bands(spec, t, coeffs, n_outer=8, n_inner=8, tol=1e-6, max_doublings=3):
    """A2 of a piecewise-constant spectrum, sampled on output quadrature nodes."""
    def compute(no, ni):
        ev = lambda bands, combos, A, X: _a2_band_eval(bands, combos, A, X, t, coeffs, ni)
        return _band_pass(spec, t, no, 2, ev)

    if t == 0:
        return _q_as_spectrum(compute(n_outer, n_inner)).scaled(0.0)
    return _q_as_spectrum(_refine(compute, n_outer, n_inner, tol, max_doublings,
                                  "A2 band quadrature"))


def _a3_extra_breaks(bs):
    """Output offsets where xi_1 = xi (eta = 0) enters or leaves band i."""
    bi, bj, bk = bs
    ajk = bj.anchor + bk.anchor
    if ajk + bj.lo + bk.lo <= 0 <= ajk + bj.hi + bk.hi:
        return [bi.lo - ajk, bi.hi - ajk]
    return []


MAX_INNER_PIECES = 64
FILON_MIN_PHASE = 1.0


@lru_cache(maxsize=16)
def _legendre_table(n):
    """(2k+1) P_k(x_m) at the n Gauss-Legendre nodes, shape (n, n)."""
    x, _ = _leggauss(n)
    k = np.arange(n)
    return (2 * k + 1)[:, None] * np.array([special.eval_legendre(kk, x) for kk in k])


def _filon_weights(kappa_half, n):
    """Weights on [-1, 1] for int g(x) exp(-i kappa_half x) dx at the GL nodes.

    The rule integrates the degree n-1 interpolant of g exactly, using
    int P_k(x) exp(-i w x) dx = 2 (-i)^k j_k(w). ``kappa_half`` has shape
    (..., n) holding the same value across the last axis.
    """
    _, w = _leggauss(n)
    k = np.arange(n)
    jk = special.spherical_jn(k, np.abs(kappa_half[..., :1, None]))      # (..., 1, n)
    sgn = np.sign(kappa_half[..., :1, None])
    mom = (-1j * sgn) ** k * jk                                          # conj for w < 0
    return 0.5 * w * np.einsum("...k,km->...m", mom[..., 0, :], _legendre_table(n)) * 2.0


def _y1_panels(segments, n, eta_c, h_max):
    """Fraction-space panels for each inner segment.

    Segments next to eta = 0 are graded toward it; every segment is also cut
    into pieces no wider than ``h_max`` so a linearized phase stays accurate.
    Returns per segment (lo_fraction, hi_fraction) panel arrays.
    """
    out = []
    for ya_ref, yb_ref, grade in segments:
        segw = yb_ref - ya_ref
        pieces = int(min(MAX_INNER_PIECES, max(1, math.ceil(segw / h_max))))
        fr = set(np.linspace(0.0, 1.0, pieces + 1).tolist())
        if grade is not None:
            lv = _grade_levels(segw, eta_c)
            geo = 0.5 ** np.arange(1, lv + 1)
            fr.update((geo if grade == "lo" else 1.0 - geo).tolist())
        fr = np.array(sorted(fr))
        out.append((fr[:-1], fr[1:]))
    return out


def _abs_range(b):
    """(min |xi|, max |xi|) over a band."""
    lo, hi = b.xi_lo, b.xi_hi
    inner = 0.0 if lo <= 0.0 <= hi else min(abs(lo), abs(hi))
    return inner, max(abs(lo), abs(hi))


def _a3_combo(bands, combo, anchor, X, t, coeffs, n):
    """Pairing and cubic integrals of one ordered band triple on one panel row set.

    Away from eta = 0 the pairing kernel is split as
    D = D_a + exp(-i t q_out) / (q_out q_in); the oscillatory factor depends
    on xi_1 only and is integrated with Filon-Legendre weights.
    """
    bi, bj, bk = (bands[c] for c in combo)
    ajk = bj.anchor + bk.anchor
    xs = X + (anchor - (bi.anchor + ajk))                 # (P, n)
    lo1 = np.maximum(bi.lo, xs - bj.hi - bk.hi)
    hi1 = np.minimum(bi.hi, xs - bj.lo - bk.lo)
    pts = [lo1, hi1]
    for cand in (xs - bj.lo - bk.hi, xs - bj.hi - bk.lo):
        pts.append(cand)
    ystar = xs + ajk
    pts.append(ystar)
    P = np.stack(pts, axis=-1)                            # (P, n, 5)
    R = max(_band_radius(b) for b in (bi, bj, bk))
    r_i = _band_radius(bi)
    r_eta = _band_radius(bj) + _band_radius(bk)
    eta_c = 1.0 / (5.0 * max(R, 1.0) ** 4 * max(abs(t), 1e-300))
    curv = 20.0 * abs(t) * (r_i**3 + r_eta**3)
    h_max = math.sqrt(2.0 / curv) if curv > 0 else math.inf
    # q_tot moves with xi_1 at rate 5 |xi_1^4 - xi_3^4|
    (i_lo, i_hi), (k_lo, k_hi) = _abs_range(bi), _abs_range(bk)
    rate = 5.0 * abs(t) * max(i_hi**4 - k_lo**4, k_hi**4 - i_lo**4)
    if rate > 0:
        h_max = min(h_max, PHASE_PER_NODE * n / rate)
    pairing = coeffs.c2 != 0 or coeffs.c3 != 0
    parts = np.zeros((2,) + X.shape, dtype=complex)
    gx, gw = _leggauss(n)
    mid = X.shape[1] // 2
    for r in range(X.shape[0]):
        Pr = P[r]
        lo_m, hi_m = Pr[mid, 0], Pr[mid, 1]
        if not hi_m > lo_m:
            continue
        ref_vals = Pr[mid]
        inside = [0, 1] + [c for c in (2, 3, 4) if lo_m < ref_vals[c] < hi_m]
        order = sorted(inside, key=lambda c: ref_vals[c])
        segs, meta = [], []
        # kinks can coincide with eta = 0, so grade by value rather than index
        near = 1e-12 * (hi_m - lo_m)
        at_star = lambda c: abs(ref_vals[c] - ref_vals[4]) <= near and 4 in inside
        for ca, cb in zip(order[:-1], order[1:]):
            if not ref_vals[cb] > ref_vals[ca] + near:
                continue
            grade = "hi" if at_star(cb) else ("lo" if at_star(ca) else None)
            segs.append((ref_vals[ca], ref_vals[cb], grade))
            meta.append((ca, cb))
        if not segs:
            continue
        y_l, w_l, c_l, h_l = [], [], [], []
        for (ca, cb), (fa, fb) in zip(meta, _y1_panels(segs, n, eta_c, h_max)):
            ya, yb = Pr[:, ca], Pr[:, cb]
            seg = np.maximum(yb - ya, 0.0)[:, None, None]   # (n_out, 1, 1)
            fh = 0.5 * (fb - fa)[None, :, None]
            fc = 0.5 * (fb + fa)[None, :, None]
            ya3 = ya[:, None, None]
            y_l.append((ya3 + seg * (fc + fh * gx)).reshape(len(ya), -1))
            w_l.append((seg * fh * gw).reshape(len(ya), -1))
            c_l.append(np.broadcast_to(ya3 + seg * fc, seg.shape[:1] + fh.shape[1:2] + (n,))
                       .reshape(len(ya), -1))
            h_l.append(np.broadcast_to(seg * fh, seg.shape[:1] + fh.shape[1:2] + (n,))
                       .reshape(len(ya), -1))
        y1 = np.concatenate(y_l, axis=1)[..., None]       # (n, m1, 1)
        w1 = np.concatenate(w_l, axis=1)[..., None]
        cen = np.concatenate(c_l, axis=1)
        hlf = np.concatenate(h_l, axis=1)
        xsr = xs[r][:, None, None]
        lo2 = np.maximum(bj.lo, xsr - y1 - bk.hi)
        hi2 = np.minimum(bj.hi, xsr - y1 - bk.lo)
        wid2 = np.maximum(hi2 - lo2, 0.0)
        # the y2 phase rate of q_tot and q_in is 5 |xi_2^4 - xi_3^4|
        rate = max(float(np.max(np.abs((bj.anchor + yy)**4 - (bk.anchor + xsr - y1 - yy)**4)
                                * wid2)) for yy in (lo2, hi2, 0.5 * (lo2 + hi2)))
        u2, wt2 = _fraction_template(n, _phase_panels(5.0 * abs(t) * rate, n))
        y2 = lo2 + wid2 * u2
        w2 = wid2 * wt2
        y3 = xsr - y1 - y2
        x1 = bi.anchor + y1
        x2 = bj.anchor + y2
        x3 = bk.anchor + y3
        xi = (anchor + X[r])[:, None, None]
        eta = ajk + (y2 + y3)
        s12 = (bi.anchor + bj.anchor) + (y1 + y2)
        s31 = (bk.anchor + bi.anchor) + (y3 + y1)
        q_tot = _q2(s12, eta, s31)
        amp = bi.amp * bj.amp * bk.amp
        if pairing:
            eta1 = xi - x1                                 # (n, m1, 1)
            q_out = _q1(xi, x1, eta1)
            q_in = _q1(eta, x2, x3)
            m_out = quadratic_symbol(x1, eta, coeffs, total=xi)
            m_in = quadratic_symbol(x2, x3, coeffs, total=eta)
            mm = 2.0 * m_out * m_in
            # Filon panels: phase large at every node of the panel
            big = (np.abs(t * q_out[..., 0]) >= FILON_MIN_PHASE) & \
                  np.all(np.abs(t * q_in) >= FILON_MIN_PHASE, axis=-1)
            shp = big.shape[:1] + (-1, n)
            big = np.repeat(np.all(big.reshape(shp), axis=-1), n, axis=-1)
            plain_w = np.where(big[..., None], 0.0, w1 * w2)
            acc = np.sum(plain_w * mm * pairing_kernel(q_out, q_in, q_tot, t), axis=(1, 2))
            if np.any(big):
                with np.errstate(divide="ignore", invalid="ignore"):
                    d_a = (1.0 / (1j * q_out) - e_factor(q_tot, t)) / (1j * q_in)
                    d_b = 1.0 / (q_out * q_in)
                    smooth = np.where(big[..., None], w1 * w2 * mm * d_a, 0.0)
                    # oscillatory part: G(y1) = int d_b mm dy2, phase t q_out(y1)
                    g = np.sum(np.where(big[..., None], w2 * mm * d_b, 0.0), axis=2)
                acc = acc + np.sum(smooth, axis=(1, 2))
                xc1 = bi.anchor + cen
                etac = (anchor + X[r])[:, None] - xc1
                kappa = t * 5.0 * (etac**4 - xc1**4)
                kh = (kappa * hlf).reshape(shp)
                fwt = _filon_weights(kh, n).reshape(kappa.shape) * hlf
                phase = t * q_out[..., 0]
                osc = fwt * np.exp(1j * (kappa * (y1[..., 0] - cen) - phase)) * g
                acc = acc + np.sum(np.where(big, osc, 0.0), axis=1)
            parts[0, r] = amp * acc
        if coeffs.c1 != 0:
            f = -coeffs.c1 * 1j * xi * e_factor(q_tot, t)
            parts[1, r] = amp * np.sum(w1 * w2 * f, axis=(1, 2))
    return parts


def _a3_band_eval(bands, combos, anchor, X, t, coeffs, n):
    parts = np.zeros((2,) + X.shape, dtype=complex)
    for combo in combos:
        parts += _a3_combo(bands, combo, anchor, X, t, coeffs, n)
    return parts * (np.exp(1j * t * (anchor + X) ** 5) / TWO_PI**2)


def a3_bands_components(spec, t, coeffs, n_outer=8, n_inner=8, tol=1e-6, max_doublings=2):
    """(pairing, cubic) parts of A3 for a band spectrum, on shared nodes.

    ``pairing`` is the quadratic term fed back through A2, ``cubic`` the c1
    term; their sum is the full third-order coefficient.
    """
    def compute(no, ni):
        ev = lambda bands, combos, A, X: _a3_band_eval(bands, combos, A, X, t, coeffs, ni)
        return _band_pass(spec, t, no, 3, ev, _a3_extra_breaks)

    if t == 0:
        res = compute(n_outer, n_inner)
        return _q_as_spectrum(res, 0).scaled(0.0), _q_as_spectrum(res, 1).scaled(0.0)
    res = _refine(compute, n_outer, n_inner, tol, max_doublings, "A3 band quadrature")
    return _q_as_spectrum(res, 0), _q_as_spectrum(res, 1)


def a3_bands(spec, t, coeffs, **opts):
    p, c = a3_bands_components(spec, t, coeffs, **opts)
    return QuadratureSpectrum(p.anchors, p.offsets, p.weights, p.values + c.values)


def a3_spectral(u0, t, coeffs, **opts):
    """Full A3 from closed-form time integrals (band spectra only)."""
    if not isinstance(u0, BandSpectrum):
        raise InvalidInput("a3_spectral works on band spectra; use a3_duhamel on grids")
    return a3_bands(u0, t, coeffs, **opts)
