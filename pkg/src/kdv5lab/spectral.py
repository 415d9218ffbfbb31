"""Grids, Fourier conventions, the free propagator and frequency projectors.

Transforms follow the continuum convention

    u_hat(xi) = integral u(x) exp(-i xi x) dx,

discretized on a periodic box so that discrete sums carry the cell measure
(``L/n`` in space, ``delta_xi`` in frequency) and grid norms approximate the
corresponding integrals over the real line.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInput, InvalidParameter

HERMITIAN_RTOL = 1e-12


@dataclass(frozen=True)
class UniformAxis:
    """Uniform 1D axis ``origin + m * spacing`` for ``|m| <= half_extent``."""

    spacing: float
    half_extent: int
    origin: float = 0.0

    def __post_init__(self):
        if not self.spacing > 0:
            raise InvalidParameter("axis spacing must be positive")
        if self.half_extent < 1:
            raise InvalidParameter("axis half_extent must be >= 1")

    @property
    def size(self):
        return 2 * self.half_extent + 1

    @property
    def indices(self):
        return np.arange(-self.half_extent, self.half_extent + 1)

    @property
    def nodes(self):
        return self.origin + self.spacing * self.indices

    def extended(self, half_extent):
        return type(self)(self.spacing, half_extent, self.origin)


class FrequencyGrid(UniformAxis):
    """Frequency axis; ``delta_xi`` is the node spacing."""

    def __init__(self, delta_xi, half_extent, origin=0.0):
        super().__init__(float(delta_xi), int(half_extent), float(origin))

    @property
    def delta_xi(self):
        return self.spacing


def _readonly(arr):
    arr = np.array(arr, dtype=complex)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SpectralField:
    """Complex amplitudes on a :class:`FrequencyGrid`."""

    grid: FrequencyGrid
    values: np.ndarray
    hermitian: bool = False

    def __post_init__(self):
        vals = _readonly(self.values)
        object.__setattr__(self, "values", vals)
        if vals.shape != (self.grid.size,):
            raise InvalidInput(
                f"values length {vals.size} does not match grid size {self.grid.size}")
        if self.hermitian:
            if self.grid.origin != 0.0:
                raise InvalidInput("hermitian fields need a grid symmetric about 0")
            scale = max(np.abs(vals).max(), np.finfo(float).tiny)
            if np.abs(vals - np.conj(vals[::-1])).max() > HERMITIAN_RTOL * scale:
                raise InvalidInput("values are not Hermitian-symmetric")

    @property
    def xi(self):
        return self.grid.nodes

    def with_values(self, values, hermitian=None):
        herm = self.hermitian if hermitian is None else hermitian
        return SpectralField(self.grid, values, herm)

    def zero_extended(self, half_extent):
        """Embed into a wider grid of the same spacing, zero outside."""
        M = self.grid.half_extent
        if half_extent < M:
            raise InvalidInput("cannot shrink a field by zero-extension")
        out = np.zeros(2 * half_extent + 1, dtype=complex)
        out[half_extent - M:half_extent + M + 1] = self.values
        return SpectralField(self.grid.extended(half_extent), out, self.hermitian)

    def scaled(self, factor):
        herm = self.hermitian and np.isreal(factor)
        return SpectralField(self.grid, factor * self.values, herm)

    def __add__(self, other):
        if other.grid != self.grid:
            raise InvalidInput("grid mismatch")
        return SpectralField(self.grid, self.values + other.values,
                             self.hermitian and other.hermitian)

    def __sub__(self, other):
        return self + other.scaled(-1.0)


@dataclass(frozen=True)
class SpaceTimeGrid:
    xi: UniformAxis
    tau: UniformAxis

    @property
    def shape(self):
        return (self.tau.size, self.xi.size)

    @property
    def cell_area(self):
        return self.xi.spacing * self.tau.spacing

    def mesh(self):
        """Return (tau, xi) node arrays of shape ``self.shape``."""
        return np.meshgrid(self.tau.nodes, self.xi.nodes, indexing="ij")


@dataclass(frozen=True)
class SpaceTimeField:
    """Complex amplitudes f(tau, xi); axis 0 is tau, axis 1 is xi."""

    grid: SpaceTimeGrid
    values: np.ndarray

    def __post_init__(self):
        vals = _readonly(self.values)
        object.__setattr__(self, "values", vals)
        if vals.shape != self.grid.shape:
            raise InvalidInput(f"values shape {vals.shape} != grid shape {self.grid.shape}")

    def with_values(self, values):
        return SpaceTimeField(self.grid, values)

    def masked(self, mask):
        return SpaceTimeField(self.grid, np.where(mask, self.values, 0.0))


@dataclass(frozen=True)
class PeriodicGrid:
    """Collocation grid x_j = -L/2 + j L/n on a periodic box of length L."""

    length: float
    n: int
    x: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.length > 0:
            raise InvalidParameter("box length must be positive")
        if self.n < 8 or self.n % 2:
            raise InvalidParameter("n must be even and >= 8")
        x = -0.5 * self.length + self.length / self.n * np.arange(self.n)
        x.setflags(write=False)
        object.__setattr__(self, "x", x)

    @property
    def dx(self):
        return self.length / self.n

    @property
    def delta_xi(self):
        return 2 * np.pi / self.length

    @property
    def wavenumbers(self):
        """Angular wavenumbers in FFT order."""
        return 2 * np.pi * np.fft.fftfreq(self.n, d=self.dx)

    def frequency_grid(self):
        return FrequencyGrid(self.delta_xi, self.n // 2)


def forward_transform(u, grid):
    """Continuum-normalized Fourier coefficients of samples on ``grid``.

    The Nyquist coefficient is split evenly between +n/2 and -n/2 so that the
    returned field is exactly invertible and Hermitian for real input.
    """
    u = np.asarray(u)
    if u.shape != (grid.n,):
        raise InvalidInput(f"expected {grid.n} samples, got {u.shape}")
    n, M = grid.n, grid.n // 2
    coeffs = np.fft.fft(u) * grid.dx
    m = np.arange(-M, M + 1)
    vals = coeffs[m % n].astype(complex)
    vals[0] *= 0.5
    vals[-1] *= 0.5
    # samples start at x0 = -L/2 rather than 0
    vals *= np.exp(-1j * grid.delta_xi * m * grid.x[0])
    real = np.isrealobj(u) or not np.any(np.imag(u))
    if real:
        vals = 0.5 * (vals + np.conj(vals[::-1]))
    return SpectralField(grid.frequency_grid(), vals, hermitian=bool(real))


def inverse_transform(f, grid):
    """Samples on ``grid`` of the function whose coefficients are ``f``.

    Returns a real array when the field is flagged Hermitian.
    """
    M = f.grid.half_extent
    if not np.isclose(f.grid.delta_xi, grid.delta_xi, rtol=1e-12) or f.grid.origin != 0.0:
        raise InvalidInput("field spacing does not match the periodic box")
    if M > grid.n // 2:
        raise InvalidInput("field has more modes than the collocation grid")
    m = np.arange(-M, M + 1)
    vals = f.values * np.exp(1j * grid.delta_xi * m * grid.x[0])
    coeffs = np.zeros(grid.n, dtype=complex)
    np.add.at(coeffs, m % grid.n, vals)
    u = np.fft.ifft(coeffs) * grid.n / grid.length
    if f.hermitian:
        return u.real.copy()
    return u


def apply_propagator(f, t):
    """Free evolution U(t) = exp(t d_x^5): multiply each mode by exp(i t xi^5)."""
    xi = f.xi
    return f.with_values(f.values * np.exp(1j * t * xi**5))


def projector_symbol(xi, a, delta=None):
    """|xi|^a on |xi| <= 1, zero elsewhere.

    At xi = 0 (negative ``a``) the symbol is replaced by its average over the
    origin cell of width ``delta`` when that average is finite.
    """
    xi = np.asarray(xi, dtype=float)
    ax = np.abs(xi)
    sym = np.zeros_like(ax)
    inside = ax <= 1.0
    nz = inside & (ax > 0)
    sym[nz] = ax[nz] ** a
    zero = inside & (ax == 0)
    if np.any(zero):
        if a == 0:
            sym[zero] = 1.0
        elif a > 0:
            sym[zero] = 0.0
        elif delta is not None and a > -1:
            sym[zero] = (0.5 * delta) ** a / (a + 1.0)
        else:
            sym[zero] = np.inf
    return sym


def apply_projector_P(f, a):
    """Low-frequency projector P: multiply by |xi|^a on |xi| <= 1."""
    sym = projector_symbol(f.xi, a, f.grid.delta_xi)
    with np.errstate(invalid="ignore"):
        vals = np.where(f.values == 0, 0.0, sym * f.values)
    return f.with_values(vals)


def smooth_cutoff(t):
    """Cosine-ramp cutoff: 1 on |t| <= 1, 0 on |t| >= 2, C^1 in between."""
    at = np.abs(np.asarray(t, dtype=float))
    ramp = np.cos(0.5 * np.pi * np.clip(at - 1.0, 0.0, 1.0)) ** 2
    out = np.where(at <= 1.0, 1.0, np.where(at >= 2.0, 0.0, ramp))
    return float(out) if out.ndim == 0 else out
