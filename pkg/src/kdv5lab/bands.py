"""Exact piecewise-constant spectra and quadrature-sampled spectra.

Counterexample data live on bands of width N^-4 next to frequencies of size N.
Storing each band as ``anchor + [lo, hi]`` with an exactly representable
anchor keeps every frequency difference that enters a resonance function
accurate to relative machine precision, and costs O(1) per band no matter how
narrow it is.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput, InvalidResolution
from .spectral import FrequencyGrid, SpectralField

SPECTRUM_FORMAT_HEADER = "# kdv5lab band spectrum v1: xi_lo xi_hi re_amp im_amp"


@dataclass(frozen=True)
class Band:
    """Constant amplitude ``amp`` on ``[anchor + lo, anchor + hi]``."""

    anchor: float
    lo: float
    hi: float
    amp: complex

    def __post_init__(self):
        if not self.hi > self.lo:
            raise InvalidResolution(f"empty or unresolved band [{self.lo}, {self.hi}]")

    @classmethod
    def from_interval(cls, xi_lo, xi_hi, amp):
        anchor = float(np.round(0.5 * (xi_lo + xi_hi)))
        return cls(anchor, xi_lo - anchor, xi_hi - anchor, complex(amp))

    @property
    def xi_lo(self):
        return self.anchor + self.lo

    @property
    def xi_hi(self):
        return self.anchor + self.hi

    @property
    def width(self):
        return self.hi - self.lo

    def reflected(self):
        """Band of the reflected, conjugated amplitude (xi -> -xi)."""
        return Band(-self.anchor, -self.hi, -self.lo, np.conj(self.amp))


@dataclass(frozen=True)
class BandSpectrum:
    bands: tuple

    def __post_init__(self):
        bands = tuple(self.bands)
        object.__setattr__(self, "bands", bands)
        ivs = sorted((b.xi_lo, b.xi_hi) for b in bands)
        for (l0, h0), (l1, h1) in zip(ivs, ivs[1:]):
            if l1 < h0 and not np.isclose(l1, h0, rtol=0, atol=1e-15 * max(1.0, abs(h0))):
                raise InvalidInput("bands overlap")

    @property
    def hermitian(self):
        mirror = {(b.anchor, b.lo, b.hi, b.amp) for b in self.bands}
        return all((r.anchor, r.lo, r.hi, r.amp) in mirror
                   for r in (b.reflected() for b in self.bands))

    def scaled(self, factor):
        return BandSpectrum(tuple(Band(b.anchor, b.lo, b.hi, factor * b.amp) for b in self.bands))

    def evaluate(self, xi):
        xi = np.asarray(xi, dtype=float)
        out = np.zeros(xi.shape, dtype=complex)
        for b in self.bands:
            out[(xi >= b.xi_lo) & (xi <= b.xi_hi)] += b.amp
        return out

    def l2_mass_squared(self):
        return sum(abs(b.amp) ** 2 * b.width for b in self.bands)

    def to_field(self, delta_xi, half_extent):
        """Rasterize onto a uniform grid using the cell-overlap fraction."""
        grid = FrequencyGrid(delta_xi, half_extent)
        xi = grid.nodes
        vals = np.zeros(grid.size, dtype=complex)
        for b in self.bands:
            lo = np.maximum(xi - 0.5 * delta_xi, b.xi_lo)
            hi = np.minimum(xi + 0.5 * delta_xi, b.xi_hi)
            vals += b.amp * np.clip(hi - lo, 0.0, None) / delta_xi
        herm = self.hermitian
        if herm:
            vals = 0.5 * (vals + np.conj(vals[::-1]))
        return SpectralField(grid, vals, herm)

    def to_text(self):
        lines = [SPECTRUM_FORMAT_HEADER]
        for b in self.bands:
            amp = complex(b.amp)
            vals = (float(b.xi_lo), float(b.xi_hi), amp.real, amp.imag)
            lines.append(" ".join(repr(v) for v in vals))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        bands = []
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 4:
                raise InvalidInput(f"line {lineno}: expected 4 columns, got {len(parts)}")
            try:
                lo, hi, re, im = map(float, parts)
            except ValueError as exc:
                raise InvalidInput(f"line {lineno}: {exc}") from None
            bands.append(Band.from_interval(lo, hi, complex(re, im)))
        return cls(tuple(bands))


@dataclass(frozen=True)
class QuadratureSpectrum:
    """A spectrum known at quadrature nodes ``anchor + offset``.

    ``weights`` integrate over the support, so weighted L^2 norms are plain
    weighted sums. Nodes next to xi = 0 come from panels graded toward the
    origin, which is what makes |xi|^(2a) weights safe to apply pointwise.
    """

    anchors: np.ndarray
    offsets: np.ndarray
    weights: np.ndarray
    values: np.ndarray

    @property
    def xi(self):
        return self.anchors + self.offsets

    def scaled(self, factor):
        return QuadratureSpectrum(self.anchors, self.offsets, self.weights, factor * self.values)

    def __sub__(self, other):
        if self.offsets.shape != other.offsets.shape or np.any(self.xi != other.xi):
            raise InvalidInput("quadrature spectra sampled at different nodes")
        return QuadratureSpectrum(self.anchors, self.offsets, self.weights,
                                  self.values - other.values)
