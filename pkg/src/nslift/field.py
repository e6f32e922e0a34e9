"""Spectral fields on the 2π-periodic box and the spatial operators acting on them.

Coefficients are stored in the real-FFT half-spectrum layout: a vector field
has shape ``(3, N, N, N//2 + 1)`` with axes ordered ``(k1, k2, k3)`` in numpy
FFT order. Coefficients are normalized so that ``f(x) = Σ_k f̂_k e^{i k·x}``,
i.e. ``f̂ = rfftn(samples) / N³``.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property, lru_cache
from typing import Iterable

import numpy as np
import scipy.fft as sfft

EPS_DIV = 1e-13
BOX_VOLUME = (2.0 * math.pi) ** 3


def _fft_workers() -> int:
    import os

    value = os.environ.get("NSLIFT_THREADS")
    return int(value) if value else 1


@dataclass(frozen=True)
class Grid:
    """Uniform ``N³`` grid on ``[0, 2π)³`` with a 2/3-style dealiasing cube."""

    n: int
    dealias_fraction: Fraction = Fraction(2, 3)

    def __post_init__(self):
        if self.n < 4 or self.n % 2:
            raise ValueError(f"points_per_axis must be even and >= 4, got {self.n}")
        frac = Fraction(self.dealias_fraction)
        if not 0 < frac <= 1:
            raise ValueError(f"dealias_fraction must lie in (0, 1], got {frac}")
        object.__setattr__(self, "dealias_fraction", frac)

    @property
    def spectral_shape(self) -> tuple[int, int, int]:
        return (self.n, self.n, self.n // 2 + 1)

    @property
    def physical_shape(self) -> tuple[int, int, int]:
        return (self.n, self.n, self.n)

    @cached_property
    def kmax_dealias(self) -> int:
        """Largest per-axis |k| kept by dealiasing (strict ``|k| < frac·N/2``)."""
        return math.ceil(self.dealias_fraction * self.n / 2) - 1

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """Integer wavenumber vector per mode, shape ``(3, N, N, N//2+1)``."""
        k = np.fft.fftfreq(self.n, 1.0 / self.n)
        kz = np.arange(self.n // 2 + 1, dtype=float)
        k1, k2, k3 = np.meshgrid(k, k, kz, indexing="ij")
        # fftfreq reports the Nyquist mode as -N/2; the torus convention here is +N/2
        k1[k1 == -self.n // 2] = self.n // 2
        k2[k2 == -self.n // 2] = self.n // 2
        out = np.stack([k1, k2, k3])
        out.flags.writeable = False
        return out

    @cached_property
    def odd_wavenumbers(self) -> np.ndarray:
        """Wavenumbers for odd-order derivatives; the Nyquist entries are zeroed."""
        k = self.wavenumbers.copy()
        k[np.abs(k) == self.n // 2] = 0.0
        k.flags.writeable = False
        return k

    @cached_property
    def k2(self) -> np.ndarray:
        out = np.sum(self.wavenumbers**2, axis=0)
        out.flags.writeable = False
        return out

    @cached_property
    def inv_k2(self) -> np.ndarray:
        k2 = self.k2
        out = np.where(k2 > 0, 1.0 / np.where(k2 > 0, k2, 1.0), 0.0)
        out.flags.writeable = False
        return out

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        kmax = self.kmax_dealias
        out = np.all(np.abs(self.wavenumbers) <= kmax, axis=0)
        out.flags.writeable = False
        return out

    @cached_property
    def parseval_weights(self) -> np.ndarray:
        """Multiplicity of each stored half-spectrum mode in the full spectrum."""
        w = np.full(self.spectral_shape, 2.0)
        w[..., 0] = 1.0
        w[..., -1] = 1.0
        w.flags.writeable = False
        return w

    @cached_property
    def coordinates(self) -> np.ndarray:
        x = 2.0 * np.pi * np.arange(self.n) / self.n
        out = np.stack(np.meshgrid(x, x, x, indexing="ij"))
        out.flags.writeable = False
        return out


def _freeze(array: np.ndarray) -> np.ndarray:
    array.flags.writeable = False
    return array


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Fourier coefficients of a real 3-vector field (immutable)."""

    grid: Grid
    coeffs: np.ndarray
    divergence_free: bool = False
    dealiased: bool = False

    def __post_init__(self):
        shape = (3,) + self.grid.spectral_shape
        coeffs = np.asarray(self.coeffs, dtype=np.complex128)
        if coeffs.shape != shape:
            raise ValueError(f"coefficient shape {coeffs.shape} does not match grid {shape}")
        if coeffs.flags.writeable:
            coeffs = _freeze(coeffs.copy())
        object.__setattr__(self, "coeffs", coeffs)

    @classmethod
    def wrap(cls, grid: Grid, coeffs: np.ndarray, divergence_free: bool = False,
             dealiased: bool = False) -> "SpectralField":
        """Take ownership of a freshly built array instead of copying it."""
        return cls(grid, _freeze(coeffs), divergence_free, dealiased)

    @classmethod
    def zeros(cls, grid: Grid) -> "SpectralField":
        return cls(grid, np.zeros((3,) + grid.spectral_shape, complex), True, True)

    def _check(self, other: "SpectralField"):
        if not isinstance(other, SpectralField):
            return NotImplemented
        if other.grid != self.grid:
            raise ValueError("grid mismatch")
        return None

    def __add__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return SpectralField.wrap(
            self.grid,
            self.coeffs + other.coeffs,
            self.divergence_free and other.divergence_free,
            self.dealiased and other.dealiased,
        )

    def __sub__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return SpectralField.wrap(
            self.grid,
            self.coeffs - other.coeffs,
            self.divergence_free and other.divergence_free,
            self.dealiased and other.dealiased,
        )

    def __mul__(self, scalar: float):
        if not np.isscalar(scalar):
            return NotImplemented
        return SpectralField.wrap(self.grid, self.coeffs * scalar, self.divergence_free, self.dealiased)

    __rmul__ = __mul__

    def __truediv__(self, scalar: float):
        return self * (1.0 / scalar)

    def __neg__(self):
        return self * -1.0

    def is_zero(self) -> bool:
        return not np.any(self.coeffs)

    def divergence_defect(self) -> float:
        """max_k |k·f̂_k| relative to the coefficient 2-norm (0 for the zero field)."""
        scale = np.linalg.norm(self.coeffs)
        if scale == 0:
            return 0.0
        kdot = np.abs(np.sum(self.grid.wavenumbers * self.coeffs, axis=0))
        return float(kdot.max() / scale)

    def allclose(self, other: "SpectralField", atol: float = 0.0, rtol: float = 1e-12) -> bool:
        return bool(np.allclose(self.coeffs, other.coeffs, atol=atol, rtol=rtol))


@dataclass(frozen=True, eq=False)
class ScalarSpectralField:
    grid: Grid
    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=np.complex128)
        if coeffs.shape != self.grid.spectral_shape:
            raise ValueError(f"coefficient shape {coeffs.shape} does not match grid")
        if coeffs.flags.writeable:
            coeffs = _freeze(coeffs.copy())
        object.__setattr__(self, "coeffs", coeffs)


def _same_grid(*fields) -> Grid:
    grid = fields[0].grid
    for f in fields[1:]:
        if f.grid != grid:
            raise ValueError("grid mismatch")
    return grid


# --- transforms -------------------------------------------------------------


def _irfft(grid: Grid, coeffs: np.ndarray) -> np.ndarray:
    axes = tuple(range(coeffs.ndim - 3, coeffs.ndim))
    return sfft.irfftn(coeffs, s=grid.physical_shape, axes=axes, norm="forward",
                       workers=_fft_workers())


def _rfft(grid: Grid, samples: np.ndarray) -> np.ndarray:
    axes = tuple(range(samples.ndim - 3, samples.ndim))
    return sfft.rfftn(samples, axes=axes, norm="forward", workers=_fft_workers())


def to_physical(f: SpectralField | ScalarSpectralField) -> np.ndarray:
    """Grid samples of ``f``: shape ``(3, N, N, N)`` (vector) or ``(N, N, N)``."""
    return _irfft(f.grid, f.coeffs)


def to_spectral(samples: np.ndarray, grid: Grid) -> SpectralField:
    samples = np.asarray(samples, dtype=float)
    if samples.shape != (3,) + grid.physical_shape:
        raise ValueError(f"samples shape {samples.shape} does not match grid N={grid.n}")
    return SpectralField.wrap(grid, _rfft(grid, samples))


def scalar_to_spectral(samples: np.ndarray, grid: Grid) -> ScalarSpectralField:
    samples = np.asarray(samples, dtype=float)
    if samples.shape != grid.physical_shape:
        raise ValueError(f"samples shape {samples.shape} does not match grid N={grid.n}")
    return ScalarSpectralField(grid, _rfft(grid, samples))


def symmetrize(f: SpectralField) -> SpectralField:
    """Hermitian part of ``f`` (enforces a real physical field)."""
    return SpectralField.wrap(f.grid, _rfft(f.grid, _irfft(f.grid, f.coeffs)),
                         f.divergence_free, f.dealiased)


# --- linear operators --------------------------------------------------------


def project_leray(f: SpectralField) -> SpectralField:
    """Mode-wise ``(I - k kᵀ/|k|²) f̂_k``; the mean mode passes through."""
    grid = f.grid
    k = grid.wavenumbers
    kdotf = np.sum(k * f.coeffs, axis=0) * grid.inv_k2
    return SpectralField.wrap(grid, f.coeffs - k * kdotf, True, f.dealiased)


def laplacian(f: SpectralField) -> SpectralField:
    return SpectralField.wrap(f.grid, -f.grid.k2 * f.coeffs, f.divergence_free, f.dealiased)


def gradient(s: ScalarSpectralField) -> SpectralField:
    return SpectralField.wrap(s.grid, 1j * s.grid.odd_wavenumbers * s.coeffs)


def divergence(f: SpectralField) -> ScalarSpectralField:
    return ScalarSpectralField(f.grid, np.sum(1j * f.grid.odd_wavenumbers * f.coeffs, axis=0))


def dealias(f: SpectralField) -> SpectralField:
    return SpectralField.wrap(f.grid, f.coeffs * f.grid.dealias_mask, f.divergence_free, True)


def remove_mean(f: SpectralField) -> SpectralField:
    coeffs = f.coeffs.copy()
    coeffs[:, 0, 0, 0] = 0.0
    return SpectralField.wrap(f.grid, coeffs, f.divergence_free, f.dealiased)


def stokes_apply(f: SpectralField) -> SpectralField:
    """Stokes operator ``A f = -𝒫Δf``, i.e. multiplication by ``|k|²``."""
    defect = f.divergence_defect()
    if defect > EPS_DIV:
        raise ValueError(f"stokes_apply needs a divergence-free field (defect {defect:.2e})")
    return SpectralField.wrap(f.grid, f.grid.k2 * f.coeffs, True, f.dealiased)


# --- nonlinear terms ---------------------------------------------------------


class PhysicalView:
    """Lazily evaluated grid samples of a field and of its gradient.

    ``grad[i, j] = ∂_j f_i``. ``support_hat`` is the transform of the field's
    full-spectrum support indicator, used to bound where a product can be
    nonzero.
    """

    def __init__(self, f: SpectralField):
        self.field = f
        self.grid = f.grid
        self.zero = f.is_zero()

    @cached_property
    def values(self) -> np.ndarray:
        return _irfft(self.grid, self.field.coeffs)

    @cached_property
    def grad(self) -> np.ndarray:
        dcoeffs = 1j * self.grid.odd_wavenumbers[None, :] * self.field.coeffs[:, None]
        return _irfft(self.grid, dcoeffs)

    @cached_property
    def support(self) -> np.ndarray:
        return np.any(self.field.coeffs != 0, axis=0)

    @cached_property
    def support_key(self) -> bytes:
        return hashlib.blake2b(np.packbits(self.support).tobytes(), digest_size=16).digest()

    @property
    def support_hat(self) -> np.ndarray:
        return _cached(_SUPPORT_HATS, (self.grid, self.support_key),
                       lambda: sfft.rfftn(_full_support(self.grid, self.support)))


_SUPPORT_HATS: dict = {}
_PRODUCT_SUPPORTS: dict = {}
_CACHE_LIMIT = 64


def _cached(cache: dict, key, build):
    if key not in cache:
        if len(cache) >= _CACHE_LIMIT:
            cache.pop(next(iter(cache)))
        cache[key] = build()
    return cache[key]


def physical_view(f: SpectralField) -> PhysicalView:
    return PhysicalView(f)


def _full_support(grid: Grid, half: np.ndarray) -> np.ndarray:
    """Indicator of a real field's support over the full ``N³`` index cube."""
    n = grid.n
    full = np.zeros(grid.physical_shape)
    full[..., : n // 2 + 1] = half
    neg = (-np.arange(n)) % n
    mirrored = half[neg][:, neg]
    full[..., n // 2 + 1:] = mirrored[..., 1: n // 2][..., ::-1]
    return full


def product_support(grid: Grid, pairs: Iterable[tuple[PhysicalView, PhysicalView]]) -> np.ndarray:
    """Modes where a sum of pointwise products can be nonzero in exact arithmetic.

    The spectrum of ``a·b`` lives on the (cyclic) sumset of the two supports;
    the sumset is read off a convolution of support indicators.
    """
    pairs = list(pairs)
    key = (grid, tuple(sorted((a.support_key, b.support_key) for a, b in pairs)))

    def build():
        if not pairs:
            return np.zeros(grid.spectral_shape, dtype=bool)
        acc = sum(a.support_hat * b.support_hat for a, b in pairs)
        counts = sfft.irfftn(acc, s=grid.physical_shape)
        return _freeze(counts[..., : grid.n // 2 + 1] > 0.5)

    return _cached(_PRODUCT_SUPPORTS, key, build)


def _finish_product(grid: Grid, spectrum: np.ndarray, pairs) -> SpectralField:
    mask = grid.dealias_mask & product_support(grid, pairs)
    return SpectralField.wrap(grid, spectrum * mask, False, True)


def convect_sum(grid: Grid, terms: Iterable[tuple[float, PhysicalView, PhysicalView]]) -> SpectralField:
    """Dealiased ``Σ c·(a·∇)b`` over ``(c, a, b)`` terms, formed in physical space.

    Transform roundoff outside the exact support of the products is removed.
    """
    acc = None
    pairs = []
    for c, a, b in terms:
        if a.zero or b.zero or c == 0:
            continue
        prod = np.einsum("jxyz,ijxyz->ixyz", a.values, b.grad)
        if c != 1:
            prod *= c
        acc = prod if acc is None else acc + prod
        pairs.append((a, b))
    if acc is None:
        return SpectralField.zeros(grid)
    return _finish_product(grid, _rfft(grid, acc), pairs)


def convect(u: SpectralField, v: SpectralField) -> SpectralField:
    """Pseudo-spectral ``(u·∇)v`` with 2/3-rule truncation of the product."""
    grid = _same_grid(u, v)
    a = physical_view(u)
    b = a if v is u else physical_view(v)
    return convect_sum(grid, [(1.0, a, b)])


_SYM_PAIRS = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))


def flux_convect(u: PhysicalView, w: PhysicalView | None = None,
                 keep: np.ndarray | None = None) -> SpectralField:
    """``(u·∇)u + (w·∇)u + (u·∇)w`` for divergence-free ``u`` and ``w``.

    Evaluated as the divergence of the symmetric flux ``u⊗u + u⊗w + w⊗u``,
    which needs six product transforms instead of twelve gradient samples.
    Zero ``u`` gives an exactly zero result. With ``keep`` only those modes
    are formed (the rest are returned as zero).
    """
    grid = u.grid
    if u.zero:
        return SpectralField.zeros(grid)
    uv = u.values
    pairs = [(u, u)]
    if w is None or w.zero:
        s = uv
    else:
        s = uv + w.values
        pairs.append((u, w))
    wv = w.values if (w is not None and not w.zero) else None
    flux = np.empty((6,) + grid.physical_shape)
    for m, (i, j) in enumerate(_SYM_PAIRS):
        # u_i s_j + w_i u_j, with s = u + w; symmetric in (i, j)
        t = uv[i] * s[j]
        if wv is not None:
            t += wv[i] * uv[j]
        flux[m] = t
    fh = _rfft(grid, flux)
    mask = grid.dealias_mask & product_support(grid, pairs)
    if keep is not None:
        mask = mask & keep
    fh = fh[:, mask]
    ik = 1j * grid.odd_wavenumbers[:, mask]
    comp = {pair: fh[m] for m, pair in enumerate(_SYM_PAIRS)}

    def t_hat(i, j):
        return comp[(i, j)] if i <= j else comp[(j, i)]

    out = np.zeros((3,) + grid.spectral_shape, dtype=complex)
    for i in range(3):
        out[i, mask] = ik[0] * t_hat(i, 0) + ik[1] * t_hat(i, 1) + ik[2] * t_hat(i, 2)
    return SpectralField.wrap(grid, out, False, True)


# --- inner products and norms -----------------------------------------------


def _weighted_sum(grid: Grid, values: np.ndarray) -> float:
    if values.ndim == 4:
        values = values.sum(axis=0)
    return float(BOX_VOLUME * np.sum(grid.parseval_weights * values))


def inner_l2(f: SpectralField, g: SpectralField) -> float:
    grid = _same_grid(f, g)
    return _weighted_sum(grid, np.real(f.coeffs * np.conj(g.coeffs)))


def trilinear_b(u: SpectralField, v: SpectralField, w: SpectralField) -> float:
    """``b(u, v, w) = ∫ (u·∇)v · w`` with the dealiased product."""
    _same_grid(u, v, w)
    return inner_l2(convect(u, v), w)


def norm_l2(f: SpectralField) -> float:
    return math.sqrt(max(_weighted_sum(f.grid, np.abs(f.coeffs) ** 2), 0.0))


def norm_h1_semi(f: SpectralField) -> float:
    """‖∇f‖₂ via Parseval."""
    return math.sqrt(_weighted_sum(f.grid, f.grid.k2 * np.abs(f.coeffs) ** 2))


def norm_h1(f: SpectralField) -> float:
    return math.sqrt(_weighted_sum(f.grid, (1.0 + f.grid.k2) * np.abs(f.coeffs) ** 2))


def norm_h2(f: SpectralField) -> float:
    """Torus-symbol H² norm, weight ``1 + |k|² + |k|⁴``."""
    k2 = f.grid.k2
    return math.sqrt(_weighted_sum(f.grid, (1.0 + k2 + k2**2) * np.abs(f.coeffs) ** 2))


def norm_lq_samples(samples: np.ndarray, q: float) -> float:
    """L^q norm of the pointwise Euclidean magnitude of grid samples.

    ``samples`` has shape ``(..., N, N, N)``; all leading axes are components.
    """
    if not 2 <= q <= 6:
        raise ValueError(f"q must lie in [2, 6], got {q}")
    n = samples.shape[-1]
    mag2 = np.sum(samples.reshape((-1,) + samples.shape[-3:]) ** 2, axis=0)
    integral = BOX_VOLUME * float(np.mean(mag2 ** (q / 2.0)))
    return integral ** (1.0 / q) if integral > 0 else 0.0


def norm_lq(f: SpectralField, q: float) -> float:
    """L^q norm by uniform-grid quadrature, ``q ∈ [2, 6]``."""
    if not 2 <= q <= 6:
        raise ValueError(f"q must lie in [2, 6], got {q}")
    return norm_lq_samples(to_physical(f), q)


def gn_ratio(f: SpectralField, q: float) -> float:
    """``‖f‖_q / (‖f‖₂^{1+3/q-3/2} ‖f‖_{H¹}^{3/2-3/q})``; NaN for the zero field."""
    l2 = norm_l2(f)
    if l2 == 0:
        return float("nan")
    a = 1.0 + 3.0 / q - 1.5
    return norm_lq(f, q) / (l2**a * norm_h1(f) ** (1.0 - a))


def gn_ratio_gradient(f: SpectralField, q: float) -> float:
    """:func:`gn_ratio` applied to the tensor field ``∇f``; NaN when ``∇f = 0``."""
    if not 2 <= q <= 6:
        raise ValueError(f"q must lie in [2, 6], got {q}")
    k2 = f.grid.k2
    l2 = norm_h1_semi(f)
    if l2 == 0:
        return float("nan")
    h1 = math.sqrt(_weighted_sum(f.grid, (k2 + k2**2) * np.abs(f.coeffs) ** 2))
    a = 1.0 + 3.0 / q - 1.5
    return norm_lq_samples(physical_view(f).grad, q) / (l2**a * h1 ** (1.0 - a))


@lru_cache(maxsize=32)
def _ball_mask(grid: Grid, k: int) -> np.ndarray:
    return _freeze(grid.k2 <= k**2)


@dataclass(frozen=True)
class ModeCutoff:
    """Spherical truncation ``|k|² ≤ K²`` (Stokes eigenvalue ordering on the torus)."""

    k: int

    def __post_init__(self):
        if self.k <= 0:
            raise ValueError(f"cutoff K must be positive, got {self.k}")

    def mask(self, grid: Grid) -> np.ndarray:
        return _ball_mask(grid, self.k)

    def apply(self, f: SpectralField) -> SpectralField:
        return SpectralField.wrap(f.grid, f.coeffs * self.mask(f.grid), f.divergence_free, f.dealiased)

    def project(self, f: SpectralField) -> SpectralField:
        """``𝒫_n f``: Leray projection followed by the cutoff (formed on the kept modes only)."""
        grid = f.grid
        m = self.mask(grid)
        k = grid.wavenumbers[:, m]
        c = f.coeffs[:, m]
        kdotf = np.sum(k * c, axis=0) * grid.inv_k2[m]
        out = np.zeros_like(f.coeffs)
        out[:, m] = c - k * kdotf
        return SpectralField.wrap(grid, out, True, f.dealiased)

    def mode_count(self, grid: Grid) -> int:
        """Number of real divergence-free basis functions inside the cutoff."""
        k2 = grid.k2[self.mask(grid)]
        w = grid.parseval_weights[self.mask(grid)]
        # a ±k pair carries 2 complex polarizations (4 real functions); k=0 carries 3
        per_mode = np.where(k2 > 0, 2.0, 3.0)
        return int(round(float(np.sum(w * per_mode))))
