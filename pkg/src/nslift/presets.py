"""Scenario presets: initial velocity plus polynomial-in-time forcing.

Every preset is a trigonometric polynomial whose coefficients are written
directly into the spectrum, so no transform roundoff enters the data.
"""

from __future__ import annotations

from typing import Mapping

import numpy as np

from .compat import FieldJet, ForcingModel
from .field import Grid, SpectralField

RANDOM_SMOOTH_RMS = 0.1
RANDOM_SMOOTH_SHELL = (1, 2)

CATALOG: tuple[tuple[str, str], ...] = (
    ("zero", "u0 = 0, f = 0"),
    ("shear", "u0 = (sin x2, 0, 0), f = 0; exact solution e^{-t} u0"),
    ("taylor-green", "u0 = (sin x1 cos x2, -cos x1 sin x2, 0), f = 0; exact solution e^{-2t} u0"),
    ("random-smooth", "seeded divergence-free field on shells 1 <= |k|^2 <= 2, rms speed 0.1, f = 0"),
    ("forced-shear", "u0 = (sin x2, 0, 0), f = (1 + t)(0, 0, sin x1)"),
)


def list_presets() -> list[tuple[str, str]]:
    return list(CATALOG)


def field_from_modes(grid: Grid, modes: Mapping[tuple[int, int, int], np.ndarray],
                     divergence_free: bool = False) -> SpectralField:
    """Field with ``f̂(k) = modes[k]`` and ``f̂(−k) = conj(modes[k])``."""
    n = grid.n
    coeffs = np.zeros((3,) + grid.spectral_shape, dtype=complex)
    for k, value in modes.items():
        value = np.asarray(value, dtype=complex)
        if max(abs(c) for c in k) >= n // 2:
            raise ValueError(f"mode {k} not representable on N={n}")
        if k == (0, 0, 0):
            coeffs[:, 0, 0, 0] = value.real
            continue
        for kk, vv in ((k, value), (tuple(-c for c in k), np.conj(value))):
            if kk[2] >= 0:
                coeffs[:, kk[0] % n, kk[1] % n, kk[2]] = vv
    dealiased = all(max(abs(c) for c in k) <= grid.kmax_dealias for k in modes)
    return SpectralField(grid, coeffs, divergence_free, dealiased)


def shear_field(grid: Grid) -> SpectralField:
    return field_from_modes(grid, {(0, 1, 0): [-0.5j, 0, 0]}, divergence_free=True)


def taylor_green_field(grid: Grid) -> SpectralField:
    q = 0.25j
    return field_from_modes(grid, {(1, 1, 0): [-q, q, 0], (1, -1, 0): [-q, -q, 0]},
                            divergence_free=True)


def _half_space(k: tuple[int, int, int]) -> bool:
    return k[2] > 0 or (k[2] == 0 and (k[1] > 0 or (k[1] == 0 and k[0] > 0)))


def random_smooth_field(grid: Grid, seed: int, rms: float = RANDOM_SMOOTH_RMS,
                        shell: tuple[int, int] = RANDOM_SMOOTH_SHELL) -> SpectralField:
    rng = np.random.default_rng(seed)
    lo, hi = shell
    r = int(np.floor(np.sqrt(hi)))
    modes = {}
    for k1 in range(-r, r + 1):
        for k2 in range(-r, r + 1):
            for k3 in range(-r, r + 1):
                k = (k1, k2, k3)
                k2sum = k1 * k1 + k2 * k2 + k3 * k3
                if not (lo <= k2sum <= hi and _half_space(k)):
                    continue
                a = rng.standard_normal(3) + 1j * rng.standard_normal(3)
                kv = np.array(k, dtype=float)
                modes[k] = a - kv * (kv @ a) / k2sum
    energy = 2.0 * sum(float(np.sum(np.abs(v) ** 2)) for v in modes.values())
    scale = rms / np.sqrt(energy)
    return field_from_modes(grid, {k: v * scale for k, v in modes.items()}, divergence_free=True)


def make_preset(name: str, grid: Grid, seed: int = 0) -> tuple[SpectralField, ForcingModel]:
    """Initial field and forcing for a named preset."""
    if name == "zero":
        return SpectralField.zeros(grid), ForcingModel.zero(grid)
    if name == "shear":
        return shear_field(grid), ForcingModel.zero(grid)
    if name == "taylor-green":
        return taylor_green_field(grid), ForcingModel.zero(grid)
    if name == "random-smooth":
        return random_smooth_field(grid, seed), ForcingModel.zero(grid)
    if name == "forced-shear":
        g = field_from_modes(grid, {(1, 0, 0): [0, 0, -0.5j]}, divergence_free=True)
        return shear_field(grid), ForcingModel(FieldJet((g, g)))
    raise KeyError(f"unknown preset {name!r}; choose from {[n for n, _ in CATALOG]}")
