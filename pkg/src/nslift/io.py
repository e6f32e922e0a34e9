"""File formats.

Field dump (``.spf``): one UTF-8 JSON header line terminated by ``\\n``, then
raw little-endian float64 data. The header records ``n``,
``dealias_fraction`` (as ``"p/q"``), ``components`` (3 or 1), the flags and
``layout``. The data is the full spectrum as two arrays, real part then
imaginary part, each of shape ``(components, N, N, N)`` in C order. Each
wavenumber axis runs from ``−N/2+1`` to ``N/2``.

CSV files use ``%.17g`` formatting so that values round-trip exactly.
"""

from __future__ import annotations

import csv
import json
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from .field import Grid, ScalarSpectralField, SpectralField, to_physical

FORMAT = "nslift-field"
VERSION = 1
LAYOUT = "real,imag x (components, k1, k2, k3); k from -N/2+1 to N/2; C order; <f8"


def _axis_index(n: int) -> np.ndarray:
    return np.arange(-n // 2 + 1, n // 2 + 1) % n


def full_spectrum(grid: Grid, half: np.ndarray) -> np.ndarray:
    """Full ``(…, N, N, N)`` spectrum in FFT order from half storage, by Hermitian symmetry."""
    n = grid.n
    out = np.zeros(half.shape[:-1] + (n,), dtype=complex)
    out[..., : n // 2 + 1] = half
    neg = (-np.arange(n)) % n
    mirrored = np.conj(half[..., neg, :, :][..., :, neg, :])
    out[..., n // 2 + 1:] = mirrored[..., 1: n // 2][..., ::-1]
    return out


def save_field(f: SpectralField | ScalarSpectralField, path: str | Path) -> Path:
    path = Path(path)
    grid = f.grid
    vector = isinstance(f, SpectralField)
    coeffs = f.coeffs if vector else f.coeffs[None]
    idx = _axis_index(grid.n)
    full = full_spectrum(grid, coeffs)[:, idx][:, :, idx][:, :, :, idx]
    header = {
        "format": FORMAT,
        "version": VERSION,
        "n": grid.n,
        "dealias_fraction": str(grid.dealias_fraction),
        "components": 3 if vector else 1,
        "divergence_free": bool(getattr(f, "divergence_free", False)),
        "dealiased": bool(getattr(f, "dealiased", False)),
        "layout": LAYOUT,
    }
    with open(path, "wb") as fh:
        fh.write((json.dumps(header) + "\n").encode())
        fh.write(np.ascontiguousarray(full.real, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(full.imag, dtype="<f8").tobytes())
    return path


def load_field(path: str | Path, hermitian_rtol: float = 1e-12) -> SpectralField | ScalarSpectralField:
    """Read a field dump; raises ``ValueError`` on a malformed or non-real field."""
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode())
        data = np.frombuffer(fh.read(), dtype="<f8")
    if header.get("format") != FORMAT:
        raise ValueError(f"{path}: not a {FORMAT} file")
    n, comps = int(header["n"]), int(header["components"])
    grid = Grid(n, Fraction(header["dealias_fraction"]))
    shape = (comps, n, n, n)
    if data.size != 2 * int(np.prod(shape)):
        raise ValueError(f"{path}: expected {2 * int(np.prod(shape))} values, found {data.size}")
    ordered = data[: data.size // 2].reshape(shape) + 1j * data[data.size // 2:].reshape(shape)
    fft_order = np.empty_like(ordered)
    idx = _axis_index(n)
    fft_order[np.ix_(range(comps), idx, idx, idx)] = ordered
    half = fft_order[..., : n // 2 + 1]
    rebuilt = full_spectrum(grid, half)
    scale = max(float(np.max(np.abs(fft_order))), 1e-300)
    if np.max(np.abs(rebuilt - fft_order)) > hermitian_rtol * scale:
        raise ValueError(f"{path}: spectrum is not Hermitian-symmetric")
    if comps == 1:
        return ScalarSpectralField(grid, half[0])
    return SpectralField(grid, half, bool(header.get("divergence_free")), bool(header.get("dealiased")))


def write_samples_csv(f: SpectralField, path: str | Path) -> Path:
    """Physical samples, one row per grid point: ``x1,x2,x3,u1,u2,u3``."""
    path = Path(path)
    x = f.grid.coordinates.reshape(3, -1)
    u = to_physical(f).reshape(3, -1)
    np.savetxt(path, np.vstack([x, u]).T, delimiter=",", fmt="%.17g",
               header="x1,x2,x3,u1,u2,u3", comments="")
    return path


def write_rows_csv(path: str | Path, columns: Sequence[str], rows: Sequence[Sequence[float]]) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow(["%.17g" % v for v in row])
    return path


def read_rows_csv(path: str | Path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        columns = next(reader)
        rows = [[float(v) for v in row] for row in reader]
    return columns, np.array(rows).reshape(-1, len(columns))
