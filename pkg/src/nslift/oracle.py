"""Independent cross-checks: Taylor series of the Galerkin ODE, finite-difference
derivatives with Richardson extrapolation, and closed-form reference flows.

The Taylor oracle works on Taylor coefficients ``a_i = x⁽ⁱ⁾(t0)/i!`` and the
Cauchy product of the quadratic right-hand side. It shares the field operators
with the solver but none of the jet recurrences.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .field import (
    Grid,
    ModeCutoff,
    SpectralField,
    convect_sum,
    laplacian,
    norm_h1_semi,
    norm_l2,
    physical_view,
)
from .galerkin import DirectNS, Formulation, ProblemB, Trajectory
from .presets import shear_field, taylor_green_field


@dataclass(frozen=True)
class TaylorSeriesState:
    """Taylor coefficients ``a_i = ∂ₜⁱx(t0)/i!`` of a Galerkin solution."""

    coefficients: tuple[SpectralField, ...]
    t0: float = 0.0

    @property
    def order(self) -> int:
        return len(self.coefficients) - 1

    def derivative(self, i: int) -> SpectralField:
        return self.coefficients[i] * float(math.factorial(i))

    def derivatives(self) -> list[SpectralField]:
        return [self.derivative(i) for i in range(len(self.coefficients))]

    def evaluate(self, t: float) -> SpectralField:
        s = t - self.t0
        acc = self.coefficients[-1]
        for a in reversed(self.coefficients[:-1]):
            acc = a + s * acc
        return acc


def _taylor_of_polynomial(poly, t0: float, grid: Grid) -> list[SpectralField]:
    """Taylor coefficients about ``t0`` of a lift or forcing polynomial."""
    if poly is None or poly.degree < 0:
        return []
    return [poly.evaluate(t0, i) / float(math.factorial(i)) for i in range(poly.degree + 1)]


def _get(seq: Sequence[SpectralField], i: int, zero: SpectralField) -> SpectralField:
    return seq[i] if 0 <= i < len(seq) else zero


def taylor_coefficients_ode(initial: SpectralField, model: DirectNS | ProblemB, order: int,
                            t0: float = 0.0) -> TaylorSeriesState:
    """Taylor series of the Galerkin solution through ``x(t0) = initial``.

    For the direct system ``x' = −Ax + 𝒫_n(−x·∇x + f)``; for problem (B)
    ``x' = −Ax + 𝒫_n(−x·∇x − β·∇x − x·∇β + θ)`` with θ's series assembled from
    ``θ = −β' + Δβ − β·∇β + f``. Forcing and lift must be polynomial in t.
    """
    if order < 0:
        raise ValueError("order must be non-negative")
    grid = initial.grid
    cutoff: ModeCutoff = model.cutoff
    zero = SpectralField.zeros(grid)
    zero_view = physical_view(zero)
    fa = _taylor_of_polynomial(model.forcing, t0, grid)
    shifted = model.formulation == Formulation.SHIFTED
    if shifted:
        b = _taylor_of_polynomial(model.beta, t0, grid)
        bviews = [physical_view(x) for x in b]
        theta = []
        for i in range(order):
            terms = [(1.0, bviews[r], bviews[i - r]) for r in range(i + 1)
                     if r < len(b) and i - r < len(b)]
            th = (laplacian(_get(b, i, zero)) - _get(b, i + 1, zero) * float(i + 1)
                  - convect_sum(grid, terms) + _get(fa, i, zero))
            theta.append(th)
    a = [cutoff.apply(initial)]
    views = [physical_view(a[0])]
    sym = cutoff.mask(grid) * grid.k2
    for i in range(order):
        terms = [(1.0, views[r], views[i - r]) for r in range(i + 1)]
        if shifted:
            for r in range(i + 1):
                if r < len(b):
                    terms.append((1.0, bviews[r], views[i - r]))
                if i - r < len(b):
                    terms.append((1.0, views[r], bviews[i - r]))
            src = theta[i] - convect_sum(grid, terms)
        else:
            src = _get(fa, i, zero) - convect_sum(grid, terms)
        lin = SpectralField.wrap(grid, -sym * a[i].coeffs, True, True)
        nxt = (lin + cutoff.project(src)) / float(i + 1)
        a.append(nxt)
        views.append(physical_view(nxt))
    return TaylorSeriesState(tuple(a), t0)


def jet_norms(initial: SpectralField, model: DirectNS | ProblemB, order: int,
              t0: float = 0.0) -> tuple[list[float], list[float]]:
    """``‖∂ₜⁱx(t0)‖₂`` and ``‖∇∂ₜⁱx(t0)‖₂`` for ``i ≤ order`` from the Taylor oracle."""
    series = taylor_coefficients_ode(initial, model, order, t0)
    ders = series.derivatives()
    return [norm_l2(d) for d in ders], [norm_h1_semi(d) for d in ders]


# --- comparison reports ------------------------------------------------------


@dataclass
class JetComparison:
    label: str
    orders: list[int]
    norms_a: list[float]
    norms_b: list[float]
    gaps: list[float]
    relative_gaps: list[float]
    scale: float

    @property
    def max_relative_gap(self) -> float:
        return max(self.relative_gaps) if self.relative_gaps else 0.0

    def as_dict(self) -> dict:
        return {
            "label": self.label,
            "orders": self.orders,
            "norms_a": self.norms_a,
            "norms_b": self.norms_b,
            "gaps": self.gaps,
            "relative_gaps": self.relative_gaps,
            "scale": self.scale,
            "max_relative_gap": self.max_relative_gap,
        }


def compare_jets(a: Sequence[SpectralField], b: Sequence[SpectralField], scale: float = 0.0,
                 label: str = "") -> JetComparison:
    """Entrywise gaps ``‖a_i − b_i‖₂``, relative to ``max(‖a_i‖, ‖b_i‖, scale)``."""
    n = min(len(a), len(b))
    na, nb, gaps, rel = [], [], [], []
    for i in range(n):
        x, y = norm_l2(a[i]), norm_l2(b[i])
        g = norm_l2(a[i] - b[i])
        denom = max(x, y, scale)
        na.append(x)
        nb.append(y)
        gaps.append(g)
        rel.append(g / denom if denom > 0 else g)
    return JetComparison(label, list(range(n)), na, nb, gaps, rel, scale)


def write_report(comparisons: Sequence[JetComparison], path: str | Path) -> Path:
    path = Path(path)
    path.write_text(json.dumps({"comparisons": [c.as_dict() for c in comparisons]}, indent=2))
    return path


# --- finite differences ------------------------------------------------------


@dataclass(frozen=True)
class FiniteDifferenceJet:
    """Derivative estimates at the first sample with Richardson error estimates."""

    derivatives: tuple
    errors: tuple
    step: float


def _as_array(x) -> np.ndarray:
    return x.coeffs if isinstance(x, SpectralField) else np.asarray(x, dtype=float)


def _forward_difference(samples: Sequence[np.ndarray], k: int, stride: int) -> np.ndarray:
    acc = np.zeros_like(samples[0], dtype=np.result_type(samples[0], float))
    for j in range(k + 1):
        acc = acc + ((-1) ** (k - j) * math.comb(k, j)) * samples[j * stride]
    return acc


def finite_difference_jet(trajectory: Trajectory | tuple[Sequence[float], Sequence], order: int,
                          base_step: float | None = None, levels: int = 4) -> FiniteDifferenceJet:
    """Derivatives ``∂ₜᵏx(t_0)``, ``k ≤ order``, from uniformly spaced samples.

    Forward differences at steps ``h, 2h, 4h, …`` are combined in a Richardson
    table (the error expands in integer powers of h). The error estimate of each
    derivative is the change between the last two table diagonals. ``base_step``
    must be a multiple of the sample spacing; it defaults to that spacing.
    """
    if isinstance(trajectory, Trajectory):
        times, values = trajectory.times, trajectory.states
    else:
        times, values = trajectory
    times = np.asarray(times, dtype=float)
    if times.size < 2:
        raise ValueError("need at least two samples")
    spacing = times[1] - times[0]
    if not np.allclose(np.diff(times), spacing, rtol=1e-9, atol=0):
        raise ValueError("samples must be uniformly spaced")
    h = spacing if base_step is None else base_step
    stride = int(round(h / spacing))
    if stride < 1 or abs(stride * spacing - h) > 1e-9 * h:
        raise ValueError("base_step must be a positive multiple of the sample spacing")
    if levels < 1:
        raise ValueError("levels must be >= 1")
    needed = max(order, 1) * stride * 2 ** (levels - 1) + 1
    if len(values) < needed:
        raise ValueError(f"need {needed} samples for order {order} with {levels} levels")
    samples = [_as_array(v) for v in values[:needed]]
    template = values[0]
    derivs, errs = [], []
    for k in range(order + 1):
        if k == 0:
            est, err = samples[0], np.zeros_like(samples[0])
        else:
            col = [_forward_difference(samples, k, stride * 2**m) / (h * 2**m) ** k
                   for m in range(levels)]
            diagonal = [col[0]]
            for p in range(1, levels):
                col = [(2**p * col[m] - col[m + 1]) / (2**p - 1) for m in range(len(col) - 1)]
                diagonal.append(col[0])
            est = diagonal[-1]
            err = np.abs(est - diagonal[-2]) if levels > 1 else np.full(np.shape(est), np.nan)
        if isinstance(template, SpectralField):
            derivs.append(SpectralField(template.grid, est))
            errs.append(float(np.max(np.abs(err))))
        else:
            derivs.append(est)
            errs.append(err)
    return FiniteDifferenceJet(tuple(derivs), tuple(errs), h)


# --- closed-form references ---------------------------------------------------


def reference_shear(grid: Grid, t: float) -> SpectralField:
    """``e^{−t}(sin x₂, 0, 0)``, an exact Navier–Stokes solution."""
    return shear_field(grid) * math.exp(-t)


def reference_taylor_green(grid: Grid, t: float) -> SpectralField:
    """``e^{−2t}(sin x₁ cos x₂, −cos x₁ sin x₂, 0)``; its advection is a pure gradient."""
    return taylor_green_field(grid) * math.exp(-2.0 * t)
