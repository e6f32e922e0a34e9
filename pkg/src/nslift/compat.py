"""Taylor jets at t=0: the compatibility recurrence, the lift β and the shifted jets.

Jets store time derivatives at t=0 (``entry[i] = ∂ₜⁱ(·)(0)``), not Taylor
coefficients.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .field import (
    Grid,
    ModeCutoff,
    PhysicalView,
    SpectralField,
    convect_sum,
    laplacian,
    norm_l2,
    physical_view,
    project_leray,
    remove_mean,
)

VANISH_RTOL = 1e-10


class JetVerificationError(AssertionError):
    """A shifted jet entry that should vanish does not."""

    def __init__(self, index: int, norm: float, tolerance: float):
        super().__init__(f"jet entry {index} has norm {norm:.3e} > {tolerance:.3e}")
        self.index = index
        self.norm = norm
        self.tolerance = tolerance


@dataclass(frozen=True)
class FieldJet:
    entries: tuple[SpectralField, ...]

    def __post_init__(self):
        entries = tuple(self.entries)
        if entries:
            grid = entries[0].grid
            if any(e.grid != grid for e in entries):
                raise ValueError("all jet entries must share one grid")
        object.__setattr__(self, "entries", entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    def __iter__(self):
        return iter(self.entries)

    @property
    def grid(self) -> Grid:
        return self.entries[0].grid

    def get(self, i: int, grid: Grid | None = None) -> SpectralField:
        """Entry ``i``, or the zero field past the end of the jet."""
        if 0 <= i < len(self.entries):
            return self.entries[i]
        return SpectralField.zeros(grid or self.grid)

    def norms(self) -> list[float]:
        return [norm_l2(e) for e in self.entries]

    def taylor_coefficients(self) -> list[SpectralField]:
        return [e / math.factorial(i) for i, e in enumerate(self.entries)]

    @cached_property
    def views(self) -> tuple[PhysicalView, ...]:
        return tuple(physical_view(e) for e in self.entries)

    def manifest(self, name: str = "jet") -> dict:
        return {
            "name": name,
            "orders": list(range(len(self))),
            "l2_norms": self.norms(),
            "grid_n": self.grid.n if self.entries else None,
        }

    def export(self, directory: str | Path, name: str = "jet") -> Path:
        """Write ``<name>.json`` plus one field dump per entry."""
        from .io import save_field

        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        manifest = self.manifest(name)
        files = []
        for i, entry in enumerate(self.entries):
            path = directory / f"{name}_{i:02d}.spf"
            save_field(entry, path)
            files.append(path.name)
        manifest["files"] = files
        out = directory / f"{name}.json"
        out.write_text(json.dumps(manifest, indent=2))
        return out


class _TimePolynomial:
    """Polynomial in t with spectral-field coefficients given by a derivative jet."""

    jet: FieldJet
    _grid: Grid

    @property
    def grid(self) -> Grid:
        return self._grid

    @property
    def degree(self) -> int:
        return len(self.jet) - 1

    def derivative_at_zero(self, i: int) -> SpectralField:
        return self.jet.get(i, self._grid)

    def evaluate(self, t: float, order: int = 0) -> SpectralField:
        """``∂ₜ^order`` of the polynomial at ``t`` (Horner on the derivative jet)."""
        if order < 0:
            raise ValueError("derivative order must be non-negative")
        if order > self.degree:
            return SpectralField.zeros(self._grid)
        if t == 0:
            return self.jet[order]
        mask, stack, flags = self._packed(order)
        # Σ_j e_j t^j / j!, nested as e0 + t(e1 + t/2(e2 + t/3(...))), on the joint support only
        acc = stack[-1].copy()
        for j in range(len(stack) - 1, 0, -1):
            acc *= t / j
            acc += stack[j - 1]
        out = np.zeros((3,) + self._grid.spectral_shape, dtype=complex)
        out[:, mask] = acc
        return SpectralField.wrap(self._grid, out, *flags)

    def _packed(self, order: int):
        cache = self.__dict__.setdefault("_packed_cache", {})
        if order not in cache:
            entries = self.jet.entries[order:]
            mask = np.zeros(self._grid.spectral_shape, dtype=bool)
            for e in entries:
                mask |= np.any(e.coeffs != 0, axis=0)
            stack = np.stack([e.coeffs[:, mask] for e in entries])
            flags = all(e.divergence_free for e in entries), all(e.dealiased for e in entries)
            cache[order] = (mask, stack, flags)
        return cache[order]

    def shifted_jet(self, t0: float) -> FieldJet:
        """Derivative jet of the same polynomial re-expanded about ``t0``."""
        return FieldJet(tuple(self.evaluate(t0, i) for i in range(self.degree + 1)))


@dataclass(frozen=True, eq=False)
class LiftPolynomial(_TimePolynomial):
    """β(·,t) = Σ_{k ≤ degree} u_o⟨k⟩ tᵏ/k!."""

    jet: FieldJet

    def __post_init__(self):
        if len(self.jet) == 0:
            raise ValueError("lift needs at least one jet entry")
        object.__setattr__(self, "_grid", self.jet.grid)

    @property
    def i_star(self) -> int:
        return self.degree - 1

    def shifted(self, t0: float) -> "LiftPolynomial":
        return LiftPolynomial(self.shifted_jet(t0))

    @classmethod
    def zero(cls, grid: Grid, degree: int = 0) -> "LiftPolynomial":
        return cls(FieldJet(tuple(SpectralField.zeros(grid) for _ in range(degree + 1))))


@dataclass(frozen=True, eq=False)
class ForcingModel(_TimePolynomial):
    """Polynomial-in-time forcing f(·,t) = Σ ∂ₜⁱf(·,0) tⁱ/i!; an empty jet means f ≡ 0."""

    taylor: FieldJet
    grid_: Grid | None = None

    def __post_init__(self):
        grid = self.grid_ if self.grid_ is not None else (self.taylor.grid if len(self.taylor) else None)
        if grid is None:
            raise ValueError("zero forcing needs an explicit grid")
        object.__setattr__(self, "_grid", grid)

    @property
    def jet(self) -> FieldJet:  # type: ignore[override]
        return self.taylor

    def shifted(self, t0: float) -> "ForcingModel":
        if self.degree < 0:
            return self
        return ForcingModel(self.shifted_jet(t0), self._grid)

    @classmethod
    def zero(cls, grid: Grid) -> "ForcingModel":
        return cls(FieldJet(()), grid)

    def evaluate(self, t: float, order: int = 0) -> SpectralField:
        if self.degree < 0:
            return SpectralField.zeros(self._grid)
        return super().evaluate(t, order)


def _drive(grid: Grid, entries: Sequence[SpectralField], views: Sequence[PhysicalView],
           forcing: ForcingModel, i: int) -> SpectralField:
    """``Δe_i − Σ_r C(i,r) e_r·∇e_{i−r} + ∂ₜⁱf(·,0)`` with ``e_k = 0`` past the end."""
    zero_view = None
    zero = SpectralField.zeros(grid)

    def view(k):
        nonlocal zero_view
        if k < len(views):
            return views[k]
        if zero_view is None:
            zero_view = physical_view(zero)
        return zero_view

    lap = laplacian(entries[i]) if i < len(entries) else zero
    nonlinear = convect_sum(
        grid, [(float(math.comb(i, r)), view(r), view(i - r)) for r in range(i + 1)])
    out = lap - nonlinear
    if i <= forcing.degree:
        out = out + forcing.derivative_at_zero(i)
    return out


def compat_jet_u(u0: SpectralField, f: ForcingModel, order: int, zero_mean: bool = False) -> FieldJet:
    """Compatibility jet ``u_o⟨0..order⟩`` from the projected NS recurrence."""
    if order < 0:
        raise ValueError("order must be non-negative")
    defect = u0.divergence_defect()
    if defect > 1e-13:
        raise ValueError(f"initial field is not divergence-free (defect {defect:.2e})")
    grid = u0.grid
    first = u0 if u0.divergence_free else SpectralField(grid, u0.coeffs, True, u0.dealiased)
    if zero_mean:
        first = remove_mean(first)
    entries = [first]
    views = [physical_view(first)]
    for i in range(order):
        nxt = project_leray(_drive(grid, entries, views, f, i))
        if zero_mean:
            nxt = remove_mean(nxt)
        entries.append(nxt)
        views.append(physical_view(nxt))
    return FieldJet(tuple(entries))


def build_lift(jet: FieldJet, i_star: int) -> LiftPolynomial:
    if i_star < 0:
        raise ValueError("i_star must be non-negative")
    if len(jet) < i_star + 2:
        raise ValueError(f"jet has {len(jet)} entries; the lift needs {i_star + 2}")
    return LiftPolynomial(FieldJet(jet.entries[: i_star + 2]))


def lift_eval(beta: LiftPolynomial, t: float) -> SpectralField:
    return beta.evaluate(t)


def lift_dt_eval(beta: LiftPolynomial, t: float, order: int) -> SpectralField:
    return beta.evaluate(t, order)


def theta_eval(beta: LiftPolynomial, f: ForcingModel, t: float) -> SpectralField:
    """θ(·,t) = −∂ₜβ + Δβ − (β·∇)β + f, unprojected."""
    b = beta.evaluate(t)
    view = physical_view(b)
    adv = convect_sum(beta.grid, [(1.0, view, view)])
    return -beta.evaluate(t, 1) + laplacian(b) - adv + f.evaluate(t)


def theta_jet(beta: LiftPolynomial, f: ForcingModel, order: int) -> FieldJet:
    """``∂ₜⁱθ(·,0)`` for ``i = 0..order`` by Leibniz expansion of θ."""
    if order < 0:
        raise ValueError("order must be non-negative")
    grid = beta.grid
    entries = beta.jet.entries
    views = beta.jet.views
    out = []
    for i in range(order + 1):
        out.append(_drive(grid, entries, views, f, i) - beta.derivative_at_zero(i + 1))
    return FieldJet(tuple(out))


def projected_theta_jet(beta: LiftPolynomial, f: ForcingModel, order: int) -> FieldJet:
    """``∂ₜⁱ𝒫θ(·,0)`` grouped as ``𝒫(drive_i) − u_o⟨i+1⟩``.

    With a lift built from :func:`compat_jet_u` the projected drive is bitwise
    the next jet entry, so entries ``0..i*`` come out exactly zero instead of
    at roundoff level.
    """
    grid = beta.grid
    entries = beta.jet.entries
    views = beta.jet.views
    out = []
    for i in range(order + 1):
        projected = project_leray(_drive(grid, entries, views, f, i))
        if i + 1 <= beta.degree:
            projected = projected - beta.jet[i + 1]
        out.append(projected)
    return FieldJet(tuple(out))


def _data_scale(beta: LiftPolynomial, f: ForcingModel) -> float:
    scale = norm_l2(beta.jet[0])
    for i in range(f.degree + 1):
        scale = max(scale, norm_l2(f.derivative_at_zero(i)))
    return scale


def _shifted_jet(beta: LiftPolynomial, theta: FieldJet, order: int,
                 project: Callable[[SpectralField], SpectralField]) -> FieldJet:
    grid = beta.grid
    if order > len(theta):
        raise ValueError(f"order {order} needs θ derivatives through {order - 1}")
    bviews = beta.jet.views
    zero = SpectralField.zeros(grid)
    zero_view = physical_view(zero)

    def bview(k):
        return bviews[k] if k <= beta.degree else zero_view

    entries = [zero]
    views = [zero_view]
    for i in range(order):
        terms = []
        for r in range(i + 1):
            c = float(math.comb(i, r))
            terms.append((c, views[r], views[i - r]))
            terms.append((c, bview(r), views[i - r]))
            terms.append((c, views[r], bview(i - r)))
        nxt = project(laplacian(entries[i]) + theta[i]) - project(convect_sum(grid, terms))
        entries.append(nxt)
        views.append(physical_view(nxt))
    return FieldJet(tuple(entries))


def _verify_vanishing(jet: FieldJet, beta: LiftPolynomial, scale: float, rtol: float) -> None:
    # entry i is a difference of O(‖u_o⟨i⟩‖) terms, and the jets grow factorially
    for i in range(min(beta.degree, len(jet) - 1) + 1):
        ref = max(scale, norm_l2(beta.jet[i]))
        tol = rtol * ref if ref > 0 else rtol
        n = norm_l2(jet[i])
        if not n <= tol:
            raise JetVerificationError(i, n, tol)


def compat_jet_v(beta: LiftPolynomial, theta: FieldJet, order: int, *,
                 f: ForcingModel | None = None, verify: bool = True,
                 rtol: float = VANISH_RTOL) -> FieldJet:
    """Shifted jet ``v_o⟨0..order⟩`` with the full Leray projection.

    Entries ``0..i*+1`` must vanish; with ``verify`` a violation raises
    :class:`JetVerificationError`. Entry i is tested relative to the larger of
    the data scale (‖u₀‖ and the forcing jet norms) and ‖u_o⟨i⟩‖.
    """
    jet = _shifted_jet(beta, theta, order, project_leray)
    if verify:
        scale = _data_scale(beta, f) if f is not None else norm_l2(beta.jet[0])
        _verify_vanishing(jet, beta, scale, rtol)
    return jet


def compat_jet_v_galerkin(beta: LiftPolynomial, theta: FieldJet, order: int, cutoff: ModeCutoff, *,
                          f: ForcingModel | None = None, verify: bool = True,
                          rtol: float = VANISH_RTOL) -> FieldJet:
    """As :func:`compat_jet_v` with 𝒫 replaced by the Galerkin projection 𝒫_n."""
    jet = _shifted_jet(beta, theta, order, cutoff.project)
    if verify:
        scale = _data_scale(beta, f) if f is not None else norm_l2(beta.jet[0])
        _verify_vanishing(jet, beta, scale, rtol)
    return jet
