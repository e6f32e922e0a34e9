"""Galerkin ODE systems for direct Navier–Stokes and for the shifted unknown v = u − β.

Both systems live in the span of the divergence-free Fourier modes with
``|k|² ≤ K²`` (the Stokes eigenfunctions on the torus, ordered by eigenvalue).
"""

from __future__ import annotations

import enum
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .compat import (
    FieldJet,
    ForcingModel,
    LiftPolynomial,
    build_lift,
    compat_jet_u,
    projected_theta_jet,
    theta_eval,
)
from .field import (
    ModeCutoff,
    ScalarSpectralField,
    SpectralField,
    PhysicalView,
    convect,
    flux_convect,
    norm_h1_semi,
    norm_l2,
    physical_view,
)

log = logging.getLogger(__name__)

__all__ = [
    "BlowUpError",
    "DirectNS",
    "EquivalenceReport",
    "Formulation",
    "GalerkinState",
    "IntegratorConfig",
    "ModeCutoff",
    "ProblemB",
    "Trajectory",
    "equivalence_check",
    "integrate",
    "recover_pressure",
    "reconstruct_u",
    "rhs_direct_ns",
    "rhs_problem_B",
    "shifted_setup",
    "step",
]


class Formulation(str, enum.Enum):
    DIRECT = "direct-ns"
    SHIFTED = "problem-B"


@dataclass(frozen=True)
class GalerkinState:
    t: float
    field: SpectralField
    formulation: Formulation


SCHEMES = ("rk4", "if-rk4", "adaptive")


@dataclass(frozen=True)
class IntegratorConfig:
    """Time-stepping parameters.

    ``output_every`` is the output cadence in steps for the fixed-step schemes;
    the adaptive scheme reports at the same nominal times ``t0 + j·dt·output_every``.
    """

    scheme: str = "rk4"
    dt: float = 1e-3
    t_end: float = 1.0
    tolerance: float = 1e-10
    output_every: int = 1

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.output_every < 1:
            raise ValueError("output_every must be >= 1")


class BlowUpError(RuntimeError):
    """Non-finite values appeared during integration."""

    def __init__(self, t: float, last_norms: dict, trajectory: "Trajectory | None" = None):
        super().__init__(f"blow-up at t={t:.6g}; last valid norms {last_norms}")
        self.t = t
        self.last_norms = last_norms
        self.trajectory = trajectory


class _Model:
    formulation: Formulation
    cutoff: ModeCutoff

    def linear_symbol(self, grid) -> np.ndarray:
        """Diagonal of the Stokes operator restricted to the cutoff."""
        return grid.k2 * self.cutoff.mask(grid)

    def nonlinear(self, t: float, x: SpectralField) -> SpectralField:
        raise NotImplementedError

    def __call__(self, t: float, x: SpectralField) -> SpectralField:
        nl = self.nonlinear(t, x)
        return SpectralField.wrap(x.grid, nl.coeffs - self.linear_symbol(x.grid) * x.coeffs, True, True)


class DirectNS(_Model):
    """∂ₜu + Au = 𝒫_n(−u·∇u + f)."""

    formulation = Formulation.DIRECT

    def __init__(self, forcing: ForcingModel, cutoff: ModeCutoff):
        self.forcing = forcing
        self.cutoff = cutoff

    def nonlinear(self, t: float, u: SpectralField) -> SpectralField:
        src = -flux_convect(physical_view(u), keep=self.cutoff.mask(u.grid))
        if self.forcing.degree >= 0:
            src = src + self.forcing.evaluate(t)
        return self.cutoff.project(src)


class ProblemB(_Model):
    """∂ₜv + Av = 𝒫_n(−v·∇v − β·∇v − v·∇β + θ).

    ``theta_mode="jet"`` (default) evaluates 𝒫θ(·,t) from its exact Taylor jet in
    the cancellation-free grouping of :func:`projected_theta_jet`, so the orders
    annihilated by the lift are exactly zero and v stays flat at t=0 down to any
    magnitude. ``theta_mode="direct"`` evaluates θ from its defining formula at
    each t; it is mathematically identical but carries an O(eps·‖β‖) floor.
    """

    formulation = Formulation.SHIFTED

    def __init__(self, beta: LiftPolynomial, forcing: ForcingModel, cutoff: ModeCutoff,
                 theta_mode: str = "jet"):
        if theta_mode not in ("jet", "direct"):
            raise ValueError("theta_mode must be 'jet' or 'direct'")
        self.beta = beta
        self.forcing = forcing
        self.cutoff = cutoff
        self.theta_mode = theta_mode
        self._theta_poly: ForcingModel | None = None
        self._beta_cache: dict[float, PhysicalView] = {}
        if theta_mode == "jet":
            order = max(2 * beta.degree, forcing.degree, 0)
            jet = projected_theta_jet(beta, forcing, order)
            self._theta_poly = ForcingModel(FieldJet(tuple(cutoff.apply(e) for e in jet)))

    def theta_projected(self, t: float) -> SpectralField:
        if self._theta_poly is not None:
            return self._theta_poly.evaluate(t)
        return self.cutoff.project(theta_eval(self.beta, self.forcing, t))

    def beta_at(self, t: float) -> SpectralField:
        # RK stages revisit the same times; keep the last few evaluations
        cache = self._beta_cache
        if t not in cache:
            if len(cache) > 4:
                cache.pop(next(iter(cache)))
            cache[t] = physical_view(self.beta.evaluate(t))
        return cache[t]

    def nonlinear(self, t: float, v: SpectralField) -> SpectralField:
        vv = physical_view(v)
        adv = flux_convect(vv, self.beta_at(t), keep=self.cutoff.mask(v.grid))
        return self.cutoff.project(-adv) + self.theta_projected(t)


def rhs_direct_ns(state: GalerkinState, f: ForcingModel, cutoff: ModeCutoff) -> SpectralField:
    if state.formulation != Formulation.DIRECT:
        raise ValueError("state is not tagged direct-ns")
    return DirectNS(f, cutoff)(state.t, state.field)


def rhs_problem_B(state: GalerkinState, beta: LiftPolynomial, f: ForcingModel,
                  cutoff: ModeCutoff, theta_mode: str = "jet") -> SpectralField:
    """One-off RHS evaluation; build a :class:`ProblemB` once for repeated use."""
    if state.formulation != Formulation.SHIFTED:
        raise ValueError("state is not tagged problem-B")
    return ProblemB(beta, f, cutoff, theta_mode)(state.t, state.field)


# --- time stepping -----------------------------------------------------------


def _rk4(model: _Model, t: float, x: SpectralField, h: float) -> SpectralField:
    k1 = model(t, x)
    k2 = model(t + h / 2, x + (h / 2) * k1)
    k3 = model(t + h / 2, x + (h / 2) * k2)
    k4 = model(t + h, x + h * k3)
    return x + (h / 6) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _if_rk4(model: _Model, t: float, x: SpectralField, h: float) -> SpectralField:
    # Lawson RK4 on the integrating-factor form; the Stokes part is exact.
    grid = x.grid
    lam = model.linear_symbol(grid)
    e_half = np.exp(-lam * h / 2)
    e_full = e_half * e_half

    def scaled(arr, f):
        return SpectralField.wrap(grid, arr * f.coeffs if isinstance(f, SpectralField) else arr * f, True, True)

    n1 = model.nonlinear(t, x)
    n2 = model.nonlinear(t + h / 2, scaled(e_half, x + (h / 2) * n1))
    n3 = model.nonlinear(t + h / 2, scaled(e_half, x) + (h / 2) * n2)
    n4 = model.nonlinear(t + h, scaled(e_full, x) + h * scaled(e_half, n3))
    incr = scaled(e_full, n1) + 2.0 * scaled(e_half, n2 + n3) + n4
    return scaled(e_full, x) + (h / 6) * incr


def _norms(x: SpectralField) -> dict:
    return {"l2": norm_l2(x), "h1_semi": norm_h1_semi(x)}


def step(state: GalerkinState, rhs: _Model, integrator: IntegratorConfig,
         dt: float | None = None) -> GalerkinState:
    """Advance one fixed step of ``integrator.scheme`` (rk4 or if-rk4)."""
    h = integrator.dt if dt is None else dt
    if integrator.scheme == "rk4":
        nxt = _rk4(rhs, state.t, state.field, h)
    elif integrator.scheme == "if-rk4":
        nxt = _if_rk4(rhs, state.t, state.field, h)
    else:
        raise ValueError("step() supports the fixed-step schemes only")
    if not np.all(np.isfinite(nxt.coeffs)):
        raise BlowUpError(state.t + h, _norms(state.field))
    return GalerkinState(state.t + h, nxt, state.formulation)


@dataclass
class Trajectory:
    formulation: Formulation
    times: list[float] = field(default_factory=list)
    states: list[SpectralField] = field(default_factory=list)
    diagnostics: list[Any] = field(default_factory=list)
    termination: str = "running"
    config: IntegratorConfig | None = None

    def append(self, t: float, x: SpectralField, record: Any = None):
        self.times.append(float(t))
        self.states.append(x)
        if record is not None:
            self.diagnostics.append(record)

    def __len__(self) -> int:
        return len(self.times)

    def __iter__(self):
        return iter(zip(self.times, self.states))

    def norms(self) -> np.ndarray:
        return np.array([norm_l2(x) for x in self.states])

    def grad_norms_sq(self) -> np.ndarray:
        return np.array([norm_h1_semi(x) ** 2 for x in self.states])

    def state(self, i: int) -> GalerkinState:
        return GalerkinState(self.times[i], self.states[i], self.formulation)


def _check_cfl(config: IntegratorConfig, cutoff: ModeCutoff):
    bound = 0.5 / cutoff.k**2
    if config.scheme == "rk4" and config.dt > bound:
        warnings.warn(f"dt={config.dt:g} exceeds the advisory bound 0.5/K^2={bound:.3g} "
                      "for explicit RK4; consider if-rk4", RuntimeWarning, stacklevel=3)


def integrate(initial: GalerkinState, config: IntegratorConfig, rhs: _Model,
              recorder: Callable[[GalerkinState], Any] | None = None) -> Trajectory:
    """Integrate from ``initial`` to ``config.t_end``, keeping every output state.

    ``recorder`` is called on each output state and its return value stored in
    ``trajectory.diagnostics``.
    """
    if initial.formulation != rhs.formulation:
        raise ValueError("initial state and RHS model disagree on the formulation")
    x0 = rhs.cutoff.apply(initial.field)
    if not np.array_equal(x0.coeffs, initial.field.coeffs):
        raise ValueError("initial state has coefficients outside the cutoff")
    _check_cfl(config, rhs.cutoff)
    span = config.t_end - initial.t
    nsteps = max(int(round(span / config.dt)), 0)
    h = span / nsteps if nsteps else 0.0
    if nsteps and abs(h - config.dt) > 1e-9 * config.dt:
        log.info("adjusted dt from %g to %g to land on t_end", config.dt, h)
    traj = Trajectory(initial.formulation, config=config)

    def emit(state: GalerkinState):
        record = recorder(state) if recorder is not None else None
        traj.append(state.t, state.field, record)

    state = GalerkinState(initial.t, x0, initial.formulation)
    emit(state)
    if config.scheme == "adaptive":
        _integrate_adaptive(state, config, rhs, nsteps, h, emit, traj)
        traj.termination = "completed"
        return traj
    for n in range(1, nsteps + 1):
        try:
            nxt = step(state, rhs, config, dt=h)
        except BlowUpError as err:
            traj.termination = "blow-up"
            err.trajectory = traj
            raise
        # land on grid times exactly rather than accumulating t += h
        state = GalerkinState(initial.t + n * h, nxt.field, nxt.formulation)
        if n % config.output_every == 0 or n == nsteps:
            emit(state)
    traj.termination = "completed"
    return traj


def _integrate_adaptive(state, config, rhs, nsteps, h, emit, traj):
    from scipy.integrate import solve_ivp

    grid = state.field.grid
    shape = state.field.coeffs.shape
    t0 = state.t
    out_idx = [n for n in range(1, nsteps + 1) if n % config.output_every == 0 or n == nsteps]
    t_eval = [t0 + n * h for n in out_idx]
    if not t_eval:
        return

    def fun(t, y):
        x = SpectralField(grid, y.reshape(shape), True, True)
        return rhs(t, x).coeffs.ravel()

    scale = max(norm_l2(state.field), 1.0)
    sol = solve_ivp(fun, (t0, t_eval[-1]), state.field.coeffs.ravel().astype(complex),
                    method="DOP853", t_eval=t_eval, rtol=config.tolerance,
                    atol=config.tolerance * scale / math.sqrt(state.field.coeffs.size))
    if not sol.success or not np.all(np.isfinite(sol.y)):
        traj.termination = "blow-up"
        raise BlowUpError(float(sol.t[-1]) if sol.t.size else t0, _norms(state.field), traj)
    for j, t in enumerate(sol.t):
        x = SpectralField(grid, sol.y[:, j].reshape(shape), True, True)
        emit(GalerkinState(float(t), x, state.formulation))


# --- reconstruction, equivalence, pressure -------------------------------------


def reconstruct_u(state: GalerkinState, beta: LiftPolynomial) -> SpectralField:
    """u = v + β(t)."""
    if state.formulation != Formulation.SHIFTED:
        raise ValueError("reconstruct_u expects a problem-B state")
    return state.field + beta.evaluate(state.t)


@dataclass
class EquivalenceReport:
    max_relative_gap: float
    times: list[float]
    gaps: list[float]
    i_star: int
    cutoff: int
    dt: float

    def as_dict(self) -> dict:
        return {
            "max_relative_gap": self.max_relative_gap,
            "i_star": self.i_star,
            "cutoff": self.cutoff,
            "dt": self.dt,
            "times": self.times,
            "gaps": self.gaps,
        }


def shifted_setup(u0: SpectralField, f: ForcingModel, i_star: int,
                  zero_mean: bool = False) -> LiftPolynomial:
    """Compatibility jet through order i*+1 and its lift β."""
    jet = compat_jet_u(u0, f, i_star + 1, zero_mean=zero_mean)
    return build_lift(jet, i_star)


def equivalence_check(u0: SpectralField, f: ForcingModel, config: IntegratorConfig,
                      cutoff: ModeCutoff, i_star: int = 7) -> EquivalenceReport:
    """Integrate direct NS and problem (B) and compare u_n with v_n + β.

    The gap is ``max_t ‖u_n − (v_n + β)‖₂ / ‖u_n‖₂`` over output times (absolute
    where ‖u_n‖₂ = 0).
    """
    grid = u0.grid
    beta = shifted_setup(u0, f, i_star)
    direct = integrate(GalerkinState(0.0, cutoff.apply(u0), Formulation.DIRECT), config,
                       DirectNS(f, cutoff))
    shifted = integrate(GalerkinState(0.0, SpectralField.zeros(grid), Formulation.SHIFTED),
                        config, ProblemB(beta, f, cutoff))
    gaps = []
    for (t, u), (_, v) in zip(direct, shifted):
        diff = norm_l2(u - (v + beta.evaluate(t)))
        scale = norm_l2(u)
        gaps.append(diff / scale if scale > 0 else diff)
    return EquivalenceReport(max(gaps), list(direct.times), gaps, i_star, cutoff.k, config.dt)


def recover_pressure(u: SpectralField, f: ForcingModel, t: float) -> ScalarSpectralField:
    """Zero-mean pressure solving ``−Δp = div(u·∇u − f)`` spectrally."""
    grid = u.grid
    src = convect(u, u)
    if f.degree >= 0:
        src = src - f.evaluate(t)
    kdot = np.sum(1j * grid.odd_wavenumbers * src.coeffs, axis=0)
    return ScalarSpectralField(grid, kdot * grid.inv_k2)

