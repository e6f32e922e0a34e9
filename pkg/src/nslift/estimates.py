"""A priori quantities monitored along Galerkin trajectories, and the
continuation-window calculators.

The constants c₂ and C₂ are never taken as known: they are either supplied by
the user or fitted here (``fit_c2`` from measured Gagliardo–Nirenberg ratios and
explicit Young coefficients, ``fit_C2`` by bisection against a trajectory).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .field import (
    Grid,
    SpectralField,
    gn_ratio,
    gn_ratio_gradient,
    inner_l2,
    norm_h1_semi,
    norm_l2,
    norm_lq_samples,
    physical_view,
    project_leray,
    remove_mean,
    symmetrize,
    to_physical,
    trilinear_b,
)
from .galerkin import DirectNS, Formulation, GalerkinState, ProblemB, Trajectory
from .oracle import jet_norms


# --- per-state diagnostics ---------------------------------------------------


@dataclass
class DiagnosticsRecord:
    t: float
    l2_norm: float
    h1_semi: float
    stokes_norm: float
    jet_norms: list[float] = field(default_factory=list)
    jet_grad_norms: list[float] = field(default_factory=list)
    energy_rate: float = 0.0
    energy_residual: float = 0.0

    def as_row(self) -> list[float]:
        return ([self.t, self.l2_norm, self.h1_semi, self.stokes_norm]
                + list(self.jet_norms) + list(self.jet_grad_norms)
                + [self.energy_rate, self.energy_residual])

    @staticmethod
    def columns(i_monitor: int) -> list[str]:
        return (["t", "l2_norm", "h1_semi", "stokes_norm"]
                + [f"dt{i}_l2" for i in range(i_monitor + 1)]
                + [f"dt{i}_h1_semi" for i in range(i_monitor + 1)]
                + ["energy_rate", "energy_residual"])


class NonFiniteDiagnostics(FloatingPointError):
    pass


def stokes_norm(x: SpectralField) -> float:
    """‖Ax‖₂ for a divergence-free field."""
    return norm_l2(SpectralField.wrap(x.grid, x.grid.k2 * x.coeffs, True, x.dealiased))


def _lift_at(model, t: float) -> SpectralField | None:
    return model.beta.evaluate(t) if model.formulation == Formulation.SHIFTED else None


def forcing_term(model: DirectNS | ProblemB, t: float, grid: Grid) -> SpectralField:
    """The projected source of the model: 𝒫_nθ for problem (B), 𝒫_n f otherwise."""
    if model.formulation == Formulation.SHIFTED:
        return model.theta_projected(t)
    if model.forcing.degree < 0:
        return SpectralField.zeros(grid)
    return model.cutoff.project(model.forcing.evaluate(t))


def energy_terms(model: DirectNS | ProblemB, t: float, x: SpectralField) -> dict:
    """Pieces of ``d/dt‖x‖² = −2‖∇x‖² − 2b(x,β,x) + 2⟨F,x⟩`` at one state."""
    grid = x.grid
    beta = _lift_at(model, t)
    force = forcing_term(model, t, grid)
    b_term = trilinear_b(x, beta, x) if beta is not None else 0.0
    return {
        "rate": 2.0 * inner_l2(model(t, x), x),
        "dissipation": 2.0 * norm_h1_semi(x) ** 2,
        "b_lift": b_term,
        "forcing_inner": inner_l2(force, x),
        "forcing_norm": norm_l2(force),
    }


def record(state: GalerkinState, model: DirectNS | ProblemB, i_monitor: int = 2) -> DiagnosticsRecord:
    """Norms of the state, of its time derivatives, and the energy-identity check.

    Time derivatives come from the Taylor oracle re-centred at ``state.t``.
    ``energy_residual`` is the gap in the instantaneous energy identity, which
    only the skew-symmetry of the trilinear form makes vanish.
    """
    x = state.field
    if i_monitor < 0:
        raise ValueError("i_monitor must be non-negative")
    l2s, h1s = jet_norms(x, model, i_monitor, t0=state.t)
    e = energy_terms(model, state.t, x)
    expected = -e["dissipation"] - 2.0 * e["b_lift"] + 2.0 * e["forcing_inner"]
    rec = DiagnosticsRecord(state.t, norm_l2(x), norm_h1_semi(x), stokes_norm(x), l2s, h1s,
                            e["rate"], e["rate"] - expected)
    if not all(math.isfinite(v) for v in rec.as_row()):
        raise NonFiniteDiagnostics(f"non-finite diagnostics at t={state.t:g}")
    return rec


def make_recorder(model: DirectNS | ProblemB, i_monitor: int = 2):
    return lambda state: record(state, model, i_monitor)


# --- energy balance ----------------------------------------------------------


@dataclass
class EnergyBalance:
    times: list[float]
    residuals: list[float]
    lhs: list[float]
    bounds: list[float]
    violations: list[float]

    @property
    def max_abs_residual(self) -> float:
        return max((abs(r) for r in self.residuals), default=0.0)

    def as_dict(self) -> dict:
        return asdict(self) | {"max_abs_residual": self.max_abs_residual}


def energy_balance_residual(trajectory: Trajectory | tuple[Sequence[float], Sequence[SpectralField]],
                            model: DirectNS | ProblemB, stride: int = 1) -> EnergyBalance:
    """Central-difference check of the Galerkin energy identity at interior samples.

    ``residual_j = (E_{j+1} − E_{j−1})/(2h) − 2⟨RHS(t_j, x_j), x_j⟩`` with
    ``E = ‖x‖₂²``. The inequality direction
    ``dE/dt + 2‖∇x‖₂² ≤ 2|b(x,β,x)| + 2‖F‖₂‖x‖₂`` is tested with the same
    central difference; a sample is a violation when the excess exceeds the
    residual at that sample. ``stride`` subsamples the trajectory.
    """
    if isinstance(trajectory, Trajectory):
        times, states = trajectory.times, trajectory.states
    else:
        times, states = trajectory
    times = list(times)[::stride]
    states = list(states)[::stride]
    if len(times) < 3:
        raise ValueError("energy balance needs at least three samples")
    h = times[1] - times[0]
    if not np.allclose(np.diff(times), h, rtol=1e-9, atol=0):
        raise ValueError("energy balance needs uniformly spaced samples")
    energy = [norm_l2(x) ** 2 for x in states]
    out = EnergyBalance([], [], [], [], [])
    for j in range(1, len(times) - 1):
        t, x = times[j], states[j]
        ddt = (energy[j + 1] - energy[j - 1]) / (2.0 * h)
        e = energy_terms(model, t, x)
        resid = ddt - e["rate"]
        lhs = ddt + e["dissipation"]
        bound = 2.0 * abs(e["b_lift"]) + 2.0 * e["forcing_norm"] * norm_l2(x)
        out.times.append(t)
        out.residuals.append(resid)
        out.lhs.append(lhs)
        out.bounds.append(bound)
        slack = abs(resid) + 1e-13 * (abs(lhs) + bound + e["dissipation"])
        if lhs - bound > slack:
            out.violations.append(t)
    return out


# --- Gagliardo–Nirenberg and the c₂ fit ---------------------------------------


@dataclass
class GNReport:
    q: float
    ratio: float
    applicable: bool


def gn_verify(f: SpectralField, q: float) -> GNReport:
    """Measured ``‖f‖_q / (‖f‖₂^{1+3/q−3/2} ‖f‖_{H¹}^{3/2−3/q})``."""
    if not 2 <= q <= 6:
        raise ValueError(f"q must lie in [2, 6], got {q}")
    if f.is_zero():
        return GNReport(q, float("nan"), False)
    return GNReport(q, gn_ratio(f, q), True)


@dataclass(frozen=True)
class DataBounds:
    """Bounds on the lift and source over ``[0, T_o]`` entering the c₂ chain.

    ``v_l2`` bounds ‖v‖₂ (the role of the energy estimate); all default to 1.
    """

    beta_l6: float = 1.0
    grad_beta_l6: float = 1.0
    theta_l2: float = 1.0
    v_l2: float = 1.0


def data_bounds(model: ProblemB, t_o: float, samples: int = 11, v_l2: float = 1.0) -> DataBounds:
    """Sampled maxima of ‖β‖₆, ‖∇β‖₆ and ‖𝒫_nθ‖₂ on ``[0, t_o]``."""
    b6 = gb6 = th = 0.0
    for t in np.linspace(0.0, t_o, samples):
        view = physical_view(model.beta.evaluate(float(t)))
        b6 = max(b6, norm_lq_samples(view.values, 6))
        gb6 = max(gb6, norm_lq_samples(view.grad, 6))
        th = max(th, norm_l2(model.theta_projected(float(t))))
    return DataBounds(b6, gb6, th, v_l2)


@dataclass
class C2Fit:
    """Empirical c₂ with the ingredients of the chain that produced it."""

    c2: float
    gn_max: dict
    coefficients: list[float]
    bounds: DataBounds
    corpus_size: int
    label: str = "empirical"

    def implied_C1(self, t_o: float) -> float:
        return math.exp(self.c2 * t_o) * self.c2 * t_o

    def as_dict(self) -> dict:
        return {"c2": self.c2, "gn_max": self.gn_max, "coefficients": self.coefficients,
                "bounds": asdict(self.bounds), "corpus_size": self.corpus_size,
                "label": self.label}


def young_coefficient(k: float, gamma: float) -> float:
    """``C`` with ``2K·a^α·b^γ ≤ ¼b² + C·a^{2α/(2−γ)}`` for ``0 < γ < 2``."""
    eps = (1.0 / (2.0 * gamma)) ** (gamma / 2.0)
    return (2.0 - gamma) / 2.0 * (2.0 * k / eps) ** (2.0 / (2.0 - gamma))


def c2_from_ratios(g6: float, g3: float, g3_grad: float, bounds: DataBounds) -> tuple[float, list[float]]:
    """Sum of the Young coefficients of the four Hölder terms.

    With ``a = ‖∇v‖₂``, ``b = ‖Av‖₂`` and zero-mean v (so ``‖v‖_{H¹} ≤ √2·a`` and
    ``‖∇v‖_{H¹} ≤ √2·b``):

    * ``2‖v‖₆‖∇v‖₃ b ≤ 2·2^{3/4} G₆ G₃∇ a^{3/2} b^{3/2}``
    * ``2‖β‖₆‖∇v‖₃ b ≤ 2·2^{1/4} B₆ G₃∇ a^{1/2} b^{3/2}``
    * ``2‖∇β‖₆‖v‖₃ b ≤ 2·2^{1/4} B₆∇ G₃ V^{1/2} a^{1/2} b``
    * ``2‖θ‖₂ b``

    Each is split by Young into ``¼b²`` plus a power of a from ``{6, 2, 1, 0}``;
    all powers are at most ``(a² + 1)³``.
    """
    terms = [
        (2 ** 0.75 * g6 * g3_grad, 1.5),
        (2 ** 0.25 * bounds.beta_l6 * g3_grad, 1.5),
        (2 ** 0.25 * bounds.grad_beta_l6 * g3 * math.sqrt(bounds.v_l2), 1.0),
        (bounds.theta_l2, 1.0),
    ]
    coeffs = [young_coefficient(k, g) if k > 0 else 0.0 for k, g in terms]
    return sum(coeffs), coeffs


def fit_c2(corpus: Sequence[SpectralField], bounds: DataBounds = DataBounds()) -> C2Fit:
    """Smallest c₂ for which the estimate chain holds on every corpus member.

    The chain is monotone in each GN ratio, so the corpus maxima determine it.
    Means are removed before measuring.
    """
    if len(corpus) == 0:
        raise ValueError("fit_c2 needs a non-empty corpus")
    g6 = g3 = g3g = 0.0
    for f in corpus:
        f = remove_mean(f)
        if f.is_zero():
            continue
        g6 = max(g6, gn_ratio(f, 6))
        g3 = max(g3, gn_ratio(f, 3))
        g3g = max(g3g, gn_ratio_gradient(f, 3))
    if g6 == 0:
        raise ValueError("corpus contains no non-constant field")
    c2, coeffs = c2_from_ratios(g6, g3, g3g, bounds)
    return C2Fit(c2, {"q6": g6, "q3": g3, "q3_gradient": g3g}, coeffs, bounds, len(corpus))


def standard_corpus(grid: Grid, size: int = 20, seed: int = 0, kmax: int = 4) -> list[SpectralField]:
    """Seeded random divergence-free zero-mean fields with varied spectral slopes."""
    rng = np.random.default_rng(seed)
    k = np.sqrt(grid.k2)
    out = []
    for _ in range(size):
        radius = int(rng.integers(1, kmax + 1))
        slope = float(rng.uniform(0.0, 3.0))
        mask = (k > 0) & (k <= radius) & grid.dealias_mask
        amp = np.where(mask, np.maximum(k, 1.0) ** (-slope), 0.0)
        noise = rng.standard_normal((3,) + grid.spectral_shape) + 1j * rng.standard_normal((3,) + grid.spectral_shape)
        f = symmetrize(project_leray(SpectralField(grid, noise * amp)))
        # symmetrization goes through physical space; drop its roundoff outside the shell
        f = SpectralField(grid, f.coeffs * mask, True, True)
        out.append(f / max(np.sqrt(np.mean(np.sum(to_physical(f) ** 2, axis=0))), 1e-300))
    return out


# --- continuation windows ----------------------------------------------------


@dataclass(frozen=True)
class ContinuationParams:
    """``c2`` for the first window; ``C2`` and ``M`` for continuation."""

    T_o: float
    c2: float | None = None
    C2: float | None = None
    M: float = 0.0

    def __post_init__(self):
        if not self.T_o > 0:
            raise ValueError("T_o must be positive")
        if self.c2 is not None and not self.c2 > 0:
            raise ValueError("c2 must be positive")
        if self.C2 is not None and not self.C2 > 0:
            raise ValueError("C2 must be positive")
        if not self.M >= 0:
            raise ValueError("M must be non-negative")


def first_window(params: ContinuationParams) -> float:
    """``T₁ = min{3/(8c₂), T_o}``."""
    if params.c2 is None:
        raise ValueError("first_window needs c2")
    return min(3.0 / (8.0 * params.c2), params.T_o)


def continuation_time(params: ContinuationParams, T: float) -> float:
    """``T⁺ = min{T + C₂(M+1)⁻², T_o}``."""
    if params.C2 is None:
        raise ValueError("continuation_time needs C2")
    return min(T + params.C2 / (params.M + 1.0) ** 2, params.T_o)


@dataclass
class WindowCheck:
    T: float
    T_plus: float
    M: float
    sup_grad_sq: float
    bound: float
    holds: bool


def _sup_on(times: np.ndarray, values: np.ndarray, lo: float, hi: float) -> float:
    sel = (times >= lo - 1e-12) & (times <= hi + 1e-12)
    return float(values[sel].max()) if np.any(sel) else 0.0


def grad_sq_series(trajectory: Trajectory) -> tuple[np.ndarray, np.ndarray]:
    return np.asarray(trajectory.times), trajectory.grad_norms_sq()


def first_window_check(times: Sequence[float], grad_sq: Sequence[float], c2: float, T_o: float) -> WindowCheck:
    """Does ``sup_{t ≤ T₁} ‖∇v‖₂² ≤ 1`` hold on the sampled trajectory?"""
    times, grad_sq = np.asarray(times), np.asarray(grad_sq)
    t1 = first_window(ContinuationParams(T_o, c2=c2))
    sup = _sup_on(times, grad_sq, 0.0, t1)
    return WindowCheck(0.0, t1, 0.0, sup, 1.0, sup <= 1.0)


def continuation_check(times: Sequence[float], grad_sq: Sequence[float], C2: float, T_o: float,
                       T: float, M: float | None = None) -> WindowCheck:
    """The a posteriori predicate ``sup_{[T, T⁺]} ‖∇v‖₂² ≤ 2M + 1``.

    ``M`` defaults to the sampled ``‖∇v(·,T)‖₂²`` (nearest sample).
    """
    times, grad_sq = np.asarray(times), np.asarray(grad_sq)
    if M is None:
        M = float(grad_sq[int(np.argmin(np.abs(times - T)))])
    t_plus = continuation_time(ContinuationParams(T_o, C2=C2, M=M), T)
    sup = _sup_on(times, grad_sq, T, t_plus)
    return WindowCheck(T, t_plus, M, sup, 2.0 * M + 1.0, sup <= 2.0 * M + 1.0)


def fit_C2(times: Sequence[float], grad_sq: Sequence[float], T_o: float,
           checkpoints: Sequence[float] | None = None, iterations: int = 60) -> float:
    """Largest C₂ for which the continuation predicate holds at every checkpoint.

    The predicate only gets harder as C₂ grows, so bisection applies. The
    bracket top ``T_o·(max M + 1)²`` already gives ``T⁺ = T_o`` everywhere.
    """
    times, grad_sq = np.asarray(times), np.asarray(grad_sq)
    if checkpoints is None:
        checkpoints = [t for t in np.linspace(0.0, T_o, 5)[:-1]]

    def passes(c):
        return all(continuation_check(times, grad_sq, c, T_o, T).holds for T in checkpoints)

    m_max = max(float(grad_sq[int(np.argmin(np.abs(times - T)))]) for T in checkpoints)
    hi = T_o * (m_max + 1.0) ** 2
    if passes(hi):
        return hi
    lo = 0.0
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if passes(mid):
            lo = mid
        else:
            hi = mid
    if lo == 0.0:
        raise ValueError("no positive C2 passes the continuation predicate")
    return lo


def iterated_continuation(times: Sequence[float], grad_sq: Sequence[float], C2: float, T_o: float,
                          T_start: float = 0.0, max_windows: int = 10_000) -> list[WindowCheck]:
    """Chain windows ``T → T⁺`` from ``T_start`` until ``T_o`` or a failed predicate."""
    windows = []
    T = T_start
    for _ in range(max_windows):
        w = continuation_check(times, grad_sq, C2, T_o, T)
        windows.append(w)
        if not w.holds or w.T_plus >= T_o or w.T_plus <= T:
            break
        T = w.T_plus
    return windows


# --- flatness ----------------------------------------------------------------


@dataclass
class FlatnessFit:
    slope: float
    intercept: float
    samples: int
    applicable: bool = True


def flatness_fit(times: Sequence[float], norms: Sequence[float], t_min: float = 1e-3,
                 t_max: float = 1e-1) -> FlatnessFit:
    """Least-squares slope of ``log‖v(·,t)‖`` against ``log t`` on ``[t_min, t_max]``."""
    t = np.asarray(times, dtype=float)
    y = np.asarray(norms, dtype=float)
    sel = (t >= t_min * (1 - 1e-9)) & (t <= t_max * (1 + 1e-9))
    if np.any(sel) and not np.any(y[sel] > 0):
        return FlatnessFit(float("nan"), float("nan"), 0, False)
    sel &= y > 0
    if np.count_nonzero(sel) < 5:
        raise ValueError("flatness fit needs at least 5 positive samples in the window")
    slope, intercept = np.polyfit(np.log(t[sel]), np.log(y[sel]), 1)
    return FlatnessFit(float(slope), float(intercept), int(np.count_nonzero(sel)))
