"""Command-line front end: configuration, presets and run orchestration.

Exit codes: 0 ok, 2 configuration error, 3 blow-up, 4 verification failure,
5 internal error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import platform
import sys
import time
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .compat import (
    FieldJet,
    ForcingModel,
    JetVerificationError,
    compat_jet_u,
    compat_jet_v,
    compat_jet_v_galerkin,
    theta_jet,
)
from .estimates import (
    DiagnosticsRecord,
    NonFiniteDiagnostics,
    data_bounds,
    energy_balance_residual,
    first_window_check,
    fit_C2,
    fit_c2,
    flatness_fit,
    iterated_continuation,
    make_recorder,
    standard_corpus,
)
from .field import Grid, ModeCutoff, SpectralField, norm_l2, remove_mean
from .galerkin import (
    BlowUpError,
    DirectNS,
    Formulation,
    GalerkinState,
    IntegratorConfig,
    ProblemB,
    equivalence_check,
    integrate,
    shifted_setup,
)
from .io import load_field, save_field, write_rows_csv
from .oracle import compare_jets, taylor_coefficients_ode
from .presets import list_presets, make_preset

EXIT_OK, EXIT_CONFIG, EXIT_BLOWUP, EXIT_VERIFY, EXIT_INTERNAL = 0, 2, 3, 4, 5

log = logging.getLogger("nslift")


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


@dataclass
class RunConfig:
    """Run parameters; the JSON config file uses exactly these keys."""

    n: int = 32
    dealias_fraction: str = "2/3"
    cutoff: int = 8
    i_star: int = 7
    t_o: float = 1.0
    t_end: float = 0.5
    scheme: str = "rk4"
    dt: float = 1e-3
    tolerance: float = 1e-10
    formulation: str = "shifted"
    preset: str | None = "taylor-green"
    seed: int = 0
    initial_file: str | None = None
    forcing_file: str | None = None
    out: str = "out"
    output_every: int = 10
    i_monitor: int = 2
    zero_mean: bool = False
    verify_jets: bool = True
    fit_constants: bool = False
    flatness_fit: bool = False
    dump_fields: bool = False

    def validate(self) -> "RunConfig":
        problems = []
        try:
            frac = Fraction(self.dealias_fraction)
        except (ValueError, ZeroDivisionError):
            problems.append(f"dealias_fraction: cannot parse {self.dealias_fraction!r}")
            frac = Fraction(2, 3)
        if self.n < 4 or self.n % 2:
            problems.append(f"n: must be even and >= 4, got {self.n}")
        if not 0 < frac <= 1:
            problems.append(f"dealias_fraction: must lie in (0, 1], got {frac}")
        if self.cutoff < 1:
            problems.append(f"cutoff: must be positive, got {self.cutoff}")
        elif self.cutoff > frac * self.n / 2:
            problems.append(f"cutoff: K={self.cutoff} exceeds N*dealias_fraction/2 = {float(frac * self.n / 2):g}")
        if not 0 <= self.i_star <= 12:
            problems.append(f"i_star: must lie in [0, 12], got {self.i_star}")
        if not self.t_o > 0:
            problems.append(f"t_o: must be positive, got {self.t_o}")
        if not 0 < self.t_end <= self.t_o:
            problems.append(f"t_end: must lie in (0, t_o], got {self.t_end}")
        if self.scheme not in ("rk4", "if-rk4", "adaptive"):
            problems.append(f"scheme: unknown {self.scheme!r}")
        if not self.dt > 0:
            problems.append(f"dt: must be positive, got {self.dt}")
        if not self.tolerance > 0:
            problems.append(f"tolerance: must be positive, got {self.tolerance}")
        if self.formulation not in ("direct", "shifted", "both"):
            problems.append(f"formulation: must be direct, shifted or both, got {self.formulation!r}")
        if (self.preset is None) == (self.initial_file is None):
            problems.append("preset/initial_file: give exactly one")
        if self.preset is not None and self.preset not in [p for p, _ in list_presets()]:
            problems.append(f"preset: unknown {self.preset!r}")
        if self.output_every < 1:
            problems.append(f"output_every: must be >= 1, got {self.output_every}")
        if not 0 <= self.i_monitor <= self.i_star:
            problems.append(f"i_monitor: must lie in [0, i_star], got {self.i_monitor}")
        if problems:
            raise ConfigError(problems)
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name: f for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - set(known))
        if unknown:
            raise ConfigError([f"{k}: unknown key" for k in unknown])
        problems = []
        values = {}
        for key, value in data.items():
            default = known[key].default
            expected = type(default) if default is not None else str
            if value is None:
                values[key] = None
            elif expected is float and isinstance(value, (int, float)) and not isinstance(value, bool):
                values[key] = float(value)
            elif isinstance(value, expected) and not (expected is int and isinstance(value, bool)):
                values[key] = value
            else:
                problems.append(f"{key}: expected {expected.__name__}, got {type(value).__name__}")
        if problems:
            raise ConfigError(problems)
        if values.get("initial_file") and "preset" not in values:
            values["preset"] = None
        return cls(**values).validate()

    @property
    def grid(self) -> Grid:
        return Grid(self.n, Fraction(self.dealias_fraction))

    def integrator(self, t_end: float | None = None) -> IntegratorConfig:
        return IntegratorConfig(self.scheme, self.dt, self.t_end if t_end is None else t_end,
                                self.tolerance, self.output_every)


def parse_config(path: str | Path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as err:
        raise ConfigError([f"config: cannot read {path}: {err}"]) from err
    except json.JSONDecodeError as err:
        raise ConfigError([f"config: invalid JSON: {err}"]) from err
    if not isinstance(data, dict):
        raise ConfigError(["config: top level must be an object"])
    return RunConfig.from_dict(data)


def serialize_config(config: RunConfig) -> str:
    return json.dumps(config.to_dict(), indent=2, sort_keys=True)


# --- data loading ------------------------------------------------------------


def load_forcing(path: str | Path, grid: Grid) -> ForcingModel:
    """Forcing jet from a manifest written by :meth:`FieldJet.export`."""
    path = Path(path)
    manifest = json.loads(path.read_text())
    entries = tuple(load_field(path.parent / name) for name in manifest["files"])
    for e in entries:
        if e.grid != grid:
            raise ConfigError([f"forcing_file: grid N={e.grid.n} does not match n={grid.n}"])
    return ForcingModel(FieldJet(entries), grid)


def initial_data(config: RunConfig) -> tuple[SpectralField, ForcingModel]:
    grid = config.grid
    if config.preset is not None:
        u0, f = make_preset(config.preset, grid, config.seed)
    else:
        u0 = load_field(config.initial_file)
        if not isinstance(u0, SpectralField) or u0.grid != grid:
            raise ConfigError(["initial_file: not a vector field on the configured grid"])
        f = ForcingModel.zero(grid)
    if config.forcing_file is not None:
        f = load_forcing(config.forcing_file, grid)
    if config.zero_mean:
        u0 = remove_mean(u0)
    return u0, f


# --- manifest ----------------------------------------------------------------


class Manifest:
    """Run manifest, rewritten in place as the run progresses."""

    def __init__(self, out: Path, command: str, config: RunConfig):
        self.path = out / "manifest.json"
        self.start = time.perf_counter()
        self.data = {
            "command": command,
            "status": "started",
            "config": config.to_dict(),
            "problem": {"u0": config.preset or config.initial_file, "forcing": config.forcing_file,
                        "t_o": config.t_o, "i_star": config.i_star},
            "versions": {"nslift": __version__, "python": platform.python_version(),
                         "numpy": np.__version__, "scipy": scipy.__version__},
            "threads": int(os.environ.get("NSLIFT_THREADS", "1")),
            "outputs": {},
        }
        self.write()

    def write(self):
        self.data["wall_time_s"] = time.perf_counter() - self.start
        self.path.write_text(json.dumps(self.data, indent=2, default=_json_default))

    def finish(self, status: str, **extra):
        self.data["status"] = status
        self.data.update(extra)
        self.write()


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if dataclasses.is_dataclass(obj):
        return dataclasses.asdict(obj)
    if hasattr(obj, "as_dict"):
        return obj.as_dict()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _write_json(path: Path, data) -> Path:
    path.write_text(json.dumps(data, indent=2, default=_json_default))
    return path


# --- commands ----------------------------------------------------------------


def verify_jets(config: RunConfig, u0: SpectralField, f: ForcingModel) -> dict:
    """Vanishing of the shifted jets and oracle agreement through order i*+2.

    Raises :class:`JetVerificationError` when a jet entry fails to vanish.
    """
    cutoff = ModeCutoff(config.cutoff)
    order = config.i_star + 2
    beta = shifted_setup(u0, f, config.i_star, config.zero_mean)
    theta = theta_jet(beta, f, order - 1)
    scale = norm_l2(u0)
    v_full = compat_jet_v(beta, theta, order, f=f)
    v_gal = compat_jet_v_galerkin(beta, theta, order, cutoff, f=f)
    series = taylor_coefficients_ode(SpectralField.zeros(u0.grid), ProblemB(beta, f, cutoff), order)
    oracle_cmp = compare_jets(v_gal.entries, series.derivatives(), scale, "galerkin-vs-oracle")
    u_jet = compat_jet_u(u0, f, order, config.zero_mean)
    return {
        "i_star": config.i_star,
        "cutoff": config.cutoff,
        "data_scale": scale,
        "u_jet_norms": u_jet.norms(),
        "v_jet_norms": v_full.norms(),
        "v_galerkin_jet_norms": v_gal.norms(),
        "vanishing_through": config.i_star + 1,
        "max_vanishing_ratio": max(v_gal.norms()[: config.i_star + 2] + v_full.norms()[: config.i_star + 2])
        / scale if scale > 0 else max(v_gal.norms()[: config.i_star + 2]),
        "oracle": oracle_cmp.as_dict(),
        "boundary_compatibility": "not applicable (periodic domain)",
    }


def _run_formulation(config: RunConfig, formulation: str, u0, f, out: Path, manifest: Manifest,
                     beta=None):
    cutoff = ModeCutoff(config.cutoff)
    if formulation == "direct":
        model = DirectNS(f, cutoff)
        initial = GalerkinState(0.0, cutoff.apply(u0), Formulation.DIRECT)
    else:
        model = ProblemB(beta, f, cutoff)
        initial = GalerkinState(0.0, SpectralField.zeros(u0.grid), Formulation.SHIFTED)
    traj = integrate(initial, config.integrator(), model, make_recorder(model, config.i_monitor))
    rows = [r.as_row() for r in traj.diagnostics]
    name = f"diagnostics_{formulation}.csv"
    write_rows_csv(out / name, DiagnosticsRecord.columns(config.i_monitor), rows)
    manifest.data["outputs"][name] = "per-output-time diagnostics"
    if config.dump_fields:
        fields_dir = out / f"fields_{formulation}"
        fields_dir.mkdir(exist_ok=True)
        for j, (t, x) in enumerate(traj):
            save_field(x, fields_dir / f"state_{j:05d}.spf")
    return model, traj


def _fit_constants(config: RunConfig, u0, f, traj_v, model, beta) -> dict:
    grid = config.grid
    sup_v = float(np.max(traj_v.norms())) if len(traj_v) else 0.0
    bounds = data_bounds(model, config.t_o, v_l2=max(sup_v, 1e-300))
    c2fit = fit_c2(standard_corpus(grid), bounds)
    times, gsq = np.asarray(traj_v.times), traj_v.grad_norms_sq()
    first = first_window_check(times, gsq, c2fit.c2, config.t_o)
    shear_u0, shear_f = make_preset("shear", grid)
    shear_beta = shifted_setup(shear_u0, shear_f, config.i_star)
    cutoff = ModeCutoff(config.cutoff)
    shear_traj = integrate(GalerkinState(0.0, SpectralField.zeros(grid), Formulation.SHIFTED),
                           config.integrator(config.t_o), ProblemB(shear_beta, shear_f, cutoff))
    C2 = fit_C2(shear_traj.times, shear_traj.grad_norms_sq(), config.t_o)
    windows = iterated_continuation(times, gsq, C2, min(config.t_o, traj_v.times[-1]))
    return {
        "label": "empirical constants (fitted, not derived)",
        "c2_fit": c2fit.as_dict(),
        "implied_C1": c2fit.implied_C1(config.t_o),
        "first_window": first,
        "C2": C2,
        "continuation": windows,
    }


def _energy_summary(traj, model) -> dict:
    # the final output lands on t_end and may break the uniform spacing
    times, states = list(traj.times), list(traj.states)
    if len(times) > 2 and not np.isclose(times[-1] - times[-2], times[1] - times[0], rtol=1e-9, atol=0):
        times, states = times[:-1], states[:-1]
    if len(times) < 3:
        return {"skipped": "fewer than three uniformly spaced outputs"}
    balance = energy_balance_residual((times, states), model)
    return {"max_abs_residual": balance.max_abs_residual, "violations": balance.violations}


def cmd_run(config: RunConfig, out: Path, manifest: Manifest) -> int:
    u0, f = initial_data(config)
    if config.verify_jets:
        try:
            report = verify_jets(config, u0, f)
            _write_json(out / "jets.json", report)
            manifest.data["outputs"]["jets.json"] = "jet vanishing and oracle report"
        except JetVerificationError as err:
            manifest.finish("verification-failure", error=str(err), failing_index=err.index)
            return EXIT_VERIFY
    beta = shifted_setup(u0, f, config.i_star, config.zero_mean)
    formulations = ["direct", "shifted"] if config.formulation == "both" else [config.formulation]
    results = {}
    for name in formulations:
        model, traj = _run_formulation(config, name, u0, f, out, manifest, beta)
        results[name] = (model, traj)
        manifest.data.setdefault("energy_balance", {})[name] = _energy_summary(traj, model)
        manifest.write()
    if config.formulation == "both":
        rep = equivalence_check(u0, f, config.integrator(), ModeCutoff(config.cutoff), config.i_star)
        _write_json(out / "equivalence.json", rep.as_dict())
        manifest.data["outputs"]["equivalence.json"] = "direct vs shifted comparison"
        manifest.data["equivalence_max_relative_gap"] = rep.max_relative_gap
    if config.fit_constants and "shifted" in results:
        model, traj = results["shifted"]
        manifest.data["windows"] = _fit_constants(config, u0, f, traj, model, beta)
    if config.flatness_fit:
        manifest.data["flatness"] = flatness_report(config, u0, f)
    manifest.finish("completed")
    return EXIT_OK


def flatness_report(config: RunConfig, u0, f, t_max: float = 1e-2, dt: float = 2e-5) -> dict:
    """Log-log slopes of ‖v‖ (problem B) and ‖u − u₀‖ (direct) on ``[1e−3, t_max]``."""
    cutoff = ModeCutoff(config.cutoff)
    beta = shifted_setup(u0, f, config.i_star, config.zero_mean)
    every = max(int(round(5e-4 / dt)), 1)
    integ = IntegratorConfig("rk4", dt, t_max, config.tolerance, every)
    v = integrate(GalerkinState(0.0, SpectralField.zeros(u0.grid), Formulation.SHIFTED), integ,
                  ProblemB(beta, f, cutoff))
    u_start = cutoff.apply(u0)
    u = integrate(GalerkinState(0.0, u_start, Formulation.DIRECT), integ, DirectNS(f, cutoff))
    fit_v = flatness_fit(v.times, v.norms(), 1e-3, t_max)
    fit_u = flatness_fit(u.times, [norm_l2(x - u_start) for x in u.states], 1e-3, t_max)
    return {"i_star": config.i_star, "theoretical_slope": config.i_star + 2,
            "shifted_slope": fit_v.slope, "direct_increment_slope": fit_u.slope,
            "passes": bool(fit_v.slope >= config.i_star + 1.5)}


def cmd_verify_jets(config: RunConfig, out: Path, manifest: Manifest) -> int:
    u0, f = initial_data(config)
    try:
        report = verify_jets(config, u0, f)
    except JetVerificationError as err:
        manifest.finish("verification-failure", error=str(err), failing_index=err.index)
        return EXIT_VERIFY
    _write_json(out / "jets.json", report)
    manifest.data["outputs"]["jets.json"] = "jet vanishing and oracle report"
    ok = report["oracle"]["max_relative_gap"] <= 1e-9
    manifest.finish("completed" if ok else "verification-failure",
                    max_vanishing_ratio=report["max_vanishing_ratio"])
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_equivalence(config: RunConfig, out: Path, manifest: Manifest, max_gap: float) -> int:
    u0, f = initial_data(config)
    rep = equivalence_check(u0, f, config.integrator(), ModeCutoff(config.cutoff), config.i_star)
    _write_json(out / "equivalence.json", rep.as_dict())
    ok = rep.max_relative_gap <= max_gap
    manifest.finish("completed" if ok else "verification-failure",
                    equivalence_max_relative_gap=rep.max_relative_gap, threshold=max_gap)
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_flatness(config: RunConfig, out: Path, manifest: Manifest) -> int:
    u0, f = initial_data(config)
    report = flatness_report(config, u0, f)
    _write_json(out / "flatness.json", report)
    manifest.finish("completed" if report["passes"] else "verification-failure", flatness=report)
    return EXIT_OK if report["passes"] else EXIT_VERIFY


def cmd_fit_constants(config: RunConfig, out: Path, manifest: Manifest) -> int:
    u0, f = initial_data(config)
    beta = shifted_setup(u0, f, config.i_star, config.zero_mean)
    model = ProblemB(beta, f, ModeCutoff(config.cutoff))
    traj = integrate(GalerkinState(0.0, SpectralField.zeros(u0.grid), Formulation.SHIFTED),
                     config.integrator(config.t_o), model)
    report = _fit_constants(config, u0, f, traj, model, beta)
    _write_json(out / "constants.json", report)
    ok = report["first_window"].holds and all(w.holds for w in report["continuation"])
    manifest.finish("completed" if ok else "verification-failure")
    return EXIT_OK if ok else EXIT_VERIFY


# --- argument parsing --------------------------------------------------------

_FLAG_KEYS = {"n": int, "cutoff": int, "i_star": int, "t_end": float, "dt": float,
              "preset": str, "out": str, "seed": int, "scheme": str, "formulation": str,
              "t_o": float}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nslift", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("run", "integrate and write diagnostics"),
        ("verify-jets", "check vanishing shifted jets against the Taylor oracle"),
        ("equivalence", "compare direct and shifted formulations"),
        ("flatness", "fit the small-t power law of the shifted solution"),
        ("fit-constants", "fit c2 and C2 and check the continuation windows"),
    ]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON config file")
        for key, typ in _FLAG_KEYS.items():
            p.add_argument("--" + key.replace("_", "-"), dest=key, type=typ, default=None)
        if name == "equivalence":
            p.add_argument("--max-gap", type=float, default=1e-7)
    sub.add_parser("presets", help="list scenario presets")
    return parser


def config_from_args(args) -> RunConfig:
    data = json.loads(Path(args.config).read_text()) if args.config else {}
    if not isinstance(data, dict):
        raise ConfigError(["config: top level must be an object"])
    for key in _FLAG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            data[key] = value
    return RunConfig.from_dict(data)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "presets":
        for name, desc in list_presets():
            print(f"{name:15s} {desc}")
        return EXIT_OK
    try:
        config = config_from_args(args)
    except ConfigError as err:
        for problem in err.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, json.JSONDecodeError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(out, args.command, config)
    try:
        if args.command == "run":
            return cmd_run(config, out, manifest)
        if args.command == "verify-jets":
            return cmd_verify_jets(config, out, manifest)
        if args.command == "equivalence":
            return cmd_equivalence(config, out, manifest, args.max_gap)
        if args.command == "flatness":
            return cmd_flatness(config, out, manifest)
        return cmd_fit_constants(config, out, manifest)
    except ConfigError as err:
        manifest.finish("config-error", error=str(err))
        for problem in err.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return EXIT_CONFIG
    except BlowUpError as err:
        manifest.finish("blow-up", error=str(err), t=err.t, last_norms=err.last_norms)
        print(f"blow-up: {err}", file=sys.stderr)
        return EXIT_BLOWUP
    except NonFiniteDiagnostics as err:
        # a finite state whose norms overflow
        manifest.finish("blow-up", error=str(err))
        print(f"blow-up: {err}", file=sys.stderr)
        return EXIT_BLOWUP
    except Exception as err:  # noqa: BLE001 - reported through the exit code
        log.exception("internal error")
        manifest.finish("internal-error", error=repr(err))
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
