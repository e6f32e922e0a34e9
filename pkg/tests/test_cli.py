"""Tests for configuration handling and the command-line entry point."""

import json

import numpy as np
import pytest

from nslift.cli import ConfigError, RunConfig, main, parse_config, serialize_config
from nslift.compat import FieldJet
from nslift.field import Grid
from nslift.io import read_rows_csv, save_field
from nslift.presets import list_presets, make_preset, random_smooth_field

SMALL = ["--n", "16", "--cutoff", "4", "--i-star", "3", "--t-end", "0.02", "--dt", "0.002"]


def write_config(path, **data):
    path.write_text(json.dumps(data))
    return path


class TestConfig:
    def test_defaults(self, tmp_path):
        cfg = parse_config(write_config(tmp_path / "c.json", preset="shear"))
        assert (cfg.n, cfg.cutoff, cfg.i_star, cfg.scheme, cfg.dt) == (32, 8, 7, "rk4", 1e-3)
        assert cfg.preset == "shear"

    def test_cutoff_above_resolved_range(self, tmp_path):
        with pytest.raises(ConfigError, match="cutoff"):
            parse_config(write_config(tmp_path / "c.json", n=32, cutoff=11))
        assert parse_config(write_config(tmp_path / "c.json", n=32, cutoff=10)).cutoff == 10

    def test_unknown_key(self, tmp_path):
        with pytest.raises(ConfigError) as err:
            parse_config(write_config(tmp_path / "c.json", grid_size=32))
        assert err.value.problems == ["grid_size: unknown key"]

    def test_problems_are_itemized(self):
        with pytest.raises(ConfigError) as err:
            RunConfig.from_dict({"i_star": 13, "t_end": 2.0, "scheme": "euler"})
        keys = {p.split(":")[0] for p in err.value.problems}
        assert keys == {"i_star", "t_end", "scheme"}

    def test_type_errors(self):
        with pytest.raises(ConfigError, match="n: expected int"):
            RunConfig.from_dict({"n": "32"})
        with pytest.raises(ConfigError):
            RunConfig.from_dict({"zero_mean": 1})

    def test_round_trip(self, tmp_path):
        cfg = RunConfig.from_dict({"preset": "random-smooth", "seed": 4, "dt": 5e-4, "fit_constants": True})
        path = tmp_path / "c.json"
        path.write_text(serialize_config(cfg))
        assert parse_config(path) == cfg

    def test_initial_file_replaces_preset(self):
        cfg = RunConfig.from_dict({"initial_file": "u.spf"})
        assert cfg.preset is None
        with pytest.raises(ConfigError, match="exactly one"):
            RunConfig.from_dict({"initial_file": "u.spf", "preset": "shear"})

    def test_unreadable_config(self, tmp_path):
        with pytest.raises(ConfigError):
            parse_config(tmp_path / "missing.json")
        (tmp_path / "bad.json").write_text("{")
        with pytest.raises(ConfigError):
            parse_config(tmp_path / "bad.json")


class TestPresets:
    def test_catalog(self):
        names = [n for n, _ in list_presets()]
        assert names == ["zero", "shear", "taylor-green", "random-smooth", "forced-shear"]
        assert list_presets() == list_presets()

    def test_seeded_determinism(self, grid16):
        a, b = random_smooth_field(grid16, 1), random_smooth_field(grid16, 1)
        np.testing.assert_array_equal(a.coeffs, b.coeffs)
        assert not np.array_equal(a.coeffs, random_smooth_field(grid16, 2).coeffs)

    def test_unknown(self, grid8):
        with pytest.raises(KeyError):
            make_preset("vortex", grid8)

    def test_presets_command(self, capsys):
        assert main(["presets"]) == 0
        assert "taylor-green" in capsys.readouterr().out


class TestCommands:
    def test_verify_jets_on_shear(self, tmp_path):
        out = tmp_path / "out"
        assert main(["verify-jets", "--preset", "shear", "--out", str(out)] + SMALL) == 0
        report = json.loads((out / "jets.json").read_text())
        # the exact solution e^{-t}u0 leaves v flat through order i*+1
        assert report["max_vanishing_ratio"] == 0.0
        assert report["v_jet_norms"][:5] == [0.0] * 5
        assert report["v_jet_norms"][5] > 0.0
        assert json.loads((out / "manifest.json").read_text())["status"] == "completed"

    def test_zero_preset_run(self, tmp_path):
        out = tmp_path / "out"
        assert main(["run", "--preset", "zero", "--out", str(out)] + SMALL) == 0
        cols, data = read_rows_csv(out / "diagnostics_shifted.csv")
        assert cols[0] == "t" and data.shape[0] == 2
        assert np.all(data[:, 1:] == 0.0)

    def test_both_formulations(self, tmp_path):
        out = tmp_path / "out"
        cfg = write_config(tmp_path / "c.json", output_every=2)
        assert main(["run", "--config", str(cfg), "--preset", "taylor-green", "--formulation", "both",
                     "--out", str(out)] + SMALL) == 0
        rep = json.loads((out / "equivalence.json").read_text())
        assert rep["max_relative_gap"] <= 1e-10
        assert (out / "diagnostics_direct.csv").exists() and (out / "diagnostics_shifted.csv").exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["problem"] == {"u0": "taylor-green", "forcing": None, "t_o": 1.0, "i_star": 3}
        assert manifest["energy_balance"]["shifted"]["violations"] == []

    def test_config_error_exit(self, tmp_path, capsys):
        code = main(["run", "--n", "16", "--cutoff", "6", "--out", str(tmp_path / "o")])
        assert code == 2
        assert "cutoff" in capsys.readouterr().err

    def test_manifest_written_before_failure(self, tmp_path):
        out = tmp_path / "out"
        code = main(["run", "--config", str(write_config(tmp_path / "c.json", initial_file=str(tmp_path / "nope.spf"))),
                     "--out", str(out)] + SMALL)
        assert code == 5
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["status"] == "internal-error"
        assert manifest["config"]["n"] == 16

    def test_blow_up_exit(self, tmp_path):
        out = tmp_path / "out"
        # explicit RK4 at dt·|k|² = 4 amplifies the k² = 2 modes fivefold per step
        args = ["run", "--preset", "taylor-green", "--n", "8", "--cutoff", "2", "--i-star", "2",
                "--t-end", "2000", "--t-o", "2000", "--dt", "2", "--out", str(out)]
        cfg = write_config(tmp_path / "c.json", verify_jets=False, output_every=1)
        with pytest.warns(RuntimeWarning):
            assert main(args + ["--config", str(cfg), "--formulation", "direct"]) == 3
        assert json.loads((out / "manifest.json").read_text())["status"] == "blow-up"

    def test_initial_file(self, tmp_path, grid16):
        u0, _ = make_preset("random-smooth", grid16, 3)
        path = save_field(u0, tmp_path / "u0.spf")
        cfg = write_config(tmp_path / "c.json", initial_file=str(path))
        assert main(["verify-jets", "--config", str(cfg), "--out", str(tmp_path / "o")] + SMALL) == 0

    def test_forcing_file(self, tmp_path, grid16):
        _, f = make_preset("forced-shear", grid16)
        manifest = FieldJet(f.jet.entries).export(tmp_path / "forcing", "f")
        cfg = write_config(tmp_path / "c.json", preset="shear", forcing_file=str(manifest))
        assert main(["verify-jets", "--config", str(cfg), "--out", str(tmp_path / "o")] + SMALL) == 0
        report = json.loads((tmp_path / "o" / "jets.json").read_text())
        assert report["v_jet_norms"][-1] > 0.0

    def test_deterministic_csv(self, tmp_path):
        outputs = []
        for name in ("a", "b"):
            out = tmp_path / name
            assert main(["run", "--preset", "random-smooth", "--seed", "2", "--out", str(out)] + SMALL) == 0
            outputs.append((out / "diagnostics_shifted.csv").read_bytes())
        assert outputs[0] == outputs[1]

    def test_fit_constants(self, tmp_path):
        out = tmp_path / "out"
        args = ["fit-constants", "--preset", "taylor-green", "--out", str(out), "--t-o", "0.1",
                "--n", "16", "--cutoff", "4", "--i-star", "3", "--t-end", "0.1", "--dt", "0.005"]
        assert main(args) == 0
        assert (out / "manifest.json").exists()


def test_grid_property():
    assert RunConfig().grid == Grid(32)
