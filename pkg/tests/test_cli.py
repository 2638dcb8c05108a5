"""Command-line driver: presets, outputs, exit codes, configuration precedence, reproducibility."""

import csv
import io
import json
import math

import numpy as np
import pytest

from envdist import cli
from envdist.cli import PRESETS, RunConfig, config_from_args, landmarks, main, parse_snr, preset_model
from envdist.errors import ConfigError, QuadratureError


def _rows(text):
    return list(csv.DictReader(io.StringIO(text)))


@pytest.fixture(autouse=True)
def _no_thread_env(monkeypatch):
    monkeypatch.delenv("ENVDIST_THREADS", raising=False)


class TestPresets:
    def test_example1_pdf_row(self, capsys):
        assert main(["pdf", "--preset", "example1", "--A", "1", "--grid", "256"]) == 0
        rows = _rows(capsys.readouterr().out)
        row = next(r for r in rows if float(r["b"]) == math.sqrt(2))
        assert float(row["pdf"]) == pytest.approx(0.450158, abs=1e-6)

    def test_cdf_row(self, capsys):
        assert main(["cdf", "--preset", "example2", "--grid", "64"]) == 0
        rows = _rows(capsys.readouterr().out)
        # accumulated cell by cell, not taken from a closed form
        assert float(rows[-1]["cdf"]) == pytest.approx(1.0, abs=1e-8)

    @pytest.mark.parametrize("name", PRESETS)
    def test_json_round_trip(self, name):
        cfg = RunConfig("pdf", preset=name)
        again = RunConfig.from_json(cfg.to_json())
        assert again == cfg
        assert again.ensemble() == preset_model(name)

    def test_model_round_trip(self):
        cfg = RunConfig("pdf", model=preset_model("example6-exp").to_dict())
        assert RunConfig.from_json(cfg.to_json()).ensemble() == preset_model("example6-exp")

    def test_unknown_preset(self):
        with pytest.raises(ConfigError):
            preset_model("example9")

    def test_landmarks(self):
        assert landmarks(preset_model("example1")) == [math.sqrt(2), 1.0]


class TestCommands:
    def test_compare_example3(self, capsys):
        assert main(["compare", "--preset", "example3", "--samples", "1000000", "--seed", "7"]) == 0
        report = {r["metric"]: r["value"] for r in _rows(capsys.readouterr().out)}
        assert report["passed"] == "true"
        assert float(report["ks_distance"]) < float(report["ks_threshold"])

    def test_ber_monotone(self, capsys):
        assert main(["ber", "--preset", "example1", "--snr", "0:2:30", "--bits", "10000"]) == 0
        col = np.array([float(r["ber_exact"]) for r in _rows(capsys.readouterr().out)])
        assert col.size == 16 and np.all(np.diff(col) < 0)

    def test_ber_single_component(self, capsys, tmp_path):
        path = tmp_path / "one.json"
        path.write_text(json.dumps({"n": 1, "amplitude": {"kind": "CONSTANT", "values": [1.0]},
                                    "phase": {"kind": "IID_UNIFORM"}}))
        assert main(["ber", "--model", str(path), "--snr", "0:5:10"]) == 0
        first = _rows(capsys.readouterr().out)[0]
        assert float(first["ber_exact"]) == pytest.approx(0.078649603525142565, rel=1e-9)

    def test_simulate_files(self, tmp_path):
        out = tmp_path / "run"
        assert main(["simulate", "--preset", "example1", "--samples", "5000", "--grid", "32", "--out", str(out)]) == 0
        assert (tmp_path / "run.f64").stat().st_size == 40000
        assert (tmp_path / "run.csv").read_text().startswith("b,pdf,cdf,flags")

    def test_figures_reproducible(self, tmp_path):
        args = ["figures", "--grid", "32", "--samples", "20000", "--bits", "10000", "--snr", "0:10:30"]
        assert main([*args, "--out", str(tmp_path / "a")]) == 0
        assert main([*args, "--out", str(tmp_path / "b")]) == 0
        for fig in ("fig1", "fig2", "fig3", "fig4"):
            assert (tmp_path / "a" / f"{fig}.csv").read_bytes() == (tmp_path / "b" / f"{fig}.csv").read_bytes()
        curves = {r["curve"] for r in _rows((tmp_path / "a" / "fig1.csv").read_text())}
        assert {"example1", "example1/mc", "example2", "general-A2=1.5"} <= curves
        assert len(_rows((tmp_path / "a" / "fig4.csv").read_text())) == 5 * 4

    def test_pdf_byte_identical(self, capsys):
        main(["pdf", "--preset", "example3", "--grid", "64"])
        first = capsys.readouterr().out
        main(["pdf", "--preset", "example3", "--grid", "64"])
        assert capsys.readouterr().out == first

    def test_eddhapt_method(self, capsys):
        assert main(["cdf", "--preset", "example1", "--method", "eddhapt", "--grid", "64"]) == 0
        rows = _rows(capsys.readouterr().out)
        row = min(rows, key=lambda r: abs(float(r["b"]) - 1.0))
        b = float(row["b"])
        assert float(row["cdf"]) == pytest.approx(2 / math.pi * math.atan(b / math.sqrt(4 - b * b)), abs=1e-9)


class TestExitCodes:
    def test_bad_preset(self, capsys):
        assert main(["pdf", "--preset", "nope"]) == 1

    def test_missing_model(self, capsys):
        assert main(["pdf"]) == 1
        assert "configuration error" in capsys.readouterr().err

    def test_bad_snr(self, capsys):
        assert main(["ber", "--preset", "example1", "--snr", "0:0:10"]) == 1

    def test_unreadable_model(self, tmp_path, capsys):
        assert main(["pdf", "--model", str(tmp_path / "missing.json")]) == 1

    def test_numeric_failure(self, monkeypatch, capsys):
        def boom(model, cfg):
            raise QuadratureError("did not converge")
        monkeypatch.setattr(cli, "_table", boom)
        assert main(["pdf", "--preset", "example3"]) == 2
        assert "numerical failure" in capsys.readouterr().err

    def test_ks_failure_is_numeric(self, monkeypatch, capsys):
        monkeypatch.setattr(cli, "_compare", lambda model, cfg: ("metric,value\r\n", False))
        assert main(["compare", "--preset", "example1"]) == 2


class TestConfiguration:
    def test_flags_override_file(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(RunConfig("pdf", preset="example1", grid=64, seed=3).to_json())
        cfg = config_from_args(["pdf", "--config", str(path), "--grid", "128"])
        assert (cfg.grid, cfg.seed, cfg.preset) == (128, 3, "example1")
        cfg = config_from_args(["pdf", "--config", str(path), "--preset", "example3"])
        assert cfg.preset == "example3"

    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            RunConfig.from_dict({"command": "pdf", "preset": "example1", "colour": "red"})

    def test_threads_env(self, monkeypatch):
        monkeypatch.setenv("ENVDIST_THREADS", "3")
        assert config_from_args(["pdf", "--preset", "example1"]).threads == 3
        assert config_from_args(["pdf", "--preset", "example1", "--threads", "2"]).threads == 2
        monkeypatch.setenv("ENVDIST_THREADS", "many")
        with pytest.raises(ConfigError):
            config_from_args(["pdf", "--preset", "example1"])

    def test_parse_snr(self):
        np.testing.assert_allclose(parse_snr("0:2:30"), np.arange(0, 31, 2))
        np.testing.assert_allclose(parse_snr("-5:2.5:5"), [-5, -2.5, 0, 2.5, 5])
        for bad in ("1:2", "a:b:c", "10:1:0"):
            with pytest.raises(ConfigError):
                parse_snr(bad)

    @pytest.mark.parametrize("kw", [dict(grid=8), dict(seed=-1), dict(bits=10), dict(method="x"), dict(A=0.0),
                                    dict(figures=("fig9",)), dict(preset="example1", model={})])
    def test_validation(self, kw):
        base = dict(command="pdf", preset="example1")
        base.update(kw)
        with pytest.raises(ConfigError):
            RunConfig(**base)
