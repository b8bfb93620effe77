import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
import yaml

from prdsp import io as prio
from prdsp.cli import main as cli_main
from prdsp.config import (
    ExperimentConfig,
    config_from_dict,
    load_config,
    save_config,
)
from prdsp.fieldcore import ComplexWaveform, IntensityTrace

from helpers import loopback_config


class TestConfig:
    def test_defaults_round_trip(self, tmp_path):
        cfg = ExperimentConfig()
        path = tmp_path / "cfg.yaml"
        save_config(cfg, path)
        loaded = load_config(path)
        assert loaded.to_dict() == cfg.to_dict()
        assert loaded.config_hash() == cfg.config_hash()

    def test_yaml_supports_comments(self, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text("# a comment\norder: 32\nframe:\n  pilot_ratio: 0.25\n")
        cfg = load_config(path)
        assert cfg.order == 32
        assert cfg.frame.pilot_ratio == 0.25

    def test_unknown_field_names_path(self):
        with pytest.raises(ValueError, match=r"config\.channel.*osnr_dbx"):
            config_from_dict({"channel": {"osnr_dbx": 3}})

    def test_invalid_value_names_path(self):
        with pytest.raises(ValueError, match="config.frame"):
            config_from_dict({"frame": {"pilot_ratio": 0.7}})

    def test_hash_changes_with_content(self):
        a = ExperimentConfig()
        b = ExperimentConfig(order=32)
        assert a.config_hash() != b.config_hash()

    def test_identity_defaults(self):
        cfg = ExperimentConfig()
        model = cfg.channel.to_channel_model(cfg.frame)
        assert model.tx_response_i.is_identity()
        assert model.iq.is_identity()
        assert model.nl.is_identity()
        assert model.osnr_db is None and model.enob is None


class TestBinaryFormats:
    def test_waveform_round_trip(self, tmp_path, rng):
        w = ComplexWaveform(rng.standard_normal(777) + 1j * rng.standard_normal(777),
                            123.5e9)
        path = tmp_path / "w.bin"
        prio.write_waveform(path, w)
        back = prio.read_waveform(path)
        assert back.sample_rate_hz == w.sample_rate_hz
        np.testing.assert_array_equal(back.samples, w.samples)

    def test_trace_round_trip(self, tmp_path, rng):
        t = IntensityTrace(rng.standard_normal(500) ** 2, 100e9, "dispersed")
        path = tmp_path / "t.bin"
        prio.write_trace(path, t)
        back = prio.read_trace(path)
        assert back.branch_id == "dispersed"
        np.testing.assert_array_equal(back.samples, t.samples)

    def test_header_is_64_bytes(self, tmp_path, rng):
        t = IntensityTrace(np.ones(10), 1e9)
        path = tmp_path / "t.bin"
        prio.write_trace(path, t)
        raw = path.read_bytes()
        assert len(raw) == 64 + 10 * 8
        assert raw[:8] == b"PRDSPWAV"

    def test_kind_mismatch_rejected(self, tmp_path, rng):
        t = IntensityTrace(np.ones(10), 1e9)
        prio.write_trace(tmp_path / "t.bin", t)
        with pytest.raises(ValueError):
            prio.read_waveform(tmp_path / "t.bin")


class TestEstimateSerialization:
    def test_round_trip(self, tmp_path):
        from prdsp import pipeline
        from prdsp.trainer import run_training

        cfg = loopback_config(training_len=512, payload_len=512)
        cfg.training.compensation = "full"
        layout, _, traces = pipeline.simulate(cfg, 1)
        est = run_training(traces, layout, cfg.training.to_training_config())
        path = tmp_path / "est.json"
        prio.save_channel_estimate(path, est)
        back = prio.load_channel_estimate(path)
        assert back.cd_b1.dispersion_ps_per_nm == est.cd_b1.dispersion_ps_per_nm
        np.testing.assert_array_equal(back.tx_response.taps, est.tx_response.taps)
        assert back.iq.rho == est.iq.rho
        # reverse parameters are the negated estimates
        d = json.loads(path.read_text())
        assert d["reverse_iq"]["rho"] == -d["iq"]["rho"]
        assert d["reverse_iq"]["tau_s"] == -d["iq"]["tau_s"]


def _write_cfg(tmp_path, cfg) -> Path:
    path = tmp_path / "config.yaml"
    save_config(cfg, path)
    return path


class TestCliPipeline:
    @pytest.fixture
    def small_cfg(self, tmp_path):
        cfg = loopback_config(order=16, training_len=512, payload_len=512)
        cfg.training.compensation = "full"
        cfg.pr.track_ber = True
        cfg.seeds = [1]
        cfg.output_dir = str(tmp_path / "out")
        return cfg

    def test_simulate_train_reconstruct_report(self, tmp_path, small_cfg):
        cfg_path = _write_cfg(tmp_path, small_cfg)
        out = small_cfg.output_dir
        assert cli_main(["simulate", "--config", str(cfg_path)]) == 0
        manifest = prio.read_manifest(out)
        assert manifest["stage"] == "simulate"
        assert manifest["samples_per_symbol"] == 2
        for name, digest in manifest["files"].items():
            assert prio.file_sha256(Path(out) / name) == digest

        assert cli_main(["train", "--config", str(cfg_path)]) == 0
        assert (Path(out) / "estimate_seed1.json").exists()
        report = (Path(out) / "training_report_seed1.txt").read_text()
        assert "dispersion branch 1" in report

        assert cli_main(["reconstruct", "--config", str(cfg_path)]) == 0
        header, rows = prio.read_csv(Path(out) / "results.csv")
        assert rows and float(rows[0][1]) == 0.0  # noiseless loopback BER

        header, diag_rows = prio.read_csv(Path(out) / "iterations_seed1.csv")
        n_iters = int(rows[0][3])
        assert len(diag_rows) == n_iters

        assert cli_main(["report", "--config", str(cfg_path)]) == 0
        assert (Path(out) / "iterations_seed1.png").exists()
        assert (Path(out) / "constellation_seed1.png").exists()

    def test_manifest_hash_mismatch_refused(self, tmp_path, small_cfg):
        cfg_path = _write_cfg(tmp_path, small_cfg)
        assert cli_main(["simulate", "--config", str(cfg_path)]) == 0
        small_cfg.order = 32
        other_path = tmp_path / "other.yaml"
        save_config(small_cfg, other_path)
        with pytest.raises(ValueError, match="config hash mismatch"):
            cli_main(["train", "--config", str(other_path),
                      "--input", small_cfg.output_dir])

    def test_simulate_byte_identical_across_runs(self, tmp_path, small_cfg):
        cfg_path = _write_cfg(tmp_path, small_cfg)
        out1 = tmp_path / "a"
        out2 = tmp_path / "b"
        cli_main(["simulate", "--config", str(cfg_path), "--output", str(out1)])
        cli_main(["simulate", "--config", str(cfg_path), "--output", str(out2)])
        for name in ("tx_seed1.bin", "trace_b1_seed1.bin", "trace_b2_seed1.bin"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_missing_frame_field_errors_with_path(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("frame:\n  training_len: -5\n")
        with pytest.raises(ValueError, match="config.frame"):
            load_config(path)


class TestCliSweep:
    def test_sweep_and_resume(self, tmp_path):
        cfg = loopback_config(order=4, training_len=512, payload_len=512)
        cfg.training.compensation = "none"
        cfg.seeds = [1, 2]
        cfg.output_dir = str(tmp_path / "sweep_out")
        from prdsp.config import SweepConfig

        cfg.sweep = SweepConfig(axis="osnr", points=[25.0, 35.0])
        cfg_path = _write_cfg(tmp_path, cfg)
        assert cli_main(["sweep", "--config", str(cfg_path)]) == 0
        header, rows = prio.read_csv(Path(cfg.output_dir) / "sweep.csv")
        assert len(rows) == 4  # 2 points x 2 seeds

        # resume: drop one row, rerun only the missing point
        trimmed = rows[:-1]
        prio.write_csv(Path(cfg.output_dir) / "sweep.csv",
                       header, trimmed)
        assert cli_main(["sweep", "--config", str(cfg_path), "--resume"]) == 0
        header, rows2 = prio.read_csv(Path(cfg.output_dir) / "sweep.csv")
        assert len(rows2) == 4
        assert sorted(r[1] + "|" + r[2] for r in rows2) == sorted(
            r[1] + "|" + r[2] for r in rows
        )

    def test_sweep_without_section_fails(self, tmp_path):
        cfg = loopback_config(order=4, training_len=512, payload_len=512)
        cfg.output_dir = str(tmp_path / "o")
        cfg_path = _write_cfg(tmp_path, cfg)
        assert cli_main(["sweep", "--config", str(cfg_path)]) == 2

    def test_pilot_sweep_emits_net_rate_columns(self, tmp_path):
        cfg = loopback_config(order=4, training_len=512, payload_len=512)
        cfg.training.compensation = "none"
        cfg.seeds = [1]
        cfg.output_dir = str(tmp_path / "ps")
        from prdsp.config import SweepConfig

        cfg.sweep = SweepConfig(axis="pilot_ratio", points=[0.5, 0.25])
        cfg_path = _write_cfg(tmp_path, cfg)
        assert cli_main(["sweep", "--config", str(cfg_path)]) == 0
        header, rows = prio.read_csv(Path(cfg.output_dir) / "sweep.csv")
        for col in ("net_rate_bps", "code_rate", "iterations_used"):
            assert col in header
        assert cli_main(["report", "--config", str(cfg_path),
                         "--input", cfg.output_dir,
                         "--output", cfg.output_dir]) == 0
        assert (Path(cfg.output_dir) / "net_rate.png").exists()


def test_console_entry_point_runs():
    proc = subprocess.run(
        [sys.executable, "-m", "prdsp.cli", "--help"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    assert "simulate" in proc.stdout
