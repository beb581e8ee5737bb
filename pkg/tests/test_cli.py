from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
import pytest

from evanecho.cli import main

CONFIG = """
schema = 1
seed = 7

[stack]
film_index = 2.05
film_thickness_nm = 400.0
substrate_index = 1.806
wavelength_nm = 605.977

[ensemble]
concentration = 5e-5
inhom_fwhm_ghz = 2.0
bulk_absorption_db_per_mm = 7.8125
t2_us = 70.0
isd_coefficient_hz_cm3 = 1.2e-11

[absorption]
substrate_fraction = 0.072
span_ghz = 8.0
points = 401

[stark]
[[stark.devices]]
device_id = "A"
coeff_khz_per_v_cm = 112.0
gap_cm = 0.01
idle_offset_mhz = 11.2
timeline = [
  { t_us = 0.0, volts = 1.0 },
  { t_us = 56.0, volts = 0.0 },
]
[stark.devices.pulse_pair]
t_start_us = 0.0
tau_us = 20.0
"""


@pytest.fixture()
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    (tmp_path / "run.toml").write_text(CONFIG)
    return tmp_path


def _read_csv(path: Path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


class TestModes:
    def test_writes_expected_solution(self, workdir, capsys):
        assert main(["modes", "--config", "run.toml"]) == 0
        header, rows = _read_csv(workdir / "out" / "modes.csv")
        assert header[0] == "mode_index"
        assert len(rows) == 1
        record = dict(zip(header, rows[0]))
        assert float(record["n_eff"]) == pytest.approx(1.9773706254851204, abs=1e-9)
        assert record["polarization"] == "TE"
        out = capsys.readouterr().out
        assert "n_eff" in out

    def test_byte_identical_reruns(self, workdir):
        main(["modes", "--config", "run.toml"])
        first = (workdir / "out" / "modes.csv").read_bytes()
        main(["modes", "--config", "run.toml"])
        assert (workdir / "out" / "modes.csv").read_bytes() == first


class TestAbsorption:
    def test_spectrum_shape_and_peak(self, workdir):
        assert main(["absorption", "--config", "run.toml"]) == 0
        header, rows = _read_csv(workdir / "out" / "absorption.csv")
        assert header == ["frequency_ghz", "attenuation_db"]
        assert len(rows) == 401
        att = np.array([float(r[1]) for r in rows])
        assert att.max() == pytest.approx(2.25, abs=1e-9)


class TestEcho2p:
    def test_trace_peaks_at_prediction(self, workdir):
        assert main(["echo2p", "--config", "run.toml"]) == 0
        header, rows = _read_csv(workdir / "out" / "echo2p_trace.csv")
        assert header == ["time_us", "intensity"]
        t = np.array([float(r[0]) for r in rows])
        i = np.array([float(r[1]) for r in rows])
        assert t[np.argmax(i)] == pytest.approx(41.5, abs=1e-9)

    def test_sweep_emits_refit(self, workdir, capsys):
        assert main(["echo2p", "--config", "run.toml", "--tau-us", "10:150:8"]) == 0
        header, rows = _read_csv(workdir / "out" / "echo2p_decay.csv")
        assert header == ["tau_us", "peak_intensity"]
        assert len(rows) == 8
        assert "refit t2" in capsys.readouterr().out

    def test_malformed_sweep_is_usage_error(self, workdir, capsys):
        assert main(["echo2p", "--config", "run.toml", "--tau-us", "oops"]) == 2


class TestEcho3p:
    def test_storage_sweep(self, workdir, capsys):
        assert main(["echo3p", "--config", "run.toml", "--T-s", "0.1:1000:8"]) == 0
        header, rows = _read_csv(workdir / "out" / "echo3p_decay.csv")
        assert header == ["T_s", "peak_intensity"]
        assert len(rows) == 8
        ts = np.array([float(r[0]) for r in rows])
        assert ts[0] == pytest.approx(0.1)
        assert ts[-1] == pytest.approx(1000.0)


class TestChip:
    def test_per_device_traces(self, workdir, capsys):
        assert main(["chip", "--config", "run.toml"]) == 0
        header, rows = _read_csv(workdir / "out" / "chip.csv")
        assert header == ["time_us", "intensity", "device_id"]
        assert {r[2] for r in rows} == {"A"}
        out = capsys.readouterr().out
        assert "device A" in out

    def test_workers_do_not_change_bytes(self, workdir):
        main(["chip", "--config", "run.toml", "--workers", "1"])
        first = (workdir / "out" / "chip.csv").read_bytes()
        main(["chip", "--config", "run.toml", "--workers", "4"])
        assert (workdir / "out" / "chip.csv").read_bytes() == first

    def test_chip_without_stark_section_fails(self, workdir):
        bare = CONFIG.split("[stark]")[0]
        (workdir / "bare.toml").write_text(bare)
        assert main(["chip", "--config", "bare.toml"]) == 2


class TestErrorPaths:
    def test_missing_config(self, workdir, capsys):
        assert main(["modes", "--config", "absent.toml"]) == 2
        assert "error" in capsys.readouterr().err

    def test_unknown_key_rejected(self, workdir, capsys):
        (workdir / "bad.toml").write_text(CONFIG + "\n[typo]\nx = 1\n")
        assert main(["modes", "--config", "bad.toml"]) == 2

    def test_seed_override_accepted(self, workdir):
        assert main(["modes", "--config", "run.toml", "--seed", "99"]) == 0

    def test_out_flag_overrides_directory(self, workdir):
        assert main(["modes", "--config", "run.toml", "--out", "elsewhere"]) == 0
        assert (workdir / "elsewhere" / "modes.csv").exists()


class TestPlotScripts:
    def test_scripts_emitted_when_enabled(self, workdir):
        (workdir / "plots.toml").write_text(CONFIG + "\n[output]\nplot_scripts = true\n")
        main(["echo2p", "--config", "plots.toml"])
        script = workdir / "out" / "echo2p_trace_plot.py"
        assert script.exists()
        assert "matplotlib" in script.read_text()
