import io
import json
import shutil

import numpy as np
import pytest

from nvltm.cli import EXIT_CONVERGENCE, EXIT_INVALID, EXIT_NO_CALIBRATION, EXIT_OK, main
from nvltm.data import write_spectrum, write_trace
from nvltm.physics import OdmrDrive, Physics
from nvltm.simulate import ScanConfig, odmr_spectrum, synthesize_trace


def run(*argv):
    out = io.StringIO()
    code = main(list(argv), out=out)
    return code, out.getvalue()


@pytest.fixture
def calibrated_dir(base_config, calibration, tmp_path):
    shutil.copy(base_config.output_dir / "calibration.json", tmp_path / "calibration.json")
    return tmp_path


def test_reproduce_succeeds(calibrated_dir):
    code, text = run("--out", str(calibrated_dir), "reproduce", "fig3c")
    assert code == EXIT_OK
    assert "cavity_contrast" in json.loads(text)["fig3c"]
    assert (calibrated_dir / "fig3c_manifest.json").is_file()


def test_flags_after_the_subcommand(calibrated_dir):
    code, _ = run("reproduce", "fig3c", "--out", str(calibrated_dir), "--seed", "4")
    assert code == EXIT_OK
    manifest = json.loads((calibrated_dir / "fig3c_manifest.json").read_text())
    assert manifest["config"]["run.rng_seed"] == 4


def test_missing_calibration_exit_code(tmp_path, capsys):
    code, _ = run("--out", str(tmp_path), "reproduce", "fig3c")
    assert code == EXIT_NO_CALIBRATION
    assert "nvltm calibrate" in capsys.readouterr().err


def test_invalid_config_exit_code(tmp_path, capsys):
    cfg = tmp_path / "bad.toml"
    cfg.write_text("[cavity]\nmirror_reflectivity = -1\nunknown = 2\n")
    code, _ = run("--config", str(cfg), "--out", str(tmp_path), "calibrate")
    assert code == EXIT_INVALID
    err = capsys.readouterr().err
    assert "cavity.mirror_reflectivity" in err and "cavity.unknown" in err


def test_invalid_seed_exit_code(tmp_path):
    assert run("--seed", "-3", "--out", str(tmp_path), "reproduce", "fig3c")[0] == EXIT_INVALID


def test_failed_calibration_exit_code(tmp_path):
    cfg = tmp_path / "infeasible.toml"
    cfg.write_text("[bounds]\npump_cross_section = [0.0, 0.0]\n")
    code, _ = run("--config", str(cfg), "--out", str(tmp_path), "calibrate")
    assert code == EXIT_CONVERGENCE
    assert not (tmp_path / "calibration.json").exists()


def test_environment_override(calibrated_dir, monkeypatch):
    monkeypatch.setenv("NVLTM_RUN__RNG_SEED", "17")
    assert run("--out", str(calibrated_dir), "reproduce", "fig3c")[0] == EXIT_OK
    manifest = json.loads((calibrated_dir / "fig3c_manifest.json").read_text())
    assert manifest["config"]["run.rng_seed"] == 17


def test_fit_trace_file(tmp_path):
    trace = synthesize_trace(ScanConfig(seed_power=0.3, rng_seed=1), Physics(base_finesse=958.0))
    write_trace(tmp_path / "scan.csv", trace)
    code, text = run("--out", str(tmp_path), "fit", str(tmp_path / "scan.csv"))
    assert code == EXIT_OK
    record = json.loads(text)
    assert record["result"]["finesse"] == pytest.approx(958, abs=6)
    assert len(record["provenance"]["input_sha256"]) == 64
    assert (tmp_path / "scan_fit.json").is_file()


def test_fit_flat_trace_fails(tmp_path):
    (tmp_path / "flat.csv").write_text("position_m,power_W\n" +
                                      "".join(f"{i}e-9,1e-6\n" for i in range(200)))
    assert run("--out", str(tmp_path), "fit", str(tmp_path / "flat.csv"))[0] == EXIT_CONVERGENCE


def test_fit_missing_file(tmp_path):
    assert run("--out", str(tmp_path), "fit", str(tmp_path / "none.csv"))[0] == EXIT_INVALID


def test_odmr_fit_file(tmp_path):
    ph = Physics(odmr_cavity=OdmrDrive(rate=3e6, linewidth=3e6, splitting=6e6))
    spec = odmr_spectrum(np.linspace(2.85e9, 2.89e9, 201), ph, "cavity", 1.0, 0.01)
    write_spectrum(tmp_path / "odmr.csv", spec)
    code, text = run("--out", str(tmp_path), "odmr-fit", str(tmp_path / "odmr.csv"))
    assert code == EXIT_OK
    record = json.loads(text)
    assert len(record["result"]["dips"]) == 2
    assert record["single_dip_fallback"] is None


def test_sensitivity_from_given_line():
    code, text = run("sensitivity", "--width", "4.46e6", "--contrast", "0.136",
                     "--power", "1e-3")
    assert code == EXIT_OK
    assert json.loads(text)["eta_T_rtHz"] > 0
    assert run("sensitivity", "--width", "4.46e6")[0] == EXIT_INVALID
