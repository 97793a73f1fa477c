import csv
import json
import math

import pytest
from click.testing import CliRunner

from sbscool.cli import default_cutoff, main


@pytest.fixture(scope="module")
def runner():
    return CliRunner()


@pytest.fixture(scope="module")
def synth_dir(runner, tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    result = runner.invoke(main, ["synth", "--out", str(out)])
    assert result.exit_code == 0, result.output
    return out


@pytest.fixture(scope="module")
def combine_dir(runner, tmp_path_factory):
    out = tmp_path_factory.mktemp("combine")
    result = runner.invoke(main, ["synth", "--kind", "combine", "--out", str(out)])
    assert result.exit_code == 0, result.output
    return out


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _error(result):
    return json.loads(result.stderr.strip().splitlines()[-1])


def test_synth_outputs(runner, synth_dir):
    names = sorted(p.name for p in synth_dir.iterdir())
    assert names == ["manifest.json", "synth.json", "waveform.csv", "waveform_si.csv"]
    summary = json.loads((synth_dir / "synth.json").read_text())
    assert summary["T_scaled"] == pytest.approx(8.32)
    assert summary["checks"]["max_coupling"] <= 1e-10
    rows = _rows(synth_dir / "waveform.csv")
    assert len(rows) == 833 and float(rows[0]["t_scaled"]) == 0.0


def test_combine_csv_endpoints(combine_dir):
    rows = _rows(combine_dir / "waveform.csv")
    assert float(rows[0]["r_l0"]) == pytest.approx(100.0, abs=1.0)
    assert float(rows[-1]["r_l0"]) == pytest.approx(1.0, abs=0.01)
    assert float(rows[-1]["omega_minus_sq"]) == pytest.approx(3.0, abs=1e-4)


def test_sim_thermal(runner, synth_dir, tmp_path):
    result = runner.invoke(main, ["sim", str(synth_dir / "waveform.csv"), "--out", str(tmp_path)])
    assert result.exit_code == 0, result.output
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["n1_final"] <= 1e-6
    assert report["n2_final"] == pytest.approx(5.0, abs=1e-5)
    assert report["swap_error"] <= 1e-3


def test_sim_vacuum_trace(runner, synth_dir, tmp_path):
    result = runner.invoke(main, ["sim", str(synth_dir / "waveform.csv"), "--input", "vacuum", "--out", str(tmp_path)])
    assert result.exit_code == 0, result.output
    rows = _rows(tmp_path / "trace.csv")
    n1 = [float(r["n1"]) for r in rows]
    assert n1[0] == 0.0 and n1[-1] <= 1e-6
    # transient squeezing excites the ions mid-process
    assert max(n1) > 1e-2
    assert all(float(r["norm"]) == 1.0 for r in rows)


def test_sim_fock_one_phonon(runner, synth_dir, tmp_path):
    args = ["sim", str(synth_dir / "waveform.csv"), "--method", "fock", "--input", "fock:1",
            "--cubic", "on", "--out", str(tmp_path)]
    result = runner.invoke(main, args)
    assert result.exit_code == 0, result.output
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["n1_final"] <= 1e-5 and report["n2_final"] == pytest.approx(1.0, abs=1e-5)
    assert "n1_excess_over_quadratic" in report and report["cubic_sign"] == "taylor"


def test_sim_combine_judged_by_stretch(runner, combine_dir, tmp_path):
    args = ["sim", str(combine_dir / "waveform.csv"), "--input", "vacuum", "--out", str(tmp_path)]
    result = runner.invoke(main, args)
    assert result.exit_code == 0, result.output
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["stretch_excitation"] <= 1e-6 and report["swap_error"] is None


def test_bad_config_exit_2(runner, tmp_path):
    cfg = tmp_path / "bad.toml"
    cfg.write_text("phase_tolerance = -1\n")
    result = runner.invoke(main, ["synth", "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert result.exit_code == 2
    assert _error(result)["key"] == "phase_tolerance"


def test_bad_csv_exit_3(runner, tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("t,r\n0,1\n")
    result = runner.invoke(main, ["sim", str(bad), "--out", str(tmp_path / "o")])
    assert result.exit_code == 3
    assert _error(result)["error"] == "InputFileError"


def test_unreachable_swap_exit_4(runner, tmp_path):
    # a tolerance of 1e-1 stops the bump early, leaving a visible swap error
    cfg = tmp_path / "loose.toml"
    cfg.write_text("phase_tolerance = 0.1\n")
    out = tmp_path / "wf"
    assert runner.invoke(main, ["synth", "--config", str(cfg), "--out", str(out)]).exit_code == 0
    result = runner.invoke(main, ["sim", str(out / "waveform.csv"), "--out", str(tmp_path / "o")])
    assert result.exit_code == 4
    assert "swap error" in _error(result)["message"]


def test_protocol_command(runner, tmp_path):
    result = runner.invoke(main, ["protocol", "--out", str(tmp_path)])
    assert result.exit_code == 0, result.output
    report = json.loads((tmp_path / "protocol.json").read_text())
    assert report["ledger"]["initial"]["Q2"] == 5.0
    assert report["ledger"]["pair_modes"]["total"] <= 1e-5
    assert _rows(tmp_path / "timeline.csv")[-1]["step"] == "IV"


def test_protocol_needs_two_coolants(runner, tmp_path):
    result = runner.invoke(main, ["protocol", "--coolants", "1", "--out", str(tmp_path)])
    assert result.exit_code == 2
    assert _error(result)["key"] == "protocol.coolants"


def test_sweep_rows(runner, tmp_path):
    values = f"{math.sqrt(2)},{math.sqrt(3)},0.3,0.05"
    result = runner.invoke(main, ["sweep", "--values", values, "--out", str(tmp_path)])
    assert result.exit_code == 0, result.output
    rows = _rows(tmp_path / "sweep.csv")
    assert [r["status"] for r in rows[:3]] == ["ok", "ok", "curvature_warning"]
    assert rows[3]["status"].startswith("error:")
    assert float(rows[0]["omega0_T"]) == pytest.approx(8.3, abs=0.1)
    assert float(rows[1]["omega0_T"]) == pytest.approx(10.2, abs=0.1)


def test_sweep_parallel_matches_serial(runner, tmp_path, monkeypatch):
    values = f"{math.sqrt(2)},{math.sqrt(3)}"
    assert runner.invoke(main, ["sweep", "--values", values, "--out", str(tmp_path / "a")]).exit_code == 0
    monkeypatch.setenv("SBSCOOL_WORKERS", "2")
    assert runner.invoke(main, ["sweep", "--values", values, "--out", str(tmp_path / "b")]).exit_code == 0
    assert (tmp_path / "a" / "sweep.csv").read_bytes() == (tmp_path / "b" / "sweep.csv").read_bytes()


@pytest.mark.parametrize("command", ["synth", "protocol", "sweep", "sim"])
def test_replay_is_identical(runner, tmp_path, synth_dir, command):
    out = tmp_path / "run"
    args = {
        "synth": ["synth"],
        "protocol": ["protocol", "--transport-heating", "0.05"],
        "sweep": ["sweep", "--values", "1.5"],
        "sim": ["sim", str(synth_dir / "waveform.csv"), "--input", "squeezed:3"],
    }[command]
    assert runner.invoke(main, args + ["--out", str(out)]).exit_code == 0
    result = runner.invoke(main, ["replay", str(out / "manifest.json")])
    assert result.exit_code == 0, result.output
    assert "DIFFERS" not in result.output


def test_replay_detects_tampering(runner, tmp_path):
    out = tmp_path / "run"
    assert runner.invoke(main, ["synth", "--out", str(out)]).exit_code == 0
    manifest = json.loads((out / "manifest.json").read_text())
    manifest["outputs"]["synth.json"] = "0" * 64
    (out / "manifest.json").write_text(json.dumps(manifest))
    result = runner.invoke(main, ["replay", str(out / "manifest.json")])
    assert result.exit_code == 4
    assert "DIFFERS  synth.json" in result.output


def test_input_state_parsing(runner, synth_dir, tmp_path):
    wf = str(synth_dir / "waveform.csv")
    for bad in ("plasma:3", "fock:1.5", "thermal:-1"):
        result = runner.invoke(main, ["sim", wf, "--input", bad, "--out", str(tmp_path)])
        assert result.exit_code == 2, bad
    result = runner.invoke(main, ["sim", wf, "--input", "fock:2", "--out", str(tmp_path)])
    assert result.exit_code == 2 and "not Gaussian" in result.output


def test_default_cutoff():
    assert default_cutoff(0) == 12
    assert default_cutoff(40) == 40 + math.ceil(10 * math.sqrt(40)) + 12
