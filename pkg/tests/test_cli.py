import json

import numpy as np
import pytest

from adaptive_rpeak.cli import main
from adaptive_rpeak.corpus import fixtures_dir
from adaptive_rpeak.error_detector import load_thresholds
from adaptive_rpeak.evaluation import f1, match_peaks
from adaptive_rpeak.signal_io import load_ecg, load_peaks

THR = str(fixtures_dir() / "thresholds.txt")


@pytest.fixture
def synth(tmp_path):
    assert main(["synth", "--duration", "30", "--hr", "75", "--name", "st", "--out", str(tmp_path)]) == 0
    return tmp_path / "st.csv", tmp_path / "st.peaks"


def test_synth_ramp_and_step(tmp_path):
    rc = main(["synth", "--duration", "20", "--hr-ramp", "80:180", "--amp-step", "0.4@5s", "--seed", "3",
               "--name", "rs", "--out", str(tmp_path)])
    assert rc == 0
    rec = load_ecg(tmp_path / "rs.csv")
    ann, fs = load_peaks(tmp_path / "rs.peaks")
    assert fs == 250 and len(rec) == 5000
    rr = np.diff(ann.indices)
    assert rr[0] > rr[-1]
    assert rec.samples[ann.indices[-1]] < 0.5 * rec.samples[ann.indices[0]]


def test_synth_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        main(["synth", "--duration", "5", "--noise", "20", "--seed", "9", "--out", str(d)])
    assert (a / "synth.csv").read_bytes() == (b / "synth.csv").read_bytes()


def test_detect_adaptive_writes_report(tmp_path, synth, capsys):
    ecg, ann = synth
    before = ann.read_bytes()
    assert main(["detect", "--bench", "adaptive", "--in", str(ecg), "--thr", THR, "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "st.adaptive.report.json").read_text())
    assert "trigger_fraction" in rep and rep["activity_trace"]["segments"]
    assert "trigger_fraction=" in capsys.readouterr().out
    # the annotation file next to the record is left alone
    assert ann.read_bytes() == before


def test_detect_bayeslope_scores_perfectly(tmp_path, synth):
    ecg, ann = synth
    main(["detect", "--bench", "bayeslope", "--in", str(ecg), "--out", str(tmp_path)])
    det, _ = load_peaks(tmp_path / "st.bayeslope.peaks")
    truth, _ = load_peaks(ann)
    assert f1(match_peaks(det, truth, 250)).f1 == 1.0


def test_adaptive_without_thresholds_fails_cleanly(tmp_path, synth, capsys):
    ecg, _ = synth
    out = tmp_path / "never"
    assert main(["detect", "--bench", "adaptive", "--in", str(ecg), "--out", str(out)]) == 1
    assert "--thr" in capsys.readouterr().err
    assert not out.exists()


def test_missing_threshold_file(tmp_path, synth):
    ecg, _ = synth
    assert main(["detect", "--in", str(ecg), "--thr", str(tmp_path / "nope.txt"), "--out", str(tmp_path / "o")]) == 1


def test_bad_config_key_writes_nothing(tmp_path, synth, capsys):
    ecg, _ = synth
    cfg = tmp_path / "cfg.json"
    cfg.write_text('{"zero_run_length": 30}')
    out = tmp_path / "o"
    assert main(["detect", "--bench", "lightweight", "--in", str(ecg), "--config", str(cfg), "--out", str(out)]) == 1
    assert "zero_run_length" in capsys.readouterr().err
    assert not out.exists()


def test_env_var_sets_output_dir(tmp_path, synth, monkeypatch):
    ecg, _ = synth
    monkeypatch.setenv("RPEAK_OUT", str(tmp_path / "env"))
    assert main(["detect", "--bench", "lightweight", "--in", str(ecg)]) == 0
    assert (tmp_path / "env" / "st.lightweight.peaks").exists()


def test_parallel_jobs_match_serial(tmp_path):
    src = [str(p) for p in sorted(fixtures_dir().glob("*_a.csv"))]
    main(["detect", "--in", *src, "--thr", THR, "--out", str(tmp_path / "serial")])
    main(["detect", "--in", *src, "--thr", THR, "--jobs", "3", "--out", str(tmp_path / "par")])
    for p in (tmp_path / "serial").iterdir():
        assert p.read_bytes() == (tmp_path / "par" / p.name).read_bytes()


def test_eval_table(tmp_path, synth, capsys):
    ecg, ann = synth
    for bench in ("lightweight", "bayeslope"):
        main(["detect", "--bench", bench, "--in", str(ecg), "--out", str(tmp_path)])
    capsys.readouterr()
    dets = [str(tmp_path / f"st.{b}.peaks") for b in ("lightweight", "bayeslope")]
    assert main(["eval", "--det", *dets, "--ann", str(ann), "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "lightweight" in out and "bayeslope" in out and "Total" in out
    data = json.loads((tmp_path / "eval.json").read_text())
    assert data["tol_ms"] == 150.0
    assert all(r["f1"] == 1.0 for r in data["rows"])


def test_eval_rate_mismatch(tmp_path, synth):
    _, ann = synth
    det = tmp_path / "st.other.peaks"
    det.write_text("# fs=500\n100\n")
    assert main(["eval", "--det", str(det), "--ann", str(ann)]) == 1


def test_energy_bench_compare(tmp_path, capsys):
    assert main(["energy", "--bench-compare", "--error-windows", "4,5,6,7,8", "--out", str(tmp_path)]) == 0
    data = json.loads((tmp_path / "energy.json").read_text())
    e = {b: data["benches"][b]["total_mj"] for b in ("lightweight", "adaptive", "bayeslope")}
    assert e["lightweight"] < e["adaptive"] < e["bayeslope"]
    assert data["cycle_counts"] == "calibration artifacts"
    assert "saves" in capsys.readouterr().out


def test_energy_of_report(tmp_path, synth, capsys):
    ecg, _ = synth
    main(["detect", "--in", str(ecg), "--thr", THR, "--out", str(tmp_path)])
    capsys.readouterr()
    assert main(["energy", str(tmp_path / "st.adaptive.report.json")]) == 0
    assert "mJ" in capsys.readouterr().out


def test_energy_needs_input():
    assert main(["energy"]) == 1


def test_dist_build_excludes_subject(tmp_path):
    man = str(fixtures_dir() / "manifest.csv")
    assert main(["dist", "build", "--manifest", man, "--exclude", "amp_step_a", "--out", str(tmp_path)]) == 0
    thr = load_thresholds(tmp_path / "thresholds.txt")
    assert thr.excluded_subject == "amp_step_a"
    assert main(["dist", "build", "--manifest", man, "--exclude", "S99", "--out", str(tmp_path / "x")]) == 1


def test_plotdata(tmp_path, synth):
    ecg, _ = synth
    main(["detect", "--in", str(ecg), "--thr", THR, "--out", str(tmp_path)])
    rep = tmp_path / "st.adaptive.report.json"
    assert main(["plotdata", str(rep), "--in", str(ecg), "--out", str(tmp_path / "plot")]) == 0
    lines = (tmp_path / "plot" / "st.adaptive.signal.csv").read_text().splitlines()
    assert lines[0] == "t_s,ecg_uv,relen" and len(lines) == 7501
    assert (tmp_path / "plot" / "st.adaptive.windows.csv").exists()


def test_fixtures_verify(capsys):
    assert main(["fixtures"]) == 0
    assert capsys.readouterr().out.count("ok") == 10


def test_bad_input_file(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("fs=250\n1\nnan\n")
    assert main(["detect", "--bench", "lightweight", "--in", str(p), "--out", str(tmp_path)]) == 1
