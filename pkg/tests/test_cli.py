import json
import os
import shutil
import subprocess
import sys

import numpy as np
import pytest

from lonrec.cli import EXIT_CONFIG, EXIT_DATA, EXIT_FORMAT, EXIT_OK, PRESETS, main
from lonrec.evalharness.harness import SUMMARY_HEADER, SWEEP_HEADER


def run(*args):
    return main([str(a) for a in args])


def read_json(path):
    with open(path) as fp:
        return json.load(fp)


def test_generate_writes_three_files_deterministically(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("generate", "--m", 4, "--sigma", 0.025, "--seed", 7, "--out", a) == EXIT_OK
    assert run("generate", "--m", 4, "--sigma", 0.025, "--seed", 7, "--out", b) == EXIT_OK
    names = sorted(os.listdir(a))
    assert names == ["clean.json", "network.json", "noisy.json"]
    for n in names:
        assert (a / n).read_bytes() == (b / n).read_bytes()


def test_generate_lossy(tmp_path):
    assert run("generate", "--m", 4, "--loss-eps", 0.1, "--out", tmp_path) == EXIT_OK
    net = read_json(tmp_path / "network.json")
    beta = np.array(net["network"]["beta"])
    assert net["kind"] == "lossy" and beta.size == 8
    assert np.all((beta >= np.cos(0.1)) & (beta <= 1))


def test_generate_bad_dimension(tmp_path):
    assert run("generate", "--m", 1, "--out", tmp_path) == EXIT_CONFIG


def test_generate_unwritable_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert run("generate", "--m", 3, "--out", blocker / "sub") == EXIT_CONFIG


def test_seed_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("LONREC_SEED", "7")
    assert run("generate", "--m", 3, "--out", tmp_path / "env") == EXIT_OK
    monkeypatch.delenv("LONREC_SEED")
    assert run("generate", "--m", 3, "--seed", 7, "--out", tmp_path / "flag") == EXIT_OK
    assert (tmp_path / "env" / "network.json").read_bytes() == (tmp_path / "flag" / "network.json").read_bytes()


def test_config_file_and_unknown_keys(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"m": 3, "seed": 2}))
    assert run("generate", "--config", cfg, "--out", tmp_path / "o") == EXIT_OK
    cfg.write_text(json.dumps({"m": 3, "bogus": 1}))
    assert run("generate", "--config", cfg, "--out", tmp_path / "o") == EXIT_CONFIG
    cfg.write_text("{not json")
    assert run("generate", "--config", cfg, "--out", tmp_path / "o") == EXIT_FORMAT


def test_unknown_flag_is_config_error():
    assert run("generate", "--bogus") == EXIT_CONFIG


def test_reconstruct_brisbane_clean(tmp_path):
    run("generate", "--m", 4, "--seed", 1, "--out", tmp_path)
    assert run("reconstruct", "--data", tmp_path / "clean.json", "--method", "brisbane",
               "--truth", tmp_path / "network.json", "--out", tmp_path / "r") == EXIT_OK
    res = read_json(tmp_path / "r" / "result.json")
    assert res["fidelity"] >= 1 - 1e-9


def test_reconstruct_vienna_reduced_m3(tmp_path):
    run("generate", "--m", 3, "--seed", 1, "--out", tmp_path)
    assert run("reconstruct", "--data", tmp_path / "clean.json", "--method", "vienna", "--set", "reduced",
               "--truth", tmp_path / "network.json", "--out", tmp_path / "r") == EXIT_OK
    res = read_json(tmp_path / "r" / "result.json")
    assert res["records"] == 6 and res["selection"] == "reduced"
    assert res["fidelity"] >= 1 - 1e-8


def test_reconstruct_vienna_with_start(tmp_path):
    run("generate", "--m", 3, "--seed", 2, "--out", tmp_path)
    assert run("reconstruct", "--data", tmp_path / "clean.json", "--method", "vienna",
               "--start", tmp_path / "network.json", "--truth", tmp_path / "network.json",
               "--out", tmp_path / "r") == EXIT_OK
    assert read_json(tmp_path / "r" / "result.json")["fidelity"] >= 1 - 1e-9


def test_reconstruct_bristol_missing_sign_records(tmp_path):
    run("generate", "--m", 4, "--seed", 1, "--out", tmp_path)
    d = read_json(tmp_path / "clean.json")
    d["visibilities"] = [r for r in d["visibilities"] if r["k"] == 1 and r["i"] == 1]
    (tmp_path / "partial.json").write_text(json.dumps(d))
    assert run("reconstruct", "--data", tmp_path / "partial.json", "--method", "bristol",
               "--out", tmp_path / "r") == EXIT_DATA


def test_reconstruct_malformed_data(tmp_path):
    (tmp_path / "bad.json").write_text(json.dumps({"m": 3}))
    assert run("reconstruct", "--data", tmp_path / "bad.json", "--method", "brisbane",
               "--out", tmp_path / "r") == EXIT_FORMAT


def test_reconstruct_vienna_lossy(tmp_path):
    run("generate", "--m", 3, "--loss-eps", 0.05, "--seed", 3, "--out", tmp_path)
    assert run("reconstruct", "--data", tmp_path / "clean.json", "--method", "vienna-lossy",
               "--truth", tmp_path / "network.json", "--out", tmp_path / "r") == EXIT_OK
    res = read_json(tmp_path / "r" / "result.json")
    assert len(res["beta"]) == 3 and 0 <= res["fidelity"] <= 1


def small_sweep(out, *extra):
    return run("sweep", "--m", 3, "--sigma", 0.01, 0.03, "--draws", 2, "--iterations", 2,
               "--method", "brisbane", "vienna", "--seed", 5, "--out", out, *extra)


def test_sweep_fit_plot(tmp_path):
    assert small_sweep(tmp_path / "s") == EXIT_OK
    files = sorted(os.listdir(tmp_path / "s"))
    assert files == ["fidelity_vs_sigma_m3.svg", "summary.csv", "sweep.csv"]
    assert (tmp_path / "s" / "sweep.csv").read_text().splitlines()[0] == ",".join(SWEEP_HEADER)
    assert run("fit", "--in", tmp_path / "s" / "sweep.csv", "--out", tmp_path / "f") == EXIT_OK
    assert (tmp_path / "f" / "summary.csv").read_bytes() == (tmp_path / "s" / "summary.csv").read_bytes()
    assert run("plot", "--in", tmp_path / "f" / "summary.csv", "--out", tmp_path / "p") == EXIT_OK
    assert (tmp_path / "p" / "fidelity_vs_sigma_m3.svg").read_bytes() == \
           (tmp_path / "s" / "fidelity_vs_sigma_m3.svg").read_bytes()


def test_sweep_resume_identical(tmp_path):
    assert small_sweep(tmp_path / "full") == EXIT_OK
    shutil.copytree(tmp_path / "full", tmp_path / "cut")
    csv = tmp_path / "cut" / "sweep.csv"
    lines = csv.read_text().splitlines(keepends=True)
    csv.write_text("".join(lines[:3]) + lines[3][:7])
    assert small_sweep(tmp_path / "cut", "--resume") == EXIT_OK
    for name in ("sweep.csv", "summary.csv", "fidelity_vs_sigma_m3.svg"):
        assert (tmp_path / "cut" / name).read_bytes() == (tmp_path / "full" / name).read_bytes()


def test_fit_malformed_csv(tmp_path):
    (tmp_path / "bad.csv").write_text("m,j\n1,2\n")
    assert run("fit", "--in", tmp_path / "bad.csv", "--out", tmp_path) == EXIT_FORMAT
    (tmp_path / "bad2.csv").write_text("m,sigma\n")
    assert run("plot", "--in", tmp_path / "bad2.csv", "--out", tmp_path) == EXIT_FORMAT


def test_plot_single_method(tmp_path):
    rows = [",".join(SUMMARY_HEADER)]
    for s, f in ((0.01, 0.999), (0.05, 0.99)):
        rows.append(f"6,{s},vienna,{f},0.001,0.001,weibull,3.0,0.01,nan,20")
    (tmp_path / "summary.csv").write_text("\n".join(rows) + "\n")
    assert run("plot", "--in", tmp_path / "summary.csv", "--out", tmp_path / "p") == EXIT_OK
    svg = (tmp_path / "p" / "fidelity_vs_sigma_m6.svg").read_text()
    assert svg.count('class="series"') == 1 and 'data-method="vienna"' in svg


def test_lossy_command(tmp_path):
    assert run("lossy", "--loss-eps", 0.0, 0.1, "--networks", 1, "--iterations", 2,
               "--out", tmp_path) == EXIT_OK
    lines = (tmp_path / "lossy.csv").read_text().splitlines()
    assert lines[0] == "eps,j,method,q_t,q_vis,fidelity,skipped"
    assert len(lines) == 1 + 2 * 3


def test_presets():
    full = PRESETS["paper"]
    assert full["m"] == list(range(4, 15))
    assert len(full["sigma"]) == 20 and full["sigma"][0] == 0.005 and full["sigma"][-1] == 0.1
    assert full["draws"] == 120 and full["iterations"] == 120 and full["bristol_draws"] == 1000
    desk = PRESETS["desk"]
    assert desk["m"] == [8] and desk["draws"] == desk["iterations"] == 20
    assert desk["lossy"]["m"] == 4 and desk["lossy"]["networks"] == 50


def test_console_script_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "lonrec.cli", "generate", "--m", "1", "--out", str(tmp_path)],
                         capture_output=True, text=True)
    assert out.returncode == EXIT_CONFIG
    assert "lonrec:" in out.stderr
