import json
import os

import numpy as np
import pytest

from gpdepth.cli import main, sweep_grid
from gpdepth.depthmap import load_depth_png, read_sparse_csv
from gpdepth.metrics import evaluate, parse_sweep_report


def run(argv, capsys=None):
    code = main([str(a) for a in argv])
    out = capsys.readouterr() if capsys else None
    return code, out


@pytest.fixture(scope="module")
def scene(tmp_path_factory):
    d = tmp_path_factory.mktemp("scene")
    assert main(["synth", "--width", "60", "--height", "45", "--noise-std", "0.5", "--seed", "3",
                 "--scan-lines", "16", "--out-dir", str(d)]) == 0
    return d


def read_bytes(path):
    with open(path, "rb") as f:
        return f.read()


def test_synth_outputs(scene):
    assert sorted(os.listdir(scene)) == ["dense.png", "gt.png", "manifest.json", "sparse.csv"]
    gt = load_depth_png(scene / "gt.png")
    pts = read_sparse_csv(scene / "sparse.csv", (gt.width, gt.height))
    assert np.array_equal(pts.depth, gt.values[pts.v, pts.u])
    manifest = json.loads((scene / "manifest.json").read_text())
    assert manifest["schema_version"] == 1 and manifest["command"] == "synth"
    assert manifest["config"]["seed"] == 3


def test_synth_noise_free_dense_equals_gt(tmp_path):
    assert main(["synth", "--width", "40", "--height", "30", "--noise-std", "0", "--out-dir", str(tmp_path)]) == 0
    assert read_bytes(tmp_path / "dense.png") == read_bytes(tmp_path / "gt.png")


def test_synth_noise_level(tmp_path):
    assert main(["synth", "--noise-std", "0.3", "--out-dir", str(tmp_path)]) == 0
    r = evaluate(load_depth_png(tmp_path / "dense.png"), load_depth_png(tmp_path / "gt.png"))
    assert abs(r.rmse - 300.0) <= 0.05 * 300.0


def test_complete_writes_full_map(scene, tmp_path):
    out = tmp_path / "c"
    code, _ = run(["complete", "--dense", scene / "dense.png", "--sparse", scene / "sparse.csv",
                   "--render", "--out-dir", out])
    assert code == 0
    assert sorted(os.listdir(out)) == ["manifest.json", "refined.png", "refined_color.png"]
    refined = load_depth_png(out / "refined.png")
    assert refined.valid.all() and refined.shape == (45, 60)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["hyperparams"]["length_scale"] == 1.5
    assert manifest["config"]["extra"]["cg_converged"] is True


def test_complete_missing_sparse_exits_2(scene, tmp_path, capsys):
    missing = tmp_path / "nope.csv"
    code, out = run(["complete", "--dense", scene / "dense.png", "--sparse", missing,
                     "--out-dir", tmp_path / "c"], capsys)
    assert code == 2
    err = json.loads(out.err.strip().splitlines()[-1])
    assert err["exit"] == 2 and str(missing) in err["message"]
    assert not (tmp_path / "c").exists()


def test_exact_solver_agrees_on_small_input(tmp_path, capsys):
    d = tmp_path / "s"
    assert main(["synth", "--width", "24", "--height", "18", "--scan-lines", "6", "--out-dir", str(d)]) == 0
    common = ["complete", "--dense", d / "dense.png", "--sparse", d / "sparse.csv", "--cg-tol", "1e-8"]
    assert run(common + ["--out-dir", tmp_path / "a"])[0] == 0
    assert run(common + ["--solver", "exact", "--out-dir", tmp_path / "b"])[0] == 0
    a = load_depth_png(tmp_path / "a" / "refined.png").values
    b = load_depth_png(tmp_path / "b" / "refined.png").values
    assert np.max(np.abs(a - b)) <= 2 / 256


def test_config_file_and_flag_precedence(scene, tmp_path):
    cfg = tmp_path / "gp.toml"
    cfg.write_text("length_scale = 2.0\nsigma_dl = 0.2\n")
    out = tmp_path / "c"
    code, _ = run(["complete", "--dense", scene / "dense.png", "--sparse", scene / "sparse.csv",
                   "--config", cfg, "--sigma-dl", "0.1", "--out-dir", out])
    assert code == 0
    hp = json.loads((out / "manifest.json").read_text())["config"]["hyperparams"]
    assert hp["length_scale"] == 2.0 and hp["sigma_dl"] == 0.1 and hp["sigma_meas"] == 0.001


def test_config_unknown_key_exits_2(scene, tmp_path, capsys):
    cfg = tmp_path / "gp.toml"
    cfg.write_text("lengthscale = 2.0\n")
    code, out = run(["complete", "--dense", scene / "dense.png", "--sparse", scene / "sparse.csv",
                     "--config", cfg, "--out-dir", tmp_path / "c"], capsys)
    assert code == 2 and "lengthscale" in out.err


def test_eval_prints_json(scene, tmp_path, capsys):
    code, out = run(["eval", "--pred", scene / "dense.png", "--gt", scene / "gt.png",
                     "--out-dir", tmp_path], capsys)
    assert code == 0
    doc = json.loads(out.out)
    assert doc["resolution"] == [60, 45] and doc["n_evaluated"] == 60 * 45
    assert json.loads((tmp_path / "metrics.json").read_text()) == doc


def test_sample_subcommand(scene, tmp_path):
    out = tmp_path / "s"
    assert main(["sample", "--input", str(scene / "sparse.csv"), "--like", str(scene / "gt.png"),
                 "--mode", "horizontal", "--ratio", "1/2", "--out-dir", str(out)]) == 0
    full = read_sparse_csv(scene / "sparse.csv", (60, 45))
    half = read_sparse_csv(out / "sparse.csv", (60, 45))
    assert 0 < len(half) < len(full) and half.v.min() >= (full.v.min() + full.v.max()) / 2
    assert main(["sample", "--input", str(scene / "gt.png"), "--mode", "random", "--n-points", "42",
                 "--format", "png", "--out-dir", str(out)]) == 0
    assert load_depth_png(out / "sparse.png").n_valid == 42
    assert main(["sample", "--input", str(scene / "sparse.csv"), "--mode", "uniform",
                 "--out-dir", str(out)]) == 2


def test_sweep_grid_counts():
    cells = sweep_grid(["uniform", "horizontal", "vertical"], [1 / 2 ** k for k in range(7)], [], 0)
    assert len(cells) == 19 <= 24
    assert sum(c.ratio == 1.0 for c in cells) == 1


def test_sweep_rows_and_baseline(scene, tmp_path, capsys):
    out = tmp_path / "w"
    code, _ = run(["sweep", "--dense", scene / "dense.png", "--sparse", scene / "sparse.csv",
                   "--gt", scene / "gt.png", "--ratios", "1,1/4", "--out-dir", out])
    assert code == 0
    rows = parse_sweep_report((out / "sweep.csv").read_text())
    assert [(r["density"], r["mode"]) for r in rows] == [
        (1.0, "full"), (0.25, "uniform"), (0.25, "horizontal"), (0.25, "vertical"), (0.0, "mde")]
    code, res = run(["eval", "--pred", scene / "dense.png", "--gt", scene / "gt.png",
                     "--out-dir", tmp_path / "e"], capsys)
    ev = json.loads(res.out)
    assert rows[-1]["rmse_mm"] == round(ev["rmse"], 2) and rows[-1]["n_pixels"] == ev["n_evaluated"]
    assert all(r["rmse_mm"] < rows[-1]["rmse_mm"] for r in rows[:-1])


def test_sweep_failed_cell_is_error_row(scene, tmp_path):
    out = tmp_path / "w"
    # more random points than valid gt pixels: that cell fails, the rest still run
    code, _ = run(["sweep", "--dense", scene / "dense.png", "--gt", scene / "gt.png",
                   "--modes", "random", "--n-points", "20,999999", "--out-dir", out])
    assert code == 1
    rows = parse_sweep_report((out / "sweep.csv").read_text())
    bad = [r for r in rows if r["density"] == 999999.0][0]
    assert np.isnan(bad["rmse_mm"]) and bad["n_pixels"] == 0
    good = [r for r in rows if r["density"] == 20.0][0]
    assert good["n_pixels"] == 60 * 45
    failed = json.loads((out / "manifest.json").read_text())["config"]["extra"]["failed_cells"]
    assert list(failed) == ["random_n:999999"]


def test_writes_stay_inside_out_dir(scene, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    before = set(os.listdir(tmp_path))
    out = tmp_path / "only_here"
    assert main(["complete", "--dense", str(scene / "dense.png"), "--sparse", str(scene / "sparse.csv"),
                 "--out-dir", str(out)]) == 0
    assert set(os.listdir(tmp_path)) == before | {"only_here"}
    assert sorted(os.listdir(scene)) == ["dense.png", "gt.png", "manifest.json", "sparse.csv"]


def test_usage_error_exit_code(capsys):
    assert main(["complete", "--nu", "3.5"]) == 2
    assert main(["frobnicate"]) == 2
