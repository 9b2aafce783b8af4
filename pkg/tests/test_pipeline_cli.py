import numpy as np
import pytest

from alsgt.cli import main
from alsgt.dataio import load_bundle, read_las_points, read_ppm, read_trajectory_csv
from alsgt.errors import StageError
from alsgt.evaluation import EmbeddingSet
from alsgt.pipeline import STAGES, check_bundle, export_sequence, run_pipeline
from alsgt.sim import Scenario


@pytest.fixture(scope="module")
def cli_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    code = main(["--config", "small_block", "--out-dir", str(out), "run", "--export-bundle"])
    return code, out


def test_cli_run_report_is_deterministic(cli_run, small_run):
    code, out = cli_run
    assert code == 0
    # an independent second run produces the same report byte for byte
    assert (out / "run_report.txt").read_text() == small_run.report_text()


def test_report_keys(small_run):
    keys = {line.split(" = ")[0] for line in small_run.report_text().splitlines()}
    for k in ("scenario", "seed", "stage", "count.states", "solver.iterations",
              "solver.cost_monotone", "ate.rmse", "ate.max", "open_loop.max", "checkpoint.avg"):
        assert k in keys, k
    assert small_run.completed == "evaluate" and small_run.cost_monotone


def test_cli_run_writes_trajectory_and_bundle(cli_run, small_run):
    _, out = cli_run
    ts, poses = read_trajectory_csv(out / "trajectory.csv")
    assert len(poses) == len(small_run.states)
    assert all(a.allclose(b, atol=0) for a, b in zip(poses, small_run.poses))
    check = check_bundle(out / "bundle")
    assert check.counts["pose_tile_mismatches"] == 0 and check.counts["images"] > 10


def test_cli_project_overlays(cli_run, tmp_path):
    _, out = cli_run
    # image 4 sits at the near edge of its tile, so the patch lies ahead of the camera
    assert main(["--out-dir", str(tmp_path), "project", str(out / "bundle"), "--index", "4"]) == 0
    files = list((tmp_path / "overlays").glob("*.ppm"))
    assert len(files) == 1
    img = read_ppm(files[0].read_bytes())
    assert img.shape == (720, 1280, 3) and img.any()


def test_cli_simulate_and_evaluate(tmp_path, cli_run, capsys):
    _, run_out = cli_run
    sim = tmp_path / "sim"
    assert main(["--config", "small_block", "--out-dir", str(sim), "simulate"]) == 0
    for name in ("als.las", "truth.csv", "odometry.txt", "imu.csv", "gnss.csv"):
        assert (sim / name).is_file()
    assert len(read_las_points(sim / "als.las")) == 200 * 200
    capsys.readouterr()
    code = main(["--out-dir", str(tmp_path / "ev"), "evaluate",
                 "--estimate", str(run_out / "trajectory.csv"), "--reference", str(sim / "truth.csv")])
    assert code == 0
    text = capsys.readouterr().out
    rmse = float(next(l for l in text.splitlines() if l.startswith("ate.rmse")).split("=")[1])
    assert rmse < 0.15
    assert (tmp_path / "ev" / "evaluation.txt").read_text() == text


def test_cli_evaluate_recall(tmp_path, capsys):
    rng = np.random.default_rng(0)
    s = EmbeddingSet.normalized(np.arange(30), rng.normal(size=(30, 8)), rng.uniform(0, 100, (30, 2)))
    s.save(tmp_path / "q.npz")
    assert main(["--out-dir", str(tmp_path), "evaluate", "--queries", str(tmp_path / "q.npz"),
                 "--database", str(tmp_path / "q.npz"), "--k", "1", "5"]) == 0
    assert "recall@1 = 1" in capsys.readouterr().out


def test_cli_extract(tmp_path):
    assert main(["--config", "small_block", "--out-dir", str(tmp_path), "extract"]) == 0
    report = dict(l.split(" = ") for l in (tmp_path / "extract_report.txt").read_text().splitlines())
    assert int(report["roof_regions"]) == 5 and int(report["facade_points"]) > 0


def test_missing_patch_exit_code(tmp_path, small_run, capsys):
    root = export_sequence(small_run, tmp_path / "b", small_run.data.als)
    (root / "als" / load_bundle(root).entries[0].patch).unlink()
    with pytest.raises(StageError) as exc:
        run_pipeline(root)
    assert exc.value.exit_code == 2 and exc.value.stage == "load"
    assert main(["--out-dir", str(tmp_path / "o"), "project", str(root)]) == 2
    assert "[load]" in capsys.readouterr().err


def test_unknown_scenario_fails_cleanly(tmp_path):
    assert main(["--config", "no_such_scenario", "--out-dir", str(tmp_path), "simulate"]) != 0


def test_stop_after():
    res = run_pipeline(Scenario.load("small_block"), stop_after="extract")
    assert res.completed == "extract" and res.reference is not None and res.states is None
    assert STAGES.index("extract") < STAGES.index("evaluate")
    assert "ate.rmse" not in res.report_text()
