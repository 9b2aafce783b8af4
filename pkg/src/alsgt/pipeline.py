"""End-to-end ground-truth generation on a simulated sequence.

Stages: load/simulate, per-scan ground segmentation, submap building, ALS
roof extraction and façade completion, aerial registration, loop closure,
IMU preintegration, graph assembly, LM solve and evaluation.
"""
from __future__ import annotations

import contextlib
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cloud.features import voxel_downsample
from .cloud.ground import label_ground
from .cloud.pointcloud import Label, PointCloud
from .dataio.bundle import Calibration, SequenceBundle, export_bundle, load_bundle
from .dataio.patches import patch_for_position
from .dataio.poses import write_trajectory_csv
from .dataio.projection import CameraModel
from .errors import AlsgtError, DegenerateScan, StageError
from .evaluation import CheckpointPair, ate, checkpoint_errors, rre_rte
from .geom import RigidTransform, State, so3_log
from .preint import GRAVITY, preintegrate
from .registration.aerial import make_aerial_factor, prepare_aerial_reference
from .registration.icp import ICPConfig
from .registration.loops import LoopConfig, detect_loops, match_loop_pair
from .registration.submap import build_submaps
from .sim.scenario import Scenario, initial_pose_error, lever_arm, lidar_seed, simulate
from .sim.sensors import chain_poses, render_mls_scan
from .solver import GraphConfig, LMConfig, assemble_graph, lm_solve

log = logging.getLogger(__name__)

EXIT_CODES = {"load": 2, "extract": 3, "register": 4, "optimize": 5, "evaluate": 6}


@contextlib.contextmanager
def stage(name, timings=None):
    t0 = time.perf_counter()
    try:
        yield
    except StageError:
        raise
    except (AlsgtError, ValueError, OSError, RuntimeError) as exc:
        raise StageError(name, f"{type(exc).__name__}: {exc}", EXIT_CODES.get(name, 1)) from exc
    finally:
        if timings is not None:
            timings[name] = timings.get(name, 0.0) + time.perf_counter() - t0


@dataclass(frozen=True)
class PipelineConfig:
    scan_stride: int = 5
    scan_voxel: float = 0.3
    submap_length: float = 30.0
    submap_voxel: float = 0.5
    submap_ground_voxel: float = 1.0
    submap_range: float = 40.0
    supervoxel_resolution: float = 2.0
    use_gnss: bool = True
    use_imu: bool = True
    use_aerial: bool = True
    use_loops: bool = True
    loop_min_gap: int = 3
    loop_min_iou: float = 0.3
    loop_gate_trans: float = 1.0
    loop_gate_rot_deg: float = 3.0
    n_checkpoints: int = 60
    icp: ICPConfig = field(default_factory=ICPConfig)
    loop: LoopConfig = field(default_factory=LoopConfig)
    graph: GraphConfig = field(default_factory=GraphConfig)
    lm: LMConfig = field(default_factory=LMConfig)

    @classmethod
    def from_scenario(cls, scenario, **overrides):
        """Scalar ``pipeline.<field>`` keys from a scenario script, then overrides.

        The IMU noise densities of the scenario also set the IMU factor weights.
        """
        kw = {}
        for name, f in cls.__dataclass_fields__.items():
            v = scenario.get(f"pipeline.{name}")
            if v is not None and isinstance(f.default, (bool, int, float)):
                kw[name] = type(f.default)(v)
        acc, gyro = scenario.get("imu.acc_noise"), scenario.get("imu.gyro_noise")
        if acc and gyro:
            kw["graph"] = GraphConfig(acc_noise=float(acc), gyro_noise=float(gyro))
        kw.update(overrides)
        return cls(**kw)


STAGES = ("load", "extract", "register", "optimize", "evaluate")


@dataclass
class PipelineResult:
    """Everything produced up to the last completed stage."""

    scenario: Scenario
    data: object = None
    config: PipelineConfig = None
    initial_poses: list = None
    reference: object = None
    scans: dict = None
    raw_scans: dict = None
    submaps: list = field(default_factory=list)
    aerial: list = field(default_factory=list)
    loops: list = field(default_factory=list)
    graph: object = None
    states: list = None
    solve: object = None
    metrics: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    completed: str = ""

    @property
    def poses(self):
        return [s.pose for s in self.states] if self.states is not None else None

    @property
    def true_poses(self):
        return [s.pose for s in self.data.true_states]

    @property
    def cost_monotone(self):
        tr = np.asarray(self.solve.cost_trace)
        return bool(np.all(np.diff(tr) <= 0))

    def report_lines(self):
        lines = [f"scenario = {self.scenario.name}", f"seed = {self.scenario.seed}",
                 f"stage = {self.completed}"]
        lines += [f"count.{k} = {v}" for k, v in self.counts.items()]
        if self.solve is not None:
            lines += [f"solver.{k} = {_fmt(v)}" for k, v in self.solve.as_dict().items()
                      if k != "cost_trace"]
            lines.append("solver.cost_monotone = " + _fmt(self.cost_monotone))
        lines += [f"{k} = {_fmt(v)}" for k, v in self.metrics.items()]
        return lines

    def report_text(self):
        return "\n".join(self.report_lines()) + "\n"

    def write(self, out_dir):
        """Run report, trajectory CSV (when optimized) and stage timings."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "run_report.txt").write_text(self.report_text())
        if self.states is not None:
            write_trajectory_csv(out / "trajectory.csv", [s.timestamp for s in self.states],
                                 self.poses)
        (out / "timings.txt").write_text("".join(f"{k} = {v:.3f}\n" for k, v in self.timings.items()))
        return out


def _fmt(v):
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _render_scans(data, frames, cfg):
    """Ray-cast and ground-label the scans used for submaps."""
    scans, raw, degenerate = {}, {}, 0
    for f in frames:
        s = render_mls_scan(data.scene, data.true_states[f].pose, data.lidar,
                            lidar_seed(data.scenario, f))
        raw[f] = s
        thin = voxel_downsample(PointCloud(s.points), cfg.scan_voxel)
        try:
            scans[f] = label_ground(thin)
        except DegenerateScan:
            degenerate += 1
            scans[f] = thin.with_label(Label.OTHER)
    return scans, raw, degenerate


def _checkpoints(data, raw, n, rng):
    """Façade hits of rendered scans paired with their true map position."""
    frames = sorted(raw)
    pick = [frames[k] for k in np.linspace(0, len(frames) - 1, min(n, len(frames))).astype(int)]
    out = []
    for f in pick:
        s = raw[f]
        idx = np.flatnonzero(s.labels == int(Label.FACADE))
        if len(idx) == 0:
            idx = np.arange(len(s))
        if len(idx) == 0:
            continue
        p = s.points[rng.choice(idx)]
        out.append(CheckpointPair(f, tuple(p), tuple(data.true_states[f].pose.apply(p))))
    return out


def _chained_anchor_guess(anchor, last, initial):
    """Carry the latest aerial correction forward along the odometry chain."""
    if last is None:
        return initial[anchor]
    a_prev, M_prev = last
    return M_prev @ initial[a_prev].inverse() @ initial[anchor]


def _rot_deg(T):
    return float(np.degrees(np.linalg.norm(so3_log(T.rotation))))


def _load(res, source, config):
    sc = res.scenario = source if isinstance(source, Scenario) else Scenario.load(source)
    res.config = config or PipelineConfig.from_scenario(sc)
    res.data = simulate(sc)
    start = res.data.true_states[0].pose @ initial_pose_error(sc)
    res.initial_poses = chain_poses(start, res.data.odometry)
    res.counts["states"] = len(res.data.true_states)


def _extract(res):
    cfg, n = res.config, len(res.data.true_states)
    frames = list(range(0, n, cfg.scan_stride))
    if frames[-1] != n - 1:
        frames.append(n - 1)
    res.scans, res.raw_scans, degenerate = _render_scans(res.data, frames, cfg)
    res.reference = prepare_aerial_reference(res.data.als, cfg.supervoxel_resolution)
    res.counts.update({"scans": len(res.scans), "degenerate_scans": degenerate,
                       "roof_regions": res.reference.n_roofs,
                       "facade_points": int((res.reference.cloud.labels == int(Label.FACADE)).sum())})


def _register(res):
    cfg, initial = res.config, res.initial_poses
    target = res.reference.target
    submaps = build_submaps(res.scans, initial, cfg.submap_length, cfg.submap_voxel,
                            cfg.submap_ground_voxel, cfg.submap_range)
    anchor_est, aerial, last = {}, [], None
    for sm in submaps:
        guess = _chained_anchor_guess(sm.anchor, last, initial)
        m = make_aerial_factor(sm, target, guess, cfg.icp) if cfg.use_aerial else None
        if m is not None:
            aerial.append(m)
            last = (sm.anchor, m.pose)
        anchor_est[sm.anchor] = guess if m is None else m.pose
    placed = [sm.with_anchor_pose(anchor_est[sm.anchor]) for sm in submaps]
    loops = []
    candidates = detect_loops(placed, cfg.loop_min_gap, cfg.loop_min_iou) if cfg.use_loops else []
    for i, j, _ in candidates:
        a, b = placed[i], placed[j]
        prior = a.anchor_pose.inverse() @ b.anchor_pose
        meas = match_loop_pair(a, b, cfg.loop, cfg.icp, prior=prior)
        if meas is None:
            continue
        dev = prior.inverse() @ meas.transform
        if np.linalg.norm(dev.translation) > cfg.loop_gate_trans or _rot_deg(dev) > cfg.loop_gate_rot_deg:
            log.info("loop %d-%d rejected by the consistency gate", i, j)
            continue
        loops.append(meas)
    res.submaps, res.aerial, res.loops = placed, aerial, loops
    res.counts.update({"submaps": len(submaps), "loop_candidates": len(candidates),
                       "aerial_measurements": len(aerial), "loop_measurements": len(loops)})


def _initial_states(res):
    """Each frame follows the aerial correction of the submap that contains it."""
    data, initial = res.data, res.initial_poses
    n = len(data.true_states)
    anchor_pose = {sm.anchor: sm.anchor_pose for sm in res.submaps}
    owner = {}
    for sm in res.submaps:
        for f in range(sm.frames[0], sm.frames[-1] + 1):
            owner[f] = sm.anchor
    poses0 = []
    for f in range(n):
        a = owner.get(f)
        poses0.append(initial[f] if a is None else anchor_pose[a] @ initial[a].inverse() @ initial[f])
    ts = data.frame_times
    vel = np.gradient(np.array([T.translation for T in poses0]), ts, axis=0)
    return [State(T, v, np.zeros(3), np.zeros(3), float(t)) for T, v, t in zip(poses0, vel, ts)]


def _optimize(res):
    cfg, data = res.config, res.data
    states = _initial_states(res)
    ts = data.frame_times
    n = len(states)
    odom = [(k, k + 1, T) for k, T in enumerate(data.odometry)]
    imu = []
    if cfg.use_imu:
        for k in range(n - 1):
            imu.append((k, k + 1, preintegrate(data.imu.slice_interval(ts[k], ts[k + 1]))))
    gnss = []
    if cfg.use_gnss:
        for fix in data.gnss:
            k = int(np.argmin(np.abs(ts - fix.timestamp)))
            if abs(ts[k] - fix.timestamp) < 1e-6:
                gnss.append((k, fix.position, fix.sigma))
    res.graph = assemble_graph(states, odom, imu, gnss,
                               [(m.i, m.j, m.transform, m.inlier_fraction) for m in res.loops],
                               [(m.anchor, m.pose, m.inlier_fraction) for m in res.aerial],
                               lever_arm(res.scenario), cfg.graph, GRAVITY)
    res.states, res.solve = lm_solve(res.graph, cfg.lm)
    for kind in ("odometry", "imu", "gnss", "loop", "aerial"):
        res.counts[f"factors.{kind}"] = res.graph.count(kind)


def _evaluate(res):
    data = res.data
    truth = res.true_poses
    est = res.poses
    final = ate(est, truth)
    before = ate(res.initial_poses, truth)
    odo_only = ate(data.dead_reckoning(), truth)
    rre = [rre_rte(g, e)[0] for g, e in zip(truth, est)]
    cps = _checkpoints(data, res.raw_scans, res.config.n_checkpoints,
                       np.random.default_rng(res.scenario.seed))
    cp = checkpoint_errors(cps, est)
    res.metrics = {
        "ate.rmse": final["rmse"], "ate.max": final["max"], "ate.mean": final["mean"],
        "rre.mean_deg": float(np.mean(rre)), "rre.max_deg": float(np.max(rre)),
        "open_loop.rmse": before["rmse"], "open_loop.max": before["max"],
        "odometry_drift.max": odo_only["max"], "odometry_drift.final": odo_only["final"],
        "checkpoint.avg": cp["avg"], "checkpoint.min": cp["min"], "checkpoint.max": cp["max"],
        "aerial.max_error": max((float(np.linalg.norm(m.pose.translation - truth[m.anchor].translation))
                                 for m in res.aerial), default=float("nan")),
    }


def run_pipeline(source, config=None, out_dir=None, stop_after=None):
    """Run the stages on a scenario (name, path or :class:`Scenario`) or a bundle.

    ``stop_after`` names the last stage to run (default: all). A bundle
    (directory or :class:`SequenceBundle`) only goes through the load and
    consistency checks, as it carries no raw sensor streams. Failures are
    raised as :class:`StageError` carrying a per-stage exit code.
    """
    if isinstance(source, SequenceBundle) or (isinstance(source, (str, Path))
                                              and Path(source).is_dir()):
        return check_bundle(source)
    last = STAGES.index(stop_after) if stop_after else len(STAGES) - 1
    res = PipelineResult(source if isinstance(source, Scenario) else None)
    t_start = time.perf_counter()
    steps = [("load", lambda: _load(res, source, config)), ("extract", lambda: _extract(res)),
             ("register", lambda: _register(res)), ("optimize", lambda: _optimize(res)),
             ("evaluate", lambda: _evaluate(res))]
    for name, fn in steps[:last + 1]:
        with stage(name, res.timings):
            fn()
        res.completed = name
    res.timings["total"] = time.perf_counter() - t_start
    if out_dir is not None:
        res.write(out_dir)
    return res


def default_calibration():
    """Forward-looking camera 0.2 m above the LiDAR, 1280 x 720 pixels."""
    cam = CameraModel.from_intrinsics(600.0, 600.0, 640.0, 360.0, 1280, 720)
    # LiDAR x-forward/z-up to camera z-forward/y-down
    R = np.array([[0.0, -1.0, 0.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]])
    return Calibration(cam, RigidTransform(R, R @ np.array([0.0, 0.0, -0.2])))


def export_sequence(result, root, als, spacing=3.0, calibration=None):
    """Write a bundle with one image every ``spacing`` metres of travel."""
    poses = result.poses
    keep, acc = [0], 0.0
    for k in range(1, len(poses)):
        acc += np.linalg.norm(poses[k].translation - poses[k - 1].translation)
        if acc >= spacing:
            keep.append(k)
            acc = 0.0
    names = [f"{k:06d}.jpg" for k in keep]
    return export_bundle(root, als, [poses[k] for k in keep], calibration or default_calibration(),
                         names)


@dataclass
class BundleCheck:
    bundle: SequenceBundle
    counts: dict

    def report_text(self):
        return "".join(f"{k} = {v}\n" for k, v in self.counts.items())


def check_bundle(source):
    """Load a bundle and confirm each image's pose lies in its paired tile."""
    with stage("load"):
        bundle = source if isinstance(source, SequenceBundle) else load_bundle(source)
    with stage("evaluate"):
        mismatched = sum(patch_for_position(T.translation[:2])[0] + ".las" != e.patch
                         for e, T in zip(bundle.entries, bundle.poses))
    counts = {"images": len(bundle.entries), "patches": len({e.patch for e in bundle.entries}),
              "pose_tile_mismatches": mismatched}
    return BundleCheck(bundle, counts)


def trajectory_errors(estimate, truth):
    """Per-frame (RRE degrees, RTE metres)."""
    return np.array([rre_rte(g, e) for g, e in zip(truth, estimate)])
