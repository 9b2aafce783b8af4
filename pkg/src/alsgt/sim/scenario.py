"""Plain-text scenario scripts (``key = value``) and the simulated sensor bundle."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from ..geom import RigidTransform
from .scene import Box, Scene, random_scene
from .sensors import (DriftConfig, ImuNoise, LidarConfig, chain_poses, inject_drift,
                      relative_poses, render_als, render_gnss, render_imu)
from .trajectory import TrajectoryTruth

log = logging.getLogger(__name__)


def _parse_value(raw):
    raw = raw.strip()
    low = raw.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if ";" in raw:
        return [_parse_value(part) for part in raw.split(";") if part.strip()]
    parts = raw.split()
    try:
        nums = [float(p) for p in parts]
    except ValueError:
        return raw
    if len(nums) == 1:
        return nums[0]
    return nums


def parse_script(text):
    """Parse ``key = value`` lines; ``#`` starts a comment, blank lines are ignored."""
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"scenario line {n}: expected 'key = value'")
        key, value = line.split("=", 1)
        out[key.strip()] = _parse_value(value)
    return out


def packaged_scenarios():
    root = resources.files("alsgt") / "scenarios"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".cfg"))


def read_scenario_text(name_or_path):
    p = Path(str(name_or_path))
    if p.suffix == ".cfg" and p.exists():
        return p.read_text()
    res = resources.files("alsgt") / "scenarios" / f"{name_or_path}.cfg"
    if res.is_file():
        return res.read_text()
    raise FileNotFoundError(f"no scenario named {name_or_path!r}")


def _as_list(v):
    if isinstance(v, list):
        return v
    return [v]


@dataclass
class Scenario:
    """Typed view over a scenario script."""

    values: dict = field(default_factory=dict)

    @classmethod
    def load(cls, name_or_path, **overrides):
        vals = parse_script(read_scenario_text(name_or_path))
        vals.update(overrides)
        return cls(vals)

    @classmethod
    def from_text(cls, text):
        return cls(parse_script(text))

    def get(self, key, default=None):
        return self.values.get(key, default)

    @property
    def name(self):
        return str(self.get("name", "scenario"))

    @property
    def seed(self):
        return int(self.get("seed", 0))

    def waypoints(self):
        wp = self.get("trajectory.waypoints")
        return np.array([_as_list(p) for p in wp], dtype=float)

    def dropouts(self):
        raw = self.get("gnss.dropout")
        if raw is None or raw == "none":
            return []
        if isinstance(raw, list) and raw and not isinstance(raw[0], list):
            raw = [raw]
        return [(float(a), float(b)) for a, b in raw]

    def buildings(self):
        raw = self.get("scene.buildings", 0)
        if isinstance(raw, (int, float)):
            return int(raw)
        rows = raw if isinstance(raw[0], list) else [raw]
        return [Box(*map(float, r)) for r in rows]

    def lidar(self):
        return LidarConfig(
            n_rings=int(self.get("lidar.rings", 32)),
            azimuth_step_deg=float(self.get("lidar.azimuth_step", 0.2)),
            max_range=float(self.get("lidar.max_range", 80.0)),
            range_sigma=float(self.get("lidar.range_sigma", 0.02)),
        )

    def imu_noise(self):
        return ImuNoise(float(self.get("imu.acc_noise", 0.0)), float(self.get("imu.gyro_noise", 0.0)))

    def drift(self):
        return DriftConfig(
            trans=float(self.get("drift.trans", 0.003)),
            trans_noise=float(self.get("drift.trans_noise", 0.001)),
            yaw=float(self.get("drift.yaw", 0.01)),
            roll_pitch=float(self.get("drift.roll_pitch", 0.002)),
        )

    def expected(self):
        return {k[len("expect."):]: v for k, v in self.values.items() if k.startswith("expect.")}


@dataclass
class SimulatedData:
    """Everything the pipeline consumes, plus the truth needed to score it."""

    scenario: Scenario
    scene: Scene
    truth: TrajectoryTruth
    true_states: list
    als: object
    imu: object
    gnss: list
    odometry: list
    lidar: LidarConfig

    @property
    def frame_times(self):
        return np.array([s.timestamp for s in self.true_states])

    def dead_reckoning(self, start=None):
        start = self.true_states[0].pose if start is None else start
        return chain_poses(start, self.odometry)


def simulate(scenario):
    """Render every sensor stream of a scenario; fully determined by its seed."""
    sc = scenario
    seed = sc.seed
    rngs = np.random.default_rng(seed).spawn(6)
    extent = tuple(float(v) for v in _as_list(sc.get("scene.extent", [0, 0, 200, 200])))
    slope = float(sc.get("scene.slope_deg", 0.0))
    slope_az = float(sc.get("scene.slope_azimuth_deg", 0.0))
    wp = sc.waypoints()
    closed = bool(sc.get("trajectory.closed", True))
    path = np.vstack([wp, wp[:1]]) if closed else wp
    # densify the waypoint polygon for building clearance checks
    dense = np.vstack([np.linspace(a, b, 50) for a, b in zip(path[:-1], path[1:])])
    b = sc.buildings()
    if isinstance(b, int):
        scene = random_scene(b, extent, seed=int(sc.get("scene.seed", seed)), avoid=dense,
                             clearance=float(sc.get("scene.clearance", 8.0)),
                             grid=float(sc.get("als.spacing", 0.5)),
                             max_distance=sc.get("scene.max_distance"),
                             slope_deg=slope, slope_azimuth_deg=slope_az)
    else:
        scene = Scene(extent, tuple(b), slope, slope_az, 0.0, seed)

    ba = np.asarray(_as_list(sc.get("imu.bias_acc", [0.0, 0.0, 0.0])), float)
    bg = np.asarray(_as_list(sc.get("imu.bias_gyro", [0.0, 0.0, 0.0])), float)
    truth = TrajectoryTruth.from_waypoints(
        wp, float(sc.get("trajectory.speed", 8.0)), scene,
        height=float(sc.get("trajectory.height", 1.8)), closed=closed,
        bias_acc=ba, bias_gyro=bg)
    frame_rate = float(sc.get("frame_rate", 10.0))
    true_states = truth.states(frame_rate)

    als = render_als(scene, float(sc.get("als.spacing", 0.5)), float(sc.get("als.sigma_z", 0.0)),
                     rngs[0])
    imu = render_imu(truth, float(sc.get("imu.rate", 200.0)), sc.imu_noise(), rng=rngs[1])
    gnss = []
    if float(sc.get("gnss.rate", 0.0)) > 0:
        gnss = render_gnss(truth, float(sc.get("gnss.rate", 1.0)),
                           _as_list(sc.get("gnss.lever_arm", [0.0, 0.0, 0.0])),
                           float(sc.get("gnss.sigma", 0.5)), sc.dropouts(), rngs[2])
    rel = relative_poses([s.pose for s in true_states])
    odometry = inject_drift(rel, sc.drift(), rngs[3])
    log.info("simulated %s: %d frames, %d ALS points, %d IMU samples, %d GNSS fixes",
             sc.name, len(true_states), len(als), len(imu), len(gnss))
    return SimulatedData(sc, scene, truth, true_states, als, imu, gnss, odometry, sc.lidar())


def lidar_seed(scenario, frame_index):
    """Per-frame RNG seed so any scan can be re-rendered independently."""
    return np.random.SeedSequence([scenario.seed, 7, int(frame_index)])


def lever_arm(scenario):
    return np.asarray(_as_list(scenario.get("gnss.lever_arm", [0.0, 0.0, 0.0])), float)


def initial_pose_error(scenario):
    """Perturbation applied to the first pose when no state is anchored to truth."""
    v = _as_list(scenario.get("init.pose_error", [0.0, 0.0, 0.0, 0.0, 0.0, 0.0]))
    v = np.asarray(v, float)
    return RigidTransform.from_rotvec(np.radians(v[3:6]), v[0:3])
