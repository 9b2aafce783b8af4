"""Synthetic ALS, MLS, IMU, GNSS and odometry streams."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..cloud.pointcloud import Label, PointCloud
from ..geom import RigidTransform, so3_exp
from ..preint import GRAVITY, ImuBatch


def render_als(scene, spacing=0.5, sigma_z=0.0, rng=None):
    """Top-down raster of the scene: rooftops plus ground outside footprints.

    Grid nodes sit at ``extent_min + k * spacing`` (half-open extent); nodes
    on a footprint outline belong to the roof. No façade points are emitted.
    """
    x0, y0, x1, y1 = scene.extent
    xs = x0 + spacing * np.arange(int(round((x1 - x0) / spacing)))
    ys = y0 + spacing * np.arange(int(round((y1 - y0) / spacing)))
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    xy = np.column_stack([gx.ravel(), gy.ravel()])
    z = scene.ground_z(xy)
    labels = np.full(len(xy), int(Label.GROUND), dtype=np.int8)
    for b in scene.buildings:
        inside = b.contains_xy(xy)
        z[inside] = b.top
        labels[inside] = int(Label.ROOF)
    if sigma_z > 0:
        rng = np.random.default_rng(rng)
        z = z + rng.normal(0.0, sigma_z, len(z))
    return PointCloud(np.column_stack([xy, z]), labels=labels)


@dataclass(frozen=True)
class LidarConfig:
    n_rings: int = 32
    min_elevation_deg: float = -30.67
    max_elevation_deg: float = 10.67
    azimuth_step_deg: float = 0.2
    max_range: float = 80.0
    min_range: float = 1.0
    range_sigma: float = 0.02


def lidar_directions(cfg):
    el = np.radians(np.linspace(cfg.min_elevation_deg, cfg.max_elevation_deg, cfg.n_rings))
    az = np.radians(np.arange(0.0, 360.0, cfg.azimuth_step_deg))
    E, A = np.meshgrid(el, az, indexing="ij")
    return np.column_stack([(np.cos(E) * np.cos(A)).ravel(), (np.cos(E) * np.sin(A)).ravel(),
                            np.sin(E).ravel()])


def cast_rays(scene, origin, dirs, max_range=np.inf):
    """First hit distance and label per ray (``inf`` / OTHER when nothing is hit).

    Buildings whose footprint lies farther than ``max_range`` are not tested.
    """
    o = np.asarray(origin, dtype=float)
    gx, gy = scene.gradient
    denom = dirs[:, 2] - gx * dirs[:, 0] - gy * dirs[:, 1]
    num = scene.z0 + gx * o[0] + gy * o[1] - o[2]
    with np.errstate(divide="ignore", invalid="ignore"):
        t_ground = np.where(denom != 0, num / denom, np.inf)
    t_ground[t_ground <= 0] = np.inf
    best = t_ground
    label = np.where(np.isfinite(best), int(Label.GROUND), int(Label.OTHER)).astype(np.int8)
    boxes = [b for b in scene.buildings
             if np.hypot(max(b.xmin - o[0], 0.0, o[0] - b.xmax),
                         max(b.ymin - o[1], 0.0, o[1] - b.ymax)) <= max_range]
    if boxes:
        lo = np.array([[b.xmin, b.ymin, scene.building_base(b) - 5.0] for b in boxes])
        hi = np.array([[b.xmax, b.ymax, b.top] for b in boxes])
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / dirs
            t1 = (lo[None] - o) * inv[:, None, :]
            t2 = (hi[None] - o) * inv[:, None, :]
        t1 = np.nan_to_num(t1, nan=-np.inf)
        t2 = np.nan_to_num(t2, nan=np.inf)
        tmin = np.minimum(t1, t2)
        tmax = np.maximum(t1, t2)
        t_near = tmin.max(axis=2)
        t_far = tmax.min(axis=2)
        hit = (t_near <= t_far) & (t_near > 0)
        t_box = np.where(hit, t_near, np.inf)
        k = t_box.argmin(axis=1)
        rows = np.arange(len(dirs))
        tb = t_box[rows, k]
        axis = tmin[rows, k].argmax(axis=1)
        closer = tb < best
        best = np.where(closer, tb, best)
        box_label = np.where(axis == 2, int(Label.ROOF), int(Label.FACADE))
        label = np.where(closer, box_label, label).astype(np.int8)
    return best, label


def render_mls_scan(scene, pose, cfg=None, rng=None):
    """Ray-cast one spinning-LiDAR sweep; points are returned in the sensor frame."""
    cfg = cfg or LidarConfig()
    rng = np.random.default_rng(rng)
    dirs = lidar_directions(cfg)
    world_dirs = dirs @ pose.rotation.T
    t, labels = cast_rays(scene, pose.translation, world_dirs, cfg.max_range + 1.0)
    keep = np.isfinite(t)
    r = t[keep] + rng.normal(0.0, cfg.range_sigma, int(keep.sum())) if cfg.range_sigma > 0 else t[keep]
    ok = (r <= cfg.max_range) & (r >= cfg.min_range)
    pts = dirs[keep][ok] * r[ok][:, None]
    return PointCloud(pts, labels=labels[keep][ok])


@dataclass(frozen=True)
class ImuNoise:
    acc_noise: float = 0.0   # m/s^2/sqrt(Hz)
    gyro_noise: float = 0.0  # rad/s/sqrt(Hz)


def render_imu(truth, rate, noise=None, bias_acc=None, bias_gyro=None, rng=None,
               gravity=GRAVITY, t_end=None):
    """Accelerometer (specific force) and gyro samples from the analytic truth.

    Biases default to the ones stored on ``truth``. White noise has standard
    deviation ``density * sqrt(rate)`` per sample.
    """
    noise = noise or ImuNoise()
    rng = np.random.default_rng(rng)
    t_end = truth.duration if t_end is None else t_end
    n = int(np.floor(t_end * rate + 1e-9))
    ts = np.arange(n + 1) / float(rate)
    ba = truth.bias_acc if bias_acc is None else np.asarray(bias_acc, float)
    bg = truth.bias_gyro if bias_gyro is None else np.asarray(bias_gyro, float)
    acc = truth.specific_force_body(ts, gravity) + ba
    gyro = truth.angular_velocity_body(ts) + bg
    if noise.acc_noise > 0:
        acc = acc + rng.normal(0.0, noise.acc_noise * np.sqrt(rate), acc.shape)
    if noise.gyro_noise > 0:
        gyro = gyro + rng.normal(0.0, noise.gyro_noise * np.sqrt(rate), gyro.shape)
    return ImuBatch(ts, gyro, acc)


@dataclass(frozen=True)
class GnssFix:
    timestamp: float
    position: np.ndarray
    sigma: float


def render_gnss(truth, rate=1.0, lever_arm=(0.0, 0.0, 0.0), sigma=0.5, dropouts=(), rng=None):
    """Antenna position fixes at ``rate`` Hz; no fix inside any dropout interval."""
    rng = np.random.default_rng(rng)
    lever = np.asarray(lever_arm, dtype=float)
    n = int(np.floor(truth.duration * rate + 1e-9))
    fixes = []
    for k in range(n + 1):
        t = k / float(rate)
        noise = rng.normal(0.0, sigma, 3) if sigma > 0 else np.zeros(3)
        if any(a <= t <= b for a, b in dropouts):
            continue
        T = truth.pose(t)
        fixes.append(GnssFix(t, T.translation + T.rotation @ lever + noise, float(sigma)))
    return fixes


@dataclass(frozen=True)
class DriftConfig:
    """Odometry corruption.

    ``trans``: scale error as a fraction of distance travelled (sign drawn per
    run) plus white noise of ``trans_noise`` times the step length.
    ``yaw``/``roll_pitch``: random-walk intensity in degrees per sqrt(metre).
    """

    trans: float = 0.003
    trans_noise: float = 0.001
    yaw: float = 0.01
    roll_pitch: float = 0.002


def relative_poses(poses):
    return [a.inverse() @ b for a, b in zip(poses[:-1], poses[1:])]


def chain_poses(start, relatives):
    out = [start]
    for rel in relatives:
        out.append(out[-1] @ rel)
    return out


def inject_drift(relatives, cfg=None, rng=None):
    """Corrupt true relative poses with scale error and heading random walk."""
    cfg = cfg or DriftConfig()
    rng = np.random.default_rng(rng)
    scale = cfg.trans * rng.choice([-1.0, 1.0])
    out = []
    for rel in relatives:
        d = float(np.linalg.norm(rel.translation))
        t = rel.translation * (1.0 + scale) + rng.normal(0.0, cfg.trans_noise * d, 3)
        sd = np.sqrt(d)
        dphi = np.radians([rng.normal(0.0, cfg.roll_pitch * sd), rng.normal(0.0, cfg.roll_pitch * sd),
                           rng.normal(0.0, cfg.yaw * sd)])
        out.append(RigidTransform(rel.rotation @ so3_exp(dphi), t))
    return out
