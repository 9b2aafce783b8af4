"""Pinhole projection of ALS points into ground images and depth overlays."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..cloud.pointcloud import PointCloud

MIN_DEPTH = 0.1


@dataclass(frozen=True, eq=False)
class CameraModel:
    P: np.ndarray
    width: int
    height: int

    def __post_init__(self):
        P = np.asarray(self.P, dtype=float).reshape(3, 3)
        object.__setattr__(self, "P", P)
        if P[0, 0] <= 0 or P[1, 1] <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= P[0, 2] < self.width and 0 <= P[1, 2] < self.height):
            raise ValueError("principal point outside the image")

    @classmethod
    def from_intrinsics(cls, fx, fy, cx, cy, width, height):
        return cls(np.array([[fx, 0.0, cx], [0.0, fy, cy], [0.0, 0.0, 1.0]]), width, height)


@dataclass(frozen=True, eq=False)
class Projection:
    """Pixels (u, v), camera depth and source index, sorted far to near."""

    uv: np.ndarray
    depth: np.ndarray
    index: np.ndarray

    def __len__(self):
        return len(self.depth)


def project_als_to_image(patch, T, T_ext, cam, min_depth=MIN_DEPTH):
    """Project map-frame points through ``T_ext * T^-1`` and the intrinsics.

    ``T`` is the LiDAR pose in the map frame and ``T_ext`` maps LiDAR to
    camera coordinates. Points closer than ``min_depth`` or falling outside
    ``[0, W) x [0, H)`` are dropped.
    """
    pts = patch.points if isinstance(patch, PointCloud) else np.asarray(patch, float).reshape(-1, 3)
    pc = (T_ext @ T.inverse()).apply(pts)
    z = pc[:, 2]
    front = np.flatnonzero(z > min_depth)
    h = pc[front] @ cam.P.T
    uv = h[:, :2] / h[:, 2:3]
    inside = (uv[:, 0] >= 0) & (uv[:, 0] < cam.width) & (uv[:, 1] >= 0) & (uv[:, 1] < cam.height)
    idx = front[inside]
    uv, depth = uv[inside], z[idx]
    order = np.argsort(-depth, kind="stable")
    return Projection(uv[order], depth[order], idx[order])


def depth_colors(depth, d_min=None, d_max=None):
    """Blue (near) through green and yellow to red (far), as uint8 RGB."""
    depth = np.asarray(depth, dtype=float)
    if len(depth) == 0:
        return np.zeros((0, 3), np.uint8)
    lo = depth.min() if d_min is None else d_min
    hi = depth.max() if d_max is None else d_max
    s = np.clip((depth - lo) / (hi - lo), 0.0, 1.0) if hi > lo else np.zeros_like(depth)
    knots = np.array([0.0, 1 / 3, 2 / 3, 1.0])
    rgb = np.array([[0, 0, 255], [0, 255, 0], [255, 255, 0], [255, 0, 0]], dtype=float)
    out = np.column_stack([np.interp(s, knots, rgb[:, c]) for c in range(3)])
    return np.round(out).astype(np.uint8)


def render_depth_overlay(projection, cam, splat=2):
    """Binary PPM (P6) image of the projected points on black.

    Points are drawn far to near as ``splat`` x ``splat`` squares anchored at
    the pixel containing the projection.
    """
    img = np.zeros((cam.height, cam.width, 3), np.uint8)
    if len(projection):
        colors = depth_colors(projection.depth)
        u0 = np.floor(projection.uv[:, 0]).astype(int)
        v0 = np.floor(projection.uv[:, 1]).astype(int)
        rank = np.arange(len(projection))
        u = np.concatenate([u0 + du for du in range(splat) for dv in range(splat)])
        v = np.concatenate([v0 + dv for du in range(splat) for dv in range(splat)])
        r = np.tile(rank, splat * splat)
        ok = (u < cam.width) & (v < cam.height)
        lin, r = v[ok] * cam.width + u[ok], r[ok]
        # the nearest point (highest rank) owns each pixel
        order = np.lexsort((r, lin))
        last = np.r_[lin[order][1:] != lin[order][:-1], True]
        win = order[last]
        img.reshape(-1, 3)[lin[win]] = colors[r[win]]
    header = f"P6\n{cam.width} {cam.height}\n255\n".encode("ascii")
    return header + img.tobytes()


def read_ppm(data):
    """Decode a P6 buffer written by :func:`render_depth_overlay`."""
    parts = data.split(b"\n", 3)
    if parts[0] != b"P6":
        raise ValueError("not a binary PPM")
    w, h = map(int, parts[1].split())
    return np.frombuffer(parts[3], np.uint8).reshape(h, w, 3)


