"""Box-building urban scenes over flat or inclined ground."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Box:
    """Axis-aligned building: footprint ``[xmin, xmax] x [ymin, ymax]`` and roof height z."""

    xmin: float
    ymin: float
    xmax: float
    ymax: float
    top: float

    @property
    def footprint(self):
        return np.array([[self.xmin, self.ymin], [self.xmax, self.ymin],
                         [self.xmax, self.ymax], [self.xmin, self.ymax]])

    def contains_xy(self, xy, margin=0.0):
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        return ((xy[:, 0] >= self.xmin - margin) & (xy[:, 0] <= self.xmax + margin)
                & (xy[:, 1] >= self.ymin - margin) & (xy[:, 1] <= self.ymax + margin))

    def overlaps(self, other, gap=0.0):
        return not (self.xmax + gap <= other.xmin or other.xmax + gap <= self.xmin
                    or self.ymax + gap <= other.ymin or other.ymax + gap <= self.ymin)


@dataclass(frozen=True)
class Scene:
    """Ground ``z = z0 + tan(slope) * (x cos(az) + y sin(az))`` plus box buildings."""

    extent: tuple = (0.0, 0.0, 200.0, 200.0)
    buildings: tuple = ()
    slope_deg: float = 0.0
    slope_azimuth_deg: float = 0.0
    z0: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "buildings", tuple(self.buildings))
        for k, a in enumerate(self.buildings):
            if a.xmax <= a.xmin or a.ymax <= a.ymin:
                raise ValueError(f"building {k} has an empty footprint")
            if a.top <= float(self.ground_z(a.footprint).max()):
                raise ValueError(f"building {k} has non-positive height")
            for b in self.buildings[k + 1:]:
                if a.overlaps(b):
                    raise ValueError("buildings overlap")

    @property
    def gradient(self):
        g = np.tan(np.radians(self.slope_deg))
        az = np.radians(self.slope_azimuth_deg)
        return np.array([g * np.cos(az), g * np.sin(az)])

    def ground_z(self, xy):
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        return self.z0 + xy @ self.gradient

    def ground_normal(self):
        gx, gy = self.gradient
        n = np.array([-gx, -gy, 1.0])
        return n / np.linalg.norm(n)

    def building_base(self, box):
        """Lowest ground elevation under a footprint."""
        return float(self.ground_z(box.footprint).min())


def building_height(scene, box):
    return box.top - scene.building_base(box)


def _dist_to_polyline(xy, poly):
    a, b = poly[:-1], poly[1:]
    ab = b - a
    den = np.maximum(np.einsum("kj,kj->k", ab, ab), 1e-12)
    t = np.clip(np.einsum("kj,kj->k", xy[None, :] - a, ab) / den, 0, 1)
    proj = a + t[:, None] * ab
    return float(np.linalg.norm(proj - xy, axis=1).min())


def random_scene(n_buildings, extent=(0.0, 0.0, 200.0, 200.0), seed=0, avoid=None,
                 clearance=6.0, size_range=(8.0, 24.0), height_range=(8.0, 30.0),
                 gap=4.0, grid=0.5, slope_deg=0.0, slope_azimuth_deg=0.0, max_distance=None,
                 max_tries=20000):
    """Place non-overlapping boxes snapped to ``grid``.

    ``avoid`` is an (N, 2) polyline (usually the trajectory) that every
    footprint keeps ``clearance`` metres away from; with ``max_distance``
    set, footprints must also come within that distance of it. Snapping footprints to
    the ALS raster puts roof points exactly on the building outline.
    """
    rng = np.random.default_rng(seed)
    x0, y0, x1, y1 = extent
    boxes = []
    tries = 0
    scene = Scene(extent, (), slope_deg, slope_azimuth_deg, 0.0, seed)
    while len(boxes) < n_buildings:
        tries += 1
        if tries > max_tries:
            raise RuntimeError(f"could only place {len(boxes)} of {n_buildings} buildings")
        w, h = rng.uniform(*size_range, size=2)
        cx = rng.uniform(x0 + 2 + w / 2, x1 - 2 - w / 2)
        cy = rng.uniform(y0 + 2 + h / 2, y1 - 2 - h / 2)
        snap = lambda v: grid * np.round(v / grid)
        xmin, xmax = snap(cx - w / 2), snap(cx + w / 2)
        ymin, ymax = snap(cy - h / 2), snap(cy + h / 2)
        base = float(scene.ground_z(np.array([[xmin, ymin], [xmax, ymin], [xmax, ymax], [xmin, ymax]])).max())
        cand = Box(xmin, ymin, xmax, ymax, snap(base + rng.uniform(*height_range)))
        if any(cand.overlaps(b, gap) for b in boxes):
            continue
        if avoid is not None:
            # distance from the footprint to the polyline, sampled on the outline
            outline = np.vstack([np.linspace(c, d, 12) for c, d in
                                 zip(cand.footprint, np.roll(cand.footprint, -1, axis=0))])
            d = np.array([_dist_to_polyline(p, avoid) for p in outline])
            if d.min() < clearance:
                continue
            if max_distance is not None and d.min() > max_distance:
                continue
            if cand.contains_xy(avoid).any():
                continue
        boxes.append(cand)
    return Scene(extent, tuple(boxes), slope_deg, slope_azimuth_deg, 0.0, seed)
