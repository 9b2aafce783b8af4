"""Façade completion: extrude roof convex hulls down to the ground."""
from __future__ import annotations

import logging

import numpy as np
from scipy.spatial import cKDTree

from ..errors import CollinearRoof
from .pointcloud import Label, PointCloud

log = logging.getLogger(__name__)

FACADE_SPACING = 0.5


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull_2d(xy, tol=1e-9):
    """Counter-clockwise hull vertices (Andrew's monotone chain).

    Collinear points on hull edges are dropped. Raises CollinearRoof when
    the input spans no area.
    """
    pts = np.unique(np.asarray(xy, dtype=float).reshape(-1, 2), axis=0)
    if len(pts) < 3:
        raise CollinearRoof("fewer than three distinct points")
    pts = pts[np.lexsort((pts[:, 1], pts[:, 0]))]

    def half(seq):
        chain = []
        for p in seq:
            while len(chain) >= 2 and _cross(chain[-2], chain[-1], p) <= tol:
                chain.pop()
            chain.append(tuple(p))
        return chain

    lower = half(pts)
    upper = half(pts[::-1])
    hull = np.array(lower[:-1] + upper[:-1])
    if len(hull) < 3:
        raise CollinearRoof("points are collinear")
    return hull


def polygon_area(poly):
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def points_in_convex_polygon(xy, poly, tol=1e-9):
    """Boolean mask of points inside or on a CCW convex polygon."""
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    inside = np.ones(len(xy), dtype=bool)
    for a, b in zip(poly, np.roll(poly, -1, axis=0)):
        cross = (b[0] - a[0]) * (xy[:, 1] - a[1]) - (b[1] - a[1]) * (xy[:, 0] - a[0])
        inside &= cross >= -tol
    return inside


def sample_polygon_edges(poly, spacing):
    """Points along each closed-polygon edge at ``spacing``, starting at each vertex.

    Also returns the outward unit edge normal of every sample (CCW polygon).
    """
    out, normals = [], []
    for a, b in zip(poly, np.roll(poly, -1, axis=0)):
        length = float(np.linalg.norm(b - a))
        n = int(np.ceil(length / spacing - 1e-9))
        s = np.arange(n) * spacing
        out.append(a + np.outer(s / length, b - a))
        normals.append(np.tile([(b[1] - a[1]) / length, (a[0] - b[0]) / length], (n, 1)))
    return np.vstack(out), np.vstack(normals)


class GroundElevation:
    """Ground height lookup: z of the nearest ground point within ``max_dist``.

    Returns NaN where no ground point is close enough; the façade builder then
    falls back to the region's lowest member.
    """

    def __init__(self, ground_points, max_dist=5.0):
        self.ground_points = np.asarray(ground_points, dtype=float).reshape(-1, 3)
        self.max_dist = max_dist
        self._tree = cKDTree(self.ground_points[:, :2]) if len(self.ground_points) else None

    def __call__(self, xy):
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        if self._tree is None:
            return np.full(len(xy), np.nan)
        d, i = self._tree.query(xy, distance_upper_bound=self.max_dist)
        z = np.full(len(xy), np.nan)
        ok = np.isfinite(d)
        z[ok] = self.ground_points[i[ok], 2]
        return z


def _roof_columns(roof_pts, ground_elevation, spacing):
    hull = convex_hull_2d(roof_pts[:, :2])
    base, edge_normals = sample_polygon_edges(hull, spacing)
    # nearest roof member sets the column top (handles sloped roofs)
    _, nn = cKDTree(roof_pts[:, :2]).query(base)
    top = roof_pts[nn, 2]
    ground = np.asarray(ground_elevation(base), dtype=float).reshape(-1)
    ground = np.where(np.isfinite(ground), ground, roof_pts[:, 2].min())
    ground = np.minimum(ground, top)
    counts = np.floor((top - ground) / spacing + 1e-9).astype(int) + 1
    col = np.repeat(np.arange(len(base)), counts)
    step = np.arange(len(col)) - np.repeat(np.cumsum(counts) - counts, counts)
    pts = np.column_stack([base[col], top[col] - spacing * step])
    normals = np.column_stack([edge_normals[col], np.zeros(len(col))])
    return pts, normals


def complete_facades(roofs, ground_elevation, spacing=FACADE_SPACING, return_skipped=False):
    """Synthetic façade points for each roof region.

    The xy-projected convex hull of every roof is sampled every ``spacing``
    metres and a vertical column is emitted from the roof elevation down to
    ``ground_elevation(xy)``, also at ``spacing``. Regions whose projection
    is collinear are skipped and counted.
    """
    pts, normals, skipped = [], [], 0
    for roof in roofs:
        members = roof.points if hasattr(roof, "points") else np.asarray(roof)
        try:
            p, n = _roof_columns(members, ground_elevation, spacing)
        except CollinearRoof:
            skipped += 1
            continue
        pts.append(p)
        normals.append(n)
    if skipped:
        log.warning("skipped %d collinear roof region(s)", skipped)
    if pts:
        cloud = PointCloud(np.vstack(pts), normals=np.vstack(normals))
    else:
        cloud = PointCloud(np.zeros((0, 3)), normals=np.zeros((0, 3)))
    cloud = cloud.with_label(Label.FACADE)
    return (cloud, skipped) if return_skipped else cloud
