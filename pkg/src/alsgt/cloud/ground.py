"""Ground extraction: planarity/verticality seeding followed by RANSAC."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ..errors import DegenerateScan, EmptyCloud
from .features import eigen_features
from .pointcloud import Label, PointCloud, as_cloud


@dataclass(frozen=True, eq=False)
class Plane:
    """Plane ``normal . p + offset = 0`` with a unit normal."""

    normal: np.ndarray
    offset: float
    inliers: np.ndarray

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        norm = np.linalg.norm(n)
        object.__setattr__(self, "normal", n / norm)
        object.__setattr__(self, "offset", float(self.offset) / norm)
        object.__setattr__(self, "inliers", np.asarray(self.inliers, dtype=np.int64))

    def distance(self, points):
        return np.asarray(points, dtype=float) @ self.normal + self.offset

    def height(self, xy):
        """Plane elevation above map xy; undefined for vertical planes."""
        xy = np.asarray(xy, dtype=float)
        n = self.normal
        return -(xy @ n[:2] + self.offset) / n[2]


def fit_plane_lsq(points):
    """Total least squares plane through points (normal = smallest principal axis)."""
    c = points.mean(axis=0)
    _, _, vt = np.linalg.svd(points - c, full_matrices=False)
    n = vt[-1]
    return n, -float(n @ c)


def ground_seeds(cloud, quantile=0.1):
    """Indices in the top planarity decile and the bottom verticality decile."""
    hi = np.quantile(cloud.planarity, 1.0 - quantile)
    lo = np.quantile(cloud.verticality, quantile)
    return np.flatnonzero((cloud.planarity >= hi) & (cloud.verticality <= lo))


def ransac_plane(points, threshold, n_iter, rng):
    """Best 3-point hypothesis by inlier count, refined by least squares."""
    n_pts = len(points)
    best_count, best = -1, None
    for _ in range(n_iter):
        sample = points[rng.choice(n_pts, 3, replace=False)]
        n = np.cross(sample[1] - sample[0], sample[2] - sample[0])
        norm = np.linalg.norm(n)
        if norm < 1e-12:
            continue
        n /= norm
        d = -n @ sample[0]
        count = int(np.count_nonzero(np.abs(points @ n + d) < threshold))
        if count > best_count:
            best_count, best = count, (n, d)
    if best is None:
        raise DegenerateScan("all RANSAC samples were degenerate")
    n, d = best
    for _ in range(3):
        mask = np.abs(points @ n + d) < threshold
        if mask.sum() < 3:
            break
        n, d = fit_plane_lsq(points[mask])
    return n, d


def segment_ground(scan, threshold=0.15, n_iter=200, seed_quantile=0.1,
                   feature_radius=1.0, min_seeds=50, random_state=0, max_tilt_deg=30.0):
    """Fit the ground plane of a gravity-aligned scan.

    Returns ``(plane, ground_indices)`` where the ground set is every scan
    point within ``threshold`` of the plane. Sampling only draws from the
    seed points.
    """
    scan = as_cloud(scan)
    if len(scan) == 0:
        raise EmptyCloud("segment_ground on an empty scan")
    if scan.planarity is None or scan.verticality is None:
        scan = eigen_features(scan, feature_radius)
    seeds = ground_seeds(scan, seed_quantile)
    if len(seeds) < min_seeds:
        raise DegenerateScan(f"only {len(seeds)} ground seeds (< {min_seeds})")
    rng = np.random.default_rng(random_state)
    n, d = ransac_plane(scan.points[seeds], threshold, n_iter, rng)
    if n[2] < 0:
        n, d = -n, -d
    if n[2] < np.cos(np.radians(max_tilt_deg)):
        # seeds came from a wall or similar: no horizontal structure in the scan
        raise DegenerateScan(f"best seed plane is tilted {np.degrees(np.arccos(n[2])):.1f} deg")
    ground = np.flatnonzero(np.abs(scan.points @ n + d) < threshold)
    return Plane(n, d, ground), ground


def label_ground(scan, **kwargs):
    """Copy of ``scan`` labelled GROUND/OTHER by :func:`segment_ground`."""
    scan = as_cloud(scan)
    _, idx = segment_ground(scan, **kwargs)
    labels = np.full(len(scan), int(Label.OTHER), dtype=np.int8)
    labels[idx] = int(Label.GROUND)
    return scan.with_attrs(labels=labels)


class GroundSegmenter(BaseEstimator):
    """Estimator wrapper around :func:`segment_ground`.

    ``fit`` estimates ``plane_``; ``predict`` marks points within
    ``threshold`` of it.
    """

    def __init__(self, threshold=0.15, n_iter=200, seed_quantile=0.1,
                 feature_radius=1.0, min_seeds=50, random_state=0, max_tilt_deg=30.0):
        self.threshold = threshold
        self.n_iter = n_iter
        self.seed_quantile = seed_quantile
        self.feature_radius = feature_radius
        self.min_seeds = min_seeds
        self.random_state = random_state
        self.max_tilt_deg = max_tilt_deg

    def fit(self, X, y=None):
        self.plane_, idx = segment_ground(
            X, threshold=self.threshold, n_iter=self.n_iter,
            seed_quantile=self.seed_quantile, feature_radius=self.feature_radius,
            min_seeds=self.min_seeds, random_state=self.random_state,
            max_tilt_deg=self.max_tilt_deg)
        self.n_ground_ = len(idx)
        return self

    def predict(self, X):
        check_is_fitted(self, "plane_")
        pts = X.points if isinstance(X, PointCloud) else np.asarray(X, dtype=float)
        return np.abs(self.plane_.distance(pts)) < self.threshold

    def fit_predict(self, X, y=None):
        return self.fit(X).predict(X)
