"""Voxel-seeded supervoxels and their merging into planar regions."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ..errors import EmptyCloud
from .features import eigen_features, voxel_keys
from .pointcloud import as_cloud

SPATIAL_WEIGHT = 1.0
NORMAL_WEIGHT = 0.5


@dataclass(frozen=True, eq=False)
class Supervoxel:
    indices: np.ndarray
    points: np.ndarray
    centroid: np.ndarray
    normal: np.ndarray
    planarity: float
    verticality: float

    def __len__(self):
        return len(self.indices)


def _mean_normal(normals):
    # sign-align to the dominant axis before averaging
    ref = normals[np.argmax(np.abs(normals).sum(axis=1))] if len(normals) else None
    if ref is None:
        return np.array([0.0, 0.0, 1.0])
    s = np.sign(normals @ ref)
    s[s == 0] = 1.0
    m = (normals * s[:, None]).sum(axis=0)
    norm = np.linalg.norm(m)
    if norm < 1e-12:
        return ref / np.linalg.norm(ref)
    m /= norm
    return m if m[2] >= 0 else -m


def make_supervoxel(cloud, idx):
    """Supervoxel summary of ``cloud`` members ``idx``.

    Planarity is the mean member planarity and the normal the sign-aligned
    mean of member normals; verticality follows from that normal.
    """
    idx = np.asarray(idx, dtype=np.int64)
    pts = cloud.points[idx]
    normal = _mean_normal(cloud.normals[idx])
    return Supervoxel(idx, pts, pts.mean(axis=0), normal,
                      float(cloud.planarity[idx].mean()), float(1.0 - abs(normal[2])))


def _seed_indices(points, resolution):
    keys = voxel_keys(points, resolution)
    _, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    n_vox = inverse.max() + 1
    counts = np.bincount(inverse, minlength=n_vox)
    centroids = np.column_stack([np.bincount(inverse, points[:, k], minlength=n_vox)
                                 for k in range(3)]) / counts[:, None]
    d = np.linalg.norm(points - centroids[inverse], axis=1)
    # member nearest the voxel centroid: sort by (voxel, distance), take first
    order = np.lexsort((d, inverse))
    first = np.ones(len(order), dtype=bool)
    first[1:] = inverse[order][1:] != inverse[order][:-1]
    return np.sort(order[first])


def assign_to_seeds(cloud, seeds, resolution, k=8):
    """Label each point with the seed minimising spatial + normal distance."""
    tree = cKDTree(cloud.points[seeds])
    k = min(k, len(seeds))
    dist, nn = tree.query(cloud.points, k=k)
    if k == 1:
        dist, nn = dist[:, None], nn[:, None]
    dots = np.abs(np.einsum("nj,nkj->nk", cloud.normals, cloud.normals[seeds][nn]))
    cost = SPATIAL_WEIGHT * dist + NORMAL_WEIGHT * (1.0 - dots)
    return nn[np.arange(len(cloud)), np.argmin(cost, axis=1)]


def _adjacent_pairs(points, labels, radius):
    pairs = cKDTree(points).query_pairs(radius, output_type="ndarray")
    if len(pairs) == 0:
        return np.zeros((0, 2), dtype=np.int64)
    a, b = labels[pairs[:, 0]], labels[pairs[:, 1]]
    keep = a != b
    lab = np.sort(np.column_stack([a[keep], b[keep]]), axis=1)
    return np.unique(lab, axis=0) if len(lab) else np.zeros((0, 2), dtype=np.int64)


def _mergeable(sa, sb, max_plane_dist, max_angle_deg):
    cos_ang = abs(float(sa.normal @ sb.normal))
    if cos_ang < np.cos(np.radians(max_angle_deg)):
        return False
    d = sb.centroid - sa.centroid
    return max(abs(sa.normal @ d), abs(sb.normal @ d)) < max_plane_dist


def _plane_fit(pts):
    c = pts.mean(axis=0)
    if len(pts) < 3:
        return c, np.array([0.0, 0.0, 1.0])
    _, _, vt = np.linalg.svd(pts - c, full_matrices=False)
    return c, vt[-1]


def _absorb_boundary_regions(cloud, region, adj, max_plane_dist):
    """Hand points of a region to larger adjacent regions whose planes they fit.

    Boundary supervoxels that straddle two surfaces end up with a blended
    normal and merge with neither side; their points are redistributed
    point-wise when every one of them lies on an adjacent larger plane.
    """
    sizes = np.bincount(region)
    planes = {r: _plane_fit(cloud.points[region == r]) for r in np.unique(region)}
    neighbors = {}
    for a, b in adj:
        if a != b:
            neighbors.setdefault(a, set()).add(b)
            neighbors.setdefault(b, set()).add(a)
    for r in np.argsort(sizes):
        if sizes[r] == 0 or r not in neighbors:
            continue
        big = [q for q in neighbors[r] if sizes[q] > sizes[r]]
        if not big:
            continue
        members = np.flatnonzero(region == r)
        pts = cloud.points[members]
        dist = np.column_stack([np.abs((pts - planes[q][0]) @ planes[q][1]) for q in big])
        if np.all(dist.min(axis=1) < max_plane_dist):
            target = np.asarray(big)[dist.argmin(axis=1)]
            region[members] = target
            for q in set(target.tolist()):
                sizes[q] += int(np.count_nonzero(target == q))
                neighbors[q] |= neighbors[r] - {q}
            sizes[r] = 0
    return region


def supervoxel_segment(cloud, seed_resolution, feature_radius=1.0,
                       adjacency_radius=1.0, max_plane_dist=0.2, max_angle_deg=10.0,
                       return_labels=False):
    """Segment a cloud into merged planar supervoxel regions.

    Seeds are the points closest to each occupied voxel centroid at
    ``seed_resolution``; adjacent supervoxels merge when their centroids
    lie within ``max_plane_dist`` of each other's plane and their normals
    differ by less than ``max_angle_deg``.
    """
    if seed_resolution <= 0:
        raise ValueError("seed_resolution must be positive")
    cloud = as_cloud(cloud)
    if len(cloud) == 0:
        raise EmptyCloud("supervoxel_segment on an empty cloud")
    if cloud.normals is None or cloud.planarity is None:
        cloud = eigen_features(cloud, feature_radius)

    seeds = _seed_indices(cloud.points, seed_resolution)
    owner = assign_to_seeds(cloud, seeds, seed_resolution)
    svs = [make_supervoxel(cloud, np.flatnonzero(owner == s)) for s in range(len(seeds))]

    adj = _adjacent_pairs(cloud.points, owner, adjacency_radius)
    keep = [k for k, (a, b) in enumerate(adj)
            if _mergeable(svs[a], svs[b], max_plane_dist, max_angle_deg)]
    n = len(svs)
    g = coo_matrix((np.ones(len(keep)), (adj[keep, 0], adj[keep, 1])), shape=(n, n))
    _, comp = connected_components(g, directed=False)
    region = comp[owner]

    region_adj = np.unique(np.sort(comp[adj], axis=1), axis=0) if len(adj) else adj
    region = _absorb_boundary_regions(cloud, region, region_adj, max_plane_dist)

    _, region = np.unique(region, return_inverse=True)
    region = region.ravel()
    out = [make_supervoxel(cloud, np.flatnonzero(region == r)) for r in range(region.max() + 1)]
    if return_labels:
        return out, region
    return out


def classify_roofs(supervoxels, min_planarity=0.5, max_verticality=0.3):
    """Supervoxels with planarity > 0.5 and verticality < 0.3 (both strict)."""
    return [s for s in supervoxels
            if s.planarity > min_planarity and s.verticality < max_verticality]


class SupervoxelSegmenter(BaseEstimator):
    """``fit`` stores ``segments_`` and per-point region ids in ``labels_``."""

    def __init__(self, seed_resolution=2.0, feature_radius=1.0, adjacency_radius=1.0,
                 max_plane_dist=0.2, max_angle_deg=10.0):
        self.seed_resolution = seed_resolution
        self.feature_radius = feature_radius
        self.adjacency_radius = adjacency_radius
        self.max_plane_dist = max_plane_dist
        self.max_angle_deg = max_angle_deg

    def fit(self, X, y=None):
        self.segments_, self.labels_ = supervoxel_segment(
            X, self.seed_resolution, feature_radius=self.feature_radius,
            adjacency_radius=self.adjacency_radius, max_plane_dist=self.max_plane_dist,
            max_angle_deg=self.max_angle_deg, return_labels=True)
        return self

    def fit_predict(self, X, y=None):
        return self.fit(X).labels_

    def roof_segments(self, min_planarity=0.5, max_verticality=0.3):
        check_is_fitted(self, "segments_")
        return classify_roofs(self.segments_, min_planarity, max_verticality)
