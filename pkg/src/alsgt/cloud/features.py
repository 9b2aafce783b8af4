"""Eigenvalue shape features and voxel-grid downsampling."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree
from sklearn.base import BaseEstimator, TransformerMixin

from ..errors import EmptyCloud
from .pointcloud import PointCloud, as_cloud, as_points

MIN_NEIGHBORS = 3


def neighbor_matrix(points, radius, query=None):
    """Binary CSR matrix A with A[i, j] = 1 iff |query_i - points_j| <= radius."""
    points = np.asarray(points, dtype=float)
    query = points if query is None else np.asarray(query, dtype=float)
    t_pts = cKDTree(points)
    t_q = t_pts if query is points else cKDTree(query)
    pairs = t_q.sparse_distance_matrix(t_pts, radius, output_type="ndarray")
    data = np.ones(len(pairs))
    A = sp.csr_matrix((data, (pairs["i"], pairs["j"])), shape=(len(query), len(points)))
    # self pairs at distance 0 are kept by cKDTree, duplicates are summed
    A.data[:] = 1.0
    return A


def local_covariances(points, radius, query=None):
    """Covariance of the radius neighbourhood of every query point.

    Returns ``(cov, counts, means)`` with cov shaped (M, 3, 3). Moments are
    accumulated with sparse products, so no per-point Python loop.
    """
    points = np.asarray(points, dtype=float)
    origin = points.mean(axis=0) if len(points) else np.zeros(3)
    P = points - origin
    Q = None if query is None else np.asarray(query, dtype=float) - origin
    A = neighbor_matrix(P, radius, Q)
    counts = np.asarray(A.sum(axis=1)).ravel()
    safe = np.maximum(counts, 1.0)[:, None]
    mean = (A @ P) / safe
    outer = (P[:, :, None] * P[:, None, :]).reshape(-1, 9)
    second = (A @ outer) / safe
    cov = second.reshape(-1, 3, 3) - mean[:, :, None] * mean[:, None, :]
    return cov, counts.astype(int), mean + origin


def eigen_decompose(cov):
    """Eigenvalues sorted descending (l1 >= l2 >= l3) and matching eigenvectors."""
    w, v = np.linalg.eigh(cov)
    w = np.clip(w[:, ::-1], 0.0, None)
    return w, v[:, :, ::-1]


def features_from_cov(cov, counts, min_neighbors=MIN_NEIGHBORS):
    w, v = eigen_decompose(cov)
    l1, l2, l3 = w[:, 0], w[:, 1], w[:, 2]
    with np.errstate(invalid="ignore", divide="ignore"):
        planarity = np.where(l1 > 0, (l2 - l3) / l1, 0.0)
    normals = v[:, :, 2].copy()
    flip = normals[:, 2] < 0
    normals[flip] *= -1.0
    verticality = 1.0 - np.abs(normals[:, 2])
    bad = counts < min_neighbors
    planarity[bad] = 0.0
    verticality[bad] = 1.0
    normals[bad] = (1.0, 0.0, 0.0)
    return (np.clip(planarity, 0.0, 1.0), np.clip(verticality, 0.0, 1.0), normals, w)


def eigen_features(cloud, radius):
    """Fill normals, planarity and verticality from radius neighbourhoods.

    Points with fewer than three neighbours (themselves included) get the
    sentinel planarity 0 / verticality 1.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    cloud = as_cloud(cloud)
    if len(cloud) == 0:
        raise EmptyCloud("eigen_features on an empty cloud")
    cov, counts, _ = local_covariances(cloud.points, radius)
    planarity, verticality, normals, _ = features_from_cov(cov, counts)
    return cloud.with_attrs(normals=normals, planarity=planarity, verticality=verticality)


def voxel_keys(points, resolution):
    return np.floor(np.asarray(points) / resolution).astype(np.int64)


def voxel_downsample(cloud, resolution):
    """One centroid per occupied voxel; labels are kept by majority vote."""
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    cloud = as_cloud(cloud)
    if len(cloud) == 0:
        return PointCloud.empty()
    keys = voxel_keys(cloud.points, resolution)
    _, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.ravel()
    n = len(first)
    # keep voxel order stable with respect to first occurrence
    order = np.argsort(first)
    rank = np.empty(n, dtype=np.int64)
    rank[order] = np.arange(n)
    inverse = rank[inverse]
    counts = np.bincount(inverse, minlength=n).astype(float)
    pts = np.column_stack([np.bincount(inverse, cloud.points[:, k], minlength=n)
                           for k in range(3)]) / counts[:, None]
    labels = None
    if cloud.labels is not None:
        n_lab = int(cloud.labels.max()) + 1
        votes = np.zeros((n, n_lab), dtype=np.int64)
        np.add.at(votes, (inverse, cloud.labels.astype(np.int64)), 1)
        labels = votes.argmax(axis=1)
    return PointCloud(pts, labels=labels)


class EigenFeatureExtractor(TransformerMixin, BaseEstimator):
    """Transformer returning ``[planarity, verticality, nx, ny, nz]`` per point."""

    def __init__(self, radius=1.0):
        self.radius = radius

    def fit(self, X, y=None):
        as_points(X)
        return self

    def transform(self, X):
        c = eigen_features(as_points(X), self.radius)
        return np.column_stack([c.planarity, c.verticality, c.normals])


class VoxelDownsampler(TransformerMixin, BaseEstimator):
    def __init__(self, resolution=0.5):
        self.resolution = resolution

    def fit(self, X, y=None):
        as_points(X)
        return self

    def transform(self, X):
        return voxel_downsample(as_points(X), self.resolution).points
