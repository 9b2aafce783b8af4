"""Trajectory, checkpoint, relative-pose and retrieval metrics."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch

RECALL_RADIUS = 20.0


def euler_xyz(R):
    """Fixed-axis XYZ angles ``(a, b, c)`` with ``R = Rz(c) Ry(b) Rx(a)``."""
    R = np.asarray(R, dtype=float)
    b = np.arcsin(np.clip(-R[2, 0], -1.0, 1.0))
    a = np.arctan2(R[2, 1], R[2, 2])
    c = np.arctan2(R[1, 0], R[0, 0])
    return np.array([a, b, c])


def rre_rte(T_gt, T_e):
    """Relative rotation error (degrees, sum of |Euler angles|) and translation error (m)."""
    r = euler_xyz(T_gt.rotation.T @ T_e.rotation)
    rre = float(np.degrees(np.abs(r).sum()))
    rte = float(np.linalg.norm(T_gt.translation - T_e.translation))
    return rre, rte


def position_errors(estimate, truth):
    est = np.array([getattr(T, "translation", T) for T in estimate], dtype=float)
    ref = np.array([getattr(T, "translation", T) for T in truth], dtype=float)
    if est.shape != ref.shape:
        raise DimensionMismatch(f"{len(est)} estimated vs {len(ref)} reference poses")
    return np.linalg.norm(est - ref, axis=1)


def ate(estimate, truth):
    """Absolute position error statistics in the common map frame (no alignment)."""
    e = position_errors(estimate, truth)
    return {"rmse": float(np.sqrt(np.mean(e ** 2))), "mean": float(e.mean()),
            "max": float(e.max()), "final": float(e[-1])}


@dataclass(frozen=True)
class CheckpointPair:
    """An MLS point (sensor frame of ``frame``) and its ALS counterpart (map frame)."""

    frame: int
    mls_point: tuple
    als_point: tuple

    def __post_init__(self):
        if not (np.all(np.isfinite(self.mls_point)) and np.all(np.isfinite(self.als_point))):
            raise ValueError("checkpoint coordinates must be finite")


def checkpoint_errors(pairs, trajectory, assignment=None):
    """Distance between each transformed MLS checkpoint and its ALS point.

    ``assignment`` optionally remaps a pair's frame (e.g. to a submap anchor).
    Returns ``{"avg", "min", "max", "count"}``.
    """
    pairs = list(pairs)
    if not pairs:
        return {"avg": float("nan"), "min": float("nan"), "max": float("nan"), "count": 0}
    errs = []
    for p in pairs:
        k = assignment[p.frame] if assignment is not None else p.frame
        q = trajectory[k].apply(np.asarray(p.mls_point, float))
        errs.append(np.linalg.norm(q - np.asarray(p.als_point, float)))
    errs = np.array(errs)
    return {"avg": float(errs.mean()), "min": float(errs.min()), "max": float(errs.max()),
            "count": len(errs)}


@dataclass(frozen=True, eq=False)
class EmbeddingSet:
    ids: np.ndarray
    vectors: np.ndarray
    positions: np.ndarray

    def __post_init__(self):
        ids = np.asarray(self.ids)
        vec = np.asarray(self.vectors, dtype=float)
        pos = np.asarray(self.positions, dtype=float)
        if vec.ndim != 2:
            raise DimensionMismatch("vectors must be a 2-D array")
        if not (len(ids) == len(vec) == len(pos)):
            raise DimensionMismatch("ids, vectors and positions differ in length")
        if len(vec) and np.abs(np.linalg.norm(vec, axis=1) - 1.0).max() > 1e-6:
            raise ValueError("embedding vectors must have unit norm")
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "vectors", vec)
        object.__setattr__(self, "positions", pos)

    def __len__(self):
        return len(self.ids)

    @property
    def dim(self):
        return self.vectors.shape[1]

    @classmethod
    def normalized(cls, ids, vectors, positions):
        v = np.asarray(vectors, float)
        return cls(ids, v / np.linalg.norm(v, axis=1, keepdims=True), positions)

    def save(self, path):
        np.savez(path, ids=self.ids, vectors=self.vectors, positions=self.positions)

    @classmethod
    def load(cls, path):
        with np.load(Path(path), allow_pickle=False) as z:
            return cls(z["ids"], z["vectors"], z["positions"])


def retrieve(queries, database, k, chunk=256):
    """Top-``k`` database indices per query by descending inner product.

    Ties are broken by lower database index so the ranking is reproducible.
    """
    if queries.dim != database.dim:
        raise DimensionMismatch(f"query dim {queries.dim} != database dim {database.dim}")
    k = min(int(k), len(database))
    out = np.empty((len(queries), k), dtype=np.int64)
    for s in range(0, len(queries), chunk):
        scores = queries.vectors[s:s + chunk] @ database.vectors.T
        out[s:s + chunk] = np.argsort(-scores, axis=1, kind="stable")[:, :k]
    return out


def recall_at_k(queries, database, ks=(1, 5, 20), radius=RECALL_RADIUS):
    """Fraction of queries with a true neighbour (within ``radius``) in their top K."""
    ks = sorted({int(k) for k in ks})
    if queries.positions.shape[1:] != database.positions.shape[1:]:
        raise DimensionMismatch("query and database positions differ in dimension")
    if len(queries) == 0:
        return {k: float("nan") for k in ks}
    top = retrieve(queries, database, max(ks))
    d = np.linalg.norm(database.positions[top] - queries.positions[:, None, :], axis=2)
    hit = np.cumsum(d <= radius, axis=1) > 0
    return {k: float(hit[:, min(k, hit.shape[1]) - 1].mean()) for k in ks}
