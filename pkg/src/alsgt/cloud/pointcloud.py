from __future__ import annotations

from dataclasses import dataclass, fields, replace
from enum import IntEnum
from functools import cached_property

import numpy as np
from scipy.spatial import cKDTree
from sklearn.utils import check_array


class Label(IntEnum):
    OTHER = 0
    GROUND = 1
    ROOF = 2
    FACADE = 3


_ATTRS = ("labels", "normals", "planarity", "verticality")


def _readonly(a):
    if a is not None:
        a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Points plus optional per-point attributes.

    ``labels`` holds :class:`Label` values, ``normals`` unit vectors and
    ``planarity``/``verticality`` the local shape features in [0, 1].
    """

    points: np.ndarray
    labels: np.ndarray | None = None
    normals: np.ndarray | None = None
    planarity: np.ndarray | None = None
    verticality: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.size == 0 or pts.shape == (3,):
            pts = pts.reshape(-1, 3)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"points must be an (N, 3) array, got shape {pts.shape}")
        object.__setattr__(self, "points", _readonly(np.array(pts)))
        n = len(pts)
        for name in _ATTRS:
            val = getattr(self, name)
            if val is None:
                continue
            dtype = np.int8 if name == "labels" else float
            val = np.array(val, dtype=dtype)
            if name == "normals":
                val = val.reshape(-1, 3)
            if len(val) != n:
                raise ValueError(f"{name} has {len(val)} entries, expected {n}")
            if name in ("planarity", "verticality") and n and (
                    val.min() < 0.0 or val.max() > 1.0):
                raise ValueError(f"{name} outside [0, 1]")
            object.__setattr__(self, name, _readonly(val))

    def __len__(self):
        return len(self.points)

    @classmethod
    def empty(cls):
        return cls(np.zeros((0, 3)))

    @cached_property
    def tree(self):
        return cKDTree(self.points)

    def has_normals(self):
        return self.normals is not None

    def subset(self, idx):
        idx = np.asarray(idx)
        kw = {name: (None if getattr(self, name) is None else getattr(self, name)[idx])
              for name in _ATTRS}
        return PointCloud(self.points[idx], **kw)

    def with_attrs(self, **changes):
        return replace(self, **changes)

    def with_label(self, label):
        return replace(self, labels=np.full(len(self), int(label), dtype=np.int8))

    def select(self, *labels):
        if self.labels is None:
            raise ValueError("cloud has no labels")
        return self.subset(np.flatnonzero(np.isin(self.labels, [int(l) for l in labels])))

    def transformed(self, T):
        normals = None if self.normals is None else self.normals @ T.rotation.T
        return replace(self, points=T.apply(self.points), normals=normals)

    @staticmethod
    def concat(clouds):
        clouds = [c for c in clouds if len(c)]
        if not clouds:
            return PointCloud.empty()
        pts = np.vstack([c.points for c in clouds])
        kw = {}
        for f in fields(PointCloud):
            if f.name == "points":
                continue
            vals = [getattr(c, f.name) for c in clouds]
            kw[f.name] = None if any(v is None for v in vals) else np.concatenate(vals)
        return PointCloud(pts, **kw)


def as_points(X):
    """Validate an (N, 3) array or pass through the points of a PointCloud."""
    if isinstance(X, PointCloud):
        return X.points
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 3)
    X = check_array(X, dtype=float, ensure_min_samples=0)
    if X.shape[1] != 3:
        raise ValueError(f"expected (N, 3) points, got {X.shape}")
    return X


def as_cloud(X):
    if isinstance(X, PointCloud):
        return X
    return PointCloud(as_points(X))
