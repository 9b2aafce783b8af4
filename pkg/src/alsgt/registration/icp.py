"""Point-to-plane ICP."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ..cloud.features import eigen_features
from ..cloud.pointcloud import PointCloud, as_cloud
from ..errors import NoCorrespondences
from ..geom import RigidTransform, orthonormalize, so3_exp


@dataclass(frozen=True)
class ICPConfig:
    max_correspondence: float = 1.0
    normal_gate_deg: float = 30.0
    max_iter: int = 50
    tol: float = 1e-4
    min_inlier_fraction: float = 0.4
    max_rms: float = 0.3
    normal_radius: float = 1.0


@dataclass(frozen=True, eq=False)
class RegistrationResult:
    transform: RigidTransform
    rms: float
    inlier_fraction: float
    converged: bool
    iterations: int = 0
    rms_trace: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if not 0.0 <= self.inlier_fraction <= 1.0:
            raise ValueError("inlier fraction outside [0, 1]")
        if self.rms < 0:
            raise ValueError("negative rms")


def _correspondences(src_pts, src_normals, target, cfg):
    dist, nn = target.tree.query(src_pts, distance_upper_bound=cfg.max_correspondence)
    ok = np.isfinite(dist)
    if src_normals is not None:
        cos_gate = np.cos(np.radians(cfg.normal_gate_deg))
        dots = np.zeros(len(src_pts))
        dots[ok] = np.abs(np.einsum("ij,ij->i", src_normals[ok], target.normals[nn[ok]]))
        ok &= dots >= cos_gate
    return np.flatnonzero(ok), nn[ok]


def _point_to_plane_step(p, q, n):
    """Linearised least-squares twist ``[omega, t]`` for residuals n.(p - q)."""
    A = np.hstack([np.cross(p, n), n])
    r = np.einsum("ij,ij->i", p - q, n)
    H = A.T @ A
    g = A.T @ r
    try:
        x = -np.linalg.solve(H, g)
    except np.linalg.LinAlgError:
        x = -np.linalg.lstsq(H, g, rcond=None)[0]
    return x


def _apply_twist(x, T):
    # left update in the target frame: T <- exp(x) * T
    dR = so3_exp(x[:3])
    return RigidTransform(orthonormalize(dR @ T.rotation), dR @ T.translation + x[3:])


def _plane_rms(p, q, n):
    r = np.einsum("ij,ij->i", p - q, n)
    return float(np.sqrt(np.mean(r * r))) if len(r) else float("inf")


def icp_point_to_plane(source, target, initial=None, cfg=None):
    """Align ``source`` to ``target`` (which must carry normals).

    Each iteration re-associates nearest neighbours within the distance and
    normal-angle gates, then takes one linearised point-to-plane step. A step
    that would increase the residual of its own correspondences is halved
    until it does not. ``converged`` requires the final inlier fraction and
    rms to pass the configured limits; the result is returned either way.
    """
    cfg = cfg or ICPConfig()
    target = as_cloud(target)
    if target.normals is None:
        raise ValueError("ICP target needs normals")
    source = as_cloud(source)
    if len(source) == 0 or len(target) == 0:
        raise NoCorrespondences("empty source or target")
    if cfg.normal_gate_deg < 90 and source.normals is None:
        source = eigen_features(source, cfg.normal_radius)
    T = initial or RigidTransform.identity()
    src = source.points
    src_n = source.normals if cfg.normal_gate_deg < 90 else None
    trace = []
    it = 0
    for it in range(1, cfg.max_iter + 1):
        p = T.apply(src)
        pn = None if src_n is None else src_n @ T.rotation.T
        idx, nn = _correspondences(p, pn, target, cfg)
        if len(idx) < 6:
            if it == 1:
                raise NoCorrespondences(f"{len(idx)} correspondences at the initial guess")
            break
        q, n = target.points[nn], target.normals[nn]
        before = _plane_rms(p[idx], q, n)
        x = _point_to_plane_step(p[idx], q, n)
        for _ in range(10):
            T_new = _apply_twist(x, T)
            after = _plane_rms(T_new.apply(src[idx]), q, n)
            if after <= before:
                break
            x = 0.5 * x
        else:
            T_new, after = T, before
        trace.append((before, after))
        T = T_new
        if np.linalg.norm(x) < cfg.tol:
            break

    p = T.apply(src)
    pn = None if src_n is None else src_n @ T.rotation.T
    idx, nn = _correspondences(p, pn, target, cfg)
    frac = len(idx) / len(src)
    rms = _plane_rms(p[idx], target.points[nn], target.normals[nn]) if len(idx) else float("inf")
    converged = frac >= cfg.min_inlier_fraction and rms < cfg.max_rms
    return RegistrationResult(T, rms if np.isfinite(rms) else 1e9, frac, bool(converged), it,
                              tuple(trace))


def icp_coarse_to_fine(source, target, initial=None, cfg=None, coarse_distance=2.5):
    """A wide-gate pass (``coarse_distance``) followed by the configured pass.

    The coarse pass only supplies the starting guess; the returned result is
    the configured pass, so its gates and convergence test are unchanged.
    """
    cfg = cfg or ICPConfig()
    T0 = initial
    if coarse_distance and coarse_distance > cfg.max_correspondence:
        T0 = icp_point_to_plane(source, target, initial,
                                replace(cfg, max_correspondence=coarse_distance)).transform
    return icp_point_to_plane(source, target, T0, cfg)


class PointToPlaneICP(BaseEstimator):
    """Estimator form of :func:`icp_point_to_plane`.

    ``fit(source, target)`` stores ``transform_`` (source -> target) and the
    fit statistics; ``transform(X)`` maps points with it.
    """

    def __init__(self, max_correspondence=1.0, normal_gate_deg=30.0, max_iter=50, tol=1e-4,
                 min_inlier_fraction=0.4, max_rms=0.3, normal_radius=1.0):
        self.max_correspondence = max_correspondence
        self.normal_gate_deg = normal_gate_deg
        self.max_iter = max_iter
        self.tol = tol
        self.min_inlier_fraction = min_inlier_fraction
        self.max_rms = max_rms
        self.normal_radius = normal_radius

    def _config(self):
        return ICPConfig(**self.get_params())

    def fit(self, X, y, initial=None):
        target = as_cloud(y)
        if target.normals is None:
            target = eigen_features(target, self.normal_radius)
        res = icp_point_to_plane(X, target, initial, self._config())
        self.result_ = res
        self.transform_ = res.transform
        self.rms_ = res.rms
        self.inlier_fraction_ = res.inlier_fraction
        self.converged_ = res.converged
        return self

    def transform(self, X):
        check_is_fitted(self, "transform_")
        if isinstance(X, PointCloud):
            return X.transformed(self.transform_)
        return self.transform_.apply(np.asarray(X, dtype=float))
