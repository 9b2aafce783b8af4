"""Aerial reference preparation and submap-to-ALS measurements."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..cloud.facade import GroundElevation, complete_facades
from ..cloud.features import eigen_features
from ..cloud.ground import segment_ground
from ..cloud.pointcloud import Label, PointCloud
from ..cloud.supervoxel import classify_roofs, supervoxel_segment
from ..errors import NoCorrespondences
from .icp import ICPConfig, icp_coarse_to_fine

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class AerialReference:
    """Labelled ALS cloud (ground, roof, completed façade) with normals."""

    cloud: PointCloud
    n_roofs: int
    skipped_roofs: int

    @property
    def target(self):
        """ICP target: ground plus completed façades."""
        return self.cloud.select(Label.GROUND, Label.FACADE)


def prepare_aerial_reference(als, seed_resolution=2.0, feature_radius=1.0, facade_spacing=0.5,
                             ground_threshold=0.15):
    """Label ALS ground by plane fitting, find roofs, and extrude façades."""
    als = eigen_features(als, feature_radius)
    _, gidx = segment_ground(als, threshold=ground_threshold, feature_radius=feature_radius)
    is_ground = np.zeros(len(als), bool)
    is_ground[gidx] = True
    ground = als.subset(is_ground).with_label(Label.GROUND)
    rest = als.subset(~is_ground)
    parts = [ground]
    n_roofs = skipped = 0
    if len(rest):
        svs = supervoxel_segment(rest, seed_resolution, feature_radius)
        roofs = classify_roofs(svs)
        n_roofs = len(roofs)
        if roofs:
            facades, skipped = complete_facades(roofs, GroundElevation(ground.points), facade_spacing,
                                                return_skipped=True)
            roof_idx = np.concatenate([r.indices for r in roofs])
            parts += [rest.subset(roof_idx).with_label(Label.ROOF), facades]
    cloud = PointCloud.concat(parts)
    log.info("aerial reference: %d ground, %d roof regions, %d facade points",
             len(ground), n_roofs, int((cloud.labels == int(Label.FACADE)).sum()))
    return AerialReference(cloud, n_roofs, skipped)


@dataclass(frozen=True, eq=False)
class AerialMeasurement:
    """Corrected anchor pose from registering one submap to the ALS reference."""

    submap_id: int
    anchor: int
    pose: object
    inlier_fraction: float
    rms: float


def constraint_strength(points, normals):
    """Smallest eigenvalue of the per-point point-to-plane Fisher matrix.

    A submap that sees only ground (or a single wall) leaves some pose
    directions unobserved and scores near zero here.
    """
    if len(points) == 0:
        return 0.0
    c = points - points.mean(axis=0)
    A = np.hstack([np.cross(c, normals), normals])
    H = A.T @ A / len(points)
    # rotate/translate blocks live on different scales; compare the translation block
    return float(np.linalg.eigvalsh(H[3:, 3:])[0])


def make_aerial_factor(submap, target, initial=None, cfg=None, coarse_distance=2.5,
                       min_strength=0.01):
    """Register a submap to the aerial target; ``None`` when it does not converge.

    A coarse pass with a wider correspondence gate precedes the configured
    pass, widening the capture basin to a couple of metres. Submaps whose
    matched geometry cannot fix all three translation directions are also
    rejected.
    """
    cfg = cfg or ICPConfig()
    T0 = submap.anchor_pose if initial is None else initial
    try:
        res = icp_coarse_to_fine(submap.local, target, T0, cfg, coarse_distance)
    except NoCorrespondences:
        return None
    if not res.converged:
        log.debug("submap %d: aerial ICP did not converge (frac %.2f rms %.3f)",
                  submap.id, res.inlier_fraction, res.rms)
        return None
    p = res.transform.apply(submap.local.points)
    d, nn = target.tree.query(p, distance_upper_bound=cfg.max_correspondence)
    ok = np.isfinite(d)
    strength = constraint_strength(p[ok], target.normals[nn[ok]])
    if strength < min_strength:
        log.debug("submap %d: aerial match is degenerate (%.4f)", submap.id, strength)
        return None
    return AerialMeasurement(submap.id, submap.anchor, res.transform, res.inlier_fraction, res.rms)
