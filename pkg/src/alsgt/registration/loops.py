"""Loop candidates by bounding-box overlap, measured by keypoint matching + ICP."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from ..cloud.features import eigen_decompose, local_covariances
from ..cloud.pointcloud import as_cloud
from ..errors import NoCorrespondences
from ..geom import RigidTransform
from .icp import ICPConfig, icp_coarse_to_fine, icp_point_to_plane

log = logging.getLogger(__name__)


def bbox_iou(a, b):
    """IoU of two axis-aligned xy boxes ``(xmin, ymin, xmax, ymax)``."""
    ix = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    iy = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = ix * iy
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return inter / union if union > 0 else 0.0


def detect_loops(submaps, min_gap=3, min_iou=0.3):
    """Pairs ``(i, j, iou)`` with ``j - i >= min_gap`` and bbox IoU at least ``min_iou``.

    Indices are positions in ``submaps``; pairs come out sorted by (i, j).
    """
    boxes = [s.bbox if hasattr(s, "bbox") else tuple(s) for s in submaps]
    out = []
    for i in range(len(boxes)):
        for j in range(i + min_gap, len(boxes)):
            iou = bbox_iou(boxes[i], boxes[j])
            if iou >= min_iou:
                out.append((i, j, iou))
    return out


@dataclass(frozen=True)
class LoopConfig:
    salient_radius: float = 1.5
    ratio21: float = 0.85
    ratio32: float = 0.85
    min_saliency: float = 0.005
    nms_radius: float = 1.0
    min_neighbors: int = 8
    descriptor_radius: float = 4.0
    ransac_threshold: float = 0.5
    ransac_iters: int = 2000
    min_inliers: int = 8
    random_state: int = 0


def iss_keypoints(points, cfg=None):
    """Intrinsic-shape-signature keypoints.

    Keeps points whose neighbourhood eigenvalues satisfy ``l2/l1 < ratio21``
    and ``l3/l2 < ratio32`` with ``l3`` above ``min_saliency``, then applies
    non-maximum suppression on ``l3`` within ``nms_radius``.
    """
    cfg = cfg or LoopConfig()
    points = np.asarray(points, dtype=float)
    if len(points) == 0:
        return np.zeros(0, dtype=int)
    cov, counts, _ = local_covariances(points, cfg.salient_radius)
    w, _ = eigen_decompose(cov)
    l1, l2, l3 = w.T
    with np.errstate(divide="ignore", invalid="ignore"):
        ok = ((counts >= cfg.min_neighbors) & (l2 < cfg.ratio21 * l1) & (l3 < cfg.ratio32 * l2)
              & (l3 > cfg.min_saliency))
    cand = np.flatnonzero(ok)
    if len(cand) == 0:
        return cand
    tree = cKDTree(points[cand])
    sal = l3[cand]
    keep = []
    for k, nbrs in enumerate(tree.query_ball_point(points[cand], cfg.nms_radius)):
        # ties broken by index so the result is order independent
        if all(sal[k] > sal[m] or (sal[k] == sal[m] and k <= m) for m in nbrs):
            keep.append(cand[k])
    return np.asarray(keep, dtype=int)


N_RADIAL, N_AZIMUTH, N_ELEVATION = 2, 8, 4
N_BITS = N_RADIAL * N_AZIMUTH * N_ELEVATION


def _local_frame(offsets):
    """Eigenvector frame of the neighbourhood with signs fixed by the point mass."""
    cov = offsets.T @ offsets / max(len(offsets), 1)
    w, v = np.linalg.eigh(cov)
    v = v[:, ::-1]
    for a in (0, 2):
        if np.sum(offsets @ v[:, a]) < 0:
            v[:, a] = -v[:, a]
    v[:, 1] = np.cross(v[:, 2], v[:, 0])
    return v


def bsc_descriptors(points, keypoints, radius=4.0):
    """Binary shape context per keypoint, packed into one uint64 word.

    The neighbourhood is expressed in its eigenvector frame and binned into
    2 radial x 8 azimuthal x 4 elevation cells; a bit is set where the cell
    count exceeds the median count of that descriptor.
    """
    points = np.asarray(points, dtype=float)
    tree = cKDTree(points)
    out = np.zeros(len(keypoints), dtype=np.uint64)
    weights = np.uint64(1) << np.arange(N_BITS, dtype=np.uint64)
    for k, idx in enumerate(tree.query_ball_point(points[keypoints], radius)):
        off = points[idx] - points[keypoints[k]]
        if len(off) < 4:
            continue
        q = off @ _local_frame(off)
        r = np.linalg.norm(q, axis=1)
        rb = np.minimum((r / radius * N_RADIAL).astype(int), N_RADIAL - 1)
        az = np.arctan2(q[:, 1], q[:, 0])
        ab = np.minimum(((az + np.pi) / (2 * np.pi) * N_AZIMUTH).astype(int), N_AZIMUTH - 1)
        el = np.arcsin(np.clip(q[:, 2] / np.maximum(r, 1e-12), -1.0, 1.0))
        eb = np.minimum(((el + np.pi / 2) / np.pi * N_ELEVATION).astype(int), N_ELEVATION - 1)
        cell = (rb * N_AZIMUTH + ab) * N_ELEVATION + eb
        hist = np.bincount(cell, minlength=N_BITS)
        bits = hist > np.median(hist)
        out[k] = np.bitwise_or.reduce(np.where(bits, weights, np.uint64(0)))
    return out


def hamming_matrix(a, b):
    return np.bitwise_count(a[:, None] ^ b[None, :]).astype(np.int32)


def mutual_matches(desc_a, desc_b):
    """Index pairs that are each other's nearest neighbour in Hamming distance."""
    if len(desc_a) == 0 or len(desc_b) == 0:
        return np.zeros((0, 2), dtype=int)
    D = hamming_matrix(desc_a, desc_b)
    ab = D.argmin(axis=1)
    ba = D.argmin(axis=0)
    ia = np.flatnonzero(ba[ab] == np.arange(len(desc_a)))
    return np.column_stack([ia, ab[ia]])


def kabsch(src, dst):
    """Least-squares rigid transform with ``dst ~ R src + t``."""
    cs, cd = src.mean(axis=0), dst.mean(axis=0)
    H = (src - cs).T @ (dst - cd)
    U, _, Vt = np.linalg.svd(H)
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(Vt.T @ U.T))])
    R = Vt.T @ D @ U.T
    return RigidTransform(R, cd - R @ cs)


def ransac_rigid(src, dst, threshold=0.5, n_iter=2000, rng=None):
    """Rigid fit robust to outlier matches; returns (transform, inlier mask)."""
    rng = np.random.default_rng(rng)
    n = len(src)
    if n < 3:
        return None, np.zeros(n, bool)
    best = np.zeros(n, bool)
    for _ in range(n_iter):
        pick = rng.choice(n, 3, replace=False)
        s = src[pick]
        if np.linalg.norm(np.cross(s[1] - s[0], s[2] - s[0])) < 1e-3:
            continue
        T = kabsch(s, dst[pick])
        inl = np.linalg.norm(T.apply(src) - dst, axis=1) < threshold
        if inl.sum() > best.sum():
            best = inl
    if best.sum() < 3:
        return None, best
    T = kabsch(src[best], dst[best])
    inl = np.linalg.norm(T.apply(src) - dst, axis=1) < threshold
    return kabsch(src[inl], dst[inl]), inl


@dataclass(frozen=True, eq=False)
class LoopMeasurement:
    i: int
    j: int
    transform: RigidTransform
    inlier_fraction: float
    rms: float
    n_matches: int
    method: str = "features"


def match_clouds(cloud_a, cloud_b, cfg=None, icp_cfg=None):
    """Relative transform ``T`` with ``cloud_a ~ T * cloud_b``, or ``None``.

    ``cloud_a`` must carry normals (it is the ICP target).
    """
    cfg = cfg or LoopConfig()
    a, b = as_cloud(cloud_a), as_cloud(cloud_b)
    ka, kb = iss_keypoints(a.points, cfg), iss_keypoints(b.points, cfg)
    if len(ka) < cfg.min_inliers or len(kb) < cfg.min_inliers:
        return None
    da = bsc_descriptors(a.points, ka, cfg.descriptor_radius)
    db = bsc_descriptors(b.points, kb, cfg.descriptor_radius)
    m = mutual_matches(da, db)
    if len(m) < cfg.min_inliers:
        return None
    T0, inl = ransac_rigid(b.points[kb[m[:, 1]]], a.points[ka[m[:, 0]]], cfg.ransac_threshold,
                           cfg.ransac_iters, cfg.random_state)
    if T0 is None or inl.sum() < cfg.min_inliers:
        return None
    try:
        res = icp_point_to_plane(b, a, T0, icp_cfg or ICPConfig())
    except NoCorrespondences:
        return None
    if not res.converged:
        return None
    return res, int(inl.sum())


def match_loop_pair(a, b, cfg=None, icp_cfg=None, prior=None, coarse_distance=2.5,
                    overlap_margin=3.0):
    """Loop measurement between two submaps (anchor of ``a`` to anchor of ``b``).

    Keypoint matching is tried first. When it finds no consistent set and a
    ``prior`` relative transform is given (from the current trajectory
    estimate), ICP is seeded with the prior instead.
    """
    icp_cfg = icp_cfg or ICPConfig()
    out = match_clouds(a.local, b.local, cfg, icp_cfg)
    if out is not None:
        res, n = out
        return LoopMeasurement(a.anchor, b.anchor, res.transform, res.inlier_fraction, res.rms, n)
    if prior is None:
        return None
    # only the part of b that overlaps a under the prior takes part
    near, _ = a.local.tree.query(prior.apply(b.local.points), distance_upper_bound=overlap_margin)
    src = b.local.subset(np.isfinite(near))
    if len(src) == 0:
        return None
    try:
        res = icp_coarse_to_fine(src, a.local, prior, icp_cfg, coarse_distance)
    except NoCorrespondences:
        return None
    if not res.converged:
        return None
    return LoopMeasurement(a.anchor, b.anchor, res.transform, res.inlier_fraction, res.rms, 0,
                           "prior")
