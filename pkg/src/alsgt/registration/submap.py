"""Aggregation of consecutive scans into fixed-travel submaps."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..cloud.features import eigen_features, voxel_downsample
from ..cloud.pointcloud import Label, PointCloud
from ..geom import RigidTransform


@dataclass(frozen=True, eq=False)
class Submap:
    """Scans from one travel interval, stored in the anchor frame.

    ``local`` holds the points relative to the anchor state; ``cloud`` is the
    same set placed in the map frame with ``anchor_pose`` (the estimate used
    when the submap was built). ``bbox`` is the map-frame xy extent.
    """

    id: int
    local: PointCloud
    anchor: int
    anchor_pose: RigidTransform
    interval: tuple
    frames: tuple

    def __post_init__(self):
        if self.anchor not in self.frames:
            raise ValueError("anchor index must be one of the submap frames")

    @property
    def cloud(self):
        return self.local.transformed(self.anchor_pose)

    @property
    def bbox(self):
        return bbox_xy(self.cloud.points)

    def with_anchor_pose(self, pose):
        return Submap(self.id, self.local, self.anchor, pose, self.interval, self.frames)


def bbox_xy(points):
    if len(points) == 0:
        return (0.0, 0.0, 0.0, 0.0)
    lo = points[:, :2].min(axis=0)
    hi = points[:, :2].max(axis=0)
    return (float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1]))


def travel_distance(poses):
    steps = [np.linalg.norm(b.translation - a.translation) for a, b in zip(poses[:-1], poses[1:])]
    return np.concatenate([[0.0], np.cumsum(steps)])


def partition_by_travel(poses, length=30.0, min_fraction=0.5):
    """Frame index groups covering ``length`` metres of travel each.

    A short trailing group (less than ``min_fraction`` of ``length``) is
    merged into its predecessor.
    """
    if length <= 0:
        raise ValueError("submap length must be positive")
    s = travel_distance(poses)
    key = np.floor(s / length).astype(int)
    groups = [np.flatnonzero(key == k) for k in np.unique(key)]
    groups = [g for g in groups if len(g)]
    if len(groups) > 1 and s[groups[-1][-1]] - s[groups[-1][0]] < min_fraction * length:
        groups[-2] = np.concatenate([groups[-2], groups[-1]])
        groups.pop()
    return [(g, (float(s[g[0]]), float(s[g[-1]]))) for g in groups]


def build_submaps(scans, poses, length=30.0, voxel=0.5, ground_voxel=1.0, max_range=40.0,
                  normal_radius=1.0):
    """Build submaps from per-frame scans.

    ``scans`` maps frame index to a sensor-frame PointCloud (labels optional,
    GROUND marks ground points); frames without a scan contribute nothing.
    ``poses`` are the current per-frame pose estimates. Points farther than
    ``max_range`` from the sensor are dropped. Ground is thinned at the
    coarser ``ground_voxel`` so walls are not outweighed during alignment.
    """
    out = []
    for k, (frames, interval) in enumerate(partition_by_travel(poses, length)):
        anchor = int(frames[len(frames) // 2])
        inv = poses[anchor].inverse()
        parts = []
        for f in frames:
            scan = scans.get(int(f))
            if scan is None or len(scan) == 0:
                continue
            r = np.linalg.norm(scan.points, axis=1)
            scan = scan.subset(r <= max_range)
            parts.append(scan.transformed(inv @ poses[int(f)]))
        if not parts:
            continue
        merged = PointCloud.concat(parts)
        if merged.labels is not None:
            g = merged.labels == int(Label.GROUND)
            cloud = PointCloud.concat([voxel_downsample(merged.subset(~g), voxel),
                                       voxel_downsample(merged.subset(g), ground_voxel)])
        else:
            cloud = voxel_downsample(merged, voxel)
        cloud = eigen_features(cloud, normal_radius)
        out.append(Submap(k, cloud, anchor, poses[anchor], interval,
                          tuple(int(f) for f in frames)))
    return out
