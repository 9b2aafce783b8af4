"""Point-cloud containers and the ALS/MLS feature-extraction pipeline."""
from .facade import (GroundElevation, complete_facades, convex_hull_2d,
                     points_in_convex_polygon)
from .features import (EigenFeatureExtractor, VoxelDownsampler, eigen_features,
                       local_covariances, voxel_downsample)
from .ground import GroundSegmenter, Plane, label_ground, segment_ground
from .pointcloud import Label, PointCloud, as_cloud, as_points
from .supervoxel import Supervoxel, SupervoxelSegmenter, classify_roofs, supervoxel_segment

__all__ = [
    "EigenFeatureExtractor", "GroundElevation", "GroundSegmenter", "Label", "Plane",
    "PointCloud", "Supervoxel", "SupervoxelSegmenter", "VoxelDownsampler", "as_cloud",
    "as_points", "classify_roofs", "complete_facades", "convex_hull_2d", "eigen_features",
    "label_ground", "local_covariances", "points_in_convex_polygon", "segment_ground",
    "supervoxel_segment", "voxel_downsample",
]
