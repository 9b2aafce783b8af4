"""Submap construction, ICP, aerial measurements and loop closures."""
from .aerial import (AerialMeasurement, AerialReference, constraint_strength, make_aerial_factor,
                     prepare_aerial_reference)
from .icp import (ICPConfig, PointToPlaneICP, RegistrationResult, icp_coarse_to_fine,
                  icp_point_to_plane)
from .loops import (LoopConfig, LoopMeasurement, bbox_iou, bsc_descriptors, detect_loops,
                    hamming_matrix, iss_keypoints, kabsch, match_clouds, match_loop_pair,
                    mutual_matches, ransac_rigid)
from .submap import Submap, bbox_xy, build_submaps, partition_by_travel, travel_distance

__all__ = [
    "AerialMeasurement", "AerialReference", "ICPConfig", "LoopConfig", "LoopMeasurement",
    "PointToPlaneICP", "RegistrationResult", "Submap", "bbox_iou", "bbox_xy", "bsc_descriptors",
    "build_submaps", "constraint_strength", "detect_loops", "hamming_matrix",
    "icp_coarse_to_fine", "icp_point_to_plane", "iss_keypoints", "kabsch", "make_aerial_factor", "match_clouds",
    "match_loop_pair", "mutual_matches", "partition_by_travel", "prepare_aerial_reference",
    "ransac_rigid", "travel_distance",
]
