"""Dataset files: LAS patches, pose files, patch index, calibration, projection."""
from .bundle import (Calibration, SequenceBundle, export_bundle, load_bundle, read_calibration,
                     write_calibration)
from .las import LasHeader, read_las_header, read_las_points, write_las
from .patches import (Patch, PatchEntry, patch_for_position, read_patch_index, tile_als,
                      tile_center, tile_indices, tile_name, write_patch_index)
from .poses import (format_pose, parse_pose_line, read_pose_file, read_trajectory_csv,
                    write_pose_file, write_trajectory_csv)
from .projection import (CameraModel, Projection, depth_colors, project_als_to_image, read_ppm,
                         render_depth_overlay)

__all__ = [
    "Calibration", "CameraModel", "LasHeader", "Patch", "PatchEntry", "Projection",
    "SequenceBundle", "depth_colors", "export_bundle", "format_pose", "load_bundle",
    "parse_pose_line", "patch_for_position", "project_als_to_image", "read_calibration",
    "read_las_header", "read_las_points", "read_patch_index", "read_pose_file", "read_ppm",
    "read_trajectory_csv", "render_depth_overlay", "tile_als", "tile_center", "tile_indices",
    "tile_name", "write_calibration", "write_las", "write_patch_index", "write_pose_file",
    "write_trajectory_csv",
]
