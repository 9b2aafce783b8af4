"""Synthetic scenes, trajectories and sensor streams with exact ground truth."""
from .scenario import (Scenario, SimulatedData, initial_pose_error, lever_arm, lidar_seed,
                       packaged_scenarios, parse_script, read_scenario_text, simulate)
from .scene import Box, Scene, building_height, random_scene
from .sensors import (DriftConfig, GnssFix, ImuNoise, LidarConfig, cast_rays, chain_poses,
                      inject_drift, lidar_directions, relative_poses, render_als, render_gnss,
                      render_imu, render_mls_scan)
from .trajectory import TrajectoryTruth

__all__ = [
    "Box", "DriftConfig", "GnssFix", "ImuNoise", "LidarConfig", "Scenario", "Scene",
    "SimulatedData", "TrajectoryTruth", "building_height", "cast_rays", "chain_poses",
    "initial_pose_error", "inject_drift", "lever_arm", "lidar_directions", "lidar_seed",
    "packaged_scenarios", "parse_script", "random_scene", "read_scenario_text",
    "relative_poses", "render_als", "render_gnss", "render_imu", "render_mls_scan", "simulate",
]
