import math

import numpy as np
import pytest

from alsgt.cloud import Label, PointCloud
from alsgt.dataio import (Calibration, CameraModel, PatchEntry, export_bundle, load_bundle,
                          patch_for_position, project_als_to_image, read_calibration,
                          read_las_header, read_las_points, read_patch_index, read_pose_file,
                          read_ppm, read_trajectory_csv, render_depth_overlay, tile_als,
                          write_calibration, write_las, write_patch_index, write_pose_file,
                          write_trajectory_csv)
from alsgt.dataio.poses import parse_pose_line
from alsgt.errors import (BadMagic, MalformedLine, NonRigidMatrix, StageError, TruncatedFile,
                          UnsupportedFormat)
from alsgt.geom import RigidTransform
from alsgt.sim import Box, Scene, render_als
from oracles import random_transform

# LiDAR x-forward/z-up to camera z-forward/y-down
LIDAR_TO_CAM = RigidTransform(np.array([[0.0, -1.0, 0.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]]),
                              np.zeros(3))


# -- pose files ---------------------------------------------------------------------------------

def test_identity_line():
    T = parse_pose_line("1 0 0 0 0 1 0 0 0 0 1 0 0 0 0 1")
    assert np.array_equal(T.as_matrix(), np.eye(4))


def test_pose_line_errors(tmp_path):
    with pytest.raises(MalformedLine):
        parse_pose_line(" ".join(["0"] * 15))
    with pytest.raises(MalformedLine):
        parse_pose_line(" ".join(["x"] * 16))
    with pytest.raises(NonRigidMatrix):
        parse_pose_line("1 0 0 0 0 1 0 0 0 0 1 0 0 0 1 1")
    with pytest.raises(NonRigidMatrix):
        parse_pose_line("2 0 0 0 0 1 0 0 0 0 1 0 0 0 0 1")
    p = tmp_path / "p.txt"
    p.write_text("1 0 0 0 0 1 0 0 0 0 1 0 0 0 0 1\n\n1 2 3\n")
    with pytest.raises(MalformedLine) as exc:
        read_pose_file(p)
    assert exc.value.line_no == 3


def test_near_orthonormal_is_repaired():
    R = np.eye(3) + 1e-4 * np.array([[0, 1, 0], [0, 0, 0], [0, 0, 0]])
    M = np.eye(4)
    M[:3, :3] = R
    T = parse_pose_line(" ".join(map(str, M.ravel())))
    assert np.abs(T.rotation @ T.rotation.T - np.eye(3)).max() < 1e-12


def test_pose_file_roundtrip(tmp_path, rng):
    poses = [random_transform(rng, scale=1000.0) for _ in range(100)]
    back = read_pose_file(write_pose_file(tmp_path / "poses.txt", poses))
    assert len(back) == 100
    worst = max(np.abs(a.as_matrix() - b.as_matrix()).max() for a, b in zip(poses, back))
    assert worst < 1e-9
    # text is bit-faithful
    assert all(np.array_equal(a.as_matrix(), b.as_matrix()) for a, b in zip(poses, back))


def test_trajectory_csv_roundtrip(tmp_path, rng):
    poses = [random_transform(rng) for _ in range(10)]
    ts = np.linspace(0, 1, 10)
    t2, back = read_trajectory_csv(write_trajectory_csv(tmp_path / "t.csv", ts, poses))
    assert np.array_equal(ts, t2)
    assert all(np.array_equal(a.as_matrix(), b.as_matrix()) for a, b in zip(poses, back))


# -- LAS ----------------------------------------------------------------------------------------

@pytest.mark.parametrize("version", [(1, 2), (1, 3), (1, 4)])
@pytest.mark.parametrize("fmt", [0, 1, 2, 3])
def test_las_roundtrip(tmp_path, rng, version, fmt):
    pts = rng.uniform([612000, 3391000, -5], [612500, 3391500, 80], size=(1000, 3))
    path = write_las(tmp_path / "a.las", PointCloud(pts), version=version, point_format=fmt)
    back = read_las_points(path)
    assert len(back) == 1000
    assert np.abs(back.points - pts).max() <= 0.0005 + 1e-9
    h = read_las_header(path.read_bytes())
    assert h.version == version and h.point_format == fmt and h.point_count == 1000


def test_las_bad_magic(tmp_path):
    p = tmp_path / "bad.las"
    p.write_bytes(b"NOPE" + bytes(400))
    with pytest.raises(BadMagic):
        read_las_points(p)


def test_las_empty_file(tmp_path):
    p = write_las(tmp_path / "e.las", PointCloud.empty())
    assert len(read_las_points(p)) == 0


def test_las_truncated(tmp_path, rng):
    p = write_las(tmp_path / "t.las", PointCloud(rng.normal(size=(50, 3))))
    data = p.read_bytes()
    p.write_bytes(data[:-7])
    with pytest.raises(TruncatedFile):
        read_las_points(p)
    p.write_bytes(data[:100])
    with pytest.raises(TruncatedFile):
        read_las_points(p)


def test_las_unsupported_format(tmp_path, rng):
    p = write_las(tmp_path / "u.las", PointCloud(rng.normal(size=(5, 3))))
    data = bytearray(p.read_bytes())
    data[104] = 6           # point data format id byte
    p.write_bytes(bytes(data))
    with pytest.raises(UnsupportedFormat):
        read_las_points(p)
    with pytest.raises(UnsupportedFormat):
        write_las(tmp_path / "v.las", PointCloud(np.zeros((1, 3))), point_format=7)


def test_las_classification_from_labels(tmp_path):
    c = PointCloud(np.zeros((3, 3)), labels=[int(Label.GROUND), int(Label.ROOF), int(Label.OTHER)])
    p = write_las(tmp_path / "c.las", c)
    h = read_las_header(p.read_bytes())
    raw = np.frombuffer(p.read_bytes(), np.uint8, offset=h.offset_to_points).reshape(3, -1)
    assert raw[:, 15].tolist() == [2, 6, 1]


# -- patch index ------------------------------------------------------------------------------

def test_patch_index_example_and_comments(tmp_path):
    p = tmp_path / "patch_index.txt"
    p.write_text("# image patch cx cy\n\n0001.jpg tile_12_07.las 612340.5 3391220.0\n   \n")
    assert read_patch_index(p) == [PatchEntry("0001.jpg", "tile_12_07.las", 612340.5, 3391220.0)]
    p.write_text("0001.jpg tile.las 1.0\n")
    with pytest.raises(MalformedLine):
        read_patch_index(p)


def test_patch_index_roundtrip(tmp_path, rng):
    entries = [PatchEntry(f"{k:04d}.jpg", f"tile_{k}_0.las", *rng.normal(scale=1e5, size=2))
               for k in range(50)]
    assert read_patch_index(write_patch_index(tmp_path / "i.txt", entries)) == entries


# -- tiles --------------------------------------------------------------------------------------

def test_tile_partition_property(rng):
    pts = rng.uniform([-35, -20, 0], [95, 60, 10], size=(100_000, 3))
    patches = tile_als(PointCloud(pts))
    idx = np.concatenate([p.indices for p in patches])
    assert len(idx) == len(pts) and np.array_equal(np.sort(idx), np.arange(len(pts)))
    for p in patches:
        assert np.all(np.diff(p.indices) > 0)                  # order kept within a tile
        assert np.array_equal(p.cloud.points, pts[p.indices])
        ix = np.floor(pts[p.indices, 0] / 10.0)
        iy = np.floor(pts[p.indices, 1] / 10.0)
        assert np.all(ix == p.ix) and np.all(iy == p.iy)
        assert p.center == ((p.ix + 0.5) * 10.0, (p.iy + 0.5) * 10.0)
    assert len({p.name for p in patches}) == len(patches)


def test_boundary_point_goes_to_higher_tile():
    patches = tile_als(PointCloud([[10.0, 20.0, 0.0], [9.999, 19.999, 0.0]]))
    names = {p.name: p.indices.tolist() for p in patches}
    assert names == {"tile_00_01": [1], "tile_01_02": [0]}


def test_single_tile():
    patches = tile_als(PointCloud(np.random.default_rng(0).uniform(0.1, 9.9, (100, 3))))
    assert len(patches) == 1 and len(patches[0].indices) == 100
    assert tile_als(PointCloud.empty()) == []


# -- projection ---------------------------------------------------------------------------------

def test_optical_axis_hand_case():
    cam = CameraModel.from_intrinsics(500, 500, 320, 240, 640, 480)
    proj = project_als_to_image(PointCloud([[0.0, 0.0, 10.0], [0.0, 0.0, -5.0]]),
                                RigidTransform.identity(), RigidTransform.identity(), cam)
    assert len(proj) == 1
    assert np.allclose(proj.uv[0], [320, 240]) and proj.depth[0] == 10.0


def test_projection_bounds_and_order(rng):
    cam = CameraModel.from_intrinsics(400, 400, 320, 240, 640, 480)
    pts = rng.uniform([-30, -30, 0.5], [30, 30, 40], size=(5000, 3))
    proj = project_als_to_image(PointCloud(pts), RigidTransform.identity(),
                                RigidTransform.identity(), cam)
    assert 0 < len(proj) <= len(pts)
    assert np.all((proj.uv >= 0) & (proj.uv < [640, 480]))
    assert np.all(np.diff(proj.depth) <= 0) and np.all(proj.depth > 0.1)


def test_camera_validation():
    with pytest.raises(ValueError):
        CameraModel.from_intrinsics(-1, 500, 320, 240, 640, 480)
    with pytest.raises(ValueError):
        CameraModel.from_intrinsics(500, 500, 700, 240, 640, 480)


def pinhole(cam, T, T_ext, p):
    """Independent projection: world -> LiDAR -> camera -> pixels."""
    p_l = T.rotation.T @ (np.asarray(p, float) - T.translation)
    p_c = T_ext.rotation @ p_l + T_ext.translation
    return np.array([cam.P[0, 0] * p_c[0] / p_c[2] + cam.P[0, 2],
                     cam.P[1, 1] * p_c[1] / p_c[2] + cam.P[1, 2]])


def test_roof_edges_match_projected_box_corners():
    box = Box(40.0, 40.0, 50.0, 50.0, 20.0)
    als = render_als(Scene((0, 0, 100, 100), (box,)), 0.5)
    roof = als.select(Label.ROOF)
    cam = CameraModel.from_intrinsics(300, 300, 320, 240, 640, 480)
    T = RigidTransform(np.eye(3), [5.0, 45.0, 1.8])
    proj = project_als_to_image(roof, T, LIDAR_TO_CAM, cam)
    assert len(proj) == len(roof)
    corners = np.array([pinhole(cam, T, LIDAR_TO_CAM, [x, y, 20.0])
                        for x in (box.xmin, box.xmax) for y in (box.ymin, box.ymax)])
    # extremes of the projected roof polygon are attained at corners
    assert np.abs(proj.uv.min(axis=0) - corners.min(axis=0)).max() < 1.0
    assert np.abs(proj.uv.max(axis=0) - corners.max(axis=0)).max() < 1.0
    for c in corners:
        assert np.linalg.norm(proj.uv - c, axis=1).min() < 1.0


def test_overlay_colors():
    cam = CameraModel.from_intrinsics(100, 100, 50, 50, 100, 100)
    pts = PointCloud([[-2.0, 0.0, 10.0], [2.0, 0.0, 20.0], [0.0, 1.0, 15.0]])
    proj = project_als_to_image(pts, RigidTransform.identity(), RigidTransform.identity(), cam)
    img = read_ppm(render_depth_overlay(proj, cam))
    near = proj.uv[proj.depth == 10.0][0].astype(int)
    far = proj.uv[proj.depth == 20.0][0].astype(int)
    assert img[near[1], near[0]].tolist() == [0, 0, 255]
    assert img[far[1], far[0]].tolist() == [255, 0, 0]
    assert img[near[1] + 1, near[0] + 1].tolist() == [0, 0, 255]     # 2x2 splat
    mid = proj.uv[proj.depth == 15.0][0].astype(int)
    assert img[mid[1], mid[0]].tolist() == [128, 255, 0] or img[mid[1], mid[0]][1] == 255


def test_overlay_empty_and_deterministic():
    cam = CameraModel.from_intrinsics(100, 100, 32, 24, 64, 48)
    empty = project_als_to_image(PointCloud.empty(), RigidTransform.identity(),
                                 RigidTransform.identity(), cam)
    buf = render_depth_overlay(empty, cam)
    assert buf.startswith(b"P6\n64 48\n255\n")
    assert not read_ppm(buf).any()
    pts = PointCloud(np.random.default_rng(1).uniform([-5, -5, 2], [5, 5, 30], (300, 3)))
    a = render_depth_overlay(project_als_to_image(pts, RigidTransform(), RigidTransform(), cam), cam)
    b = render_depth_overlay(project_als_to_image(pts, RigidTransform(), RigidTransform(), cam), cam)
    assert a == b


# -- bundles ------------------------------------------------------------------------------------

def calib():
    return Calibration(CameraModel.from_intrinsics(600, 600, 640, 360, 1280, 720), LIDAR_TO_CAM)


def test_calibration_roundtrip(tmp_path):
    c = calib()
    write_calibration(tmp_path / "c.txt", c)
    back = read_calibration(tmp_path / "c.txt")
    assert np.array_equal(back.camera.P, c.camera.P) and back.T_ext.allclose(c.T_ext, atol=0)


def test_simulator_index_maps_to_true_tile(tmp_path, small_data):
    poses = [s.pose for s in small_data.true_states[::4]]
    root = export_bundle(tmp_path / "seq", small_data.als, poses, calib())
    b = load_bundle(root)
    assert len(b.entries) == len(poses) == len(b.poses)
    for e, T in zip(b.entries, poses):
        x, y = T.translation[:2]
        assert e.patch == f"tile_{math.floor(x / 10):02d}_{math.floor(y / 10):02d}.las"
        assert (root / "als" / e.patch).is_file()
        assert (e.cx, e.cy) == (10 * math.floor(x / 10) + 5, 10 * math.floor(y / 10) + 5)
    assert patch_for_position(poses[0].translation[:2])[0] + ".las" == b.entries[0].patch
    # tiles reassemble the ALS up to the LAS quantum
    total = sum(len(b.load_patch(p.name + ".las")) for p in tile_als(small_data.als))
    assert total == len(small_data.als)


def test_missing_patch_is_load_error(tmp_path, small_data):
    poses = [s.pose for s in small_data.true_states[:3]]
    root = export_bundle(tmp_path / "seq", small_data.als, poses, calib())
    (root / "als" / load_bundle(root).entries[0].patch).unlink()
    with pytest.raises(StageError) as exc:
        load_bundle(root)
    assert exc.value.stage == "load" and exc.value.exit_code == 2


def test_pose_count_mismatch_is_load_error(tmp_path, small_data):
    poses = [s.pose for s in small_data.true_states[:3]]
    root = export_bundle(tmp_path / "seq", small_data.als, poses, calib())
    write_pose_file(root / "poses.txt", poses[:2])
    with pytest.raises(StageError):
        load_bundle(root)
