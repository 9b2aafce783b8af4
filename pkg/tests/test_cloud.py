import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from alsgt.cloud import (GroundElevation, Label, PointCloud, classify_roofs, complete_facades,
                         convex_hull_2d, eigen_features, points_in_convex_polygon, segment_ground,
                         supervoxel_segment, voxel_downsample)
from alsgt.cloud.features import EigenFeatureExtractor, VoxelDownsampler, voxel_keys
from alsgt.cloud.ground import GroundSegmenter
from alsgt.cloud.supervoxel import Supervoxel, SupervoxelSegmenter
from alsgt.errors import DegenerateScan, EmptyCloud
from alsgt.sim import LidarConfig, random_scene, render_mls_scan
from alsgt.geom import RigidTransform, rot_z
from oracles import rot_exp


def wall_points(rng, n, x0, y_range, z_range):
    y = rng.uniform(*y_range, n)
    z = rng.uniform(*z_range, n)
    return np.column_stack([np.full(n, x0), y, z])


def angle_deg(a, b):
    return np.degrees(np.arccos(np.clip(abs(a @ b) / np.linalg.norm(a) / np.linalg.norm(b), -1, 1)))


# -- eigen features -----------------------------------------------------------

def test_plane_features():
    # 25 x 20 grid at 0.4 m: interior neighbourhoods are isotropic in the plane
    X, Y = np.meshgrid(np.arange(25) * 0.4, np.arange(20) * 0.4)
    pts = np.column_stack([X.ravel(), Y.ravel(), np.zeros(X.size)])
    c = eigen_features(PointCloud(pts), 1.0)
    interior = ((pts[:, 0] > 1.0) & (pts[:, 0] < 8.6) & (pts[:, 1] > 1.0) & (pts[:, 1] < 6.6))
    assert np.all(c.planarity[interior] > 0.9)
    assert np.all(c.verticality[interior] < 0.05)


def test_wall_features(rng):
    pts = wall_points(rng, 500, 0.0, (-5, 5), (0, 10))
    c = eigen_features(PointCloud(pts), 1.5)
    assert np.all(c.verticality > 0.95)


def test_isolated_point_sentinel():
    c = eigen_features(PointCloud(np.array([[0.0, 0.0, 0.0], [100.0, 0.0, 0.0]])), 1.0)
    assert np.array_equal(c.planarity, [0.0, 0.0]) and np.array_equal(c.verticality, [1.0, 1.0])


def test_features_match_direct_eigendecomposition(rng):
    pts = rng.normal(size=(300, 3)) * [3, 2, 0.5]
    c = eigen_features(PointCloud(pts), 1.2)
    for i in rng.choice(len(pts), 20, replace=False):
        nb = pts[np.linalg.norm(pts - pts[i], axis=1) <= 1.2]
        if len(nb) < 3:
            continue
        w, v = np.linalg.eigh(np.cov(nb.T, bias=True))
        l3, l2, l1 = w
        assert c.planarity[i] == pytest.approx((l2 - l3) / l1, abs=1e-9)
        assert c.verticality[i] == pytest.approx(1 - abs(v[2, 0]), abs=1e-9)


def test_features_bounded(rng):
    c = eigen_features(PointCloud(rng.normal(size=(200, 3))), 0.8)
    for a in (c.planarity, c.verticality):
        assert np.all((a >= 0) & (a <= 1))
    assert np.allclose(np.linalg.norm(c.normals, axis=1), 1.0)


def test_empty_cloud_errors():
    with pytest.raises(EmptyCloud):
        eigen_features(PointCloud.empty(), 1.0)
    with pytest.raises(EmptyCloud):
        supervoxel_segment(PointCloud.empty(), 1.0)
    with pytest.raises(EmptyCloud):
        segment_ground(PointCloud.empty())


# -- ground ---------------------------------------------------------------------

def synthetic_scan(rng, tilt_deg=0.0, noise_fraction=0.1, n_ground=6000):
    g = np.column_stack([rng.uniform(-15, 15, (n_ground, 2)), np.zeros(n_ground)])
    walls = np.vstack([wall_points(rng, 1500, 8.0, (-10, 10), (0, 8)),
                       wall_points(rng, 1500, -9.0, (-10, 10), (0, 8))])
    R = rot_exp(np.radians([tilt_deg, 0.0, 0.0]))
    g, walls = g @ R.T, walls @ R.T
    n_noise = int(noise_fraction * (len(g) + len(walls)) / (1 - noise_fraction))
    noise = rng.uniform([-15, -15, -2], [15, 15, 8], (n_noise, 3))
    pts = np.vstack([g, walls, noise])
    truth = np.zeros(len(pts), bool)
    truth[:len(g)] = True
    return pts, truth, R @ [0.0, 0.0, 1.0]


def test_ground_synthetic_scan(rng):
    pts, truth, n_true = synthetic_scan(rng)
    plane, idx = segment_ground(PointCloud(pts))
    assert angle_deg(plane.normal, n_true) < 0.5
    assert plane.normal[2] > 0
    labeled = np.zeros(len(pts), bool)
    labeled[idx] = True
    assert (labeled & truth).sum() >= 0.98 * truth.sum()


def test_ground_tilted_plane(rng):
    pts, _, n_true = synthetic_scan(rng, tilt_deg=3.0)
    plane, _ = segment_ground(PointCloud(pts))
    assert angle_deg(plane.normal, n_true) < 0.5


def test_single_wall_is_degenerate(rng):
    with pytest.raises(DegenerateScan):
        segment_ground(PointCloud(wall_points(rng, 2000, 0.0, (-10, 10), (0, 10))))


def test_ground_with_30_percent_outliers_20_seeds():
    errs = []
    for seed in range(20):
        rng = np.random.default_rng(seed)
        pts, _, n_true = synthetic_scan(rng, noise_fraction=0.3)
        plane, _ = segment_ground(PointCloud(pts), random_state=seed)
        errs.append(angle_deg(plane.normal, n_true))
    assert max(errs) < 0.5


def test_ground_on_simulator_scans():
    rec, prec = [], []
    for seed in range(20):
        rng = np.random.default_rng(seed)
        path = np.array([[20.0, 50.0], [80.0, 50.0]])
        scene = random_scene(4, (0, 0, 100, 100), seed=seed, avoid=path, clearance=6.0)
        x = rng.uniform(25, 75)
        pose = RigidTransform(rot_z(rng.uniform(-np.pi, np.pi)), [x, 50.0, 1.8])
        scan = render_mls_scan(scene, pose, LidarConfig(azimuth_step_deg=0.4), rng)
        _, idx = segment_ground(scan)
        pred = np.zeros(len(scan), bool)
        pred[idx] = True
        truth = scan.labels == int(Label.GROUND)
        rec.append((pred & truth).sum() / truth.sum())
        prec.append((pred & truth).sum() / pred.sum())
    assert min(rec) >= 0.98 and min(prec) >= 0.95


def test_ground_segmenter_estimator(rng):
    pts, truth, _ = synthetic_scan(rng)
    seg = GroundSegmenter().fit(PointCloud(pts))
    mask = seg.predict(pts)
    assert mask.dtype == bool and (mask & truth).sum() >= 0.98 * truth.sum()
    assert np.array_equal(GroundSegmenter().fit_predict(PointCloud(pts)), mask)


# -- supervoxels ------------------------------------------------------------------

def grid_plane(spacing=0.25, size=10.0, z=0.0):
    g = np.arange(0.0, size, spacing)
    X, Y = np.meshgrid(g, g)
    return np.column_stack([X.ravel(), Y.ravel(), np.full(X.size, z)])


def test_single_plane_merges_to_one_region():
    assert len(supervoxel_segment(PointCloud(grid_plane()), 1.0)) == 1


def test_two_parallel_planes():
    pts = np.vstack([grid_plane(z=0.0), grid_plane(z=5.0)])
    regions = supervoxel_segment(PointCloud(pts), 1.0)
    assert len(regions) == 2
    assert sorted(len(r) for r in regions) == [1600, 1600]


def test_plane_and_wall_do_not_merge():
    floor = grid_plane()
    g = np.arange(0.0, 10.0, 0.25)
    Y, Z = np.meshgrid(g, np.arange(0.5, 6.0, 0.25))
    wall = np.column_stack([np.full(Y.size, 12.0), Y.ravel(), Z.ravel()])
    regions, labels = supervoxel_segment(PointCloud(np.vstack([floor, wall])), 1.0,
                                         return_labels=True)
    assert len(regions) == 2
    assert len(set(labels[:len(floor)])) == 1 and len(set(labels[len(floor):])) == 1


def test_every_point_in_exactly_one_supervoxel(rng):
    pts = rng.uniform(0, 10, (800, 3))
    regions = supervoxel_segment(PointCloud(pts), 2.0)
    members = np.concatenate([r.indices for r in regions])
    assert np.array_equal(np.sort(members), np.arange(len(pts)))


def test_supervoxel_segmenter_estimator():
    pts = np.vstack([grid_plane(z=0.0), grid_plane(z=5.0)])
    est = SupervoxelSegmenter(seed_resolution=1.0).fit(PointCloud(pts))
    assert len(np.unique(est.labels_)) == 2
    assert len(est.roof_segments()) == 2


# -- roofs ------------------------------------------------------------------------

def _sv(planarity, verticality):
    z = np.zeros((1, 3))
    return Supervoxel(np.array([0]), z, z[0], np.array([0.0, 0.0, 1.0]), planarity, verticality)


def test_roof_examples():
    roof, wall, edge = _sv(0.9, 0.02), _sv(0.9, 0.95), _sv(0.5, 0.0)
    assert classify_roofs([roof, wall, edge]) == [roof]


def test_roof_classification_equals_threshold_set(rng):
    # include exact-threshold values so both strict inequalities are exercised
    vals = np.concatenate([rng.uniform(0, 1, 2000), [0.5, 0.3] * 50])
    svs = [_sv(p, v) for p, v in zip(rng.permutation(vals), rng.permutation(vals))]
    brute = [s for s in svs if s.planarity > 0.5 and s.verticality < 0.3]
    assert [id(s) for s in classify_roofs(svs)] == [id(s) for s in brute]


# -- façades ------------------------------------------------------------------------

def square_roof(size=10.0, z=20.0, spacing=0.5):
    g = np.arange(0.0, size + 1e-9, spacing)
    X, Y = np.meshgrid(g, g)
    return np.column_stack([X.ravel(), Y.ravel(), np.full(X.size, z)])


def flat_ground(z):
    return lambda xy: np.full(len(np.asarray(xy).reshape(-1, 2)), z)


def facade_count_formula(perimeter, height, spacing=0.5):
    return int(round(perimeter / spacing)) * (int(np.floor(height / spacing + 1e-9)) + 1)


def test_square_roof_facade_count():
    f = complete_facades([square_roof()], flat_ground(0.0))
    assert len(f) == 3280 == facade_count_formula(40.0, 20.0)
    assert np.all(f.labels == int(Label.FACADE))


@pytest.mark.parametrize("size,height", [(6.0, 7.0), (12.5, 9.25), (4.0, 0.0)])
def test_box_roof_counts_match_formula(size, height):
    f = complete_facades([square_roof(size, height)], flat_ground(0.0))
    assert len(f) == facade_count_formula(4 * size, height)


def test_roof_touching_ground_one_point_per_column():
    f = complete_facades([square_roof(z=0.0)], flat_ground(0.0))
    assert len(f) == 80


def test_facade_points_on_hull_and_in_height_range():
    roof = square_roof(z=15.0)
    f = complete_facades([roof], flat_ground(2.0))
    hull = convex_hull_2d(roof[:, :2])
    xy = f.points[:, :2]
    d = np.full(len(xy), np.inf)
    for a, b in zip(hull, np.roll(hull, -1, axis=0)):
        t = np.clip((xy - a) @ (b - a) / ((b - a) @ (b - a)), 0, 1)
        d = np.minimum(d, np.linalg.norm(a + t[:, None] * (b - a) - xy, axis=1))
    assert d.max() < 1e-6
    assert f.points[:, 2].min() >= 2.0 - 1e-9 and f.points[:, 2].max() <= 15.0 + 1e-9


def test_l_shaped_roof_hull_bridges_corner():
    a = square_roof(10.0)
    L = a[~((a[:, 0] > 5) & (a[:, 1] > 5))]
    hull = convex_hull_2d(L[:, :2])
    # re-entrant corner (10,10) region: hull is the convex closure with the diagonal edge
    assert {tuple(p) for p in np.round(hull, 9)} == {(0, 0), (10, 0), (10, 5), (5, 10), (0, 10)}
    assert points_in_convex_polygon(L[:, :2], hull).all()


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_hull_contains_all_members(seed):
    pts = np.random.default_rng(seed).normal(size=(60, 2)) * 5
    hull = convex_hull_2d(pts)
    assert points_in_convex_polygon(pts, hull).all()


def test_collinear_roof_skipped():
    line = np.column_stack([np.arange(10.0), np.zeros(10), np.full(10, 5.0)])
    cloud, skipped = complete_facades([line, square_roof(2.0, 4.0)], flat_ground(0.0),
                                      return_skipped=True)
    assert skipped == 1 and len(cloud) == facade_count_formula(8.0, 4.0)


def test_ground_elevation_fallback():
    ge = GroundElevation(np.array([[0.0, 0.0, 1.5]]), max_dist=5.0)
    z = ge(np.array([[1.0, 1.0], [50.0, 0.0]]))
    assert z[0] == 1.5 and np.isnan(z[1])


# -- voxel grid ----------------------------------------------------------------------

def test_voxel_cube_corners():
    corners = np.array([[x, y, z] for x in (0.1, 0.2) for y in (0.1, 0.2) for z in (0.1, 0.2)])
    out = voxel_downsample(PointCloud(corners), 0.5)
    assert len(out) == 1 and np.allclose(out.points[0], corners.mean(axis=0))


def test_voxel_grid_unchanged():
    g = np.arange(5.0)
    pts = np.array(np.meshgrid(g, g, g)).reshape(3, -1).T + 0.25
    assert len(voxel_downsample(PointCloud(pts), 0.5)) == len(pts)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.1, 2.0))
def test_voxel_output_unique_voxels(seed, res):
    pts = np.random.default_rng(seed).uniform(-5, 5, (500, 3))
    out = voxel_downsample(PointCloud(pts), res)
    keys = voxel_keys(out.points, res)
    assert len(np.unique(keys, axis=0)) == len(out)
    assert len(np.unique(voxel_keys(pts, res), axis=0)) == len(out)


def test_transformer_wrappers(rng):
    pts = rng.uniform(0, 4, (300, 3))
    out = VoxelDownsampler(0.5).fit_transform(pts)
    assert len(out) == len(voxel_downsample(PointCloud(pts), 0.5))
    feats = EigenFeatureExtractor(radius=1.0).fit_transform(PointCloud(pts))
    ref = eigen_features(PointCloud(pts), 1.0)
    assert feats.shape == (300, 5) and np.array_equal(feats[:, 0], ref.planarity)


def test_pointcloud_validation():
    with pytest.raises(ValueError):
        PointCloud(np.zeros((3, 2)))
    with pytest.raises(ValueError):
        PointCloud(np.zeros((3, 3)), labels=np.zeros(2))
