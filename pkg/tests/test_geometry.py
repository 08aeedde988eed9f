import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from psv import geometry
from psv.geometry import GeometryError, PointCloud, TriangleMesh


def brute_chamfer(a, b):
    da = [min(sum((p[i] - q[i]) ** 2 for i in range(3)) for q in b) for p in a]
    db = [min(sum((p[i] - q[i]) ** 2 for i in range(3)) for q in a) for p in b]
    return sum(da) / len(da) + sum(db) / len(db)


def brute_fps_check(pts, selected):
    """Each pick must maximize the min-distance to the prefix (exhaustive per step)."""
    for i in range(1, len(selected)):
        prefix = selected[:i]
        def mind(j):
            return min(float(np.sum((pts[j] - pts[s]) ** 2)) for s in prefix)
        candidates = [j for j in range(len(pts)) if j not in prefix]
        best = max(mind(j) for j in candidates)
        if mind(selected[i]) != best:
            return False
    return True


cloud_arrays = arrays(
    np.float64, st.tuples(st.integers(1, 30), st.just(3)),
    elements=st.floats(-10, 10, allow_nan=False, width=32),
)


# ---------------------------------------------------------------- normalize


def test_normalize_two_points():
    out = geometry.normalize_unit_sphere(PointCloud([[2, 0, 0], [4, 0, 0]]))
    np.testing.assert_allclose(out.points, [[-1, 0, 0], [1, 0, 0]])
    assert not out.degenerate


def test_normalize_degenerate():
    out = geometry.normalize_unit_sphere(PointCloud(np.zeros((5, 3))))
    assert out.degenerate
    assert np.all(out.points == 0)


def test_normalize_random_cloud():
    pts = np.random.default_rng(1).normal(size=(100, 3)) * 3 + 5
    out = geometry.normalize_unit_sphere(PointCloud(pts))
    assert np.all(np.abs(out.points.mean(0)) < 1e-6)
    assert abs(np.linalg.norm(out.points, axis=1).max() - 1) < 1e-6


@given(cloud_arrays)
@settings(max_examples=50, deadline=None)
def test_normalize_idempotent(pts):
    once = geometry.normalize_unit_sphere(PointCloud(pts))
    twice = geometry.normalize_unit_sphere(once)
    np.testing.assert_allclose(once.points, twice.points, atol=1e-6)


def test_cloud_rejects_bad_input():
    with pytest.raises(GeometryError):
        PointCloud(np.zeros((0, 3)))
    with pytest.raises(GeometryError):
        PointCloud([[np.nan, 0, 0]])
    with pytest.raises(GeometryError):
        PointCloud(np.zeros((3, 3)), labels=[0, 1])


# ---------------------------------------------------------------- FPS


def test_fps_square_corners():
    sq = PointCloud([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]])
    assert list(geometry.farthest_point_sampling(sq, 2, first=0)) == [0, 3]


def test_fps_all_points():
    pts = np.random.default_rng(0).random((12, 3))
    idx = geometry.farthest_point_sampling(PointCloud(pts), 12, seed=3)
    assert sorted(idx) == list(range(12))


def test_fps_greedy_property_small():
    pts = np.random.default_rng(7).random((20, 3))
    idx = geometry.farthest_point_sampling(PointCloud(pts), 5, seed=1)
    assert len(set(idx.tolist())) == 5
    assert brute_fps_check(pts, list(idx))


def test_fps_seed_determinism_and_k_too_large():
    c = PointCloud(np.random.default_rng(0).random((10, 3)))
    a = geometry.farthest_point_sampling(c, 4, seed=5)
    b = geometry.farthest_point_sampling(c, 4, seed=5)
    assert np.array_equal(a, b)
    with pytest.raises(GeometryError):
        geometry.farthest_point_sampling(c, 11)


def test_fps_tie_breaks_to_lowest_index():
    # points 1 and 2 are both at distance 1 from point 0
    c = PointCloud([[0, 0, 0], [1, 0, 0], [-1, 0, 0]])
    assert list(geometry.farthest_point_sampling(c, 2, first=0)) == [0, 1]


# ---------------------------------------------------------------- partition


def test_partition_single_point():
    sets = geometry.build_partition(PointCloud([[0.3, 0.1, 0.2]]), 1, 0.1)
    assert len(sets) == 1
    np.testing.assert_array_equal(sets[0].relative_points, [[0, 0, 0]])


def test_partition_two_clusters():
    rng = np.random.default_rng(2)
    a = rng.normal(scale=0.05, size=(20, 3))
    b = rng.normal(scale=0.05, size=(20, 3)) + [10, 0, 0]
    cloud = PointCloud(np.vstack([a, b]))
    sets = geometry.build_partition(cloud, 2, 1.0, seed=0, max_points_per_set=64)
    members = sorted(sorted(s.source_indices.tolist()) for s in sets)
    assert members == [list(range(20)), list(range(20, 40))]


def test_partition_covers_ball_neighbourhoods():
    pts = np.random.default_rng(3).normal(size=(1024, 3))
    cloud = geometry.normalize_unit_sphere(PointCloud(pts))
    sets = geometry.build_partition(cloud, 64, 0.2, seed=0, max_points_per_set=1024)
    covered = set().union(*(s.source_indices.tolist() for s in sets))
    # brute force: every point within the radius of some centroid
    for s in sets:
        d = np.linalg.norm(cloud.points - s.centroid, axis=1)
        inside = set(np.flatnonzero(d <= 0.2).tolist())
        assert inside == set(s.source_indices.tolist())
        assert inside <= covered
    fps = geometry.farthest_point_sampling(cloud, 64, seed=0)
    np.testing.assert_array_equal([s.centroid for s in sets], cloud.points[fps])


def test_partition_cap_keeps_nearest():
    pts = np.random.default_rng(4).normal(scale=0.1, size=(200, 3))
    cloud = PointCloud(pts)
    s = geometry.build_partition(cloud, 1, 1.0, seed=0, max_points_per_set=10)[0]
    d_all = np.sort(np.linalg.norm(pts - s.centroid, axis=1))
    np.testing.assert_allclose(np.sort(np.linalg.norm(s.relative_points, axis=1)), d_all[:10])


@given(cloud_arrays, st.floats(0.01, 5), st.integers(0, 100))
@settings(max_examples=50, deadline=None)
def test_partition_locality(pts, radius, seed):
    cloud = PointCloud(pts)
    k = min(4, len(cloud))
    for s in geometry.build_partition(cloud, k, radius, seed):
        assert len(s.relative_points) >= 1
        assert np.linalg.norm(s.relative_points, axis=1).max() <= radius + 1e-12


# ---------------------------------------------------------------- plane cut


def test_plane_cut_keeps_positive_side(monkeypatch):
    cloud = PointCloud([[1, 0, 0], [-1, 0, 0]])

    class FixedRng:
        def standard_normal(self, n):
            return np.array([1.0, 0.0, 0.0])

    monkeypatch.setattr(geometry.np.random, "default_rng", lambda seed: FixedRng())
    out, plane = geometry.simulate_plane_cut(cloud, minimum_points=1)
    np.testing.assert_array_equal(out.points, [[1, 0, 0]])
    np.testing.assert_array_equal(plane.normal, [1, 0, 0])


def test_plane_cut_all_on_one_side():
    rng = np.random.default_rng(0)
    n = rng.standard_normal(3)
    n /= np.linalg.norm(n)
    pts = np.random.default_rng(9).random((50, 3)) + 5 * n
    pts = pts[pts @ n > 0]
    cloud = PointCloud(pts)
    out, plane = geometry.simulate_plane_cut(cloud, seed=0, minimum_points=1)
    np.testing.assert_array_equal(out.points, cloud.points)


def test_plane_cut_sphere_fraction():
    p = np.random.default_rng(5).standard_normal((1000, 3))
    p /= np.linalg.norm(p, axis=1, keepdims=True)
    cloud = PointCloud(p)
    fractions = [len(geometry.simulate_plane_cut(cloud, seed=s)[0]) / 1000 for s in range(100)]
    assert 0.35 <= min(fractions) and max(fractions) <= 0.65


def test_plane_cut_subset_and_labels():
    p = np.random.default_rng(6).normal(size=(300, 3))
    cloud = PointCloud(p, labels=np.arange(300) % 3)
    out, plane = geometry.simulate_plane_cut(cloud, seed=11)
    assert np.all(out.points @ plane.normal > 0)
    idx = [int(np.flatnonzero((p == q).all(1))[0]) for q in out.points]
    np.testing.assert_array_equal(out.labels, cloud.labels[idx])


def test_plane_cut_too_small_errors():
    # points at the origin lie on neither side of any plane through it
    with pytest.raises(GeometryError):
        geometry.simulate_plane_cut(PointCloud([[0, 0, 0], [0, 0, 0]]), minimum_points=2)


# ---------------------------------------------------------------- chamfer


def test_chamfer_identity_and_unit():
    s = PointCloud(np.random.default_rng(0).random((30, 3)))
    assert geometry.chamfer_distance(s, s) == 0.0
    assert geometry.chamfer_distance(PointCloud([[0, 0, 0]]), PointCloud([[1, 0, 0]])) == 2.0


def test_chamfer_matches_brute_force():
    rng = np.random.default_rng(8)
    a, b = rng.random((50, 3)), rng.random((50, 3))
    assert abs(geometry.chamfer_distance(PointCloud(a), PointCloud(b)) - brute_chamfer(a, b)) < 1e-9


@given(cloud_arrays, cloud_arrays, st.randoms(use_true_random=False))
@settings(max_examples=50, deadline=None)
def test_chamfer_symmetry_and_permutation(a, b, rnd):
    ca, cb = PointCloud(a), PointCloud(b)
    d = geometry.chamfer_distance(ca, cb)
    assert d >= 0
    assert d == pytest.approx(geometry.chamfer_distance(cb, ca), rel=1e-12, abs=1e-12)
    perm = list(range(len(a)))
    rnd.shuffle(perm)
    assert d == pytest.approx(geometry.chamfer_distance(PointCloud(a[perm]), cb), rel=1e-12, abs=1e-12)


# ---------------------------------------------------------------- mesh sampling


def test_mesh_sampling_single_triangle():
    mesh = TriangleMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])
    pts = geometry.sample_mesh_surface(mesh, 1000, seed=0).points
    assert np.all(pts[:, 2] == 0)
    assert np.all(pts[:, 0] >= 0) and np.all(pts[:, 1] >= 0)
    assert np.all(pts[:, 0] + pts[:, 1] <= 1 + 1e-12)


def test_mesh_sampling_area_weighting():
    # triangle areas 1 and 3, well separated along x
    mesh = TriangleMesh(
        [[0, 0, 0], [2, 0, 0], [0, 1, 0], [10, 0, 0], [16, 0, 0], [10, 1, 0]],
        [[0, 1, 2], [3, 4, 5]],
    )
    np.testing.assert_allclose(mesh.face_areas(), [1, 3])
    pts = geometry.sample_mesh_surface(mesh, 10_000, seed=1).points
    frac = np.mean(pts[:, 0] >= 10)
    assert abs(frac - 0.75) <= 0.05


def test_mesh_sampling_degenerate():
    mesh = TriangleMesh([[0, 0, 0], [1, 0, 0], [2, 0, 0]], [[0, 1, 2]])
    with pytest.raises(GeometryError):
        geometry.sample_mesh_surface(mesh, 10)


def test_mesh_face_index_range():
    with pytest.raises(GeometryError):
        TriangleMesh([[0, 0, 0]], [[0, 1, 2]])


# ---------------------------------------------------------------- file formats


def test_xyz_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    cloud = PointCloud(rng.normal(size=(40, 3)), labels=rng.integers(0, 4, 40))
    geometry.write_xyz(tmp_path / "a.xyz", cloud)
    back = geometry.read_xyz(tmp_path / "a.xyz")
    np.testing.assert_allclose(back.points, cloud.points, atol=1e-6)
    np.testing.assert_array_equal(back.labels, cloud.labels)


def test_xyz_malformed_names_line(tmp_path):
    f = tmp_path / "bad.xyz"
    f.write_text("0 0 0\n1 0\n")
    with pytest.raises(GeometryError, match=r"bad.xyz:2"):
        geometry.read_xyz(f)


def test_off_reader_triangulates_fans(tmp_path):
    f = tmp_path / "quad.off"
    f.write_text("OFF\n4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n")
    mesh = geometry.read_off(f)
    assert mesh.faces.tolist() == [[0, 1, 2], [0, 2, 3]]
    assert mesh.face_areas().sum() == pytest.approx(1.0)


def test_off_reader_glued_header(tmp_path):
    f = tmp_path / "tri.off"
    f.write_text("OFF3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n")
    assert geometry.read_off(f).faces.tolist() == [[0, 1, 2]]
