import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import jacobi_eigh, naive_covariance, box_lattice_cloud

from graspbin.binning import BinGrid, label_of_vector
from graspbin.data.mesh import make_sphere
from graspbin.geometry import quat_to_matrix, random_quats
from graspbin.pointcloud import (
    DegenerateCloudError,
    Frame,
    PointCloud,
    covariance,
    downsample,
    load_cloud,
    pca,
    read_gbpc,
    second_pc_is_defined,
    select_pc_bins,
    write_gbpc,
    write_xyz,
)


def _aligned(u, v):
    return min(np.abs(u - v).max(), np.abs(u + v).max())


def test_jacobi_oracle_on_known_matrix():
    vals, vecs = jacobi_eigh(np.diag([1.0, 3.0, 2.0]))
    assert np.allclose(vals, [3, 2, 1])
    assert np.allclose(np.abs(vecs), [[0, 1, 0], [0, 0, 1], [1, 0, 0]])


def test_covariance_matches_loop():
    rng = np.random.default_rng(0)
    pts = rng.normal(size=(40, 3))
    center, cov = covariance(pts)
    assert np.allclose(center, pts.mean(0))
    assert np.allclose(cov, naive_covariance(pts), atol=1e-14)


def test_pca_matches_jacobi():
    rng = np.random.default_rng(1)
    for _ in range(100):
        pts = rng.normal(size=(50, 3)) * rng.uniform(0.1, 2.0, size=3)
        res = pca(PointCloud(pts))
        vals, vecs = jacobi_eigh(naive_covariance(pts))
        assert np.allclose(res.eigenvalues, vals, atol=1e-9)
        for i in range(3):
            assert np.allclose(res.eigenvectors[i], vecs[i], atol=1e-9)


def test_pca_sign_rule():
    rng = np.random.default_rng(2)
    res = pca(PointCloud(rng.normal(size=(30, 3))))
    for v in res.eigenvectors:
        first = v[np.abs(v) > 1e-12][0]
        assert first > 0


def test_pca_needs_three_points():
    with pytest.raises(ValueError):
        pca(PointCloud(np.zeros((2, 3))))


def test_sphere_is_degenerate():
    cloud = PointCloud(make_sphere(0.05).vertices)
    res = pca(cloud)
    assert not second_pc_is_defined(res)
    with pytest.raises(DegenerateCloudError) as err:
        select_pc_bins(cloud, BinGrid(4, 8))
    assert err.value.pca.eigenvalues.shape == (3,)


def test_collinear_cloud_is_degenerate():
    t = np.linspace(0, 1, 20)[:, None]
    with pytest.raises(DegenerateCloudError):
        select_pc_bins(PointCloud(t * [1.0, 2.0, 3.0]), BinGrid(4, 8))


def test_elongated_box_selects_second_axis():
    rng = np.random.default_rng(3)
    grid = BinGrid(4, 8)
    for q in random_quats(rng, 20):
        r = quat_to_matrix(q)
        cloud = PointCloud(box_lattice_cloud([0.2, 0.1, 0.03], r))
        got = set(select_pc_bins(cloud, grid))
        axis = r[:, 1]
        assert got == {label_of_vector(grid, axis), label_of_vector(grid, -axis)}


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_pca_translation_and_rotation(seed):
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(30, 3)) * [3.0, 1.5, 0.5]
    base = pca(PointCloud(pts))
    moved = pca(PointCloud(pts + rng.normal(size=3) * 5))
    assert np.allclose(base.eigenvalues, moved.eigenvalues, atol=1e-9)
    for i in range(3):
        assert _aligned(base.eigenvectors[i], moved.eigenvectors[i]) < 1e-9
    r = quat_to_matrix(random_quats(rng, 1)[0])
    rot = pca(PointCloud(pts @ r.T))
    assert np.allclose(base.eigenvalues, rot.eigenvalues, atol=1e-9)
    for i in range(3):
        assert _aligned(r @ base.eigenvectors[i], rot.eigenvectors[i]) < 1e-9


def test_downsample_sizes_and_determinism():
    rng = np.random.default_rng(4)
    cloud = PointCloud(rng.normal(size=(100, 3)))
    a = downsample(cloud, 30, seed=5)
    assert len(a) == 30
    assert len({tuple(p) for p in a.points}) == 30
    assert np.array_equal(a.points, downsample(cloud, 30, seed=5).points)
    b = downsample(cloud, 250, seed=5)
    assert len(b) == 250
    assert {tuple(p) for p in b.points} == {tuple(p) for p in cloud.points}
    with pytest.raises(ValueError):
        downsample(PointCloud(np.zeros((0, 3))), 5, 0)


def test_cloud_validation():
    with pytest.raises(ValueError):
        PointCloud(np.zeros((4, 2)))
    with pytest.raises(ValueError):
        PointCloud(np.array([[0, 0, np.nan]]))
    with pytest.raises(ValueError):
        PointCloud(np.zeros((4, 3)), features=np.zeros(3))


def test_gbpc_round_trip(tmp_path):
    rng = np.random.default_rng(6)
    pts = rng.normal(size=(17, 3)).astype(np.float32).astype(np.float64)
    feats = rng.normal(size=(17, 2)).astype(np.float32).astype(np.float64)
    path = tmp_path / "c.gbpc"
    write_gbpc(path, PointCloud(pts, Frame.CAMERA, feats))
    raw = path.read_bytes()
    assert raw[:4] == b"GBPC"
    assert int.from_bytes(raw[4:8], "little") == 17 and int.from_bytes(raw[8:12], "little") == 2
    back = read_gbpc(path)
    assert np.array_equal(back.points, pts) and np.array_equal(back.features, feats)
    assert np.array_equal(load_cloud(path).points, pts)


def test_gbpc_rejects_truncation(tmp_path):
    path = tmp_path / "c.gbpc"
    write_gbpc(path, PointCloud(np.ones((5, 3))))
    path.write_bytes(path.read_bytes()[:-4])
    with pytest.raises(ValueError, match="expected"):
        read_gbpc(path)


def test_xyz_round_trip(tmp_path):
    pts = np.array([[0.1, 0.2, 0.3], [1.0, -2.0, 3.5]])
    path = tmp_path / "c.xyz"
    write_xyz(path, PointCloud(pts))
    assert np.allclose(load_cloud(path).points, pts)
