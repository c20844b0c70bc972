import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from normalforge.core import CameraIntrinsics, ConfigurationError, DepthImage, backproject_image
from normalforge.synth import (
    NOISE_PRESETS,
    NoiseSpec,
    Pose,
    TriangleMesh,
    add_gaussian_noise,
    look_at,
    make_mesh,
    noise_sigma,
    raycast,
    read_obj,
    render_depth,
    sample_viewpoints,
)
from oracles import angle_deg, assert_camera_facing

IDENTITY = Pose(np.eye(3), np.zeros(3))


def edges(mesh):
    t = mesh.triangles
    e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    return {tuple(sorted(x)) for x in e.tolist()}


def test_plane_counts():
    m = make_mesh("plane", width=1.0, height=1.0)
    assert m.vertices.shape == (4, 3) and m.triangles.shape == (2, 3)
    assert_allclose(m.normals[0], m.normals[1])
    assert_allclose(abs(m.normals[0, 2]), 1.0)


def test_icosphere_counts_and_radius():
    m = make_mesh("icosphere", radius=1.0, subdiv=2)
    assert m.vertices.shape == (162, 3) and m.triangles.shape == (320, 3)
    assert_allclose(np.linalg.norm(m.vertices, axis=1), 1.0, atol=1e-9)
    assert len(m.vertices) - len(edges(m)) + len(m.triangles) == 2


def test_torus_normals_unit_and_closed():
    m = make_mesh("torus", R=2.0, r=0.5, n_major=64, n_minor=32)
    assert_allclose(np.linalg.norm(m.normals, axis=1), 1.0, atol=1e-9)
    assert len(m.vertices) - len(edges(m)) + len(m.triangles) == 0


@pytest.mark.parametrize("shape,params", [
    ("icosphere", dict(radius=1.0, subdiv=1)),
    ("torus", dict(R=2.0, r=0.5, n_major=24, n_minor=12)),
])
def test_closed_meshes_wind_outward(shape, params):
    m = make_mesh(shape, **params)
    a = m.vertices[m.triangles]
    cent = a.mean(axis=1)
    if shape == "torus":
        ring = cent.copy()
        ring[:, 2] = 0
        ring *= 2.0 / np.linalg.norm(ring, axis=1, keepdims=True)
        out = cent - ring
    else:
        out = cent
    assert np.all(np.sum(m.normals * out, axis=1) > 0)
    # divergence theorem: signed volume is positive for outward winding
    vol = np.sum(np.einsum("ij,ij->i", a[:, 0], np.cross(a[:, 1], a[:, 2]))) / 6
    assert vol > 0


def test_heightfield_is_deterministic():
    a = make_mesh("heightfield", resolution=8, seed=3)
    b = make_mesh("heightfield", resolution=8, seed=3)
    c = make_mesh("heightfield", resolution=8, seed=4)
    assert_array_equal(a.vertices, b.vertices)
    assert not np.array_equal(a.vertices, c.vertices)


@pytest.mark.parametrize("shape,params", [
    ("sphere", dict(radius=-1.0)),
    ("sphere", dict(subdiv=-1)),
    ("torus", dict(R=0.5, r=1.0)),
    ("plane", dict(width=0.0)),
    ("plane", dict(bogus=1)),
    ("cube", {}),
])
def test_make_mesh_rejects_bad_params(shape, params):
    with pytest.raises(ConfigurationError):
        make_mesh(shape, **params)


def test_degenerate_triangle_rejected():
    with pytest.raises(ConfigurationError):
        TriangleMesh(np.zeros((3, 3)), np.array([[0, 1, 2]]))


def test_read_obj(tmp_path):
    p = tmp_path / "quad.obj"
    p.write_text("# quad\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 3//1 4//1\n")
    m = read_obj(p)
    assert m.triangles.tolist() == [[0, 1, 2], [0, 2, 3]]
    assert_allclose(m.normals, [[0, 0, 1], [0, 0, 1]])
    p.write_text("v 0 0 zero\n")
    with pytest.raises(ConfigurationError, match=":1:"):
        read_obj(p)


# ---------------------------------------------------------------------------
# viewpoints


def test_single_viewpoint_is_canonical():
    (pose,) = sample_viewpoints(1, 3.0, seed=0)
    assert_allclose(pose.camera_center, [0, 0, 3])
    assert_allclose(pose.rotation @ np.array([0, 0, -1.0]), [0, 0, 1])
    assert_allclose(pose.rotation @ np.zeros(3) + pose.translation, [0, 0, 3])


@settings(max_examples=20, deadline=None)
@given(n=st.integers(1, 30), radius=st.floats(1.5, 20), seed=st.integers(0, 2 ** 31))
def test_viewpoints_on_sphere_and_reproducible(n, radius, seed):
    center = np.array([0.1, -0.2, 0.3])
    poses = sample_viewpoints(n, radius, seed, center=center, bounding_radius=1.0)
    again = sample_viewpoints(n, radius, seed, center=center, bounding_radius=1.0)
    assert len(poses) == n
    for p, q in zip(poses, again):
        assert_array_equal(p.rotation, q.rotation)
        assert_array_equal(p.translation, q.translation)
        assert abs(np.linalg.norm(p.camera_center - center) - radius) < 1e-9
        # the centroid projects onto the optical axis
        c = p.rotation @ center + p.translation
        assert_allclose(c[:2], 0, atol=1e-9)
        assert c[2] == pytest.approx(radius)


def test_viewpoint_radius_too_small():
    with pytest.raises(ConfigurationError):
        sample_viewpoints(3, 1.0, bounding_radius=1.5)
    with pytest.raises(ConfigurationError):
        sample_viewpoints(0, 3.0)


def test_pose_round_trip_and_validation():
    p = look_at([1.0, 2.0, 3.0], [0.0, 0.0, 0.0])
    q = Pose.from_dict(p.to_dict())
    assert_array_equal(p.rotation, q.rotation)
    with pytest.raises(ConfigurationError):
        Pose(np.diag([1.0, 1.0, -1.0]), np.zeros(3))


# ---------------------------------------------------------------------------
# rendering


def footprint_deg(mesh, center):
    """Largest angle between a face normal and the radial direction of its corners."""
    a = mesh.vertices[mesh.triangles] - center
    return max(np.max(angle_deg(mesh.normals, a[:, j])) for j in range(3))


@pytest.mark.parametrize("subdiv", [3, 5])
def test_on_axis_sphere(K, subdiv):
    mesh = make_mesh("icosphere", radius=1.0, subdiv=subdiv, center=(0, 0, 3))
    depth, gt = render_depth(mesh, K, IDENTITY, 640, 480)
    # the principal-point ray hits a flat face near the pole
    bound = footprint_deg(mesh, [0, 0, 3])
    assert 2.0 <= depth.values[240, 320] <= 2.0 + (1 - np.cos(np.radians(bound)))
    assert angle_deg(gt.normals[240, 320], [0, 0, -1]) < bound
    assert not depth.mask[0, 0] and not gt.mask[0, 0]


def test_on_axis_pole_vertex_sphere(K):
    # icosahedron rotated so a vertex sits on the optical axis
    mesh = make_mesh("icosphere", radius=1.0, subdiv=2)
    v = mesh.vertices[0] / np.linalg.norm(mesh.vertices[0])
    axis = np.cross(v, [0, 0, -1.0])
    s, c = np.linalg.norm(axis), np.dot(v, [0, 0, -1.0])
    k = axis / s
    Kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    R = np.eye(3) + s * Kx + (1 - c) * Kx @ Kx
    depth, _ = render_depth(mesh.transformed(R, [0, 0, 3]), K, IDENTITY, 640, 480)
    assert depth.values[240, 320] == pytest.approx(2.0, abs=1e-12)


def test_miss_is_invalid(K):
    mesh = make_mesh("plane", width=0.1, height=0.1).transformed(translation=[5.0, 0, 2])
    depth, gt = render_depth(mesh, K, IDENTITY, 64, 48)
    assert not depth.mask.any() and not gt.mask.any()


def test_fronto_parallel_plane(K):
    mesh = make_mesh("plane", width=10.0, height=10.0, nx=3, ny=3).transformed(translation=[0, 0, 2])
    depth, gt = render_depth(mesh, K, IDENTITY, 640, 480)
    assert depth.mask.all()
    assert_allclose(depth.values, 2.0, rtol=1e-12)
    assert_array_equal(gt.normals[..., :2], 0)
    assert_array_equal(gt.normals[..., 2], -1)


def test_depth_lies_on_hit_triangle(K):
    mesh = make_mesh("torus", R=1.0, r=0.35, n_major=48, n_minor=24)
    pose = sample_viewpoints(2, 3.0, seed=5, bounding_radius=1.35)[1]
    Kc = CameraIntrinsics(K.fx / 4, K.fy / 4, 80, 60)
    depth, tri = raycast(mesh, Kc, pose, 160, 120)
    hit = tri >= 0
    assert hit.sum() > 1000
    assert np.all(np.isinf(depth[~hit]))
    pts = backproject_image(Kc, DepthImage(np.where(hit, depth, np.nan)))[hit]
    cam = mesh.vertices @ pose.rotation.T + pose.translation
    a = cam[mesh.triangles[tri[hit], 0]]
    n = (mesh.normals @ pose.rotation.T)[tri[hit]]
    assert np.max(np.abs(np.sum((pts - a) * n, axis=1))) < 1e-6


def test_ground_truth_unit_and_facing(K):
    mesh = make_mesh("torus", R=1.0, r=0.35, n_major=48, n_minor=24)
    for pose in sample_viewpoints(3, 3.0, seed=1, bounding_radius=1.35):
        depth, gt = render_depth(mesh, K, pose, 320, 240)
        assert_array_equal(depth.mask, gt.mask)
        n = gt.normals[gt.mask]
        assert_allclose(np.linalg.norm(n, axis=1), 1.0, atol=1e-12)
        assert_camera_facing(n, backproject_image(K, depth)[gt.mask])


def sphere_gt_error(K, subdiv):
    mesh = make_mesh("icosphere", radius=1.0, subdiv=subdiv, center=(0, 0, 3))
    depth, gt = render_depth(mesh, K, IDENTITY, 640, 480)
    pts = backproject_image(K, depth)[depth.mask]
    exact = pts - [0, 0, 3]
    return angle_deg(gt.normals[gt.mask], exact)


def test_ground_truth_within_one_triangle_footprint(K):
    errs = []
    for s in (2, 3, 4):
        err = sphere_gt_error(K, s)
        mesh = make_mesh("icosphere", radius=1.0, subdiv=s, center=(0, 0, 3))
        assert np.max(err) <= footprint_deg(mesh, [0, 0, 3])
        errs.append(err)
    assert np.mean(errs[1]) < 3.0
    assert np.max(errs[0]) > np.max(errs[1]) > np.max(errs[2])
    assert np.max(errs[2]) < 3.0


@pytest.mark.xfail(strict=True, reason=(
    "at subdiv 3 an icosphere face spans ~7.9 degrees, so the worst pixel near a corner "
    "deviates ~5.4 degrees from the exact normal; only the mean (~2.3) is below 3"))
def test_ground_truth_worst_pixel_subdiv3(K):
    assert np.max(sphere_gt_error(K, 3)) < 3.0


# ---------------------------------------------------------------------------
# noise


def test_zero_sigma_is_identity():
    d = DepthImage(np.full((5, 6), 2.0))
    out = add_gaussian_noise(d, NoiseSpec(0.0, 1))
    assert_array_equal(out.values, d.values)


def test_noise_deterministic_per_seed():
    d = DepthImage(np.full((20, 30), 2.0))
    a = add_gaussian_noise(d, NoiseSpec(0.01, 7))
    b = add_gaussian_noise(d, NoiseSpec(0.01, 7))
    c = add_gaussian_noise(d, NoiseSpec(0.01, 8))
    assert_array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)


def test_noise_statistics():
    sigma = 0.01
    d = DepthImage(np.full((480, 640), 2.0))
    diff = add_gaussian_noise(d, NoiseSpec(sigma, 123)).values - 2.0
    n = diff.size
    assert abs(diff.mean()) < 3 * sigma / np.sqrt(n)
    assert abs(diff.std() - sigma) < 0.05 * sigma


def test_noise_keeps_invalid_and_drops_non_positive():
    z = np.full((40, 40), 0.001)
    z[0, 0] = np.nan
    out = add_gaussian_noise(DepthImage(z), NoiseSpec(0.01, 0))
    assert not out.mask[0, 0]
    assert np.all(out.values[out.mask] > 0)
    assert (~out.mask).sum() > 1


def test_noise_presets():
    d = DepthImage(np.array([[1.0, 3.0, np.nan]]))
    assert noise_sigma("med", d) == pytest.approx(NOISE_PRESETS["med"] * 2.0)
    with pytest.raises(ConfigurationError):
        noise_sigma("extreme", d)
    with pytest.raises(ConfigurationError):
        NoiseSpec(-1.0)
