"""Procedural meshes, viewpoint sampling, exact depth raycasting and noise.

Depth frames are produced by casting one ray per pixel (through integer pixel
coordinates, matching :func:`normalforge.core.backproject`) against every
triangle whose projected footprint covers the pixel. Each valid pixel's ground
truth is the face normal of the nearest hit triangle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numba
import numpy as np

from .core import CameraIntrinsics, ConfigurationError, DepthImage, NormalMap, ScalarImage, orient_normals

NOISE_PRESETS = {"low": 0.001, "med": 0.003, "high": 0.01}


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=np.float64)
        t = np.ascontiguousarray(self.triangles, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise ConfigurationError(f"vertices must be N x 3, got {v.shape}")
        if t.ndim != 2 or t.shape[1] != 3:
            raise ConfigurationError(f"triangles must be M x 3, got {t.shape}")
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise ConfigurationError("triangle index out of range")
        cross = self._cross(v, t)
        area = 0.5 * np.linalg.norm(cross, axis=1)
        if np.any(~(area > 0)):
            raise ConfigurationError("mesh contains degenerate (zero-area) triangles")
        v.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)

    @staticmethod
    def _cross(v, t):
        a, b, c = v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]
        return np.cross(b - a, c - a)

    @property
    def normals(self) -> np.ndarray:
        cross = self._cross(self.vertices, self.triangles)
        return cross / np.linalg.norm(cross, axis=1, keepdims=True)

    @property
    def areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(self._cross(self.vertices, self.triangles), axis=1)

    @property
    def centroid(self) -> np.ndarray:
        return self.vertices.mean(axis=0)

    def bounding_radius(self, center=None) -> float:
        c = self.centroid if center is None else np.asarray(center, dtype=np.float64)
        return float(np.max(np.linalg.norm(self.vertices - c, axis=1)))

    def transformed(self, rotation=None, translation=None) -> "TriangleMesh":
        v = self.vertices
        if rotation is not None:
            v = v @ np.asarray(rotation, dtype=np.float64).T
        if translation is not None:
            v = v + np.asarray(translation, dtype=np.float64)
        return TriangleMesh(v, self.triangles)


@dataclass(frozen=True, eq=False)
class Pose:
    """Object-to-camera transform ``p_cam = rotation @ p_obj + translation``."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        if abs(np.linalg.det(R) - 1.0) > 1e-9 or not np.allclose(R @ R.T, np.eye(3), atol=1e-9):
            raise ConfigurationError("pose rotation must be orthonormal with determinant 1")
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @property
    def camera_center(self) -> np.ndarray:
        return -self.rotation.T @ self.translation

    def to_dict(self) -> Dict:
        return {"rotation": self.rotation.tolist(), "translation": self.translation.tolist()}

    @classmethod
    def from_dict(cls, d: Dict) -> "Pose":
        return cls(d["rotation"], d["translation"])


@dataclass(frozen=True)
class NoiseSpec:
    sigma: float
    seed: int = 0

    def __post_init__(self):
        if not (math.isfinite(self.sigma) and self.sigma >= 0):
            raise ConfigurationError(f"noise sigma must be >= 0, got {self.sigma}")


# ---------------------------------------------------------------------------
# meshes


def _plane(width=1.0, height=1.0, nx=1, ny=1):
    if width <= 0 or height <= 0 or nx < 1 or ny < 1:
        raise ConfigurationError("plane needs positive size and at least one cell per side")
    xs = np.linspace(-width / 2, width / 2, nx + 1)
    ys = np.linspace(-height / 2, height / 2, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    verts = np.stack([X.ravel(), Y.ravel(), np.zeros(X.size)], axis=1)
    return verts, _grid_triangles(nx, ny)


def _grid_triangles(nx, ny):
    tris = []
    for j in range(ny):
        for i in range(nx):
            a = j * (nx + 1) + i
            b = a + 1
            c = a + nx + 1
            d = c + 1
            # counter-clockwise seen from +z
            tris.append((a, b, d))
            tris.append((a, d, c))
    return np.array(tris, dtype=np.int64)


def _icosphere(radius=1.0, subdiv=2, center=(0.0, 0.0, 0.0)):
    if radius <= 0 or subdiv < 0:
        raise ConfigurationError("icosphere needs radius > 0 and subdiv >= 0")
    g = (1.0 + math.sqrt(5.0)) / 2.0
    verts = [
        (-1, g, 0), (1, g, 0), (-1, -g, 0), (1, -g, 0),
        (0, -1, g), (0, 1, g), (0, -1, -g), (0, 1, -g),
        (g, 0, -1), (g, 0, 1), (-g, 0, -1), (-g, 0, 1),
    ]
    verts = [np.array(v, dtype=np.float64) / np.linalg.norm(v) for v in verts]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    for _ in range(subdiv):
        cache: Dict[Tuple[int, int], int] = {}

        def midpoint(i, j):
            key = (i, j) if i < j else (j, i)
            if key not in cache:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    v = np.array(verts) * radius + np.asarray(center, dtype=np.float64)
    return v, np.array(faces, dtype=np.int64)


def _torus(R=2.0, r=0.5, n_major=64, n_minor=32):
    if not (R > r > 0) or n_major < 3 or n_minor < 3:
        raise ConfigurationError("torus needs R > r > 0 and at least 3 segments per ring")
    th = 2 * np.pi * np.arange(n_major) / n_major
    ph = 2 * np.pi * np.arange(n_minor) / n_minor
    T, P = np.meshgrid(th, ph, indexing="ij")
    verts = np.stack([
        (R + r * np.cos(P)) * np.cos(T),
        (R + r * np.cos(P)) * np.sin(T),
        r * np.sin(P),
    ], axis=-1).reshape(-1, 3)
    tris = []
    for i in range(n_major):
        for j in range(n_minor):
            a = i * n_minor + j
            b = ((i + 1) % n_major) * n_minor + j
            c = ((i + 1) % n_major) * n_minor + (j + 1) % n_minor
            d = i * n_minor + (j + 1) % n_minor
            tris.append((a, b, c))
            tris.append((a, c, d))
    return verts, np.array(tris, dtype=np.int64)


def _heightfield(size=1.0, resolution=32, amplitude=0.1, waves=3, seed=0, heights=None):
    if heights is not None:
        H = np.asarray(heights, dtype=np.float64)
        if H.ndim != 2 or min(H.shape) < 2:
            raise ConfigurationError("heights must be a 2-D grid of at least 2 x 2")
        ny, nx = H.shape[0] - 1, H.shape[1] - 1
    else:
        if resolution < 1 or size <= 0:
            raise ConfigurationError("heightfield needs size > 0 and resolution >= 1")
        nx = ny = resolution
        rng = np.random.default_rng(seed)
        xs = np.linspace(-size / 2, size / 2, nx + 1)
        X, Y = np.meshgrid(xs, xs)
        H = np.zeros_like(X)
        for _ in range(waves):
            kx, ky = rng.uniform(-2.0, 2.0, size=2) * np.pi / size
            phase = rng.uniform(0, 2 * np.pi)
            H += amplitude / waves * np.sin(kx * X + ky * Y + phase)
    xs = np.linspace(-size / 2, size / 2, nx + 1)
    ys = np.linspace(-size / 2, size / 2, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    verts = np.stack([X.ravel(), Y.ravel(), H.ravel()], axis=1)
    return verts, _grid_triangles(nx, ny)


_SHAPES = {"plane": _plane, "sphere": _icosphere, "icosphere": _icosphere,
           "torus": _torus, "heightfield": _heightfield}


def make_mesh(shape: str, **params) -> TriangleMesh:
    """Build a procedural mesh.

    Shapes and their keyword parameters:

    - ``plane``: ``width``, ``height``, ``nx``, ``ny`` (z = 0, facing +z)
    - ``sphere``/``icosphere``: ``radius``, ``subdiv``, ``center``
    - ``torus``: ``R``, ``r``, ``n_major``, ``n_minor`` (axis along z)
    - ``heightfield``: ``size``, ``resolution``, ``amplitude``, ``waves``,
      ``seed`` or an explicit ``heights`` grid

    Closed shapes have outward-facing triangle winding.
    """
    try:
        builder = _SHAPES[shape]
    except KeyError:
        raise ConfigurationError(f"unknown shape {shape!r}; choose from {sorted(_SHAPES)}") from None
    try:
        verts, tris = builder(**params)
    except TypeError as exc:
        raise ConfigurationError(f"bad parameters for {shape}: {exc}") from None
    return TriangleMesh(verts, tris)


def read_obj(path) -> TriangleMesh:
    """Load ``v``/``f`` records of a Wavefront-style file; polygons are fan-triangulated."""
    verts: List[Sequence[float]] = []
    tris: List[Tuple[int, int, int]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0] not in ("v", "f"):
                continue
            try:
                if parts[0] == "v":
                    verts.append([float(c) for c in parts[1:4]])
                else:
                    idx = []
                    for tok in parts[1:]:
                        i = int(tok.split("/")[0])
                        idx.append(i - 1 if i > 0 else len(verts) + i)
                    for j in range(1, len(idx) - 1):
                        tris.append((idx[0], idx[j], idx[j + 1]))
            except (ValueError, IndexError):
                raise ConfigurationError(f"{path}:{lineno}: malformed {parts[0]} record") from None
    return TriangleMesh(np.array(verts, dtype=np.float64).reshape(-1, 3), np.array(tris, dtype=np.int64).reshape(-1, 3))


# ---------------------------------------------------------------------------
# viewpoints


def look_at(eye, target, up=(0.0, 1.0, 0.0)) -> Pose:
    """Pose of a camera at ``eye`` looking at ``target`` (camera y points down, away from ``up``)."""
    eye = np.asarray(eye, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    fwd = target - eye
    fwd /= np.linalg.norm(fwd)
    down = -np.asarray(up, dtype=np.float64)
    if abs(np.dot(down / np.linalg.norm(down), fwd)) > 0.999:
        down = np.array([0.0, 0.0, -1.0]) if abs(fwd[2]) < 0.9 else np.array([-1.0, 0.0, 0.0])
    right = np.cross(down, fwd)
    right /= np.linalg.norm(right)
    down = np.cross(fwd, right)
    R = np.stack([right, down, fwd])
    return Pose(R, -R @ eye)


def sample_viewpoints(n: int, radius: float, seed: int = 0, center=(0.0, 0.0, 0.0),
                      bounding_radius: float = 0.0) -> List[Pose]:
    """Cameras on a sphere of ``radius`` around ``center``, all looking at it.

    The first pose sits on the +z axis; the others are drawn uniformly on the
    sphere from a seeded generator.
    """
    if n < 1:
        raise ConfigurationError(f"need at least one viewpoint, got {n}")
    if not radius > bounding_radius:
        raise ConfigurationError(
            f"viewpoint radius {radius} must exceed the object bounding radius {bounding_radius}"
        )
    center = np.asarray(center, dtype=np.float64)
    rng = np.random.Generator(np.random.Philox(seed))
    dirs = [np.array([0.0, 0.0, 1.0])]
    while len(dirs) < n:
        d = rng.standard_normal(3)
        norm = np.linalg.norm(d)
        if norm > 1e-12:
            dirs.append(d / norm)
    return [look_at(center + radius * d, center) for d in dirs]


# ---------------------------------------------------------------------------
# raycasting


@numba.njit(cache=True, nogil=True, error_model="numpy")
def _raycast(verts, tris, fx, fy, u0, v0, width, height, depth, tri_id):
    for v in range(height):
        for u in range(width):
            depth[v, u] = np.inf
            tri_id[v, u] = -1
    d = np.empty(3)
    for t in range(tris.shape[0]):
        A = verts[tris[t, 0]]
        B = verts[tris[t, 1]]
        C = verts[tris[t, 2]]
        if A[2] > 1e-9 and B[2] > 1e-9 and C[2] > 1e-9:
            ua = fx * A[0] / A[2] + u0
            ub = fx * B[0] / B[2] + u0
            uc = fx * C[0] / C[2] + u0
            va = fy * A[1] / A[2] + v0
            vb = fy * B[1] / B[2] + v0
            vc = fy * C[1] / C[2] + v0
            umin = max(0, int(math.floor(min(ua, min(ub, uc)))) - 1)
            umax = min(width - 1, int(math.ceil(max(ua, max(ub, uc)))) + 1)
            vmin = max(0, int(math.floor(min(va, min(vb, vc)))) - 1)
            vmax = min(height - 1, int(math.ceil(max(va, max(vb, vc)))) + 1)
        elif A[2] <= 0.0 and B[2] <= 0.0 and C[2] <= 0.0:
            continue
        else:
            umin, umax, vmin, vmax = 0, width - 1, 0, height - 1
        for v in range(vmin, vmax + 1):
            for u in range(umin, umax + 1):
                d[0] = (u - u0) / fx
                d[1] = (v - v0) / fy
                d[2] = 1.0
                hit = _watertight(A, B, C, d)
                if hit > 0.0 and hit < depth[v, u]:
                    depth[v, u] = hit
                    tri_id[v, u] = t


@numba.njit(cache=True, nogil=True, inline="always", error_model="numpy")
def _watertight(A, B, C, d):
    """Watertight ray/triangle test for a ray from the origin; returns t or -1."""
    ad0 = abs(d[0])
    ad1 = abs(d[1])
    ad2 = abs(d[2])
    kz = 0
    if ad1 > ad0:
        kz = 1
    if ad2 > max(ad0, ad1):
        kz = 2
    kx = (kz + 1) % 3
    ky = (kx + 1) % 3
    if d[kz] < 0.0:
        kx, ky = ky, kx
    sx = d[kx] / d[kz]
    sy = d[ky] / d[kz]
    sz = 1.0 / d[kz]
    ax = A[kx] - sx * A[kz]
    ay = A[ky] - sy * A[kz]
    bx = B[kx] - sx * B[kz]
    by = B[ky] - sy * B[kz]
    cx = C[kx] - sx * C[kz]
    cy = C[ky] - sy * C[kz]
    U = cx * by - cy * bx
    V = ax * cy - ay * cx
    W = bx * ay - by * ax
    if (U < 0.0 or V < 0.0 or W < 0.0) and (U > 0.0 or V > 0.0 or W > 0.0):
        return -1.0
    det = U + V + W
    if det == 0.0:
        return -1.0
    T = U * sz * A[kz] + V * sz * B[kz] + W * sz * C[kz]
    if (det < 0.0 and T >= 0.0) or (det > 0.0 and T <= 0.0):
        return -1.0
    # d[2] == 1, so the ray parameter is the camera-frame depth
    return T / det


def raycast(mesh: TriangleMesh, K: CameraIntrinsics, pose: Pose, width: int, height: int):
    """Per-pixel hit depth (``inf`` on miss) and hit triangle index (-1 on miss)."""
    if width < 3 or height < 3:
        raise ConfigurationError("render size must be at least 3 x 3")
    cam = mesh.vertices @ pose.rotation.T + pose.translation
    depth = np.empty((height, width))
    tri_id = np.empty((height, width), dtype=np.int64)
    _raycast(np.ascontiguousarray(cam), mesh.triangles, float(K.fx), float(K.fy),
             float(K.u0), float(K.v0), int(width), int(height), depth, tri_id)
    return depth, tri_id


def render_depth(mesh: TriangleMesh, K: CameraIntrinsics, pose: Pose, width: int,
                 height: int) -> Tuple[DepthImage, NormalMap]:
    """Render a depth frame and its per-triangle ground-truth normals."""
    depth, tri_id = raycast(mesh, K, pose, width, height)
    hit = tri_id >= 0
    normals_cam = mesh.normals @ pose.rotation.T
    gt = np.full((height, width, 3), np.nan)
    n = normals_cam[tri_id[hit]]
    tu = (np.arange(width) - K.u0) / K.fx
    tv = (np.arange(height) - K.v0) / K.fy
    rays = np.stack(np.broadcast_arrays(tu[None, :], tv[:, None], np.ones((1, 1))), axis=2)
    gt[hit] = orient_normals(n, rays[hit])
    depth = np.where(hit, depth, np.nan)
    return DepthImage(depth, hit), NormalMap(gt, hit)


# ---------------------------------------------------------------------------
# noise


def noise_sigma(preset: str, depth: ScalarImage) -> float:
    """Absolute sigma for a relative preset (fraction of the frame's mean valid depth)."""
    try:
        frac = NOISE_PRESETS[preset]
    except KeyError:
        raise ConfigurationError(f"unknown noise preset {preset!r}; choose from {sorted(NOISE_PRESETS)}") from None
    if not depth.mask.any():
        return 0.0
    return frac * float(np.mean(depth.values[depth.mask]))


def add_gaussian_noise(depth: DepthImage, spec: NoiseSpec) -> DepthImage:
    """Perturb valid depths with N(0, sigma^2); samples come from a counter-based Philox stream."""
    if spec.sigma == 0:
        return DepthImage(depth.values, depth.mask)
    rng = np.random.Generator(np.random.Philox(spec.seed))
    noise = rng.standard_normal(depth.shape) * spec.sigma
    z = np.where(depth.mask, depth.values + noise, np.nan)
    return DepthImage(z, depth.mask)
