"""Geometry-based comparison estimators on the 8-connected window.

Window solvers (PlaneSVD, PlanePCA, VectorSVD, AreaWeighted, AngleWeighted,
FALS) share one per-pixel driver; SRI and LINE-MOD are derivative based and
vectorised with numpy. Every estimator maps ``(DepthImage, CameraIntrinsics)``
to a camera-facing :class:`NormalMap` and leaves the one-pixel border invalid.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Sequence

import numba
import numpy as np

from .core import (
    CameraIntrinsics,
    DepthImage,
    InvalidInputError,
    NormalMap,
    backproject_arrays,
    orient_normals,
)
from .linalg import jacobi_eigh, smallest_eigvec

# Ring order east, northeast, north, northwest, west, southwest, south, southeast
# (v grows downwards, so "north" is v - 1). Slot 0 of a window is the centre.
RING_DU = np.array([1, 1, 0, -1, -1, -1, 0, 1])
RING_DV = np.array([0, -1, -1, -1, 0, 1, 1, 1])

PLANE_SVD, PLANE_PCA, VECTOR_SVD, AREA_WEIGHTED, ANGLE_WEIGHTED, FALS = range(6)

FALS_MAX_CONDITION = 1e12
MIN_NEIGHBORS = 3


@dataclass(frozen=True)
class Neighborhood:
    """Centre point and up to eight ring neighbours (``None`` where missing)."""

    center: Sequence[float]
    neighbors: Sequence

    @property
    def k(self) -> int:
        return sum(q is not None for q in self.neighbors)

    def as_window(self):
        if len(self.neighbors) != 8:
            raise InvalidInputError("a neighbourhood carries exactly eight ring slots")
        pts = np.zeros((9, 3))
        valid = np.zeros(9, dtype=np.bool_)
        pts[0] = self.center
        valid[0] = True
        for j, q in enumerate(self.neighbors):
            if q is not None:
                pts[j + 1] = q
                valid[j + 1] = True
        return pts, valid


@numba.njit(cache=True, nogil=True, error_model="numpy")
def _centroid(pts, valid):
    c0 = 0.0
    c1 = 0.0
    c2 = 0.0
    cnt = 0
    for j in range(9):
        if valid[j]:
            c0 += pts[j, 0]
            c1 += pts[j, 1]
            c2 += pts[j, 2]
            cnt += 1
    return c0 / cnt, c1 / cnt, c2 / cnt


@numba.njit(cache=True, nogil=True, error_model="numpy")
def _window_normal(method, pts, valid, out, m3, m4, a3, a4, w3, w4, V3, V4, e4):
    """Unnormalised-orientation unit normal of one window into ``out``; False if undefined."""
    k = 0
    for j in range(1, 9):
        k += valid[j]
    if k < MIN_NEIGHBORS:
        return False
    if method == PLANE_SVD:
        # offsets relative to the window centroid keep the fit well conditioned
        c0, c1, c2 = _centroid(pts, valid)
        for i in range(4):
            for j in range(4):
                m4[i, j] = 0.0
        for s in range(9):
            if not valid[s]:
                continue
            row0 = pts[s, 0] - c0
            row1 = pts[s, 1] - c1
            row2 = pts[s, 2] - c2
            m4[0, 0] += row0 * row0
            m4[0, 1] += row0 * row1
            m4[0, 2] += row0 * row2
            m4[0, 3] += row0
            m4[1, 1] += row1 * row1
            m4[1, 2] += row1 * row2
            m4[1, 3] += row1
            m4[2, 2] += row2 * row2
            m4[2, 3] += row2
            m4[3, 3] += 1.0
        for i in range(4):
            for j in range(i):
                m4[i, j] = m4[j, i]
        smallest_eigvec(m4, e4, a4, w4, V4)
        nn = np.sqrt(e4[0] * e4[0] + e4[1] * e4[1] + e4[2] * e4[2])
        if not nn > 1e-12:
            return False
        out[0] = e4[0] / nn
        out[1] = e4[1] / nn
        out[2] = e4[2] / nn
        return True
    if method == PLANE_PCA or method == VECTOR_SVD:
        if method == PLANE_PCA:
            c0, c1, c2 = _centroid(pts, valid)
            first = 0
        else:
            c0, c1, c2 = pts[0, 0], pts[0, 1], pts[0, 2]
            first = 1
        for i in range(3):
            for j in range(3):
                m3[i, j] = 0.0
        for s in range(first, 9):
            if not valid[s]:
                continue
            r0 = pts[s, 0] - c0
            r1 = pts[s, 1] - c1
            r2 = pts[s, 2] - c2
            m3[0, 0] += r0 * r0
            m3[0, 1] += r0 * r1
            m3[0, 2] += r0 * r2
            m3[1, 1] += r1 * r1
            m3[1, 2] += r1 * r2
            m3[2, 2] += r2 * r2
        m3[1, 0] = m3[0, 1]
        m3[2, 0] = m3[0, 2]
        m3[2, 1] = m3[1, 2]
        smallest_eigvec(m3, out, a3, w3, V3)
        return True
    if method == AREA_WEIGHTED or method == ANGLE_WEIGHTED:
        s0 = 0.0
        s1 = 0.0
        s2 = 0.0
        used = 0
        for j in range(8):
            ja = j + 1
            jb = (j + 1) % 8 + 1
            if not (valid[ja] and valid[jb]):
                continue
            ax = pts[ja, 0] - pts[0, 0]
            ay = pts[ja, 1] - pts[0, 1]
            az = pts[ja, 2] - pts[0, 2]
            bx = pts[jb, 0] - pts[0, 0]
            by = pts[jb, 1] - pts[0, 1]
            bz = pts[jb, 2] - pts[0, 2]
            cx = ay * bz - az * by
            cy = az * bx - ax * bz
            cz = ax * by - ay * bx
            cn = np.sqrt(cx * cx + cy * cy + cz * cz)
            if not cn > 0.0:
                continue
            if method == AREA_WEIGHTED:
                wgt = 0.5 * cn
            else:
                la = np.sqrt(ax * ax + ay * ay + az * az)
                lb = np.sqrt(bx * bx + by * by + bz * bz)
                cosang = (ax * bx + ay * by + az * bz) / (la * lb)
                cosang = min(1.0, max(-1.0, cosang))
                wgt = np.arccos(cosang)
            s0 += wgt * cx / cn
            s1 += wgt * cy / cn
            s2 += wgt * cz / cn
            used += 1
        if used == 0:
            return False
        nn = np.sqrt(s0 * s0 + s1 * s1 + s2 * s2)
        if not nn > 0.0:
            return False
        out[0] = s0 / nn
        out[1] = s1 / nn
        out[2] = s2 / nn
        return True
    if method == FALS:
        for i in range(3):
            for j in range(3):
                m3[i, j] = 0.0
        b0 = 0.0
        b1 = 0.0
        b2 = 0.0
        for s in range(9):
            if not valid[s]:
                continue
            r = np.sqrt(pts[s, 0] ** 2 + pts[s, 1] ** 2 + pts[s, 2] ** 2)
            v0 = pts[s, 0] / r
            v1 = pts[s, 1] / r
            v2 = pts[s, 2] / r
            m3[0, 0] += v0 * v0
            m3[0, 1] += v0 * v1
            m3[0, 2] += v0 * v2
            m3[1, 1] += v1 * v1
            m3[1, 2] += v1 * v2
            m3[2, 2] += v2 * v2
            b0 += v0 / r
            b1 += v1 / r
            b2 += v2 / r
        m3[1, 0] = m3[0, 1]
        m3[2, 0] = m3[0, 2]
        m3[2, 1] = m3[1, 2]
        return _fals_solve(m3, b0, b1, b2, out, a3, w3, V3)
    return False


@numba.njit(cache=True, nogil=True, error_model="numpy")
def _fals_solve(m3, b0, b1, b2, out, a3, w3, V3):
    # symmetric solve through the eigendecomposition, rejecting ill-conditioned systems
    for i in range(3):
        for j in range(3):
            a3[i, j] = m3[i, j]
    jacobi_eigh(a3, w3, V3)
    lo = min(w3[0], min(w3[1], w3[2]))
    hi = max(w3[0], max(w3[1], w3[2]))
    if not (lo > 0.0 and hi / lo <= FALS_MAX_CONDITION):
        return False
    n0 = 0.0
    n1 = 0.0
    n2 = 0.0
    for i in range(3):
        proj = (V3[0, i] * b0 + V3[1, i] * b1 + V3[2, i] * b2) / w3[i]
        n0 += V3[0, i] * proj
        n1 += V3[1, i] * proj
        n2 += V3[2, i] * proj
    nn = np.sqrt(n0 * n0 + n1 * n1 + n2 * n2)
    if not nn > 0.0:
        return False
    out[0] = n0 / nn
    out[1] = n1 / nn
    out[2] = n2 / nn
    return True


@numba.njit(cache=True, nogil=True, error_model="numpy")
def _fals_inverse(ray_u, ray_v, minv, ok):
    """Per-pixel inverse of the full-window ray matrix; depends on K and image size only."""
    h = ray_v.shape[0]
    w = ray_u.shape[0]
    m3 = np.empty((3, 3))
    a3 = np.empty((3, 3))
    w3 = np.empty(3)
    V3 = np.empty((3, 3))
    for v in range(h):
        for u in range(w):
            ok[v, u] = False
    for v in range(1, h - 1):
        for u in range(1, w - 1):
            for i in range(3):
                for j in range(3):
                    m3[i, j] = 0.0
            for s in range(9):
                if s == 0:
                    uu = u
                    vv = v
                else:
                    uu = u + RING_DU[s - 1]
                    vv = v + RING_DV[s - 1]
                t0 = ray_u[uu]
                t1 = ray_v[vv]
                tn = np.sqrt(t0 * t0 + t1 * t1 + 1.0)
                r0 = t0 / tn
                r1 = t1 / tn
                r2 = 1.0 / tn
                m3[0, 0] += r0 * r0
                m3[0, 1] += r0 * r1
                m3[0, 2] += r0 * r2
                m3[1, 1] += r1 * r1
                m3[1, 2] += r1 * r2
                m3[2, 2] += r2 * r2
            m3[1, 0] = m3[0, 1]
            m3[2, 0] = m3[0, 2]
            m3[2, 1] = m3[1, 2]
            for i in range(3):
                for j in range(3):
                    a3[i, j] = m3[i, j]
            jacobi_eigh(a3, w3, V3)
            lo = min(w3[0], min(w3[1], w3[2]))
            hi = max(w3[0], max(w3[1], w3[2]))
            if not (lo > 0.0 and hi / lo <= FALS_MAX_CONDITION):
                continue
            for i in range(3):
                for j in range(3):
                    acc = 0.0
                    for e in range(3):
                        acc += V3[i, e] * V3[j, e] / w3[e]
                    minv[v, u, i, j] = acc
            ok[v, u] = True


@functools.lru_cache(maxsize=8)
def fals_precompute(K: CameraIntrinsics, height: int, width: int):
    """Cached ``(M^-1, ok)`` for full 3x3 windows of an image of the given size."""
    ray_u = (np.arange(width, dtype=np.float64) - K.u0) / K.fx
    ray_v = (np.arange(height, dtype=np.float64) - K.v0) / K.fy
    minv = np.full((height, width, 3, 3), np.nan)
    ok = np.empty((height, width), dtype=np.bool_)
    _fals_inverse(ray_u, ray_v, minv, ok)
    minv.setflags(write=False)
    ok.setflags(write=False)
    return minv, ok


@numba.njit(cache=True, nogil=True, error_model="numpy")
def _window_driver(method, x, y, z, mask, fals_minv, fals_ok, out, out_mask):
    h, w = z.shape
    pts = np.empty((9, 3))
    valid = np.empty(9, dtype=np.bool_)
    n = np.empty(3)
    m3 = np.empty((3, 3))
    m4 = np.empty((4, 4))
    a3 = np.empty((3, 3))
    a4 = np.empty((4, 4))
    w3 = np.empty(3)
    w4 = np.empty(4)
    V3 = np.empty((3, 3))
    V4 = np.empty((4, 4))
    e4 = np.empty(4)
    for v in range(h):
        for u in range(w):
            out_mask[v, u] = False
            out[v, u, 0] = np.nan
            out[v, u, 1] = np.nan
            out[v, u, 2] = np.nan
    for v in range(1, h - 1):
        for u in range(1, w - 1):
            if not mask[v, u]:
                continue
            pts[0, 0] = x[v, u]
            pts[0, 1] = y[v, u]
            pts[0, 2] = z[v, u]
            valid[0] = True
            full = True
            for j in range(8):
                uu = u + RING_DU[j]
                vv = v + RING_DV[j]
                valid[j + 1] = mask[vv, uu]
                full &= mask[vv, uu]
                pts[j + 1, 0] = x[vv, uu]
                pts[j + 1, 1] = y[vv, uu]
                pts[j + 1, 2] = z[vv, uu]
            if method == FALS and full:
                if not fals_ok[v, u]:
                    continue
                b0 = 0.0
                b1 = 0.0
                b2 = 0.0
                for s in range(9):
                    r = np.sqrt(pts[s, 0] ** 2 + pts[s, 1] ** 2 + pts[s, 2] ** 2)
                    b0 += pts[s, 0] / (r * r)
                    b1 += pts[s, 1] / (r * r)
                    b2 += pts[s, 2] / (r * r)
                n0 = fals_minv[v, u, 0, 0] * b0 + fals_minv[v, u, 0, 1] * b1 + fals_minv[v, u, 0, 2] * b2
                n1 = fals_minv[v, u, 1, 0] * b0 + fals_minv[v, u, 1, 1] * b1 + fals_minv[v, u, 1, 2] * b2
                n2 = fals_minv[v, u, 2, 0] * b0 + fals_minv[v, u, 2, 1] * b1 + fals_minv[v, u, 2, 2] * b2
                nn = np.sqrt(n0 * n0 + n1 * n1 + n2 * n2)
                if not nn > 0.0:
                    continue
                n[0] = n0 / nn
                n[1] = n1 / nn
                n[2] = n2 / nn
            elif not _window_normal(method, pts, valid, n, m3, m4, a3, a4, w3, w4, V3, V4, e4):
                continue
            d = n[0] * pts[0, 0] + n[1] * pts[0, 1] + n[2] * pts[0, 2]
            sgn = -1.0 if (d > 0.0 or (d == 0.0 and n[2] > 0.0)) else 1.0
            out[v, u, 0] = sgn * n[0]
            out[v, u, 1] = sgn * n[1]
            out[v, u, 2] = sgn * n[2]
            out_mask[v, u] = True


_EMPTY_MINV = np.empty((1, 1, 3, 3))
_EMPTY_OK = np.zeros((1, 1), dtype=np.bool_)


def _run_window(method: int, depth: DepthImage, K: CameraIntrinsics) -> NormalMap:
    if not isinstance(depth, DepthImage):
        raise InvalidInputError("expected a DepthImage")
    z = depth.values
    x, y = backproject_arrays(K, z)
    if method == FALS:
        minv, ok = fals_precompute(K, depth.height, depth.width)
    else:
        minv, ok = _EMPTY_MINV, _EMPTY_OK
    out = np.empty(z.shape + (3,))
    out_mask = np.empty(z.shape, dtype=np.bool_)
    _window_driver(method, x, y, z, depth.mask, minv, ok, out, out_mask)
    return NormalMap.trusted(out, out_mask)


def plane_svd(depth: DepthImage, K: CameraIntrinsics) -> NormalMap:
    """Least-squares plane ``[Q+ 1] b`` through the window, via the 4x4 normal matrix."""
    return _run_window(PLANE_SVD, depth, K)


def plane_pca(depth: DepthImage, K: CameraIntrinsics) -> NormalMap:
    """Smallest principal axis of the mean-removed window."""
    return _run_window(PLANE_PCA, depth, K)


def vector_svd(depth: DepthImage, K: CameraIntrinsics) -> NormalMap:
    return _run_window(VECTOR_SVD, depth, K)


def area_weighted(depth: DepthImage, K: CameraIntrinsics) -> NormalMap:
    return _run_window(AREA_WEIGHTED, depth, K)


def angle_weighted(depth: DepthImage, K: CameraIntrinsics) -> NormalMap:
    return _run_window(ANGLE_WEIGHTED, depth, K)


def fals(depth: DepthImage, K: CameraIntrinsics) -> NormalMap:
    """Fast approximate least squares with per-K precomputed ``M^-1``.

    Solves ``sum v v^T n~ = sum v / r`` over the window; pixels whose window
    is incomplete solve their own (smaller) system.
    """
    return _run_window(FALS, depth, K)


def neighborhood_normal(method: int, nbhd: Neighborhood) -> np.ndarray:
    """Raw (unoriented) normal of one window solver applied to ``nbhd``."""
    pts, valid = nbhd.as_window()
    n = np.empty(3)
    ok = _window_normal(
        method, pts, valid, n,
        np.empty((3, 3)), np.empty((4, 4)), np.empty((3, 3)), np.empty((4, 4)),
        np.empty(3), np.empty(4), np.empty((3, 3)), np.empty((4, 4)), np.empty(4),
    )
    if not ok:
        raise InvalidInputError("normal undefined for this neighbourhood")
    return n


def _shift(a, du, dv):
    """``out[v, u] = a[v + dv, u + du]`` with NaN outside the image."""
    out = np.full_like(a, np.nan)
    h, w = a.shape[:2]
    out[max(0, -dv):h - max(0, dv), max(0, -du):w - max(0, du)] = \
        a[max(0, dv):h - max(0, -dv), max(0, du):w - max(0, -du)]
    return out


def _interior(shape):
    m = np.zeros(shape, dtype=bool)
    m[1:-1, 1:-1] = True
    return m


def _cross_valid(mask):
    m = mask.astype(float)
    ok = mask & _interior(mask.shape)
    for du, dv in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        ok &= np.nan_to_num(_shift(m, du, dv)) > 0
    return ok


def _finish(n, points, ok):
    with np.errstate(invalid="ignore", divide="ignore"):
        norm = np.linalg.norm(n, axis=2)
    ok = ok & np.isfinite(norm) & (norm > 0)
    out = np.full(n.shape, np.nan)
    out[ok] = orient_normals(n[ok], points[ok])
    return NormalMap.trusted(out, ok)


def spherical_image(depth: DepthImage, K: CameraIntrinsics):
    """Range ``r``, azimuth ``theta``, elevation ``phi`` and unit rays ``v`` per pixel.

    ``v = [sin(theta) cos(phi), sin(phi), cos(theta) cos(phi)]`` and the point is
    ``r * v``.
    """
    h, w = depth.shape
    tu = (np.arange(w, dtype=np.float64) - K.u0) / K.fx
    tv = (np.arange(h, dtype=np.float64) - K.v0) / K.fy
    tx = np.broadcast_to(tu[None, :], (h, w))
    ty = np.broadcast_to(tv[:, None], (h, w))
    tn = np.sqrt(tx * tx + ty * ty + 1.0)
    rays = np.stack([tx / tn, ty / tn, 1.0 / tn], axis=2)
    r = depth.values * tn
    theta = np.arctan2(rays[..., 0], rays[..., 2])
    phi = np.arcsin(rays[..., 1])
    return r, theta, phi, rays


def sri(depth: DepthImage, K: CameraIntrinsics) -> NormalMap:
    """Spherical range image estimator.

    With ``a = r_theta / (r cos(phi))`` and ``b = r_phi / r`` the normal is
    ``v - a e_theta - b e_phi`` where ``e_theta = R e_x`` and ``e_phi = R e_y``
    for ``R = R_y(theta) R_x(-phi)`` (``R e_z = v``). On a pinhole grid
    ``theta`` and ``phi`` both vary along ``u``, so the range derivatives are
    recovered from the central differences of ``r``, ``theta`` and ``phi``
    through the local 2x2 Jacobian.
    """
    r, theta, phi, rays = spherical_image(depth, K)

    def cdiff(a, du, dv):
        return 0.5 * (_shift(a, du, dv) - _shift(a, -du, -dv))

    r_u, r_v = cdiff(r, 1, 0), cdiff(r, 0, 1)
    th_u, th_v = cdiff(theta, 1, 0), cdiff(theta, 0, 1)
    ph_u, ph_v = cdiff(phi, 1, 0), cdiff(phi, 0, 1)
    with np.errstate(invalid="ignore", divide="ignore"):
        det = th_u * ph_v - ph_u * th_v
        r_th = (r_u * ph_v - r_v * ph_u) / det
        r_ph = (th_u * r_v - th_v * r_u) / det
        cphi = np.cos(phi)
        a = r_th / (r * cphi)
        b = r_ph / r
    e_theta = np.stack([np.cos(theta), np.zeros_like(theta), -np.sin(theta)], axis=2)
    e_phi = np.stack([-np.sin(theta) * np.sin(phi), np.cos(phi), -np.cos(theta) * np.sin(phi)], axis=2)
    n = rays - a[..., None] * e_theta - b[..., None] * e_phi
    ok = _cross_valid(depth.mask) & (cphi >= 1e-9) & np.isfinite(det) & (det != 0)
    points = rays * r[..., None]
    return _finish(n, points, ok)


def line_mod(depth: DepthImage, K: CameraIntrinsics) -> NormalMap:
    """Normal from two one-pixel tangent steps along the lines of sight.

    ``dz/du`` and ``dz/dv`` are central differences (half the FD kernel), so
    ``p1`` and ``p2`` sit one pixel to the right and below ``p0``.
    """
    z = depth.values
    h, w = z.shape
    tu = (np.arange(w, dtype=np.float64) - K.u0) / K.fx
    tv = (np.arange(h, dtype=np.float64) - K.v0) / K.fy
    z_u = 0.5 * (_shift(z, 1, 0) - _shift(z, -1, 0))
    z_v = 0.5 * (_shift(z, 0, 1) - _shift(z, 0, -1))
    tx = np.broadcast_to(tu[None, :], (h, w))
    ty = np.broadcast_to(tv[:, None], (h, w))
    p0 = np.stack([tx * z, ty * z, z], axis=2)
    z1 = z + z_u
    p1 = np.stack([(tx + 1.0 / K.fx) * z1, ty * z1, z1], axis=2)
    z2 = z + z_v
    p2 = np.stack([tx * z2, (ty + 1.0 / K.fy) * z2, z2], axis=2)
    n = np.cross(p1 - p0, p1 - p2)
    return _finish(n, p0, _cross_valid(depth.mask))
