"""Three-filters-to-normal: two gradient filters plus one mean/median filter.

For a plane ``n.p + b = 0`` seen through a pinhole camera, ``1/z`` is affine in
``(u, v)``, so ``n_x`` and ``n_y`` are (up to the common factor ``-b``) the
scaled horizontal and vertical gradients of the inverse depth image. Each of
the eight neighbours then yields one ``n_z`` candidate from the plane equation,
and the candidates are reduced with a mean or a median.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence

import numba
import numpy as np

from .core import (
    CameraIntrinsics,
    ConfigurationError,
    DepthImage,
    DisparityImage,
    ORIENT_TIE_COS,
    InvalidInputError,
    NormalMap,
    ScalarImage,
)
from .filters import AggregatorKind, GradientKernelKind, gradient_kernels


@dataclass(frozen=True)
class ThreeFiltersConfig:
    kernel: GradientKernelKind = GradientKernelKind.FD
    aggregator: AggregatorKind = AggregatorKind.MEDIAN
    dz_epsilon: float = 1e-8
    flat_epsilon: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kernel", GradientKernelKind(self.kernel))
        object.__setattr__(self, "aggregator", AggregatorKind(self.aggregator))
        if not self.dz_epsilon > 0:
            raise ConfigurationError(f"dz_epsilon must be positive, got {self.dz_epsilon}")
        if not self.flat_epsilon >= 0:
            raise ConfigurationError(f"flat_epsilon must be >= 0, got {self.flat_epsilon}")


def nz_candidates(center, neighbors: Sequence, n_x: float, n_y: float, dz_epsilon: float = 1e-8) -> List[float]:
    """``(dx * n_x + dy * n_y) / dz`` for every neighbour with ``|dz| >= dz_epsilon``."""
    cx, cy, cz = (float(c) for c in center)
    out = []
    for q in neighbors:
        dx, dy, dz = float(q[0]) - cx, float(q[1]) - cy, float(q[2]) - cz
        if abs(dz) < dz_epsilon:
            continue
        out.append((dx * n_x + dy * n_y) / dz)
    return out


_DU = np.array([-1, 0, 1, -1, 1, -1, 0, 1])
_DV = np.array([-1, -1, -1, 0, 0, 1, 1, 1])


@numba.njit(cache=True, nogil=True, inline="always", error_model="numpy")
def _cswap(a, i, j):
    lo = min(a[i], a[j])
    hi = max(a[i], a[j])
    a[i] = lo
    a[j] = hi


@numba.njit(cache=True, nogil=True, inline="always", error_model="numpy")
def _sort8(a):
    # optimal 19-comparator network for eight elements
    _cswap(a, 0, 2); _cswap(a, 1, 3); _cswap(a, 4, 6); _cswap(a, 5, 7)
    _cswap(a, 0, 4); _cswap(a, 1, 5); _cswap(a, 2, 6); _cswap(a, 3, 7)
    _cswap(a, 0, 1); _cswap(a, 2, 3); _cswap(a, 4, 5); _cswap(a, 6, 7)
    _cswap(a, 2, 4); _cswap(a, 3, 5)
    _cswap(a, 1, 4); _cswap(a, 3, 6)
    _cswap(a, 1, 2); _cswap(a, 3, 4); _cswap(a, 5, 6)


@numba.njit(cache=True, nogil=True, error_model="numpy")
def _three_filters_kernel(g, ray_u, ray_v, z, mask, ku, kv, is_fd, sx, sy, nx_img, ny_img, precomputed,
                          dz_eps, flat_eps, use_median, out, out_mask):
    """Per-pixel estimate; ``precomputed`` selects gradient images over inline filtering.

    With inline filtering ``n_x = sx * (ku * g)`` and ``n_y = sy * (kv * g)``.
    A pixel is estimated only if all nine depth taps are valid. Points are
    back-projected on the fly as ``(ray_u[u] * z, ray_v[v] * z, z)``.
    """
    h, w = z.shape
    cand = np.empty(8, dtype=np.float64)
    for v in range(h):
        for u in range(w):
            out_mask[v, u] = False
            out[v, u, 0] = np.nan
            out[v, u, 1] = np.nan
            out[v, u, 2] = np.nan
    for v in range(1, h - 1):
        for u in range(1, w - 1):
            ok = True
            for i in range(3):
                for j in range(3):
                    ok &= mask[v + i - 1, u + j - 1]
            if not ok:
                continue
            if precomputed:
                nx = nx_img[v, u]
                ny = ny_img[v, u]
                if not (np.isfinite(nx) and np.isfinite(ny)):
                    continue
            else:
                # centre-relative taps, as in filters.convolve3x3 (kernels sum to zero)
                gc = g[v, u]
                if is_fd:
                    # the two non-zero FD taps, in the same order as the general loop
                    gu = -(g[v, u - 1] - gc) + (g[v, u + 1] - gc)
                    gv = -(g[v - 1, u] - gc) + (g[v + 1, u] - gc)
                else:
                    gu = 0.0
                    gv = 0.0
                    for i in range(3):
                        for j in range(3):
                            t = g[v + i - 1, u + j - 1] - gc
                            gu += ku[i, j] * t
                            gv += kv[i, j] * t
                nx = sx * gu
                ny = sy * gv
            pz = z[v, u]
            px = ray_u[u] * pz
            py = ray_v[v] * pz
            k = 0
            flat = True
            # fixed row-major window order keeps the mean bitwise reproducible
            for j in range(8):
                vv = v + _DV[j]
                uu = u + _DU[j]
                zq = z[vv, uu]
                ddz = zq - pz
                a = abs(ddz)
                flat &= a <= flat_eps
                if a >= dz_eps:
                    cand[k] = ((ray_u[uu] * zq - px) * nx + (ray_v[vv] * zq - py) * ny) / ddz
                    k += 1
            # zero gradients mean a fronto-parallel tangent plane; every
            # candidate would then be 0 and the direction undefined
            if flat or k == 0 or (nx == 0.0 and ny == 0.0):
                out[v, u, 0] = 0.0
                out[v, u, 1] = 0.0
                out[v, u, 2] = -1.0
                out_mask[v, u] = True
                continue
            if use_median and k == 8:
                _sort8(cand)
                agg = 0.5 * (cand[3] + cand[4])
            elif use_median:
                for i in range(1, k):
                    key = cand[i]
                    j = i - 1
                    while j >= 0 and cand[j] > key:
                        cand[j + 1] = cand[j]
                        j -= 1
                    cand[j + 1] = key
                mid = k // 2
                if k % 2 == 1:
                    agg = cand[mid]
                else:
                    agg = 0.5 * (cand[mid - 1] + cand[mid])
            else:
                # shifted mean: exact when all candidates are equal
                acc = 0.0
                for i in range(k):
                    acc += cand[i] - cand[0]
                agg = cand[0] + acc / k
            nz = -agg
            norm = np.sqrt(nx * nx + ny * ny + nz * nz)
            if not (norm > 0.0 and norm < np.inf):
                continue
            ox = nx / norm
            oy = ny / norm
            oz = nz / norm
            d = ox * px + oy * py + oz * pz
            tie = abs(d) <= ORIENT_TIE_COS * np.sqrt(px * px + py * py + pz * pz)
            flip = (tie and oz > 0.0) or (not tie and d > 0.0)
            sgn = 1.0 - 2.0 * flip
            out[v, u, 0] = sgn * ox
            out[v, u, 1] = sgn * oy
            out[v, u, 2] = sgn * oz
            out_mask[v, u] = True


_NO_IMAGE = np.empty((1, 1), dtype=np.float64)


def _run(g, z, mask, K, sx, sy, cfg, nx_img=None, ny_img=None):
    ku, kv = gradient_kernels(cfg.kernel)
    ray_u = (np.arange(z.shape[1], dtype=np.float64) - K.u0) / K.fx
    ray_v = (np.arange(z.shape[0], dtype=np.float64) - K.v0) / K.fy
    out = np.empty(z.shape + (3,), dtype=np.float64)
    out_mask = np.empty(z.shape, dtype=np.bool_)
    precomputed = nx_img is not None
    _three_filters_kernel(
        _NO_IMAGE if g is None else g, ray_u, ray_v, z, mask, ku, kv,
        cfg.kernel is GradientKernelKind.FD, float(sx), float(sy),
        _NO_IMAGE if nx_img is None else nx_img, _NO_IMAGE if ny_img is None else ny_img,
        precomputed, float(cfg.dz_epsilon), float(cfg.flat_epsilon),
        cfg.aggregator is AggregatorKind.MEDIAN, out, out_mask,
    )
    return NormalMap.trusted(out, out_mask)


def normals_from_gradients(depth: DepthImage, K: CameraIntrinsics, gu: ScalarImage,
                           gv: ScalarImage, cfg: ThreeFiltersConfig = ThreeFiltersConfig(),
                           scale_x: float = None, scale_y: float = None) -> NormalMap:
    """Finish the estimate from precomputed gradients ``gu``, ``gv``.

    ``n_x = scale_x * gu`` and ``n_y = scale_y * gv`` (defaulting to ``fx`` and
    ``fy``, the inverse-depth case); ``n_z`` comes from the neighbour candidates.
    """
    if gu.shape != depth.shape or gv.shape != depth.shape:
        raise InvalidInputError(
            f"gradient shapes {gu.shape}/{gv.shape} do not match depth {depth.shape}"
        )
    sx = K.fx if scale_x is None else scale_x
    sy = K.fy if scale_y is None else scale_y
    # gradient validity is checked at the centre pixel only; NaN marks it invalid
    nx = np.where(gu.mask, sx * gu.values, np.nan)
    ny = np.where(gv.mask, sy * gv.values, np.nan)
    return _run(None, depth.values, depth.mask, K, sx, sy, cfg, nx, ny)


def estimate_from_depth(depth: DepthImage, K: CameraIntrinsics,
                        cfg: ThreeFiltersConfig = ThreeFiltersConfig()) -> NormalMap:
    if not isinstance(depth, ScalarImage):
        raise InvalidInputError("depth must be a DepthImage")
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / depth.values
    return _run(inv, depth.values, depth.mask, K, K.fx, K.fy, cfg)


def estimate_from_disparity(disp: DisparityImage, K: CameraIntrinsics,
                            cfg: ThreeFiltersConfig = ThreeFiltersConfig()) -> NormalMap:
    """Same estimator fed directly with disparity gradients.

    ``n_x = dd/du`` and ``n_y = dd/dv``; depths for the candidates come from
    ``z = f * t_c / d``.
    """
    f = K.stereo_focal()
    if not isinstance(disp, ScalarImage):
        raise InvalidInputError("disp must be a DisparityImage")
    with np.errstate(divide="ignore", invalid="ignore"):
        z = f * K.t_c / disp.values
    zmask = disp.mask & np.isfinite(z)
    return _run(disp.values, z, zmask, K, 1.0, 1.0, cfg)
