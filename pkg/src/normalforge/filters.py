"""3x3 correlation, gradient kernels and the mean/median aggregators."""

from __future__ import annotations

import enum
from typing import Optional, Sequence, Tuple

import numba
import numpy as np

from .core import ScalarImage


class GradientKernelKind(str, enum.Enum):
    FD = "fd"
    SOBEL = "sobel"
    SCHARR = "scharr"
    PREWITT = "prewitt"


class AggregatorKind(str, enum.Enum):
    MEAN = "mean"
    MEDIAN = "median"


# Horizontal kernels in correlation orientation; vertical ones are transposes.
_HORIZONTAL = {
    GradientKernelKind.FD: [[0, 0, 0], [-1, 0, 1], [0, 0, 0]],
    GradientKernelKind.SOBEL: [[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]],
    GradientKernelKind.SCHARR: [[-3, 0, 3], [-10, 0, 10], [-3, 0, 3]],
    GradientKernelKind.PREWITT: [[-1, 0, 1], [-1, 0, 1], [-1, 0, 1]],
}


def gradient_kernels(kind: GradientKernelKind) -> Tuple[np.ndarray, np.ndarray]:
    """Return ``(horizontal, vertical)`` 3x3 kernels for ``kind``."""
    ku = np.array(_HORIZONTAL[GradientKernelKind(kind)], dtype=np.float64)
    return ku, ku.T.copy()


@numba.njit(cache=True, nogil=True, error_model="numpy")
def _correlate3x3(values, mask, kernel, out, out_mask):
    # taps are taken relative to the centre value, so zero-sum kernels give
    # exactly zero on constant regions
    h, w = values.shape
    ksum = 0.0
    for i in range(3):
        for j in range(3):
            ksum += kernel[i, j]
    for v in range(h):
        for u in range(w):
            out[v, u] = np.nan
            out_mask[v, u] = False
    for v in range(1, h - 1):
        for u in range(1, w - 1):
            ok = True
            c = values[v, u]
            acc = 0.0
            for i in range(3):
                for j in range(3):
                    ok &= mask[v + i - 1, u + j - 1]
                    acc += kernel[i, j] * (values[v + i - 1, u + j - 1] - c)
            if ok:
                out[v, u] = acc + ksum * c
                out_mask[v, u] = True


def correlate_arrays(values: np.ndarray, mask: np.ndarray, kernel: np.ndarray):
    """Array-level :func:`convolve3x3` returning ``(values, mask)``."""
    kernel = np.ascontiguousarray(kernel, dtype=np.float64)
    if kernel.shape != (3, 3):
        raise ValueError(f"kernel must be 3x3, got {kernel.shape}")
    if not np.all(np.isfinite(kernel)):
        raise ValueError("kernel coefficients must be finite")
    out = np.empty(values.shape, dtype=np.float64)
    out_mask = np.empty(values.shape, dtype=np.bool_)
    _correlate3x3(values, mask, kernel, out, out_mask)
    return out, out_mask


def convolve3x3(img: ScalarImage, kernel) -> ScalarImage:
    """Apply a 3x3 kernel in correlation form.

    ``out(u, v) = sum_ij kernel[i, j] * img(u + j - 1, v + i - 1)``. A pixel is
    valid only if all nine taps are in bounds and valid, so the one-pixel
    border is always invalid.
    """
    out, out_mask = correlate_arrays(img.values, img.mask, np.asarray(kernel, dtype=np.float64))
    return ScalarImage(out, out_mask)


def gradient_pair(img: ScalarImage, kind=GradientKernelKind.FD) -> Tuple[ScalarImage, ScalarImage]:
    """Horizontal and vertical gradients ``(Gu, Gv)`` of ``img``.

    Kernels are unnormalised: on an affine image FD returns twice the
    per-pixel slope, Prewitt six times, Sobel eight times, Scharr 32 times.
    """
    ku, kv = gradient_kernels(kind)
    return convolve3x3(img, ku), convolve3x3(img, kv)


def mean_shifted(values: Sequence[float]) -> float:
    """Arithmetic mean computed as ``x0 + sum(x - x0) / k`` in the given order.

    Equal to the textbook mean in exact arithmetic, and exactly ``x0`` when all
    values are equal.
    """
    x0 = values[0]
    acc = 0.0
    for x in values:
        acc += x - x0
    return x0 + acc / len(values)


def aggregate(candidates: Sequence[float], kind=AggregatorKind.MEAN) -> Optional[float]:
    """Reduce ``n_z`` candidates to one value; ``None`` signals an empty set."""
    values = [float(c) for c in candidates]
    if not values:
        return None
    if AggregatorKind(kind) is AggregatorKind.MEAN:
        return mean_shifted(values)
    values.sort()
    mid = len(values) // 2
    if len(values) % 2:
        return values[mid]
    return 0.5 * (values[mid - 1] + values[mid])
