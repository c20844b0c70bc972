"""Camera model, image containers and normal orientation.

Conventions used everywhere in the package: the camera looks along +z, image
``u`` grows to the right and ``v`` grows downwards, and a visible surface
normal ``n`` at point ``p`` is camera-facing, i.e. ``<n, p> <= 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np


class NormalForgeError(Exception):
    """Base class for all package errors."""


class InvalidInputError(NormalForgeError, ValueError):
    pass


class ConfigurationError(NormalForgeError, ValueError):
    pass


class FormatError(NormalForgeError, ValueError):
    pass


class EmptyInputError(NormalForgeError, ValueError):
    pass


FLAT_NORMAL = (0.0, 0.0, -1.0)
_UNIT_SLACK = 4 * np.finfo(np.float64).eps
# |cos| between a unit normal and the viewing ray at or below this counts as grazing
ORIENT_TIE_COS = 1e-9


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics in pixels, with an optional stereo baseline in meters."""

    fx: float
    fy: float
    u0: float
    v0: float
    t_c: Optional[float] = None

    def __post_init__(self):
        for name in ("fx", "fy", "u0", "v0"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ConfigurationError(f"{name} must be finite, got {value!r}")
        if self.fx <= 0:
            raise ConfigurationError(f"fx must be positive, got {self.fx!r}")
        if self.fy <= 0:
            raise ConfigurationError(f"fy must be positive, got {self.fy!r}")
        if self.t_c is not None and not (math.isfinite(self.t_c) and self.t_c > 0):
            raise ConfigurationError(f"t_c must be positive, got {self.t_c!r}")

    @property
    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.u0], [0.0, self.fy, self.v0], [0.0, 0.0, 1.0]]
        )

    def stereo_focal(self) -> float:
        """Return the shared focal length f after checking the stereo configuration."""
        if self.t_c is None:
            raise ConfigurationError("disparity input requires the stereo baseline t_c")
        if self.fx != self.fy:
            raise ConfigurationError(
                f"disparity input requires fx == fy, got fx={self.fx}, fy={self.fy}"
            )
        return self.fx


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ScalarImage:
    """H x W float64 grid with a validity mask.

    Invalid pixels hold NaN in ``values``; non-finite inputs are folded into
    the mask at construction. Both arrays are read-only afterwards.
    """

    values: np.ndarray
    mask: np.ndarray = field(default=None)

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.ndim != 2:
            raise InvalidInputError(f"expected a 2-D image, got shape {values.shape}")
        mask = np.isfinite(values)
        if self.mask is not None:
            given = np.asarray(self.mask, dtype=bool)
            if given.shape != values.shape:
                raise InvalidInputError(
                    f"mask shape {given.shape} does not match values {values.shape}"
                )
            mask &= given
        mask &= self._extra_validity(values)
        values[~mask] = np.nan
        object.__setattr__(self, "values", _readonly(values))
        object.__setattr__(self, "mask", _readonly(mask))

    @staticmethod
    def _extra_validity(values: np.ndarray) -> np.ndarray:
        return np.ones(values.shape, dtype=bool)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


class _PositiveImage(ScalarImage):
    @staticmethod
    def _extra_validity(values):
        with np.errstate(invalid="ignore"):
            return values > 0


class DepthImage(_PositiveImage):
    """Per-pixel depth z in meters; valid pixels have finite z > 0."""


class DisparityImage(_PositiveImage):
    """Per-pixel stereo disparity d in pixels; valid pixels have finite d > 0."""


class InverseDepthImage(_PositiveImage):
    """Per-pixel 1/z; valid pixels are finite and positive."""


@dataclass(frozen=True, eq=False)
class NormalMap:
    """H x W x 3 unit normals with a validity mask (invalid pixels are NaN).

    Valid vectors are normalised on construction; zero or non-finite vectors
    are folded into the mask.
    """

    normals: np.ndarray
    mask: np.ndarray = field(default=None)

    def __post_init__(self):
        normals = np.array(self.normals, dtype=np.float64, copy=True)
        if normals.ndim != 3 or normals.shape[2] != 3:
            raise InvalidInputError(f"expected an H x W x 3 array, got {normals.shape}")
        mask = np.all(np.isfinite(normals), axis=2)
        if self.mask is not None:
            given = np.asarray(self.mask, dtype=bool)
            if given.shape != normals.shape[:2]:
                raise InvalidInputError(
                    f"mask shape {given.shape} does not match normals {normals.shape[:2]}"
                )
            mask &= given
        norm = np.linalg.norm(np.where(mask[..., None], normals, 0.0), axis=2)
        mask &= norm > 0
        with np.errstate(invalid="ignore", divide="ignore"):
            normals = normals / norm[..., None]
        normals[~mask] = np.nan
        object.__setattr__(self, "normals", _readonly(normals))
        object.__setattr__(self, "mask", _readonly(mask))

    @classmethod
    def trusted(cls, normals: np.ndarray, mask: np.ndarray) -> "NormalMap":
        """Wrap estimator output without re-validating; caller guarantees NaN-where-invalid."""
        self = object.__new__(cls)
        object.__setattr__(self, "normals", _readonly(normals))
        object.__setattr__(self, "mask", _readonly(mask))
        return self

    @property
    def shape(self) -> Tuple[int, int]:
        return self.mask.shape

    @property
    def height(self) -> int:
        return self.mask.shape[0]

    @property
    def width(self) -> int:
        return self.mask.shape[1]


def backproject(K: CameraIntrinsics, u: float, v: float, z: float) -> np.ndarray:
    """Lift pixel ``(u, v)`` at depth ``z`` to a camera-frame point."""
    if not (math.isfinite(z) and z > 0):
        raise InvalidInputError(f"depth must be finite and positive, got {z!r}")
    return np.array([(u - K.u0) * z / K.fx, (v - K.v0) * z / K.fy, z])


def project(K: CameraIntrinsics, p) -> Tuple[float, float, float]:
    x, y, z = (float(c) for c in p)
    return K.fx * x / z + K.u0, K.fy * y / z + K.v0, z


def backproject_arrays(K: CameraIntrinsics, z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Camera-frame ``x`` and ``y`` images for a depth array ``z``."""
    h, w = z.shape
    u = np.arange(w, dtype=np.float64)[None, :]
    v = np.arange(h, dtype=np.float64)[:, None]
    return (u - K.u0) * z / K.fx, (v - K.v0) * z / K.fy


def backproject_image(K: CameraIntrinsics, depth: ScalarImage) -> np.ndarray:
    """Vectorised :func:`backproject` over a whole depth image (H x W x 3, NaN where invalid)."""
    x, y = backproject_arrays(K, depth.values)
    return np.stack([x, y, depth.values], axis=2)


def inverse_depth(depth: DepthImage) -> InverseDepthImage:
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / depth.values
    return InverseDepthImage(inv, depth.mask)


def disparity_to_depth(K: CameraIntrinsics, disp: DisparityImage) -> DepthImage:
    f = K.stereo_focal()
    with np.errstate(divide="ignore", invalid="ignore"):
        z = f * K.t_c / disp.values
    return DepthImage(z, disp.mask)


def depth_to_disparity(K: CameraIntrinsics, depth: DepthImage) -> DisparityImage:
    f = K.stereo_focal()
    with np.errstate(divide="ignore", invalid="ignore"):
        d = f * K.t_c / depth.values
    return DisparityImage(d, depth.mask)


def orient_toward_camera(n, p) -> np.ndarray:
    """Normalise ``n`` and flip it so that it faces the camera at point ``p``.

    Grazing normals, whose angle to the ray through ``p`` is within
    ``ORIENT_TIE_COS`` of 90 degrees, are treated as ties and flipped only
    when ``n_z > 0``. The sign of a near-zero dot product is rounding noise,
    so this keeps the choice stable.
    """
    n = np.asarray(n, dtype=np.float64)
    norm = float(np.linalg.norm(n))
    if not (math.isfinite(norm) and norm > 0):
        raise InvalidInputError("cannot orient a zero-norm or non-finite normal")
    # leave already-unit input untouched so repeated calls are bitwise stable
    if abs(norm - 1.0) > _UNIT_SLACK:
        n = n / norm
    p = np.asarray(p, dtype=np.float64)
    d = float(np.dot(n, p))
    tie = abs(d) <= ORIENT_TIE_COS * float(np.linalg.norm(p))
    if (d > 0 and not tie) or (tie and n[2] > 0):
        n = -n
    return n


def orient_normals(normals: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Array form of :func:`orient_toward_camera` (normals assumed non-zero)."""
    n = normals / np.linalg.norm(normals, axis=-1, keepdims=True)
    d = np.einsum("...i,...i->...", n, points)
    tie = np.abs(d) <= ORIENT_TIE_COS * np.linalg.norm(points, axis=-1)
    flip = np.where(tie, n[..., 2] > 0, d > 0)
    return np.where(flip[..., None], -n, n)
