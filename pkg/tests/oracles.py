"""Independent reference computations used by the tests.

Nothing here imports the estimators under test; only numpy's own linear
algebra is used, so agreement is a genuine cross-check.
"""

import numpy as np


def pixel_rays(fx, fy, u0, v0, height, width):
    u = np.arange(width, dtype=np.float64)
    v = np.arange(height, dtype=np.float64)
    U, V = np.meshgrid(u, v)
    return np.stack([(U - u0) / fx, (V - v0) / fy, np.ones_like(U)], axis=-1)


def plane_depth(normal, offset, fx, fy, u0, v0, height, width):
    """Depth of the plane ``n . p + b = 0`` along every pixel ray."""
    rays = pixel_rays(fx, fy, u0, v0, height, width)
    return -offset / (rays @ np.asarray(normal, dtype=np.float64))


# grazing pixels within this cosine of 90 deg fall back to the sign of n_z
TIE_COS = 1e-9


def camera_facing(n, p):
    n = np.asarray(n, dtype=np.float64)
    n = n / np.linalg.norm(n)
    d = float(np.dot(n, p))
    if abs(d) <= TIE_COS * np.linalg.norm(p):
        return -n if n[2] > 0 else n
    return -n if d > 0 else n


def assert_camera_facing(n, p):
    """Rows of ``n`` point at the camera, with grazing rows resolved by n_z <= 0."""
    d = np.sum(n * p, axis=-1)
    slack = TIE_COS * np.linalg.norm(p, axis=-1)
    assert np.all(d <= slack), d.max()
    assert np.all(n[np.abs(d) <= slack, 2] <= 0)


def svd_plane_normal(points):
    """Least-squares plane normal of an N x 3 cloud via a full numpy SVD."""
    pts = np.asarray(points, dtype=np.float64)
    _, _, vt = np.linalg.svd(pts - pts.mean(axis=0))
    return vt[-1]


def angle_deg(a, b):
    """Angle via atan2, accurate near zero."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.degrees(np.arctan2(np.linalg.norm(np.cross(a, b), axis=-1), np.sum(a * b, axis=-1)))


def sign_free_angle_deg(a, b):
    e = angle_deg(a, b)
    return np.minimum(e, 180.0 - e)
