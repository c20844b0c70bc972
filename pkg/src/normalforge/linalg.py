"""Cyclic Jacobi eigen-solver for tiny symmetric matrices.

Used by the window-fitting baselines, which only need the eigenvector of the
smallest eigenvalue of a 3x3 or 4x4 normal matrix.
"""

from __future__ import annotations

import numba
import numpy as np

from .core import InvalidInputError

JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 50
_EPS = np.finfo(np.float64).eps


@numba.njit(cache=True, nogil=True, error_model="numpy")
def jacobi_eigh(a, w, V):
    """Diagonalise symmetric ``a`` in place.

    On return ``w`` holds the eigenvalues and the columns of ``V`` the
    eigenvectors. Iterates until the off-diagonal Frobenius norm is below
    ``JACOBI_TOL`` times the matrix norm and every off-diagonal element is
    below machine epsilon relative to its diagonal pair (or 50 sweeps).
    Returns the number of sweeps used.
    """
    n = a.shape[0]
    total = 0.0
    for i in range(n):
        for j in range(n):
            V[i, j] = 1.0 if i == j else 0.0
            total += a[i, j] * a[i, j]
    thresh = (JACOBI_TOL * JACOBI_TOL) * total
    sweeps = 0
    while sweeps < JACOBI_MAX_SWEEPS:
        off = 0.0
        loose = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                off += 2.0 * apq * apq
                # an element only counts as converged once it is negligible
                # next to its own diagonal pair, not just next to the whole matrix
                if abs(apq) > _EPS * np.sqrt(abs(a[p, p] * a[q, q])):
                    loose = True
        if off <= thresh and not loose:
            break
        sweeps += 1
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if theta >= 0.0:
                    t = 1.0 / (theta + np.sqrt(1.0 + theta * theta))
                else:
                    t = -1.0 / (-theta + np.sqrt(1.0 + theta * theta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                for k in range(n):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - s * akq
                    a[k, q] = s * akp + c * akq
                for k in range(n):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = c * apk - s * aqk
                    a[q, k] = s * apk + c * aqk
                for k in range(n):
                    vkp = V[k, p]
                    vkq = V[k, q]
                    V[k, p] = c * vkp - s * vkq
                    V[k, q] = s * vkp + c * vkq
                a[p, q] = 0.0
                a[q, p] = 0.0
    for i in range(n):
        w[i] = a[i, i]
    return sweeps


@numba.njit(cache=True, nogil=True, error_model="numpy")
def smallest_eigvec(m, out, a, w, V):
    """Unit eigenvector of the smallest eigenvalue of symmetric ``m`` into ``out``.

    ``a``, ``w`` and ``V`` are scratch buffers of matching size, so the
    per-pixel callers do not allocate. Among (numerically) equal smallest
    eigenvalues the vector with the largest-magnitude leading component wins;
    the first non-negligible component of the result is made positive.
    Returns the smallest eigenvalue.
    """
    n = m.shape[0]
    for i in range(n):
        for j in range(n):
            a[i, j] = m[i, j]
    jacobi_eigh(a, w, V)
    lo = w[0]
    scale = abs(w[0])
    for i in range(1, n):
        if w[i] < lo:
            lo = w[i]
        if abs(w[i]) > scale:
            scale = abs(w[i])
    tie = 1e-10 * scale
    best = -1
    for i in range(n):
        if w[i] - lo > tie:
            continue
        if best < 0:
            best = i
            continue
        # lexicographic on component magnitudes
        for k in range(n):
            d = abs(V[k, i]) - abs(V[k, best])
            if d > 1e-12:
                best = i
                break
            if d < -1e-12:
                break
    vmax = 0.0
    for k in range(n):
        if abs(V[k, best]) > vmax:
            vmax = abs(V[k, best])
    sign = 1.0
    for k in range(n):
        if abs(V[k, best]) > 1e-12 * vmax:
            if V[k, best] < 0.0:
                sign = -1.0
            break
    norm = 0.0
    for k in range(n):
        norm += V[k, best] * V[k, best]
    norm = np.sqrt(norm)
    for k in range(n):
        out[k] = sign * V[k, best] / norm
    return lo


def smallest_eigenvector_sym(M) -> np.ndarray:
    """Unit eigenvector for the smallest eigenvalue of a small symmetric matrix.

    Args:
        M: square symmetric matrix (typically 3x3 or 4x4).

    Returns:
        Canonical unit eigenvector (first non-negligible component positive).

    Raises:
        InvalidInputError: if ``M`` is not square, not finite or not symmetric
            within 1e-9.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] == 0:
        raise InvalidInputError(f"expected a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise InvalidInputError("matrix has non-finite entries")
    if np.max(np.abs(M - M.T)) > 1e-9:
        raise InvalidInputError("matrix is not symmetric within 1e-9")
    n = M.shape[0]
    out = np.empty(n)
    smallest_eigvec(np.ascontiguousarray(M), out, np.empty((n, n)), np.empty(n), np.empty((n, n)))
    return out
