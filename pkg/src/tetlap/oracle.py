"""Dense reference implementations used by tests and desk-scale checks.

Everything here goes through a full eigendecomposition or SVD, never the
fast path.  Inputs are capped at 3000 rows/columns; these routines exist to
certify the sparse pipeline, not to compete with it.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

SIZE_CAP = 3000
DEFAULT_TOL = 1e-10


def _dense(m) -> np.ndarray:
    if sp.issparse(m):
        m = m.toarray()
    m = np.asarray(m, dtype=float)
    if max(m.shape) > SIZE_CAP:
        raise ValueError(f"oracle size cap exceeded: {m.shape} > {SIZE_CAP}")
    return m


def pinv(m, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Moore-Penrose pseudo-inverse; singular values <= tol*sigma_max drop."""
    m = _dense(m)
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    cut = tol * (s[0] if s.size else 0.0)
    inv = np.where(s > cut, 1.0 / np.where(s > cut, s, 1.0), 0.0)
    return (vt.T * inv) @ u.T


def pinv_solve(m, b, tol: float = DEFAULT_TOL) -> np.ndarray:
    return pinv(m, tol) @ np.asarray(b, dtype=float)


def projection(m, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Orthogonal projector onto the column space of m."""
    m = _dense(m)
    u, s, _ = np.linalg.svd(m, full_matrices=False)
    cut = tol * (s[0] if s.size else 0.0)
    ur = u[:, s > cut]
    return ur @ ur.T


def rank(m, tol: float = DEFAULT_TOL) -> int:
    m = _dense(m)
    s = np.linalg.svd(m, compute_uv=False)
    if s.size == 0:
        return 0
    return int(np.sum(s > tol * s[0]))


def kernel_basis(m, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Orthonormal basis of Ker(m), columns; shape (ncols, dim_ker)."""
    m = _dense(m)
    u, s, vt = np.linalg.svd(m)
    cut = tol * (s[0] if s.size else 0.0)
    r = int(np.sum(s > cut))
    return vt[r:].T


def project_onto_image(m, b, tol: float = DEFAULT_TOL) -> np.ndarray:
    return projection(m, tol) @ np.asarray(b, dtype=float)
