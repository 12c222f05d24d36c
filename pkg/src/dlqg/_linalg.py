"""Rank-revealing helpers shared by the pencil, system and solver modules.

Every rank decision in the package goes through :func:`numerical_rank` so the
tolerance rule lives in exactly one place.
"""

import numpy as np
from scipy import linalg

EPS = np.finfo(float).eps

# Multiplier on the machine-precision rank rule; see rank_tol().
RANK_SAFETY = 1e3

# Optional relative rank tolerance replacing ``RANK_SAFETY * max(shape) * eps``
# (set by the command line flag --rank-tol).
REL_TOL = None


def as_matrix(a, rows=None, cols=None, name="matrix"):
    """Return ``a`` as a 2-D float array, checking the shape if requested."""
    arr = np.array(a, dtype=float, ndmin=2, copy=True)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if rows is not None and arr.shape[0] != rows:
        raise ValueError(f"{name} must have {rows} rows, got {arr.shape[0]}")
    if cols is not None and arr.shape[1] != cols:
        raise ValueError(f"{name} must have {cols} columns, got {arr.shape[1]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


def rank_tol(sv, shape, tol=None, scale=None):
    """Absolute threshold below which singular values count as zero.

    The default is ``max(shape) * eps * sigma_max`` times :data:`RANK_SAFETY`.
    ``scale`` replaces ``sigma_max`` when the matrix is a product whose
    rounding error is set by the size of its factors rather than its own norm.
    """
    if tol is not None:
        return float(tol)
    ref = float(sv[0]) if len(sv) else 0.0
    if scale is not None:
        ref = max(ref, float(scale))
    if REL_TOL is not None:
        return REL_TOL * ref
    return RANK_SAFETY * max(shape) * EPS * ref


def numerical_rank(a, tol=None, scale=None):
    a = np.atleast_2d(a)
    if a.size == 0:
        return 0
    sv = linalg.svd(a, compute_uv=False)
    return int(np.sum(sv > rank_tol(sv, a.shape, tol, scale)))


def orth(a, tol=None, scale=None):
    """Orthonormal basis of ``range(a)``."""
    a = np.atleast_2d(a)
    n = a.shape[0]
    if a.size == 0:
        return np.zeros((n, 0))
    u, sv, _ = linalg.svd(a, full_matrices=False)
    r = int(np.sum(sv > rank_tol(sv, a.shape, tol, scale)))
    return u[:, :r]


def null_space(a, tol=None, scale=None):
    """Orthonormal basis of ``ker(a)``."""
    a = np.atleast_2d(a)
    rows, cols = a.shape
    if cols == 0:
        return np.zeros((0, 0))
    if rows == 0:
        return np.eye(cols)
    _, sv, vh = linalg.svd(a, full_matrices=True)
    r = int(np.sum(sv > rank_tol(sv, a.shape, tol, scale)))
    return vh[r:].conj().T


def complement(basis, n):
    """Orthonormal basis of the orthogonal complement of ``range(basis)`` in R^n."""
    if basis.shape[1] == 0:
        return np.eye(n)
    return null_space(basis.T, tol=1e-8)


def preimage(m, image_basis, tol=None):
    """Basis of ``{x : m @ x in range(image_basis)}``.

    ``image_basis`` must have orthonormal columns.
    """
    k = m.shape[0]
    proj = np.eye(k) - image_basis @ image_basis.T
    return null_space(proj @ m, tol=tol, scale=np.linalg.norm(m, 2))


def subspace_sum(*bases, tol=None):
    n = bases[0].shape[0]
    stacked = np.hstack([b for b in bases if b.shape[1]] or [np.zeros((n, 0))])
    return orth(stacked, tol=tol)


def intersect(u, v, tol=None):
    """Orthonormal basis of ``range(u) ∩ range(v)`` for orthonormal ``u``, ``v``."""
    n = u.shape[0]
    if u.shape[1] == 0 or v.shape[1] == 0:
        return np.zeros((n, 0))
    coef = null_space(np.hstack([u, -v]), tol=tol)
    return orth(u @ coef[: u.shape[1]], tol=tol)


def principal_angles(u, v):
    """Largest principal angle between two subspaces (radians).

    Returns ``pi/2`` when dimensions differ, 0 when both are trivial.
    """
    if u.shape[1] != v.shape[1]:
        return np.pi / 2
    if u.shape[1] == 0:
        return 0.0
    return float(np.max(linalg.subspace_angles(u, v)))


def norm2(a):
    """Spectral norm, 0 for empty matrices."""
    a = np.atleast_2d(a)
    return float(np.linalg.norm(a, 2)) if a.size else 0.0


def sym(a):
    return 0.5 * (a + a.T)


def psd_sqrt(a):
    """Symmetric square root of a PSD matrix; tiny negative eigenvalues are clipped."""
    w, v = linalg.eigh(sym(a))
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.T
