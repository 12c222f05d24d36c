"""Regular matrix pencils sE - A.

Regularity test, quasi-Weierstrass decomposition computed from the Wong
sequences, spectral projectors and the finite spectrum.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from . import _linalg as la
from .exceptions import NotRegular


@dataclass(frozen=True)
class MatrixPencil:
    """The pencil ``sE - A`` with square ``E`` and ``A`` of equal size."""

    E: np.ndarray
    A: np.ndarray

    def __post_init__(self):
        E = la.as_matrix(self.E, name="E")
        n = E.shape[0]
        if E.shape != (n, n):
            raise ValueError(f"E must be square, got {E.shape}")
        A = la.as_matrix(self.A, rows=n, cols=n, name="A")
        object.__setattr__(self, "E", E)
        object.__setattr__(self, "A", A)

    @property
    def n(self):
        return self.E.shape[0]

    @property
    def scale(self):
        return np.linalg.norm(self.E, 2) + np.linalg.norm(self.A, 2)


@dataclass(frozen=True)
class QuasiWeierstrass:
    """Quasi-Weierstrass form ``W (sE - A) T = diag(sI - A11, sE22 - I)``.

    ``T = [V, W]`` stacks bases of the limits of the two Wong sequences, so
    its first ``n1`` columns span the right deflating subspace of the finite
    eigenvalues.
    """

    T: np.ndarray
    Tinv: np.ndarray
    W: np.ndarray
    Winv: np.ndarray
    n1: int
    A11: np.ndarray
    E22: np.ndarray
    nilpotency_index: int
    residual: float = field(default=0.0)

    @property
    def n(self):
        return self.T.shape[0]

    @property
    def n2(self):
        return self.n - self.n1


def _as_pencil(p):
    return p if isinstance(p, MatrixPencil) else MatrixPencil(*p)


def wong_sequences(p, tol=None):
    """Limits of the Wong sequences of ``sE - A``.

    Returns ``(V, W, steps)`` where ``V`` and ``W`` are orthonormal bases of
    ``V* = lim A^{-1}(E V_k)`` and ``W* = lim E^{-1}(A W_k)``, and ``steps``
    is the number of iterations ``W_k`` needed to become stationary (the
    index of the pencil for regular pencils).
    """
    p = _as_pencil(p)
    E, A, n = p.E, p.A, p.n

    # The sequences are nested in exact arithmetic; intersecting (resp.
    # summing) with the previous iterate keeps them nested numerically and
    # bounds the loops by n steps.
    V = np.eye(n)
    for _ in range(n + 1):
        V_next = la.preimage(A, la.orth(E @ V, scale=np.linalg.norm(E, 2)), tol=tol)
        V_next = la.intersect(V, V_next, tol=tol) if V_next.shape[1] < n else V_next
        if V_next.shape[1] == V.shape[1]:
            break
        V = V_next

    W = np.zeros((n, 0))
    steps = 0
    for _ in range(n + 1):
        image = la.orth(A @ W, scale=np.linalg.norm(A, 2)) if W.shape[1] else np.zeros((n, 0))
        W_next = la.subspace_sum(W, la.preimage(E, image, tol=tol), tol=tol)
        if W_next.shape[1] == W.shape[1]:
            break
        W = W_next
        steps += 1
    return V, W, steps


def quasi_weierstrass(p, tol=None):
    """Quasi-Weierstrass form of a regular pencil.

    Parameters
    ----------
    p : MatrixPencil or (E, A) tuple
    tol : float, optional
        Absolute rank tolerance for the Wong-sequence preimages.

    Raises
    ------
    NotRegular
        If ``dim V* + dim W* != n`` or ``[V*, W*]`` is rank deficient.
    """
    p = _as_pencil(p)
    E, A, n = p.E, p.A, p.n
    V, Wb, steps = wong_sequences(p, tol=tol)
    n1, n2 = V.shape[1], Wb.shape[1]
    if n1 + n2 != n:
        raise NotRegular(f"Wong limits have dimensions {n1} + {n2} != {n}")
    T = np.hstack([V, Wb])
    Winv = np.hstack([E @ V, A @ Wb])
    if la.numerical_rank(T) < n or la.numerical_rank(Winv, scale=p.scale) < n:
        raise NotRegular("Wong limits do not split R^n")
    W = linalg.inv(Winv)
    Tinv = linalg.inv(T)

    WET = W @ E @ T
    WAT = W @ A @ T
    A11 = WAT[:n1, :n1]
    E22 = WET[n1:, n1:]
    target_E = linalg.block_diag(np.eye(n1), E22)
    target_A = linalg.block_diag(A11, np.eye(n2))
    residual = max(np.abs(WET - target_E).max(initial=0.0),
                   np.abs(WAT - target_A).max(initial=0.0))
    return QuasiWeierstrass(
        T=T, Tinv=Tinv, W=W, Winv=Winv, n1=n1, A11=A11, E22=E22,
        nilpotency_index=steps if n2 else 0, residual=float(residual),
    )


def is_regular(p, tol=None):
    """Whether ``det(sE - A)`` is not the zero polynomial.

    The determinant is probed at the points ``1, 2, ..., n+1`` through the
    smallest singular value of ``sigma E - A``; a pencil that passes is
    confirmed by the Wong-sequence split.
    """
    p = _as_pencil(p)
    n = p.n
    if n == 0:
        return True
    for i in range(n + 1):
        sigma = 1.0 + i
        M = sigma * p.E - p.A
        sv = linalg.svd(M, compute_uv=False)
        if sv[-1] > la.rank_tol(sv, M.shape, tol, scale=sigma * np.linalg.norm(p.E, 2) + np.linalg.norm(p.A, 2)):
            break
    else:
        return False
    try:
        quasi_weierstrass(p, tol=tol)
    except NotRegular:
        return False
    return True


def spectral_projector(q, side="right"):
    """Spectral projector onto the deflating subspace of the finite spectrum.

    ``side="right"`` gives ``T diag(I, 0) T^{-1}`` (projects onto ``V*``).
    ``side="left"`` gives ``W^{-1} diag(I, 0) W``, whose range ``E V*`` is
    where the equations of the slow part live.
    """
    if side == "right":
        return q.T[:, : q.n1] @ q.Tinv[: q.n1, :]
    if side == "left":
        return q.Winv[:, : q.n1] @ q.W[: q.n1, :]
    raise ValueError(f"side must be 'right' or 'left', got {side!r}")


def finite_spectrum(q):
    """Eigenvalues of the slow block ``A11`` (length ``n1``)."""
    if q.n1 == 0:
        return np.zeros(0, dtype=complex)
    return np.sort_complex(linalg.eigvals(q.A11).astype(complex))
