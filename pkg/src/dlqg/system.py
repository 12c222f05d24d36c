"""Stochastic descriptor control systems ``dEx = (Ax + Bu) dt + N e^{beta t} dw``.

Covers the discount transformation, the feedback equivalence form, the
spaces of consistent initial differential variables and of system values,
well-posedness and stabilizability.
"""

from dataclasses import dataclass, replace

import numpy as np
from scipy import linalg, signal

from . import _linalg as la
from .exceptions import AlreadyShifted, DlqgError, IllPosed, NotRegular, NotStabilizable
from .pencil import MatrixPencil, finite_spectrum, is_regular, quasi_weierstrass, spectral_projector

# Relative threshold for declaring the noise blocks N2, N3 zero.
ZERO_BLOCK_TOL = 1e-9


def _block(a, rows, name):
    """2-D array with ``rows`` rows; empty input gives an (rows, 0) matrix."""
    if a is None or np.size(a) == 0:
        return np.zeros((rows, 0))
    return la.as_matrix(a, rows=rows, name=name)


@dataclass(frozen=True)
class DescriptorSystem:
    """The tuple ``(E, A, B, N, beta)``.

    ``shifted`` marks a system produced by :func:`discount_transform`; its
    ``A`` already holds ``A + beta E`` and its diffusion is ``N e^{beta t}``.
    """

    E: np.ndarray
    A: np.ndarray
    B: np.ndarray = None
    N: np.ndarray = None
    beta: float = -1.0
    shifted: bool = False

    def __post_init__(self):
        E = la.as_matrix(self.E, name="E")
        n = E.shape[0]
        if E.shape != (n, n):
            raise ValueError(f"E must be square, got {E.shape}")
        object.__setattr__(self, "E", E)
        object.__setattr__(self, "A", la.as_matrix(self.A, rows=n, cols=n, name="A"))
        object.__setattr__(self, "B", _block(self.B, n, "B"))
        object.__setattr__(self, "N", _block(self.N, n, "N"))
        beta = float(self.beta)
        if not beta < 0:
            raise ValueError(f"beta must be strictly negative, got {beta}")
        object.__setattr__(self, "beta", beta)

    @property
    def n(self):
        return self.E.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def n_w(self):
        return self.N.shape[1]

    @property
    def pencil(self):
        return MatrixPencil(self.E, self.A)

    def with_noise(self, N):
        return replace(self, N=N)


@dataclass(frozen=True)
class CostWeights:
    """Weight ``[[Q, S], [S^T, R]]``; ``Q`` and ``R`` are symmetrized."""

    Q: np.ndarray
    S: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        Q = la.as_matrix(self.Q, name="Q")
        n = Q.shape[0]
        if Q.shape != (n, n):
            raise ValueError(f"Q must be square, got {Q.shape}")
        R = self.R
        m = 0 if R is None or np.size(R) == 0 else la.as_matrix(R, name="R").shape[0]
        R = la.as_matrix(R, rows=m, cols=m, name="R") if m else np.zeros((0, 0))
        S = self.S
        S = la.as_matrix(S, rows=n, cols=m, name="S") if m and S is not None and np.size(S) else np.zeros((n, m))
        object.__setattr__(self, "Q", la.sym(Q))
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "R", la.sym(R))

    @classmethod
    def zeros(cls, n, m):
        return cls(np.zeros((n, n)), np.zeros((n, m)), np.zeros((m, m)))

    @property
    def n(self):
        return self.Q.shape[0]

    @property
    def m(self):
        return self.R.shape[0]

    @property
    def matrix(self):
        return np.block([[self.Q, self.S], [self.S.T, self.R]])

    def check(self, sys):
        if (self.n, self.m) != (sys.n, sys.m):
            raise ValueError(f"weights sized for (n, m)=({self.n}, {self.m}), system has ({sys.n}, {sys.m})")


@dataclass(frozen=True)
class Subspace:
    """A subspace stored through an orthonormal basis (columns)."""

    basis: np.ndarray

    @property
    def ambient_dim(self):
        return self.basis.shape[0]

    @property
    def rank(self):
        return self.basis.shape[1]

    def contains(self, v, tol=1e-8):
        v = np.atleast_2d(np.asarray(v, dtype=float))
        if v.shape[0] != self.ambient_dim:
            v = v.T
        resid = v - self.basis @ (self.basis.T @ v)
        return bool(np.linalg.norm(resid) <= tol * max(1.0, np.linalg.norm(v)))

    def angle(self, other):
        """Largest principal angle to ``other``."""
        return la.principal_angles(self.basis, other.basis)


@dataclass(frozen=True)
class FeedbackForm:
    r"""Feedback equivalence form of ``[E, A, B, N]``.

    With ``x = T z``, ``u = F x + v`` and left transform ``W``::

        W E T         = [[I, 0, 0], [0, 0, E23], [0, 0, E33]]
        W (A + B F) T = [[A11, 0, 0], [0, I, 0], [0, 0, I]]
        W B           = [B1; B2; 0]
        W N           = [N1; N2; N3]

    so that ``z1' = A11 z1 + B1 v``, ``z2 = -B2 v`` and ``z3 = 0`` whenever
    ``N2 = N3 = 0``. ``E33`` is nilpotent.
    """

    W: np.ndarray
    T: np.ndarray
    F: np.ndarray
    n1: int
    n2: int
    n3: int
    A11: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    E23: np.ndarray
    E33: np.ndarray
    N1: np.ndarray
    N2: np.ndarray
    N3: np.ndarray
    residual: float = 0.0

    @property
    def n(self):
        return self.n1 + self.n2 + self.n3

    @property
    def m(self):
        return self.F.shape[0]

    @property
    def Tinv(self):
        return linalg.inv(self.T)

    @property
    def Winv(self):
        return linalg.inv(self.W)

    def blocks(self, *names):
        return tuple(getattr(self, k) for k in names)


def discount_transform(sys):
    """Replace ``A`` by ``A + beta E``; the diffusion becomes ``N e^{beta t}``."""
    if sys.shifted:
        raise AlreadyShifted("system is already discounted")
    return replace(sys, A=sys.A + sys.beta * sys.E, shifted=True)


def undiscounted(sys):
    """Inverse of :func:`discount_transform` (identity on unshifted systems)."""
    if not sys.shifted:
        return sys
    return replace(sys, A=sys.A - sys.beta * sys.E, shifted=False)


def _require_regular(sys, tol=None):
    if not is_regular(sys.pencil, tol=tol):
        raise NotRegular("pencil sE - A is not regular")


def system_space_wong(sys, tol=None):
    """Orthonormal basis of the system space from the augmented Wong sequence.

    This is the largest subspace ``V`` of ``R^{n+m}`` with
    ``[A, B] V ⊆ [E, 0] V``; it is computed independently of the feedback
    form and serves as its cross-check.
    """
    n, m = sys.n, sys.m
    AB = np.hstack([sys.A, sys.B])
    E = sys.E
    V = np.eye(n + m)
    scale = np.linalg.norm(E, 2)
    for _ in range(n + m + 1):
        image = la.orth(E @ V[:n], scale=scale)
        V_next = la.preimage(AB, image, tol=tol)
        if V_next.shape[1] < V.shape[1]:
            V_next = la.intersect(V, V_next, tol=tol)
        if V_next.shape[1] == V.shape[1]:
            break
        V = V_next
    return V


def feedback_equivalence_form(sys, tol=None):
    """Construct ``(W, T, F)`` and the blocks of the feedback equivalence form.

    Construction
    ------------
    1. ``Z``: basis of the system space (augmented Wong sequence).
    2. ``K = Z ker(E X)``: system values invisible to ``E``; its dimension is
       ``m``. A complement ``C`` of ``K`` inside the system space gives
       ``T1 = X_C`` and fixes ``F`` on ``T1`` (``F T1 = U_C``).
    3. ``K`` splits into pure-input directions and a part with injective
       ``x``-projection ``T2``; ``F`` on ``T2`` is chosen so that the new
       input ``v = u - F x`` is an orthonormal coordinate on ``K``.
    4. ``T3`` completes the basis with ``F T3 = 0``; the left transform is
       ``[E T1, A_F T2, A_F T3]^{-1}`` followed by a nilpotent Sylvester
       elimination of the ``E``-coupling between slow and fast blocks.
    """
    _require_regular(sys, tol)
    n, m = sys.n, sys.m
    E, A, B = sys.E, sys.A, sys.B
    scale_E = np.linalg.norm(E, 2)

    Z = system_space_wong(sys, tol=tol)
    d = Z.shape[1]
    X, U = Z[:n], Z[n:]
    NK = la.null_space(E @ X, tol=tol, scale=scale_E)
    if NK.shape[1] != m:
        raise DlqgError(f"kernel part of the system space has dimension {NK.shape[1]}, expected {m}")
    n1 = d - m

    NC = la.complement(NK, d)
    C = Z @ NC
    if n1:
        T1, R1 = linalg.qr(C[:n], mode="economic")
        FT1 = linalg.solve_triangular(R1, C[n:].T, trans="T").T
    else:
        T1, FT1 = np.zeros((n, 0)), np.zeros((m, 0))

    K = Z @ NK
    XK, UK = K[:n], K[n:]
    N0 = la.null_space(XK, tol=1e-10)
    N1c = la.complement(N0, m)
    U0 = la.orth(UK @ N0) if N0.shape[1] else np.zeros((m, 0))
    n2 = N1c.shape[1]
    if n2:
        T2, R2 = linalg.qr(XK @ N1c, mode="economic")
        U1 = linalg.solve_triangular(R2, (UK @ N1c).T, trans="T").T
    else:
        T2, U1 = np.zeros((n, 0)), np.zeros((m, 0))
    Y1 = la.complement(U0, m) if m else np.zeros((0, 0))
    if Y1.shape[1] != n2:
        raise DlqgError("input directions of the system space are inconsistent")
    FT2 = U1 - Y1
    B2 = -Y1.T

    T3 = la.complement(la.orth(np.hstack([T1, T2]), tol=1e-10), n)
    n3 = T3.shape[1]
    if n1 + n2 + n3 != n:
        raise DlqgError(f"block sizes {n1}+{n2}+{n3} do not add up to {n}")
    T_pre = np.hstack([T1, T2, T3])
    F = np.hstack([FT1, FT2, np.zeros((m, n3))]) @ linalg.inv(T_pre)
    AF = A + B @ F

    M = np.hstack([E @ T1, AF @ T2, AF @ T3])
    if la.numerical_rank(M, scale=scale_E + np.linalg.norm(AF, 2)) < n:
        raise DlqgError("closed-loop pencil does not decouple; feedback form construction failed")
    Wp = linalg.inv(M)

    nf = n2 + n3
    WET = Wp @ E @ T_pre
    A11 = (Wp @ AF @ T_pre)[:n1, :n1]
    X13 = np.hstack([np.zeros((n1, n2)), WET[:n1, n1 + n2:]])
    Nf = WET[n1:, n1:]
    Y = np.zeros((n1, nf))
    term = -X13
    for _ in range(nf + 1):
        Y = Y + term
        term = A11 @ term @ Nf
    Zc = -A11 @ Y
    T = T_pre @ np.block([[np.eye(n1), Y], [np.zeros((nf, n1)), np.eye(nf)]])
    W = np.block([[np.eye(n1), Zc], [np.zeros((nf, n1)), np.eye(nf)]]) @ Wp

    WET = W @ E @ T
    WAT = W @ AF @ T
    WB = W @ B
    WN = W @ sys.N
    i1, i2 = slice(0, n1), slice(n1, n1 + n2)
    i3 = slice(n1 + n2, n)
    E23, E33 = WET[i2, i3], WET[i3, i3]
    A11 = WAT[i1, i1]

    target_E = np.zeros((n, n))
    target_E[i1, i1] = np.eye(n1)
    target_E[i2, i3] = E23
    target_E[i3, i3] = E33
    target_A = linalg.block_diag(A11, np.eye(nf))
    resid = max(np.abs(WET - target_E).max(initial=0.0),
                np.abs(WAT - target_A).max(initial=0.0),
                np.abs(WB[i2] - B2).max(initial=0.0),
                np.abs(WB[i3]).max(initial=0.0))
    if n3 and np.linalg.norm(np.linalg.matrix_power(E33, n3)) > 1e-8 * max(1.0, np.linalg.norm(E33)) ** n3:
        raise DlqgError("E33 is not nilpotent; feedback form construction failed")

    return FeedbackForm(
        W=W, T=T, F=F, n1=n1, n2=n2, n3=n3,
        A11=A11, B1=WB[i1], B2=B2, E23=E23, E33=E33,
        N1=WN[i1], N2=WN[i2], N3=WN[i3], residual=float(resid),
    )


def _noise_blocks_zero(ff, tol=None):
    tol = ZERO_BLOCK_TOL if tol is None else tol
    WN = np.vstack([ff.N1, ff.N2, ff.N3])
    ref = max(np.linalg.norm(WN), 1.0) if WN.size else 1.0
    n2 = np.linalg.norm(ff.N2) if ff.N2.size else 0.0
    n3 = np.linalg.norm(ff.N3) if ff.N3.size else 0.0
    return n2 <= tol * ref and n3 <= tol * ref


def compute_vdiff(ff, tol=None):
    """Consistent initial differential variables ``T (R^{n1+n2} x ker[E23; E33])``.

    Raises
    ------
    IllPosed
        If the noise blocks ``N2`` or ``N3`` of the form are nonzero.
    """
    if not _noise_blocks_zero(ff, tol):
        raise IllPosed("noise enters the algebraic blocks (N2 or N3 nonzero)")
    n12 = ff.n1 + ff.n2
    ker = la.null_space(np.vstack([ff.E23, ff.E33]), tol=1e-10) if ff.n3 else np.zeros((0, 0))
    coords = linalg.block_diag(np.eye(n12), ker) if ff.n3 else np.eye(n12)
    return Subspace(la.orth(ff.T @ coords, tol=1e-12))


def system_space_map(ff):
    """Matrix ``Phi`` with ``V^sys = range(Phi)``, acting on ``(z1, v)``.

    ``(z1, v) -> (T[z1; -B2 v; 0], F T[z1; -B2 v; 0] + v)``.
    """
    n, m, n1, n2 = ff.n, ff.m, ff.n1, ff.n2
    coords = np.zeros((n, n1 + m))
    coords[:n1, :n1] = np.eye(n1)
    coords[n1:n1 + n2, n1:] = -ff.B2
    X = ff.T @ coords
    U = ff.F @ X
    U[:, n1:] += np.eye(m)
    return np.vstack([X, U])


def compute_system_space(ff):
    """Orthonormal basis of the system space ``V^sys ⊆ R^{n+m}`` (dimension ``n1 + m``)."""
    return Subspace(la.orth(system_space_map(ff), tol=1e-12))


def check_wellposed(sys, tol=None):
    """Well-posedness report ``{wellposed, via_projector, via_blocks}``.

    ``via_blocks`` tests ``N2 = N3 = 0`` in the feedback form and is the
    verdict. ``via_projector`` applies the spectral projector criterion of
    the uncontrolled pencil and is only meaningful when ``B = 0``; it is
    ``None`` otherwise.
    """
    _require_regular(sys)
    ff = feedback_equivalence_form(sys)
    via_blocks = _noise_blocks_zero(ff, tol)
    via_projector = None
    if sys.m == 0 or not np.any(sys.B):
        q = quasi_weierstrass(sys.pencil)
        P = spectral_projector(q, side="left")
        ref = max(np.linalg.norm(sys.N), 1.0) if sys.N.size else 1.0
        resid = np.linalg.norm(P @ sys.N - sys.N) if sys.N.size else 0.0
        via_projector = bool(resid <= (ZERO_BLOCK_TOL if tol is None else tol) * ref)
    return {"wellposed": bool(via_blocks), "via_projector": via_projector, "via_blocks": bool(via_blocks)}


def _require_wellposed(sys):
    report = check_wellposed(sys)
    if not report["wellposed"]:
        raise IllPosed("system is not well-posed: noise enters algebraic equations")


def check_stabilizable(sys, tol=None):
    """Rank test ``rank[lambda E - A, B] = n`` on the closed right half-plane.

    Only the finite generalized eigenvalues of ``(E, A)`` with nonnegative
    real part need checking: elsewhere ``lambda E - A`` is invertible.
    Returns ``{"stabilizable": bool, "failing_lambda": complex or None}``.
    """
    _require_wellposed(sys)
    eigs = finite_spectrum(quasi_weierstrass(sys.pencil))
    scale = la.norm2(sys.E) + la.norm2(sys.A) + la.norm2(sys.B)
    imag_tol = 1e-9 * max(1.0, scale)
    for lam in sorted(eigs, key=lambda z: -z.real):
        if lam.real < -imag_tol:
            continue
        M = np.hstack([lam * sys.E - sys.A, sys.B.astype(complex)])
        rank = la.numerical_rank(M, tol=tol, scale=(abs(lam) + 1) * scale)
        if rank < sys.n:
            return {"stabilizable": False, "failing_lambda": complex(lam)}
    return {"stabilizable": True, "failing_lambda": None}


def _place(A, B, targets):
    try:
        return -signal.place_poles(A, B, targets).gain_matrix
    except (ValueError, np.linalg.LinAlgError):
        # Repeated targets beyond rank(B): any stabilizing gain will do.
        P = linalg.solve_continuous_are(A, B, np.eye(A.shape[0]), np.eye(B.shape[1]))
        return -B.T @ P


def stabilizing_feedback(sys, ff=None):
    """Feedback ``F_stab`` with all finite eigenvalues of ``(E, A + B F_stab)`` in the open left half-plane.

    Pole placement on the controllable part of ``(A11, B1)``: unstable poles
    are mirrored across the imaginary axis, poles on the axis move to -1,
    stable poles stay.
    """
    report = check_stabilizable(sys)
    if not report["stabilizable"]:
        raise NotStabilizable("rank condition fails", report["failing_lambda"])
    ff = feedback_equivalence_form(sys) if ff is None else ff
    n1, m = ff.n1, ff.m
    F1 = np.zeros((m, n1))
    if n1 and m:
        ctrb = np.hstack([np.linalg.matrix_power(ff.A11, k) @ ff.B1 for k in range(n1)])
        Vc = la.orth(ctrb, scale=np.linalg.norm(ctrb, 2))
        nc = Vc.shape[1]
        if nc:
            V = np.hstack([Vc, la.complement(Vc, n1)])
            Ak = V.T @ ff.A11 @ V
            Ac, Bc = Ak[:nc, :nc], (V.T @ ff.B1)[:nc]
            eig = linalg.eigvals(Ac)
            margin = 1e-9 * max(1.0, np.abs(eig).max())
            # a pole at -1e-17 is numerically on the axis and must move too
            if np.max(eig.real) >= -margin:
                targets = np.where(eig.real > margin, -eig.real + 1j * eig.imag,
                                   np.where(eig.real < -margin, eig, -1.0 + 1j * eig.imag))
                targets = _spread(targets)
                Fc = _place(Ac, Bc, targets)
                F1 = np.hstack([Fc, np.zeros((m, n1 - nc))]) @ V.T
    return ff.F + F1 @ ff.Tinv[:n1, :]


def _spread(targets):
    """Separate coincident targets so that pole placement is well defined."""
    out = []
    for t in targets:
        while any(abs(t - s) < 1e-6 for s in out) and t.imag == 0:
            t = t - 0.1
        out.append(t)
    out = np.array(out)
    # keep conjugate pairs exact
    return np.where(np.abs(out.imag) < 1e-12, out.real, out)
