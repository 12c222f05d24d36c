"""KYP inequality, algebraic Riccati equation and Lur'e equation.

All functions expect the discounted system (``discount_transform``), whose
``A`` already holds ``A + beta E``.

Two Lur'e backends are provided:

``"riccati"``
    Reduce to the system space through the feedback equivalence form and
    solve a standard Riccati equation for the slow part. Needs the reduced
    input weight to be positive definite (or the whole reduced weight to
    vanish, giving ``q = 0``).
``"even"``
    Stable deflating subspace of the even pencil built from
    ``(E, A, B, Q, S, R)`` via ordered QZ, then a rank-revealing
    factorization of the KYP matrix on the system space.
"""

import enum
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from . import _linalg as la
from .exceptions import (IllPosed, Infeasible, NoStabilizingSolution, NotStabilizable,
                         SingularR, Unsupported)
from .system import (CostWeights, DescriptorSystem, Subspace, check_stabilizable, check_wellposed, compute_vdiff,
                     feedback_equivalence_form, system_space_map, system_space_wong)

PSD_TOL = 1e-9
RESIDUAL_TOL = 1e-8
CAND_RADIUS = 1e6
EPS_NORM = 1e-300


@dataclass(frozen=True)
class KypCandidate:
    P: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "P", la.sym(la.as_matrix(self.P, name="P")))


@dataclass(frozen=True)
class LureSolution:
    """Triple ``(P, K, L)`` with ``K`` of shape ``(q, n)`` and ``L`` of shape ``(q, m)``."""

    P: np.ndarray
    K: np.ndarray
    L: np.ndarray
    stabilizing: bool = False
    backend: str = ""

    @property
    def q(self):
        return self.K.shape[0]


class Ordering(enum.Enum):
    GEQ = "≥"
    LEQ = "≤"
    EQUAL = "equal"
    INCOMPARABLE = "incomparable"


def _require_shifted(sys):
    if not sys.shifted:
        raise ValueError("expected the discounted system; call discount_transform first")


def _P(cand):
    return cand.P if isinstance(cand, (KypCandidate, LureSolution)) else la.sym(np.asarray(cand, dtype=float))


def kyp_matrix(sys, w, P):
    """``[[A^T P E + E^T P A + Q, E^T P B + S], [B^T P E + S^T, R]]``."""
    E, A, B = sys.E, sys.A, sys.B
    top = A.T @ P @ E + E.T @ P @ A + w.Q
    off = E.T @ P @ B + w.S
    return la.sym(np.block([[top, off], [off.T, w.R]]))


def kyp_residual(sys, w, cand, vsys, tol=None):
    """KYP matrix compressed to the system space.

    Returns ``{"matrix", "min_eigenvalue", "feasible"}`` where feasibility
    means ``min_eigenvalue >= -tol`` (default ``PSD_TOL`` times the scale of
    the uncompressed matrix).
    """
    w.check(sys)
    P = _P(cand)
    if P.shape != (sys.n, sys.n):
        raise ValueError(f"P must be {sys.n}x{sys.n}, got {P.shape}")
    V = vsys.basis if isinstance(vsys, Subspace) else np.asarray(vsys)
    if V.shape[0] != sys.n + sys.m:
        raise ValueError("system space basis has the wrong ambient dimension")
    M = kyp_matrix(sys, w, P)
    Mv = la.sym(V.T @ M @ V)
    lam = float(linalg.eigvalsh(Mv)[0]) if Mv.size else 0.0
    tol = PSD_TOL * max(1.0, np.linalg.norm(M, 2)) if tol is None else tol
    return {"matrix": Mv, "min_eigenvalue": lam, "feasible": bool(lam >= -tol)}


def _care(A, B, Q, S, R, tol=None):
    """Stabilizing solution of ``XA + A^T X + Q - (XB + S) R^{-1} (XB + S)^T = 0``.

    Stable invariant subspace of the Hamiltonian matrix via ordered real
    Schur form, polished by Newton-Kleinman steps.
    """
    n = A.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    m = B.shape[1]
    if m:
        cond = np.linalg.cond(R)
        if not np.isfinite(cond) or cond > 1e12:
            raise SingularR(f"input weight is singular (cond={cond:.3g})")
        Rinv_St = linalg.solve(R, S.T, assume_a="sym")
        Abar = A - B @ Rinv_St
        Qbar = Q - S @ Rinv_St
        G = B @ linalg.solve(R, B.T, assume_a="sym")
    else:
        Abar, Qbar, G = A, Q, np.zeros((n, n))
    H = np.block([[Abar, -G], [-Qbar, -Abar.T]])
    scale = max(1.0, np.linalg.norm(H, 1))
    eig = linalg.eigvals(H)
    axis_tol = 1e-8 * scale if tol is None else tol
    if np.any(np.abs(eig.real) <= axis_tol):
        err = NoStabilizingSolution("Hamiltonian matrix has eigenvalues on the imaginary axis")
        err.on_axis = True
        raise err
    T, U, sdim = linalg.schur(H, output="real", sort="lhp")
    if sdim != n:
        raise NoStabilizingSolution(f"stable invariant subspace has dimension {sdim}, expected {n}")
    U1, U2 = U[:n, :n], U[n:, :n]
    if np.linalg.cond(U1) > 1e12:
        raise NoStabilizingSolution("stable invariant subspace is not a graph; no stabilizing solution")
    X = la.sym(linalg.solve(U1.T, U2.T).T)

    def residual(X):
        return X @ Abar + Abar.T @ X + Qbar - X @ G @ X

    # Newton-Kleinman polish: cheap and keeps the residual at rounding level.
    for _ in range(3):
        r = np.linalg.norm(residual(X))
        if r <= 1e-14 * scale * max(1.0, np.linalg.norm(X)):
            break
        Ac = Abar - G @ X
        X_new = la.sym(linalg.solve_continuous_lyapunov(Ac.T, -(Qbar + X @ G @ X)))
        if np.linalg.norm(residual(X_new)) >= r:
            break
        X = X_new
    if np.max(linalg.eigvals(Abar - G @ X).real) >= 0:
        raise NoStabilizingSolution("closed loop of the Riccati solution is not stable")
    return X


def riccati_gain(sys, w, P):
    """Feedback ``-R^{-1}(E^T P B + S)^T`` of a Riccati solution."""
    return -linalg.solve(w.R, (sys.E.T @ P @ sys.B + w.S).T, assume_a="sym")


def solve_riccati(sys, w, tol=None):
    """Stabilizing solution of the generalized algebraic Riccati equation.

    ``0 = E^T P A + A^T P E + Q - (E^T P B + S) R^{-1} (E^T P B + S)^T``
    with ``E`` invertible; all eigenvalues of
    ``E^{-1}(A - B R^{-1}(E^T P B + S)^T)`` lie in the open left half-plane.

    Raises
    ------
    NoStabilizingSolution, SingularR
    """
    _require_shifted(sys)
    w.check(sys)
    E = sys.E
    if np.linalg.cond(E) > 1e12:
        raise ValueError("solve_riccati needs an invertible E; use solve_lure for descriptor systems")
    At = linalg.solve(E, sys.A)
    Bt = linalg.solve(E, sys.B)
    X = _care(At, Bt, w.Q, w.S, w.R, tol=tol)
    Einv = linalg.inv(E)
    return KypCandidate(Einv.T @ X @ Einv)


def _reduced_weights(ff, w):
    Phi = system_space_map(ff)
    Mh = la.sym(Phi.T @ w.matrix @ Phi)
    n1 = ff.n1
    return Mh[:n1, :n1], Mh[:n1, n1:], Mh[n1:, n1:], Mh


def popov_min_eigenvalue(A, B, M, omegas):
    """Smallest eigenvalue of the Popov function ``G(iw)^* M G(iw)`` over ``omegas``.

    ``G(s) = [(sI - A)^{-1} B; I]``.
    """
    n, m = B.shape
    best = np.inf
    for om in omegas:
        G = np.vstack([linalg.solve(1j * om * np.eye(n) - A, B.astype(complex)), np.eye(m)])
        H = G.conj().T @ M @ G
        best = min(best, float(linalg.eigvalsh(0.5 * (H + H.conj().T))[0]))
    return best


def _lure_riccati(sys, w, tol=None):
    ff = feedback_equivalence_form(sys)
    Qh, Sh, Rh, Mh = _reduced_weights(ff, w)
    n, m, n1 = sys.n, sys.m, ff.n1
    scale = max(1.0, np.linalg.norm(w.matrix, 2))
    psd_tol = PSD_TOL * scale if tol is None else tol

    if np.abs(Mh).max(initial=0.0) <= psd_tol:
        return LureSolution(np.zeros((n, n)), np.zeros((0, n)), np.zeros((0, m)), backend="riccati")
    if m:
        rmin = linalg.eigvalsh(Rh)[0]
        if rmin < -psd_tol:
            raise Infeasible("KYP infeasible: reduced input weight is indefinite")
        if rmin <= psd_tol:
            raise Unsupported("reduced input weight is singular; Riccati reduction does not apply")
    try:
        Ph = _care(ff.A11, ff.B1, Qh, Sh, Rh)
    except NoStabilizingSolution as err:
        if getattr(err, "on_axis", False):
            H_eig = _hamiltonian_axis_frequencies(ff.A11, ff.B1, Qh, Sh, Rh)
            omegas = np.concatenate([H_eig, np.linspace(-50, 50, 401)])
            if popov_min_eigenvalue(ff.A11, ff.B1, Mh, omegas[np.isfinite(omegas)]) < -psd_tol:
                raise Infeasible("KYP infeasible: Popov function is indefinite on the imaginary axis") from err
            raise Unsupported("KYP feasible but the Riccati equation has no stabilizing solution "
                              "(Hamiltonian eigenvalues on the imaginary axis)") from err
        raise
    W1 = ff.W[:n1]
    P = la.sym(W1.T @ Ph @ W1)
    if m:
        Lh = la.psd_sqrt(Rh)
        Kh = linalg.solve(Lh, ff.B1.T @ Ph + Sh.T, assume_a="sym")
    else:
        Lh, Kh = np.zeros((0, 0)), np.zeros((0, n1))
    K = Kh @ ff.Tinv[:n1] - Lh @ ff.F
    return LureSolution(P, K, Lh, backend="riccati")


def _hamiltonian_axis_frequencies(A, B, Q, S, R):
    Rinv_St = linalg.solve(R, S.T, assume_a="sym")
    Abar = A - B @ Rinv_St
    G = B @ linalg.solve(R, B.T, assume_a="sym")
    H = np.block([[Abar, -G], [-(Q - S @ Rinv_St), -Abar.T]])
    eig = linalg.eigvals(H)
    return eig.imag[np.abs(eig.real) <= 1e-6 * max(1.0, np.linalg.norm(H, 1))]


def even_pencil(sys, w):
    """The even pencil ``s Ee - Ae`` in the variables ``(mu, x, u)``."""
    n, m = sys.n, sys.m
    Z = np.zeros
    Ee = np.block([[Z((n, n)), sys.E, Z((n, m))],
                   [-sys.E.T, Z((n, n)), Z((n, m))],
                   [Z((m, n)), Z((m, n)), Z((m, m))]])
    Ae = np.block([[Z((n, n)), sys.A, sys.B],
                   [sys.A.T, w.Q, w.S],
                   [sys.B.T, w.S.T, w.R]])
    return Ee, Ae


def factor_on_subspace(sys, w, P, V, tol=None):
    """``(K, L)`` with ``[K, L]^T [K, L] = M(P)`` on ``range(V)``; ``q`` is the numerical rank."""
    M = kyp_matrix(sys, w, P)
    Mv = la.sym(V.T @ M @ V)
    lam, vec = linalg.eigh(Mv)
    scale = max(1.0, np.linalg.norm(M, 2))
    tol = PSD_TOL * scale if tol is None else tol
    if lam.size and lam[0] < -tol:
        raise Infeasible(f"KYP matrix has negative eigenvalue {lam[0]:.3g} on the system space")
    keep = lam > tol
    G = np.sqrt(lam[keep])[:, None] * vec[:, keep].T
    KL = G @ V.T
    return KL[:, : sys.n], KL[:, sys.n:]


def _stable_deflating(Ee, Ae, nx):
    """Multiplier and state rows of the stable finite deflating subspace of ``s Ee - Ae``."""
    scale = max(1.0, np.linalg.norm(Ae, 1) + np.linalg.norm(Ee, 1))
    fin_tol = 1e-10

    def finite(alpha, beta):
        return np.abs(beta) > fin_tol * np.abs(alpha)

    def stable(alpha, beta):
        fin = finite(alpha, beta)
        return fin & ((alpha / np.where(fin, beta, 1.0)).real < 0)

    _, _, alpha, beta, _, Z = linalg.ordqz(Ae, Ee, output="real", sort=stable)
    fin = finite(alpha, beta)
    lam = alpha[fin] / beta[fin]
    if np.any(np.abs(lam.real) <= 1e-8 * scale):
        raise Unsupported("even pencil has eigenvalues on the imaginary axis")
    k = int(np.sum(lam.real < 0))
    return Z[:nx, :k], Z[nx:2 * nx, :k], k


def _reduced_system(sys, V):
    """State-space data of the dynamics restricted to the system space.

    With ``E V_x = U1 S1 Y1^T`` (thin SVD) and ``zeta = Y1 xi + Y2 eta`` the
    restricted dynamics read ``xi' = Ah xi + Bh eta``; ``x^T E^T P E x`` becomes
    ``xi^T (S1 U1^T P U1 S1) xi``.
    """
    n = sys.n
    EV = sys.E @ V[:n]
    U, sv, Yt = linalg.svd(EV)
    n1 = int(np.sum(sv > la.rank_tol(sv, EV.shape, scale=la.norm2(sys.E))))
    U1, S1 = U[:, :n1], sv[:n1]
    Y = Yt.T
    Y1, Y2 = Y[:, :n1], Y[:, n1:]
    ABV = np.hstack([sys.A, sys.B]) @ V
    Ah = (U1.T @ ABV @ Y1) / S1[:, None]
    Bh = (U1.T @ ABV @ Y2) / S1[:, None]
    return U1, S1, Y1, Y2, Ah, Bh


def _lure_even(sys, w, tol=None):
    n, m = sys.n, sys.m
    Vs = system_space_wong(sys)
    n1 = la.numerical_rank(sys.E @ Vs[:n], scale=la.norm2(sys.E))

    # The full even pencil first; impulsive parts that the input cannot reach
    # can add spurious finite eigenvalues, in which case the pencil of the
    # dynamics restricted to the system space is used instead.
    Ee, Ae = even_pencil(sys, w)
    Zmu, Zx, k = _stable_deflating(Ee, Ae, n)
    G = sys.E @ Zx
    if k == n1 and (k == 0 or la.numerical_rank(G, scale=la.norm2(sys.E)) == k):
        H = la.sym(Zx.T @ sys.E.T @ Zmu)
        Gp = linalg.pinv(G) if k else np.zeros((0, n))
        P = la.sym(Gp.T @ H @ Gp) if k else np.zeros((n, n))
    else:
        U1, S1, Y1, Y2, Ah, Bh = _reduced_system(sys, Vs)
        Yc = np.hstack([Y1, Y2])
        Mh = la.sym(Yc.T @ Vs.T @ w.matrix @ Vs @ Yc)
        red = DescriptorSystem(np.eye(n1), Ah, Bh, beta=sys.beta, shifted=True)
        wr = CostWeights(Mh[:n1, :n1], Mh[:n1, n1:], Mh[n1:, n1:])
        Ee, Ae = even_pencil(red, wr)
        Zmu, Zx, k = _stable_deflating(Ee, Ae, n1)
        if k != n1 or (k and np.linalg.cond(Zx) > 1e12):
            raise Unsupported(f"even pencil has {k} stable finite eigenvalues, expected {n1}; "
                              "singular reduced input weight is outside the supported scope")
        Ph = la.sym(linalg.solve(Zx.T, Zmu.T).T) if k else np.zeros((0, 0))
        Tm = U1 / S1[None, :]
        P = la.sym(Tm @ Ph @ Tm.T)
    K, L = factor_on_subspace(sys, w, P, Vs, tol=tol)
    return LureSolution(P, K, L, backend="even")


def solve_lure(sys, w, backend="auto", tol=None):
    """Stabilizing solution ``(P, K, L)`` of the Lur'e equation on the system space.

    Parameters
    ----------
    sys : DescriptorSystem
        Discounted system.
    w : CostWeights
    backend : {"auto", "riccati", "even"}
        ``"auto"`` tries the Riccati reduction and falls back to the even
        pencil when the reduced input weight is singular.

    Raises
    ------
    IllPosed, NotStabilizable, Infeasible, Unsupported
    """
    _require_shifted(sys)
    w.check(sys)
    if not check_wellposed(sys)["wellposed"]:
        raise IllPosed("system is not well-posed")
    st = check_stabilizable(sys)
    if not st["stabilizable"]:
        raise NotStabilizable(f"rank condition fails at lambda={st['failing_lambda']}", st["failing_lambda"])

    if backend == "riccati":
        sol = _lure_riccati(sys, w, tol)
    elif backend == "even":
        sol = _lure_even(sys, w, tol)
    elif backend == "auto":
        try:
            sol = _lure_riccati(sys, w, tol)
        except Unsupported:
            sol = _lure_even(sys, w, tol)
    else:
        raise ValueError(f"unknown backend {backend!r}")

    cert = verify_lure_solution(sys, w, sol)
    if not (cert["residual_ok"] and cert["rank_ok"]):
        raise Unsupported(f"{sol.backend} backend produced a solution that fails verification: {cert}")
    return LureSolution(sol.P, sol.K, sol.L, stabilizing=cert["stabilizing_ok"], backend=sol.backend)


def _rank_at(sys, K, L, lam, tol=None):
    top = np.hstack([-lam * sys.E + sys.A, sys.B.astype(complex)])
    bottom = np.hstack([K, L]).astype(complex)
    M = np.vstack([top, bottom])
    scale = abs(lam) * np.linalg.norm(sys.E, 2) + np.linalg.norm(np.vstack([np.hstack([sys.A, sys.B]), np.hstack([K, L])]), 2)
    return la.numerical_rank(M, tol=tol, scale=scale)


def _candidate_eigenvalues(sys, K, L):
    """Points where ``[[-sE + A, B], [K, L]]`` can lose rank."""
    n, m, q = sys.n, sys.m, K.shape[0]
    Eb = np.block([[sys.E, np.zeros((n, m))], [np.zeros((q, n + m))]])
    Ab = np.block([[sys.A, sys.B], [K, L]])
    if q != m:
        # Rank drops of the rectangular pencil survive any column compression.
        Xi = np.random.default_rng(0).standard_normal((n + m, n + q))
        Eb, Ab = Eb @ Xi, Ab @ Xi
    if Eb.shape[0] != Eb.shape[1] or Eb.size == 0:
        return np.zeros(0, dtype=complex)
    alpha, beta = linalg.eigvals(Ab, Eb, homogeneous_eigvals=True)
    # Perturbed infinite eigenvalues of a singular E surface as huge finite
    # ones; anything beyond CAND_RADIUS times the data scale is treated as infinite.
    scale = 1.0 + np.linalg.norm(Ab, 2) / max(np.linalg.norm(Eb, 2), EPS_NORM)
    fin = np.abs(alpha) < CAND_RADIUS * scale * np.abs(beta)
    return alpha[fin] / beta[fin]


def verify_lure_solution(sys, w, sol, vsys=None, tol=None):
    """Check the defining clauses of a (stabilizing) Lur'e solution.

    Returns a report with ``residual_ok`` (Lur'e equation on the system
    space), ``rank_ok`` (rank ``n + q`` over R[s], probed at ``n + q + 1``
    points ``2, 3, ...``) and ``stabilizing_ok`` (rank ``n + q`` at every
    finite rank-drop candidate with positive real part and on a large
    right half-plane contour). Points on the imaginary axis are not part of
    the stabilizing test.
    """
    n, q = sys.n, sol.q
    P, K, L = _P(sol), sol.K, sol.L
    V = (vsys.basis if isinstance(vsys, Subspace) else vsys) if vsys is not None else system_space_wong(sys)
    M = kyp_matrix(sys, w, P)
    KL = np.hstack([K, L])
    R = la.sym(V.T @ (M - KL.T @ KL) @ V)
    res = float(np.linalg.norm(R)) if R.size else 0.0
    residual_ok = res <= (RESIDUAL_TOL if tol is None else tol) * (1.0 + np.linalg.norm(M))

    rank_ok = q <= sys.m and any(_rank_at(sys, K, L, 2.0 + i) == n + q for i in range(n + q + 1))

    failing = None
    stabilizing_ok = rank_ok
    if rank_ok:
        cands = _candidate_eigenvalues(sys, K, L)
        radius = 10.0 * (1.0 + (np.abs(cands).max() if cands.size else 0.0))
        theta = -np.pi / 2 + np.pi * (np.arange(16) + 0.5) / 16
        contour = radius * np.exp(1j * theta)
        scale = 1.0 + np.linalg.norm(sys.A, 2) + np.linalg.norm(sys.E, 2)
        for lam in list(cands[cands.real > 1e-8 * scale]) + list(contour):
            if _rank_at(sys, K, L, lam) < n + q:
                stabilizing_ok, failing = False, complex(lam)
                break
    return {"residual_ok": bool(residual_ok), "residual": res, "rank_ok": bool(rank_ok),
            "stabilizing_ok": bool(stabilizing_ok), "failing_lambda": failing}


def ev_diff(sys, ff=None):
    """Orthonormal basis of ``E V^diff``."""
    ff = feedback_equivalence_form(sys) if ff is None else ff
    return Subspace(la.orth(sys.E @ compute_vdiff(ff).basis, scale=np.linalg.norm(sys.E, 2)))


def compare_maximality(P1, P2, ev_diff_space, tol=None):
    """Order ``P1`` against ``P2`` as quadratic forms on ``E V^diff``."""
    V = ev_diff_space.basis if isinstance(ev_diff_space, Subspace) else np.asarray(ev_diff_space)
    D = la.sym(V.T @ (_P(P1) - _P(P2)) @ V)
    if D.size == 0:
        return Ordering.EQUAL
    lam = linalg.eigvalsh(D)
    tol = PSD_TOL * max(1.0, np.abs(lam).max()) if tol is None else tol
    lo, hi = lam[0] >= -tol, lam[-1] <= tol
    if lo and hi:
        return Ordering.EQUAL
    if lo:
        return Ordering.GEQ
    if hi:
        return Ordering.LEQ
    return Ordering.INCOMPARABLE
