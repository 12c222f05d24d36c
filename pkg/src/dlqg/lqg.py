"""Optimal control layer: optimal cost, optimality DAE, regularity and cost identities."""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg

from . import _linalg as la
from .exceptions import EnsembleNotConverged, IllPosed, Infeasible
from .lure import LureSolution, solve_lure
from .system import (CostWeights, DescriptorSystem, Subspace, check_wellposed, compute_system_space,
                     compute_vdiff, discount_transform, feedback_equivalence_form)

TERM_EPS = 1e-3


@dataclass(frozen=True)
class OptimalControlProblem:
    """Unshifted system, weights and the initial mean/covariance (both supported in V^diff)."""

    sys: DescriptorSystem
    w: CostWeights
    x0_mean: Optional[np.ndarray] = None
    x0_cov: Optional[np.ndarray] = None

    def __post_init__(self):
        n = self.sys.n
        mean = np.zeros(n) if self.x0_mean is None else np.asarray(self.x0_mean, dtype=float).reshape(n)
        cov = np.zeros((n, n)) if self.x0_cov is None else la.sym(la.as_matrix(self.x0_cov, rows=n, cols=n, name="x0_cov"))
        if cov.size and linalg.eigvalsh(cov)[0] < -1e-12 * max(1.0, np.abs(cov).max()):
            raise ValueError("initial covariance must be positive semidefinite")
        if self.sys.shifted:
            raise ValueError("OptimalControlProblem expects the unshifted system")
        self.w.check(self.sys)
        object.__setattr__(self, "x0_mean", mean)
        object.__setattr__(self, "x0_cov", cov)

    @property
    def initial_second_moment(self):
        """``E[E x0 (E x0)^T]``."""
        E, x = self.sys.E, self.x0_mean
        return E @ (np.outer(x, x) + self.x0_cov) @ E.T

    def check_initial(self, vdiff, tol=1e-8):
        if not vdiff.contains(self.x0_mean, tol):
            raise ValueError("initial mean is not in V^diff")
        if np.any(self.x0_cov) and not vdiff.contains(self.x0_cov, tol):
            raise ValueError("range of the initial covariance is not in V^diff")


@dataclass(frozen=True)
class CostReport:
    feasible: bool
    regular: Optional[bool]
    W_plus: Optional[float]
    term_initial: Optional[float]
    term_noise: Optional[float]
    solution: Optional[LureSolution]
    verdict: str = "feasible"
    feedback: Optional[np.ndarray] = None
    pencil_ok: Optional[bool] = None
    space_ok: Optional[bool] = None


@dataclass(frozen=True)
class OptimalityDae:
    """``d[[E, 0], [0, 0]] (x, u) = [[A, B], [K, L]] (x, u) dt + [N; 0] e^{beta t} dw``."""

    E: np.ndarray
    A: np.ndarray
    N: np.ndarray
    beta: float
    n: int
    m: int
    q: int

    @property
    def underdetermined(self):
        return self.q < self.m


def cost_terms(p, P):
    """``(term_initial, term_noise)`` of the optimal cost for a Lur'e solution ``P``."""
    term_initial = float(np.trace(P @ p.initial_second_moment))
    N = p.sys.N
    term_noise = float(-np.trace(P @ N @ N.T) / (2 * p.sys.beta)) if N.size else 0.0
    return term_initial, term_noise


def solve_ocp(p, backend="auto", tol=None):
    """Feasibility verdict, optimal cost ``W_+`` and regularity of the problem.

    An infeasible KYP inequality gives ``feasible=False`` with verdict
    ``"KYP infeasible"``; a non-stabilizable system raises.

    Raises
    ------
    IllPosed, NotStabilizable, Unsupported
    """
    s = discount_transform(p.sys)
    if not check_wellposed(s)["wellposed"]:
        raise IllPosed("system is not well-posed: noise enters algebraic equations")
    ff = feedback_equivalence_form(s)
    p.check_initial(compute_vdiff(ff))
    try:
        sol = solve_lure(s, p.w, backend=backend, tol=tol)
    except Infeasible:
        return CostReport(False, None, None, None, None, None, verdict="KYP infeasible")
    term_initial, term_noise = cost_terms(p, sol.P)
    reg = check_regularity(s, sol, compute_system_space(ff))
    return CostReport(
        feasible=True, regular=reg["regular"], W_plus=term_initial + term_noise,
        term_initial=term_initial, term_noise=term_noise, solution=sol,
        feedback=feedback_law(sol), pencil_ok=reg["pencil_ok"], space_ok=reg["space_ok"],
    )


def assemble_optimality_dae(sys_shifted, sol):
    """Block matrices of the optimality DAE for a (stabilizing) Lur'e solution."""
    n, m, q = sys_shifted.n, sys_shifted.m, sol.q
    Ebar = np.zeros((n + q, n + m))
    Ebar[:n, :n] = sys_shifted.E
    Abar = np.block([[sys_shifted.A, sys_shifted.B], [sol.K, sol.L]])
    Nbar = np.vstack([sys_shifted.N, np.zeros((q, sys_shifted.n_w))])
    # noise never reaches the K, L rows, which are purely algebraic
    assert not np.any(Nbar[n:])
    return OptimalityDae(E=Ebar, A=Abar, N=Nbar, beta=sys_shifted.beta, n=n, m=m, q=q)


def _kernel_trivial(M, scale):
    return la.numerical_rank(M, scale=scale) == M.shape[1]


def check_regularity(sys_shifted, sol, vsys, omegas=None):
    """Regularity verdict from the pencil condition and the system-space condition.

    ``pencil_ok``: the ``(n+q) x (n+m)`` matrix ``[[-iwE + A, B], [K, L]]`` has
    trivial kernel for ``w`` on a logarithmic grid (and 0) and at every
    finite eigenvalue of the optimality pencil on the imaginary axis.
    ``space_ok``: the two subspace sums of the system-space condition
    coincide (compared by rank, one contains the other).
    """
    dae = assemble_optimality_dae(sys_shifted, sol)
    n, m, q = dae.n, dae.m, dae.q
    Ebar, Abar = dae.E, dae.A
    scale = np.linalg.norm(Abar, 2) + np.linalg.norm(Ebar, 2)

    pencil_ok = q == m
    if pencil_ok:
        if omegas is None:
            grid = np.logspace(-3, 3, 25)
            omegas = np.concatenate([[0.0], grid, -grid])
        if Ebar.size:
            alpha, beta = linalg.eigvals(Abar, Ebar, homogeneous_eigvals=True)
            fin = np.abs(beta) > 1e-10 * np.abs(alpha)
            lam = alpha[fin] / beta[fin]
            omegas = np.concatenate([omegas, lam[np.abs(lam.real) <= 1e-8 * max(1.0, scale)].imag])
        for om in omegas:
            if not _kernel_trivial(Abar - 1j * om * Ebar, scale * (1 + abs(om))):
                pencil_ok = False
                break

    V = vsys.basis if isinstance(vsys, Subspace) else np.asarray(vsys)
    ker_E = la.null_space(sys_shifted.E, scale=np.linalg.norm(sys_shifted.E, 2))
    kerE_R = linalg.block_diag(ker_E, np.eye(m)) if m else ker_E
    inter = la.intersect(V, la.orth(kerE_R, tol=1e-12)) if V.shape[1] else V
    EV = Ebar @ V
    lhs = np.hstack([EV, Abar @ inter])
    rhs = np.hstack([EV, Abar @ V])
    r_l = la.numerical_rank(lhs, scale=scale) if lhs.size else 0
    r_r = la.numerical_rank(rhs, scale=scale) if rhs.size else 0
    space_ok = r_l == r_r
    return {"regular": bool(pencil_ok and space_ok), "pencil_ok": bool(pencil_ok), "space_ok": bool(space_ok)}


def feedback_law(sol, tol=1e-12):
    """``-L^{-1} K`` when ``q = m`` and ``L`` is invertible, otherwise ``None``."""
    L = sol.L
    if L.shape[0] != L.shape[1] or L.size == 0:
        return None
    if np.linalg.cond(L) > 1 / tol:
        return None
    return -linalg.solve(L, sol.K)


def terminal_threshold(p, term_eps=TERM_EPS, initial_moment=None):
    """``term_eps * (E|E x0|^2 + tr N N^T)``."""
    init = float(np.trace(p.initial_second_moment)) if initial_moment is None else initial_moment
    N = p.sys.N
    return term_eps * (init + float(np.sum(N * N)))


def require_converged(p, ens, term_eps=TERM_EPS):
    limit = terminal_threshold(p, term_eps, ens.initial_moment)
    if ens.terminal_moment > limit:
        raise EnsembleNotConverged(
            f"terminal moment {ens.terminal_moment:.3g} exceeds {limit:.3g}; increase the horizon")


def suboptimality_gap(p, sol, ens, term_eps=TERM_EPS):
    """Empirical check of ``J = W_+ + int E|K x + L u|^2 dt``.

    All three quantities are estimated from the same paths, so the identity
    residual is reported with the standard error of the per-path
    difference ``J - G``.

    Raises
    ------
    EnsembleNotConverged
    """
    require_converged(p, ens, term_eps)
    J = ens.quadratic_integrals(p.w.matrix)
    KL = np.hstack([sol.K, sol.L])
    G = ens.norm_integrals(KL) if KL.size else np.zeros_like(J)
    term_initial, term_noise = cost_terms(p, sol.P)
    W = term_initial + term_noise
    n = len(J)

    def se(v):
        return float(np.std(v, ddof=1) / np.sqrt(n)) if n > 1 else 0.0

    return {"J_est": float(J.mean()), "J_std_error": se(J), "gap_est": float(G.mean()),
            "gap_std_error": se(G), "W_plus": W, "identity_residual": float((J - G).mean() - W),
            "std_error": se(J - G)}


def verify_dissipation(p, cand, ens, pairs=None, n_pairs=10, seed=0, n_sigma=3.0):
    """Empirical integral dissipation inequality for the storage ``V(z) = z^T P z``.

    For each pair ``t1 <= t2`` of stored times checks
    ``E V(E x~(t1)) + int mu dt <= E V(E x~(t2)) + J([t1, t2])`` up to
    ``n_sigma`` standard errors, with ``mu(t) = e^{2 beta t} tr(N^T P N)``.
    Pairs default to ``n_pairs`` deterministic draws from the stored grid.
    """
    P = cand.P if hasattr(cand, "P") else la.sym(np.asarray(cand, dtype=float))
    beta = ens.beta
    t = ens.t
    if pairs is None:
        g = np.random.default_rng(seed)
        pairs = [tuple(sorted(g.choice(len(t), 2, replace=False))) for _ in range(n_pairs)]
    xs = ens.x_shifted
    Ex = xs @ ens.E.T
    V = np.einsum("pti,ij,ptj->pt", Ex, P, Ex)
    z = np.concatenate([ens.x, ens.u], axis=2)
    run = np.einsum("pti,ij,ptj->pt", z, p.w.matrix, z) * np.exp(2 * beta * t)[None]
    # cumulative trapezoid so J([t1, t2]) is a difference
    cum = np.concatenate([np.zeros((run.shape[0], 1)),
                          np.cumsum(0.5 * (run[:, 1:] + run[:, :-1]) * np.diff(t)[None], axis=1)], axis=1)
    N = p.sys.N
    trNPN = float(np.trace(N.T @ P @ N)) if N.size else 0.0
    rows = []
    for i1, i2 in pairs:
        t1, t2 = t[i1], t[i2]
        mu = trNPN * (np.exp(2 * beta * t2) - np.exp(2 * beta * t1)) / (2 * beta)
        slack = V[:, i2] + (cum[:, i2] - cum[:, i1]) - V[:, i1] - mu
        mean = float(slack.mean())
        se = float(np.std(slack, ddof=1) / np.sqrt(len(slack))) if len(slack) > 1 else 0.0
        tol = 1e-9 * (1.0 + float(np.abs(V[:, [i1, i2]]).mean()))
        rows.append({"t1": float(t1), "t2": float(t2), "slack": mean, "std_error": se,
                     "holds": bool(mean >= -n_sigma * se - tol)})
    return {"holds": all(r["holds"] for r in rows), "pairs": rows}
