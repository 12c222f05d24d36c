"""Monte Carlo simulation of well-posed stochastic descriptor systems.

Paths are integrated in the discounted frame ``x~ = e^{beta t} x`` where the
drift is ``A + beta E`` and the diffusion ``N e^{beta t}``. The system is
brought to its feedback equivalence form; the slow block is advanced by
Euler-Maruyama and the algebraic blocks are solved exactly at every step,
so the trajectories never leave the constraint manifold.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy import integrate, linalg

from . import _linalg as la
from . import rng
from .exceptions import IllPosed, InconsistentControl
from .system import _noise_blocks_zero, discount_transform, feedback_equivalence_form

ALGEBRAIC_TOL = 1e-10


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings.

    ``control`` is ``"zero"``, a state-feedback matrix ``F`` (``u = F x``) or a
    callable ``t -> u(t)`` giving a deterministic open-loop input. The
    initial state is either ``x0_samples`` (one row per path) or drawn from
    ``x0_mean + sqrt(x0_cov) xi``. Only every ``save_every``-th step is stored.
    """

    dt: float
    tf: float
    n_paths: int
    seed: int = 0
    control: Union[str, np.ndarray, Callable] = "zero"
    x0_mean: Optional[np.ndarray] = None
    x0_cov: Optional[np.ndarray] = None
    x0_samples: Optional[np.ndarray] = None
    save_every: int = 1
    chunk: int = 1000

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.tf >= self.dt:
            raise ValueError("tf must be at least dt")
        if int(self.n_paths) < 1:
            raise ValueError("n_paths must be at least 1")
        if int(self.save_every) < 1:
            raise ValueError("save_every must be at least 1")
        if self.n_steps % int(self.save_every):
            raise ValueError("save_every must divide the number of steps")

    @property
    def n_steps(self):
        return int(round(self.tf / self.dt))


@dataclass(frozen=True)
class TrajectoryEnsemble:
    """Stored paths in original (undiscounted) coordinates.

    ``x`` has shape ``(n_paths, len(t), n)``, ``u`` shape ``(n_paths, len(t), m)``.
    ``terminal_moment`` is the ensemble mean of ``|E x~(tf)|^2`` in the
    discounted frame and ``initial_moment`` that of ``|E x(0)|^2``.
    """

    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    beta: float
    E: np.ndarray
    terminal_moment: float
    initial_moment: float
    algebraic_residual: float
    seed: int
    dt: float
    save_every: int
    meta: dict = field(default_factory=dict)

    @property
    def n_paths(self):
        return self.x.shape[0]

    @property
    def discount(self):
        return np.exp(self.beta * self.t)

    @property
    def x_shifted(self):
        return self.x * self.discount[None, :, None]

    @property
    def u_shifted(self):
        return self.u * self.discount[None, :, None]

    def quadratic_integrals(self, M, beta=None):
        """Per-path ``int e^{2 beta t} (x, u)^T M (x, u) dt`` by the trapezoidal rule."""
        beta = self.beta if beta is None else beta
        z = np.concatenate([self.x, self.u], axis=2)
        vals = np.einsum("pti,ij,ptj->pt", z, M, z) * np.exp(2 * beta * self.t)[None, :]
        return integrate.trapezoid(vals, self.t, axis=1)

    def norm_integrals(self, C, beta=None):
        """Per-path ``int e^{2 beta t} |C (x, u)|^2 dt``; nonnegative by construction."""
        beta = self.beta if beta is None else beta
        z = np.concatenate([self.x, self.u], axis=2)
        vals = np.sum((z @ np.atleast_2d(C).T) ** 2, axis=2) * np.exp(2 * beta * self.t)[None, :]
        return integrate.trapezoid(vals, self.t, axis=1)


def _control_parts(control, m, n):
    if isinstance(control, str):
        if control != "zero":
            raise ValueError(f"unknown control {control!r}")
        return np.zeros((m, n)), None
    if callable(control):
        return np.zeros((m, n)), control
    return la.as_matrix(control, rows=m, cols=n, name="feedback"), None


def _initial_states(sys, cfg):
    n = sys.n
    if cfg.x0_samples is not None:
        x0 = la.as_matrix(cfg.x0_samples, cols=n, name="x0_samples")
        if x0.shape[0] != cfg.n_paths:
            raise ValueError("x0_samples needs one row per path")
        return x0
    mean = np.zeros(n) if cfg.x0_mean is None else np.asarray(cfg.x0_mean, dtype=float).reshape(n)
    x0 = np.tile(mean, (cfg.n_paths, 1))
    if cfg.x0_cov is not None and np.any(cfg.x0_cov):
        root = la.psd_sqrt(la.as_matrix(cfg.x0_cov, rows=n, cols=n, name="x0_cov"))
        xi = rng.block_normals(cfg.seed, range(cfg.n_paths), 1, n, stream=rng.STREAM_INITIAL)[:, 0]
        x0 = x0 + xi @ root.T
    return x0


def simulate(sys, cfg):
    """Seeded Euler-Maruyama ensemble of ``sys`` under ``cfg.control``.

    Raises
    ------
    IllPosed
        If noise enters the algebraic blocks.
    InconsistentControl
        If the control law cannot be resolved against the algebraic rows, the
        initial state is not consistent, or an algebraic row is violated.
    """
    s = sys if sys.shifted else discount_transform(sys)
    beta = s.beta
    n, m, n_w = s.n, s.m, s.n_w
    ff = feedback_equivalence_form(s)
    if not _noise_blocks_zero(ff):
        raise IllPosed("noise enters the algebraic blocks; the system is not well-posed")
    n1, n2 = ff.n1, ff.n2
    Fc, signal = _control_parts(cfg.control, m, n)

    # u = Fc x + s  and  u = F x + v  with  x = T1 z1 + T2 z2,  z2 = -B2 v.
    T1, T2 = ff.T[:, :n1], ff.T[:, n1:n1 + n2]
    G = Fc - ff.F
    H = np.eye(m) + G @ T2 @ ff.B2
    if m and np.linalg.cond(H) > 1e10:
        raise InconsistentControl("control law cannot be resolved against the algebraic constraints")
    Hinv = linalg.inv(H) if m else np.zeros((0, 0))
    Vz = Hinv @ G @ T1
    Xz = T1 - T2 @ ff.B2 @ Vz
    Xs = -T2 @ ff.B2 @ Hinv
    Uz = ff.F @ Xz + Vz
    Us = ff.F @ Xs + Hinv
    Az = ff.A11 + ff.B1 @ Vz
    Bs = ff.B1 @ Hinv
    N1 = ff.N1
    W1E = ff.W[:n1] @ s.E
    Walg = ff.W[n1:]
    AB = np.hstack([s.A, s.B])
    alg_scale = np.linalg.norm(Walg, 2) * max(1.0, np.linalg.norm(AB, 2)) if n1 < n else 0.0

    x0 = _initial_states(s, cfg)
    dt, n_steps, stride = cfg.dt, cfg.n_steps, int(cfg.save_every)
    t_full = dt * np.arange(n_steps + 1)
    t_store = t_full[::stride]
    n_store = len(t_store)
    P = cfg.n_paths
    X = np.empty((P, n_store, n))
    U = np.empty((P, n_store, m))
    sig = (np.array([np.asarray(signal(t), dtype=float).reshape(m) for t in t_full])
           * np.exp(beta * t_full)[:, None]) if signal is not None else None
    sqdt = np.sqrt(dt)
    alg_res = 0.0

    z_init = x0 @ W1E.T
    x_check = z_init @ Xz.T + (sig[0] @ Xs.T if sig is not None else 0.0)
    gap = np.abs((x_check - x0) @ s.E.T).max(initial=0.0)
    if gap > 1e-8 * max(1.0, np.abs(x0).max(initial=0.0)) * max(1.0, np.linalg.norm(s.E, 2)):
        raise InconsistentControl(f"initial state is not consistent (|E x(0) - E x0| = {gap:.3g})")

    for start in range(0, P, int(cfg.chunk)):
        idx = np.arange(start, min(P, start + int(cfg.chunk)))
        xi = rng.block_normals(cfg.seed, idx, n_steps, n_w) if n_w else None
        z = z_init[idx]
        j = 0
        for k in range(n_steps + 1):
            if k % stride == 0:
                xs = z @ Xz.T
                us = z @ Uz.T
                if sig is not None:
                    xs = xs + sig[k] @ Xs.T
                    us = us + sig[k] @ Us.T
                if n1 < n:
                    r = np.hstack([xs, us]) @ AB.T @ Walg.T
                    scale = alg_scale * max(1.0, np.abs(np.hstack([xs, us])).max(initial=0.0))
                    res = np.abs(r).max(initial=0.0) / scale
                    alg_res = max(alg_res, res)
                    if res > ALGEBRAIC_TOL:
                        raise InconsistentControl(f"algebraic rows violated by {res:.3g} at t={t_full[k]:.6g}")
                back = np.exp(-beta * t_full[k])
                X[idx, j] = xs * back
                U[idx, j] = us * back
                j += 1
            if k == n_steps:
                break
            drift = z @ Az.T
            if sig is not None:
                drift = drift + sig[k] @ Bs.T
            z = z + dt * drift
            if xi is not None:
                z = z + (np.exp(beta * t_full[k]) * sqdt) * (xi[:, k] @ N1.T)

    xT = X[:, -1] * np.exp(beta * t_full[-1])
    terminal = float(np.mean(np.sum((xT @ s.E.T) ** 2, axis=1)))
    initial = float(np.mean(np.sum((X[:, 0] @ s.E.T) ** 2, axis=1)))
    return TrajectoryEnsemble(
        t=t_store, x=X, u=U, beta=beta, E=s.E, terminal_moment=terminal,
        initial_moment=initial, algebraic_residual=float(alg_res), seed=int(cfg.seed),
        dt=dt, save_every=stride, meta={"n_steps": n_steps, "n_w": n_w, "rng": "philox(seed, path)"},
    )


def covariance_oracle(a_hat, N1, beta, t_grid, X0=None):
    """Solve ``X' = a X + X a^T + e^{2 beta t} N1 N1^T`` on ``t_grid``.

    Classical RK4 with ten substeps per grid interval; ``X(t_grid[0]) = X0``
    (zero by default). Returns an array of shape ``(len(t_grid), k, k)``.
    """
    a = np.atleast_2d(np.asarray(a_hat, dtype=float))
    k = a.shape[0]
    NN = np.atleast_2d(np.asarray(N1, dtype=float)).reshape(k, -1)
    NN = NN @ NN.T
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be increasing")

    def rhs(t, X):
        return a @ X + X @ a.T + np.exp(2 * beta * t) * NN

    X = np.zeros((k, k)) if X0 is None else np.array(X0, dtype=float).reshape(k, k)
    out = np.empty((len(t_grid), k, k))
    out[0] = X
    for i in range(len(t_grid) - 1):
        t0 = t_grid[i]
        h = (t_grid[i + 1] - t0) / 10
        for j in range(10):
            t = t0 + j * h
            k1 = rhs(t, X)
            k2 = rhs(t + h / 2, X + h / 2 * k1)
            k3 = rhs(t + h / 2, X + h / 2 * k2)
            k4 = rhs(t + h, X + h * k3)
            X = X + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        out[i + 1] = X
    return out


def estimate_cost(ens, w, beta=None):
    """Discounted cost per path, its ensemble mean and standard error."""
    per_path = ens.quadratic_integrals(w.matrix, beta)
    se = float(np.std(per_path, ddof=1) / np.sqrt(len(per_path))) if len(per_path) > 1 else 0.0
    return {"J_est": float(np.mean(per_path)), "std_error": se, "per_path": per_path}


def mean_fluctuation_split(ens, w, beta=None):
    """Split the empirical cost into the mean-path part and the fluctuation part.

    ``J_d`` is the cost of the ensemble-mean trajectory, ``J_s`` the mean cost of
    the deviations from it; ``sum_residual = J_est - (J_d + J_s)``.
    """
    beta = ens.beta if beta is None else beta
    M = w.matrix
    z = np.concatenate([ens.x, ens.u], axis=2)
    zbar = z.mean(axis=0)
    disc = np.exp(2 * beta * ens.t)
    J_d = float(integrate.trapezoid(np.einsum("ti,ij,tj->t", zbar, M, zbar) * disc, ens.t))
    dz = z - zbar[None]
    per_path_s = integrate.trapezoid(np.einsum("pti,ij,ptj->pt", dz, M, dz) * disc[None], ens.t, axis=1)
    J_s = float(per_path_s.mean())
    cost = estimate_cost(ens, w, beta)
    return {"J_d": J_d, "J_s": J_s, "J_est": cost["J_est"], "std_error": cost["std_error"],
            "sum_residual": cost["J_est"] - (J_d + J_s)}
