"""
KYP inequality, Lur'e equation and Riccati equation
===================================================

The discounted problem is shifted to ``A + beta E``. Feasibility is the
KYP inequality ``M(P) >= 0`` on the system space; the optimal storage is the
stabilizing solution of the Lur'e equation ``M(P) = [K L]^T [K L]``.
"""

# %%
import numpy as np

import dlqg

p_star = (np.sqrt(5) - 1) / 2

# %% [markdown]
# The scalar example ``dx = u dt + dw`` with ``Q = R = 1`` and ``beta = -1/2``.
# The KYP matrix is ``[[1 - p, p], [p, 1]]``, which is PSD exactly for
# ``p <= p*``.

# %%
sys = dlqg.discount_transform(dlqg.DescriptorSystem([[1.0]], [[0.0]], [[1.0]], [[1.0]], beta=-0.5))
w = dlqg.CostWeights([[1.0]], [[0.0]], [[1.0]])
for p in (0.0, p_star, p_star + 0.5):
    rep = dlqg.kyp_residual(sys, w, dlqg.KypCandidate([[p]]), np.eye(2))
    print(f"p = {p:.4f}: min eigenvalue {rep['min_eigenvalue']:+.4f}, feasible = {rep['feasible']}")

sol = dlqg.solve_lure(sys, w)
print("P =", sol.P[0, 0], " K =", sol.K[0, 0], " L =", sol.L[0, 0], " backend:", sol.backend)
print("certificate:", {k: v for k, v in dlqg.verify_lure_solution(sys, w, sol).items() if k.endswith("_ok")})

# %% [markdown]
# Two independent routes: the Hamiltonian Riccati solver and the even pencil.
# On a descriptor system both agree on ``E V^diff``, the only part of ``P``
# that the problem determines.

# %%
E = np.array([[1.0, 0.0], [0.0, 0.0]])
A = np.array([[0.0, 1.0], [1.0, 1.0]])
dsys = dlqg.discount_transform(dlqg.DescriptorSystem(E, A, [[1.0], [1.0]], [[1.0], [0.0]], beta=-0.5))
dw = dlqg.CostWeights(np.eye(2), np.zeros((2, 1)), [[1.0]])
a = dlqg.solve_lure(dsys, dw, backend="riccati")
b = dlqg.solve_lure(dsys, dw, backend="even")
V = dlqg.ev_diff(dsys).basis
print("difference on E V^diff:", np.abs(V.T @ (a.P - b.P) @ V).max())

# %% [markdown]
# Indefinite weights: the Popov function decides. ``Q = -1`` makes the cost
# unbounded below; ``Q = -1/4`` is the boundary case with no stabilizing
# solution.

# %%
for q in (-1.0, -0.25, -0.2):
    try:
        s = dlqg.solve_lure(sys, dlqg.CostWeights([[q]], [[0.0]], [[1.0]]))
        print(f"Q = {q}: P = {s.P[0, 0]:.6f}")
    except dlqg.DlqgError as err:
        print(f"Q = {q}: {type(err).__name__}")

# %% [markdown]
# Maximality: every feasible ``P`` lies below the stabilizing solution.

# %%
for p in (-1.5, 0.0, 0.5, p_star):
    print(f"P+ vs p = {p:.4f}: {dlqg.compare_maximality(sol.P, [[p]], dlqg.Subspace(np.eye(1))).name}")
