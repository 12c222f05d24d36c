"""
Optimal cost, regularity and the feedback law
=============================================

``W+ = tr(P+ E[E x0 (E x0)^T]) - tr(P+ N N^T) / (2 beta)``: the first term is
the deterministic cost of the initial state, the second the price of the
noise. ``P+`` itself does not depend on ``N``.
"""

# %%
import numpy as np

import dlqg


def scalar(N=1.0, beta=-0.5, x0=1.0):
    sys = dlqg.DescriptorSystem([[1.0]], [[0.0]], [[1.0]], [[N]], beta=beta)
    return dlqg.OptimalControlProblem(sys, dlqg.CostWeights([[1.0]], [[0.0]], [[1.0]]), [x0])


rep = dlqg.solve_ocp(scalar())
print(f"W+ = {rep.W_plus:.10f} = {rep.term_initial:.6f} (initial) + {rep.term_noise:.6f} (noise)")
print("regular:", rep.regular, " feedback u = F x with F =", rep.feedback.ravel())

# %% [markdown]
# Scaling the noise by ``c`` scales the noise term by ``c^2``; a stronger
# discount makes the noise cheaper.

# %%
for c in (0.5, 1.0, 2.0):
    print(f"c = {c}: term_noise = {dlqg.solve_ocp(scalar(N=c)).term_noise:.6f}")
for beta in (-0.25, -0.5, -1.0):
    r = dlqg.solve_ocp(scalar(beta=beta, x0=0.0))
    print(f"beta = {beta}: P+ = {r.solution.P[0, 0]:.6f}, term_noise = {r.term_noise:.6f}")

# %% [markdown]
# The optimality DAE couples the dynamics with ``K x + L u = 0``. With zero
# weights and an input there is no such row, the optimal control is not
# unique and the problem is not regular.

# %%
sys = dlqg.discount_transform(scalar().sys)
dae = dlqg.assemble_optimality_dae(sys, rep.solution)
print("E bar =\n", dae.E, "\nA bar =\n", np.round(dae.A, 6))
zero = dlqg.OptimalControlProblem(dlqg.DescriptorSystem(np.eye(2), -np.eye(2), np.ones((2, 1)), beta=-0.5),
                                  dlqg.CostWeights.zeros(2, 1), [1.0, 0.0])
r0 = dlqg.solve_ocp(zero)
print("zero weights: W+ =", r0.W_plus, " q =", r0.solution.q, " regular =", r0.regular)
