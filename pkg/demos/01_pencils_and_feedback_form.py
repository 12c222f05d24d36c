"""
Pencils, the feedback equivalence form and well-posedness
==========================================================

A descriptor system ``d(Ex) = (Ax + Bu) dt + N dw`` mixes differential and
algebraic equations. This script builds a scrambled pencil with known
structure, recovers the structure, and shows when noise is admissible.
"""

# %%
import numpy as np
from scipy.linalg import block_diag

import dlqg

rng = np.random.default_rng(0)

# %% [markdown]
# A slow block ``s - (-1)`` and a nilpotent block of size 2, scrambled by
# random invertible matrices. The quasi-Weierstrass form recovers the sizes.

# %%
E0 = block_diag([[1.0]], [[0.0, 1.0], [0.0, 0.0]])
A0 = block_diag([[-1.0]], np.eye(2))
W, T = rng.standard_normal((3, 3)), rng.standard_normal((3, 3))
pencil = dlqg.MatrixPencil(W @ E0 @ T, W @ A0 @ T)
qw = dlqg.quasi_weierstrass(pencil)
print("regular:", dlqg.is_regular(pencil))
print("slow dimension n1 =", qw.n1, " nilpotency index =", qw.nilpotency_index)
print("finite spectrum:", dlqg.finite_spectrum(qw))
Pi = dlqg.spectral_projector(qw)
print("rank of the spectral projector:", np.linalg.matrix_rank(Pi), " idempotence error:", np.abs(Pi @ Pi - Pi).max())

# %% [markdown]
# Noise entering an algebraic equation makes the solution a white noise
# (or worse, its derivative). For ``E = [[0, 1], [0, 0]]``, ``A = I`` both
# equations are algebraic, so any nonzero ``N`` is ill-posed.

# %%
E, A = np.array([[0.0, 1.0], [0.0, 0.0]]), np.eye(2)
for N in ([[0.0], [0.0]], [[1.0], [0.0]], [[0.0], [1.0]]):
    rep = dlqg.check_wellposed(dlqg.DescriptorSystem(E, A, None, N, beta=-0.5))
    print(f"N = {np.ravel(N)}: well-posed = {rep['wellposed']}")

# %% [markdown]
# With inputs, the feedback equivalence form splits the state into a slow
# part ``z1``, a part ``z2 = -B2 v`` driven algebraically by the input and
# a part ``z3 = 0``. From it we read the consistent initial states
# ``V^diff`` and the system space ``V^sys`` of reachable ``(x, u)`` values.

# %%
E = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, 0.0]])
A = np.array([[0.5, 1.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
B = np.array([[0.0], [1.0], [0.0]])
sys = dlqg.discount_transform(dlqg.DescriptorSystem(E, A, B, [[1.0], [0.0], [0.0]], beta=-0.5))
ff = dlqg.feedback_equivalence_form(sys)
print("block sizes (n1, n2, n3):", (ff.n1, ff.n2, ff.n3))
print("dim V^diff =", dlqg.compute_vdiff(ff).rank, " dim V^sys =", dlqg.compute_system_space(ff).rank)
st = dlqg.check_stabilizable(sys)
print("stabilizable:", st["stabilizable"])
F = dlqg.stabilizing_feedback(sys)
closed = dlqg.MatrixPencil(sys.E, sys.A + sys.B @ F)
print("closed-loop finite spectrum:", np.round(dlqg.finite_spectrum(dlqg.quasi_weierstrass(closed)), 4))
