import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import linalg

from dlqg import (CostWeights, DescriptorSystem, Infeasible, KypCandidate, LureSolution,
                  NoStabilizingSolution, NotStabilizable, Ordering, SingularR, Subspace, Unsupported,
                  compare_maximality, discount_transform, ev_diff, kyp_residual, solve_lure,
                  solve_riccati, stabilizing_feedback, verify_lure_solution)
from dlqg.lure import kyp_matrix
from conftest import P_STAR, scrambled_pencil

I2 = np.eye(2)


def shifted(E, A, B=None, N=None, beta=-0.5):
    return discount_transform(DescriptorSystem(E, A, B, N, beta=beta))


@pytest.fixture
def scalar():
    return shifted([[1.0]], [[0.0]], [[1.0]], [[1.0]]), CostWeights([[1.0]], [[0.0]], [[1.0]])


# --- KYP residual -----------------------------------------------------------

def test_kyp_zero_weights():
    s = shifted(I2, -I2, np.ones((2, 1)))
    rep = kyp_residual(s, CostWeights.zeros(2, 1), KypCandidate(np.zeros((2, 2))), np.eye(3))
    assert np.allclose(rep["matrix"], 0)
    assert rep["feasible"]


def test_kyp_at_riccati_solution_is_rank_one(scalar):
    s, w = scalar
    rep = kyp_residual(s, w, KypCandidate([[P_STAR]]), np.eye(2))
    assert rep["min_eigenvalue"] == pytest.approx(0.0, abs=1e-12)
    assert rep["feasible"]
    assert np.linalg.matrix_rank(rep["matrix"], tol=1e-10) == 1


def test_kyp_above_maximal_is_infeasible(scalar):
    s, w = scalar
    rep = kyp_residual(s, w, KypCandidate([[P_STAR + 0.5]]), np.eye(2))
    # [[-p, p], [p, 1]] at p = p* + 1/2
    p = P_STAR + 0.5
    expected = np.linalg.eigvalsh([[-p + 1, p], [p, 1.0]])[0]
    assert rep["min_eigenvalue"] == pytest.approx(expected, rel=1e-12)
    assert not rep["feasible"]


def test_kyp_dimension_mismatch(scalar):
    s, w = scalar
    with pytest.raises(ValueError):
        kyp_residual(s, w, KypCandidate(np.eye(2)), np.eye(2))
    with pytest.raises(ValueError):
        kyp_residual(s, w, KypCandidate([[1.0]]), np.eye(3))


# --- Riccati ----------------------------------------------------------------

def test_riccati_scalar(scalar):
    s, w = scalar
    assert solve_riccati(s, w).P[0, 0] == pytest.approx(P_STAR, abs=1e-14)


def test_riccati_zero_state_weight():
    s = shifted(I2, [[-1.0, 1.0], [0.0, -2.0]], np.ones((2, 1)))
    P = solve_riccati(s, CostWeights(np.zeros((2, 2)), np.zeros((2, 1)), [[1.0]])).P
    assert np.allclose(P, 0, atol=1e-13)


def test_riccati_unstabilizable():
    s = discount_transform(DescriptorSystem([[1.0]], [[1.5]], [[0.0]], beta=-0.5))
    with pytest.raises(NoStabilizingSolution):
        solve_riccati(s, CostWeights([[1.0]], [[0.0]], [[1.0]]))


def test_riccati_singular_R():
    s = shifted(I2, -I2, np.ones((2, 1)))
    with pytest.raises(SingularR):
        solve_riccati(s, CostWeights(I2, np.zeros((2, 1)), [[0.0]]))


def test_riccati_requires_shift():
    with pytest.raises(ValueError):
        solve_riccati(DescriptorSystem([[1.0]], [[0.0]], [[1.0]]), CostWeights([[1.0]], None, [[1.0]]))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 5), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_riccati_matches_scipy(n, m, seed):
    rng = np.random.default_rng(seed)
    E = np.eye(n) + 0.3 * rng.standard_normal((n, n))
    # E^-1 A_beta Hurwitz, so a stabilizing solution always exists
    M = rng.standard_normal((n, n))
    M -= (np.linalg.eigvals(M).real.max() + 1.0) * np.eye(n)
    A = E @ M + 0.5 * E
    B = rng.standard_normal((n, m))
    Q = rng.standard_normal((n, n))
    Q = Q @ Q.T + 0.1 * np.eye(n)
    R = rng.standard_normal((m, m))
    R = R @ R.T + np.eye(m)
    S = 0.1 * rng.standard_normal((n, m))
    s = shifted(E, A, B)
    w = CostWeights(Q, S, R)
    P = solve_riccati(s, w).P
    ref = linalg.solve_continuous_are(s.A, B, Q, R, e=E, s=S, balanced=False)
    assert np.linalg.norm(P - ref) <= 1e-8 * (1 + np.linalg.norm(ref))
    K = linalg.solve(R, (E.T @ P @ B + S).T)
    res = E.T @ P @ s.A + s.A.T @ P @ E + Q - (E.T @ P @ B + S) @ K
    scale = np.linalg.norm(s.A) * np.linalg.norm(P) * np.linalg.norm(E) + np.linalg.norm(Q) + 1
    assert np.linalg.norm(res) <= 1e-10 * scale
    closed = linalg.solve(E, s.A - B @ K)
    assert np.linalg.eigvals(closed).real.max() < 0


# --- Lur'e ------------------------------------------------------------------

def test_lure_zero_weights():
    s = shifted(I2, [[0.5, 1.0], [0.0, -1.0]], [[0.0], [1.0]])
    sol = solve_lure(s, CostWeights.zeros(2, 1))
    assert sol.q == 0 and np.allclose(sol.P, 0)
    assert sol.K.shape == (0, 2) and sol.L.shape == (0, 1)
    # rank condition holds: the input reaches the unstable mode
    assert sol.stabilizing


def test_lure_zero_weights_not_stabilizable():
    s = shifted(I2, [[1.5, 0.0], [0.0, -1.0]], [[0.0], [1.0]])
    with pytest.raises(NotStabilizable):
        solve_lure(s, CostWeights.zeros(2, 1))


@pytest.mark.parametrize("backend", ["auto", "riccati", "even"])
def test_lure_scalar(scalar, backend):
    s, w = scalar
    sol = solve_lure(s, w, backend=backend)
    assert sol.q == 1
    assert sol.P[0, 0] == pytest.approx(P_STAR, abs=1e-12)
    assert abs(sol.K[0, 0]) == pytest.approx(P_STAR, abs=1e-12)
    assert abs(sol.L[0, 0]) == pytest.approx(1.0, abs=1e-12)
    assert sol.K[0, 0] * sol.L[0, 0] > 0
    assert sol.stabilizing


def test_lure_indefinite_input_weight_infeasible():
    s = shifted(I2, -I2, np.ones((2, 1)))
    with pytest.raises(Infeasible):
        solve_lure(s, CostWeights(I2, np.zeros((2, 1)), [[-1.0]]))


def test_lure_popov_negative_infeasible():
    # Popov function Q/(w^2 + 1/4) + 1 is negative near w = 0 for Q = -1
    s = shifted([[1.0]], [[0.0]], [[1.0]])
    with pytest.raises(Infeasible):
        solve_lure(s, CostWeights([[-1.0]], [[0.0]], [[1.0]]))


def test_lure_popov_touching_zero_unsupported():
    # Q = -1/4: Popov function touches zero at w = 0, no stabilizing solution
    s = shifted([[1.0]], [[0.0]], [[1.0]])
    with pytest.raises(Unsupported):
        solve_lure(s, CostWeights([[-0.25]], [[0.0]], [[1.0]]))


def test_lure_unknown_backend(scalar):
    with pytest.raises(ValueError):
        solve_lure(*scalar, backend="magic")


@pytest.mark.parametrize("Q,feasible", [(-1.0, False), (-0.5, False), (-0.3, False),
                                        (-0.2, True), (0.0, True), (1.0, True)])
def test_feasibility_matches_kyp_scan(Q, feasible):
    s = shifted([[1.0]], [[0.0]], [[1.0]])
    w = CostWeights([[Q]], [[0.0]], [[1.0]])
    scan = any(kyp_residual(s, w, KypCandidate([[p]]), np.eye(2))["feasible"]
               for p in np.linspace(-3, 3, 601))
    assert scan is feasible
    if feasible:
        sol = solve_lure(s, w)
        assert kyp_residual(s, w, sol, np.eye(2))["feasible"]
    else:
        with pytest.raises(Infeasible):
            solve_lure(s, w)


def test_lure_descriptor_backends_agree():
    E = np.array([[1.0, 0.0], [0.0, 0.0]])
    A = np.array([[0.0, 1.0], [1.0, 1.0]])
    s = shifted(E, A, [[1.0], [1.0]], [[1.0], [0.0]])
    w = CostWeights(I2, np.zeros((2, 1)), [[1.0]])
    a = solve_lure(s, w, backend="riccati")
    b = solve_lure(s, w, backend="even")
    V = ev_diff(s).basis
    assert np.allclose(V.T @ a.P @ V, V.T @ b.P @ V, atol=1e-10)
    for sol in (a, b):
        cert = verify_lure_solution(s, w, sol)
        assert cert["residual_ok"] and cert["rank_ok"] and cert["stabilizing_ok"]


# --- verification -----------------------------------------------------------

def test_verify_scalar(scalar):
    s, w = scalar
    cert = verify_lure_solution(s, w, LureSolution(np.array([[P_STAR]]), np.array([[P_STAR]]), np.array([[1.0]])))
    assert cert["residual_ok"] and cert["rank_ok"] and cert["stabilizing_ok"]


def test_verify_scaled_K_fails_residual(scalar):
    s, w = scalar
    cert = verify_lure_solution(s, w, LureSolution(np.array([[P_STAR]]), np.array([[2 * P_STAR]]), np.array([[1.0]])))
    assert not cert["residual_ok"]


def test_verify_non_stabilizing_root():
    # A_beta = +1/2: the root p = (1 - sqrt 5)/2 solves the Riccati equation but is anti-stabilizing
    s = discount_transform(DescriptorSystem([[1.0]], [[1.0]], [[1.0]], beta=-0.5))
    w = CostWeights([[1.0]], [[0.0]], [[1.0]])
    p = (1 - np.sqrt(5)) / 2
    cert = verify_lure_solution(s, w, LureSolution(np.array([[p]]), np.array([[p]]), np.array([[1.0]])))
    assert cert["residual_ok"] and cert["rank_ok"]
    assert not cert["stabilizing_ok"]
    assert cert["failing_lambda"].real == pytest.approx(np.sqrt(5) / 2, rel=1e-9)
    good = solve_lure(s, w)
    assert good.stabilizing and good.P[0, 0] == pytest.approx((1 + np.sqrt(5)) / 2, rel=1e-12)


def test_verify_rank_too_small():
    s = shifted([[1.0]], [[0.0]], [[1.0]])
    w = CostWeights.zeros(1, 1)
    cert = verify_lure_solution(s, w, LureSolution(np.zeros((1, 1)), np.zeros((2, 1)), np.zeros((2, 1))))
    assert not cert["rank_ok"]


# --- maximality -------------------------------------------------------------

def test_compare_examples():
    full = Subspace(np.eye(2))
    assert compare_maximality(np.eye(2), np.eye(2), full) is Ordering.EQUAL
    assert compare_maximality(np.eye(2), np.zeros((2, 2)), full) is Ordering.GEQ
    assert compare_maximality(np.zeros((2, 2)), np.eye(2), full) is Ordering.LEQ
    assert compare_maximality(np.diag([1.0, -1.0]), np.zeros((2, 2)), full) is Ordering.INCOMPARABLE
    # only the subspace matters
    assert compare_maximality(np.diag([1.0, -1.0]), np.zeros((2, 2)), Subspace(np.array([[1.0], [0.0]]))) is Ordering.GEQ


def feasible_candidates(s, w, sol, rng, count=6):
    """KYP-feasible matrices ``P+ - t X`` below the maximal solution (E = I, R > 0).

    ``X`` solves ``Ac^T X + X Ac = -Y`` for the optimal closed loop ``Ac``; the
    Riccati operator then equals ``t Y - t^2 X B R^-1 B^T X``, which is PSD
    for ``t <= 1 / lambda_max(Y^-1/2 X B R^-1 B^T X Y^-1/2)``.
    """
    n = s.n
    Kr = linalg.solve(w.R, (sol.P @ s.B + w.S).T)
    Ac = s.A - s.B @ Kr
    out = []
    for i in range(count):
        Y = rng.standard_normal((n, n))
        Y = Y @ Y.T + 0.1 * np.eye(n)
        X = linalg.solve_continuous_lyapunov(Ac.T, -Y)
        Yi = linalg.inv(linalg.sqrtm(Y).real)
        G = Yi @ X @ s.B @ linalg.solve(w.R, s.B.T) @ X @ Yi
        tmax = 1.0 / max(np.linalg.eigvalsh(G)[-1], 1e-12)
        t = tmax * [0.0, 0.1, 0.5, 0.9, 1.0, 0.3][i % 6]
        out.append(sol.P - t * X)
    return out


def random_lqr(rng, n, m):
    A = rng.standard_normal((n, n))
    B = rng.standard_normal((n, m))
    s0 = DescriptorSystem(np.eye(n), A, B, beta=-0.5)
    A = A + B @ stabilizing_feedback(s0)
    Rr = rng.standard_normal((m, m))
    return shifted(np.eye(n), A, B), CostWeights(np.eye(n), np.zeros((n, m)), np.eye(m) + Rr @ Rr.T)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 6), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_lure_matches_riccati_and_is_maximal(n, m, seed):
    rng = np.random.default_rng(seed)
    s, w = random_lqr(rng, n, m)
    sol = solve_lure(s, w)
    ric = solve_riccati(s, w).P
    assert np.linalg.norm(sol.P - ric) <= 1e-8 * (1 + np.linalg.norm(ric))
    M = kyp_matrix(s, w, sol.P)
    KL = np.hstack([sol.K, sol.L])
    assert np.abs(KL.T @ KL - M).max() <= 1e-8 * (1 + np.abs(M).max())
    cert = verify_lure_solution(s, w, sol)
    assert cert["residual_ok"] and cert["rank_ok"] and cert["stabilizing_ok"]
    even = solve_lure(s, w, backend="even")
    assert np.linalg.norm(even.P - ric) <= 1e-8 * (1 + np.linalg.norm(ric))
    EV = ev_diff(s)
    for P in feasible_candidates(s, w, sol, rng):
        assert kyp_residual(s, w, KypCandidate(P), np.eye(n + m))["feasible"]
        assert compare_maximality(sol.P, P, EV) in (Ordering.GEQ, Ordering.EQUAL)


@st.composite
def descriptor_lq(draw):
    n1 = draw(st.integers(1, 3))
    blocks = draw(st.lists(st.integers(1, 2), min_size=0, max_size=2))
    m = draw(st.integers(1, 2))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    E, A, _, _ = scrambled_pencil(rng, rng.standard_normal((n1, n1)), blocks)
    n = E.shape[0]
    B = rng.standard_normal((n, m))
    Q = rng.standard_normal((n, n))
    return shifted(E, A, B), CostWeights(Q @ Q.T, np.zeros((n, m)), np.eye(m))


@settings(max_examples=40, deadline=None)
@given(descriptor_lq())
def test_descriptor_backends_agree_on_EVdiff(data):
    s, w = data
    a = solve_lure(s, w, backend="riccati")
    b = solve_lure(s, w, backend="even")
    V = ev_diff(s).basis
    ref = 1 + np.abs(V.T @ a.P @ V).max(initial=0.0)
    assert np.abs(V.T @ (a.P - b.P) @ V).max(initial=0.0) <= 1e-7 * ref
    for sol in (a, b):
        cert = verify_lure_solution(s, w, sol)
        assert cert["residual_ok"] and cert["rank_ok"] and cert["stabilizing_ok"]
