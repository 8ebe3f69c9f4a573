import numpy as np
import pytest

from treeplasso.admm_single import (
    AdmmStateSingle,
    WorkspaceSingle,
    fit_single,
    update_B_j,
    update_multipliers,
    update_Q,
    update_V,
)
from treeplasso.model import DesignData, Hyperparameters, RhoRule, objective
from treeplasso.prox import build_pliable_expansion, group_soft_threshold, soft_threshold
from oracles import fista_oracle
from conftest import random_design


def test_zero_response_gives_zero_fit(rng):
    d = DesignData(rng.standard_normal((20, 4)), rng.standard_normal((20, 2)), np.zeros(20))
    coef, rep = fit_single(d, Hyperparameters.single(0.1))
    assert rep.converged and not coef.B.any()


def test_B_update_solves_block_system(rng):
    d = random_design(rng, 25, 3, 2)
    ws = WorkspaceSingle(d)
    st = AdmmStateSingle.zeros(3, 2, rho=1.7)
    st.V, st.O = rng.standard_normal(st.V.shape), rng.standard_normal(st.O.shape)
    st.Q, st.P = rng.standard_normal(st.Q.shape), rng.standard_normal(st.P.shape)
    st.theta0 = np.zeros(2)
    resid = ws.y - ws.flat @ st.B.ravel()
    b = update_B_j(st, ws, 1, resid.copy())
    Wj = ws.tensor.column(1)
    others = ws.flat @ st.B.ravel() - Wj @ st.B[1]
    G = ws.G
    A = Wj.T @ Wj / 25 + st.rho * (G.T @ G + np.eye(3))
    rhs = Wj.T @ (ws.y - others) / 25 + st.rho * ((st.V[1] - st.O[1]) @ G + st.Q[1] - st.P[1])
    assert np.allclose(A @ b, rhs, atol=1e-10)


def test_V_and_Q_updates_match_prox(rng):
    st = AdmmStateSingle.zeros(4, 3, rho=2.0)
    st.B = rng.standard_normal(st.B.shape)
    st.O = rng.standard_normal(st.O.shape)
    st.P = rng.standard_normal(st.P.shape)
    G = build_pliable_expansion(3).astype(float)
    V = update_V(st, G, lam=1.2, alpha=0.4)
    t = 0.6 * 1.2 / 2.0
    for j in range(4):
        r = G @ st.B[j] + st.O[j]
        assert np.allclose(V[j, :4], group_soft_threshold(r[:4], t))
        assert np.allclose(V[j, 4:], group_soft_threshold(r[4:], t))
    Q = update_Q(st, lam=1.2, alpha=0.4)
    assert np.array_equal(Q[:, 0], st.B[:, 0] + st.P[:, 0])
    assert np.allclose(Q[:, 1:], soft_threshold(st.B[:, 1:] + st.P[:, 1:], 0.4 * 1.2 / 2.0))
    # α = 1: group copies pass through; α = 0: ℓ1 copy passes through
    assert np.allclose(update_V(st, G, 1.0, 1.0), st.B @ G.T + st.O)
    assert np.allclose(update_Q(st, 1.0, 0.0), st.B + st.P)


def test_multiplier_step(rng):
    st = AdmmStateSingle.zeros(3, 2)
    G = build_pliable_expansion(2).astype(float)
    st.B = rng.standard_normal(st.B.shape)
    st.V, st.Q = st.B @ G.T, st.B.copy()
    O, P = update_multipliers(st, G)
    assert np.allclose(O, 0, atol=1e-14) and np.allclose(P, 0, atol=1e-14)  # feasible point
    st.Q = st.Q - 0.25
    O, P = update_multipliers(st, G)
    assert np.allclose(P, 0.25)


@pytest.mark.parametrize("alpha", [0.25, 0.5, 0.75])
def test_matches_oracle(rng, alpha):
    d = random_design(rng, 30, 5, 3)
    lam = 0.15
    hp = Hyperparameters.single(lam, alpha, eps_abs=1e-7, eps_rel=1e-6)
    coef, rep = fit_single(d, hp)
    *_, obj = fista_oracle(d.X, d.Z, d.Y, 0, 0, lam, alpha)
    assert rep.converged
    assert objective(d, coef, hp) == pytest.approx(obj, rel=1e-6)


def test_warm_start_and_trace(rng):
    d = random_design(rng, 30, 4, 2)
    hp = Hyperparameters.single(0.2)
    c1, r1 = fit_single(d, hp)
    c2, r2 = fit_single(d, hp, init=r1.state)
    assert r2.iterations <= r1.iterations
    assert len(r1.objective_trace) == r1.iterations
    assert objective(d, c2, hp) == pytest.approx(objective(d, c1, hp), rel=1e-3)


def test_fixed_rho_and_nonconvergence_flag(rng):
    d = random_design(rng, 30, 4, 2)
    coef, rep = fit_single(d, Hyperparameters.single(0.2, max_iter=2, rho_adapt=RhoRule.FIXED))
    assert not rep.converged and rep.iterations == 2 and rep.rho == 1.0
    assert np.all(np.isfinite(coef.B))


def test_rejects_tree_penalties(rng):
    d = random_design(rng, 10, 2, 1)
    with pytest.raises(ValueError):
        fit_single(d, Hyperparameters(lambda1=0.1, lambda3=0.1))
