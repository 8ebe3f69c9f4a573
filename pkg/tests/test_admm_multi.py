import numpy as np
import pytest

from treeplasso.admm_multi import (
    AdmmStateMulti,
    WorkspaceMulti,
    fit_multi,
    update_B_d,
    update_E,
    update_E_tilde,
    update_multipliers_multi,
)
from treeplasso.admm_single import fit_single
from treeplasso.model import DesignData, Hyperparameters, objective
from treeplasso.prox import group_soft_threshold
from treeplasso.tree import ResponseTree, cluster_responses
from oracles import fista_oracle
from conftest import random_design, tree_pairs, two_node_tree


def _state(rng, ws, rho=1.3):
    st = AdmmStateMulti.zeros(ws.p, ws.K, ws.D, len(ws.row_resp), rho)
    for name in ("B", "V", "Q", "E", "E_tilde", "H", "H_tilde", "O", "P"):
        setattr(st, name, rng.standard_normal(getattr(st, name).shape))
    st.beta0, st.theta0 = rng.standard_normal(ws.D), rng.standard_normal((ws.K, ws.D))
    return st


@pytest.mark.parametrize("solver", ["dense", "woodbury", "cg"])
def test_B_update_residual(rng, solver):
    d = random_design(rng, 15, 4, 2, D=3)
    ws = WorkspaceMulti(d, two_node_tree(), solver=solver)
    st = _state(rng, ws)
    phi = ws.phi(st)
    b = update_B_d(st, ws, 1).ravel()
    A = ws.system_matrix(st.rho, 1)
    assert np.linalg.norm(A @ b - phi[:, 1]) <= 1e-8 * np.linalg.norm(phi[:, 1])
    assert np.linalg.eigvalsh(A).min() >= 2 * st.rho - 1e-10


def test_B_update_zero_rhs(rng):
    d = DesignData(rng.standard_normal((10, 3)), rng.standard_normal((10, 2)), np.zeros((10, 3)))
    ws = WorkspaceMulti(d, two_node_tree())
    st = AdmmStateMulti.zeros(3, 2, 3, len(ws.row_resp))
    assert not update_B_d(st, ws, 0).any()


def test_B_update_single_leaf_matches_global_solve(rng):
    d = random_design(rng, 20, 3, 2)
    ws = WorkspaceMulti(d, ResponseTree.single_leaf(), solver="cg")
    st = _state(rng, ws)
    b = update_B_d(st, ws, 0).ravel()
    direct = np.linalg.solve(ws.system_matrix(st.rho, 0), ws.phi(st)[:, 0])
    assert np.allclose(b, direct, atol=1e-8)


def test_E_updates_match_prox(rng):
    d = random_design(rng, 10, 3, 1, D=3)
    tree = two_node_tree()
    ws = WorkspaceMulti(d, tree)
    st = _state(rng, ws, rho=2.0)
    E = update_E(st, ws, lambda1=1.5)
    A = ws.expand_responses(st.B) + st.H
    for m, (s, e) in enumerate(zip(ws.expansion.group_starts, ws.expansion.group_ends)):
        for j in range(3):
            want = group_soft_threshold(A[s:e, j, :].ravel(), 1.5 / 2.0).reshape(e - s, -1)
            assert np.allclose(E[s:e, j, :], want)
    assert np.allclose(update_E(st, ws, 0.0), A)
    Et = update_E_tilde(st, ws, 0.8)
    for j in range(3):
        for dd in range(3):
            assert np.allclose(Et[j, :, dd], group_soft_threshold(st.B[j, :, dd] + st.H_tilde[j, :, dd], 0.4))
    assert np.allclose(update_E_tilde(st, ws, 0.0), st.B + st.H_tilde)


def test_multiplier_feasible_point(rng):
    d = random_design(rng, 10, 3, 1, D=3)
    ws = WorkspaceMulti(d, two_node_tree())
    st = _state(rng, ws)
    st.Q, st.E_tilde = st.B.copy(), st.B.copy()
    st.V, st.E = ws.expand_pliable(st.B), ws.expand_responses(st.B)
    H, Ht, O, P = update_multipliers_multi(st, ws)
    for new, old in ((H, st.H), (Ht, st.H_tilde), (O, st.O), (P, st.P)):
        assert np.allclose(new, old, rtol=0, atol=1e-14)


def test_zero_response(rng):
    d = DesignData(rng.standard_normal((15, 3)), rng.standard_normal((15, 2)), np.zeros((15, 3)))
    coef, rep = fit_multi(d, Hyperparameters.coupled(0.1), two_node_tree())
    assert rep.converged and not coef.B.any()


def test_matches_oracle(rng):
    d = random_design(rng, 40, 4, 2, D=3)
    tree = two_node_tree()
    hp = Hyperparameters.coupled(0.08, 0.5, eps_abs=1e-7, eps_rel=1e-6)
    coef, rep = fit_multi(d, hp, tree)
    internal, leaf_w = tree_pairs(tree)
    *_, obj = fista_oracle(d.X, d.Z, d.Y, 0.08, 0.08, 0.08, 0.5, internal, leaf_w)
    assert rep.converged
    assert objective(d, coef, hp, tree) == pytest.approx(obj, rel=1e-6)


def test_solvers_agree(rng):
    d = random_design(rng, 12, 4, 2, D=3)
    hp = Hyperparameters.coupled(0.05)
    fits = [fit_multi(d, hp, two_node_tree(), solver=s)[0].B for s in ("dense", "woodbury", "cg")]
    assert np.allclose(fits[0], fits[1], atol=1e-8) and np.allclose(fits[0], fits[2], atol=1e-6)


def test_degenerate_tree_matches_single_fits(rng):
    d = random_design(rng, 30, 4, 2, D=3)
    hp = Hyperparameters(lambda3=0.1, alpha=0.5, eps_abs=1e-6, eps_rel=1e-5)
    coef, _ = fit_multi(d, hp, two_node_tree())
    for k in range(3):
        dk = DesignData(d.X, d.Z, d.Y[:, k])
        ck, _ = fit_single(dk, hp)
        from treeplasso.model import CoefficientSet

        sub = CoefficientSet(coef.beta0[k:k + 1], coef.theta0[:, k:k + 1], coef.B[:, :, k:k + 1])
        assert objective(dk, sub, hp) == pytest.approx(objective(dk, ck, hp), rel=1e-3)


def test_permutation_equivariance(rng):
    d = random_design(rng, 25, 3, 2, D=4)
    tree = cluster_responses(d.Y)
    perm = np.array([2, 0, 3, 1])  # old column d moves to position perm[d]
    inv = np.argsort(perm)
    dp = DesignData(d.X, d.Z, d.Y[:, inv])
    hp = Hyperparameters.coupled(0.05)
    c, _ = fit_multi(d, hp, tree, solver="dense")
    cp, _ = fit_multi(dp, hp, tree.permuted(perm), solver="dense")
    assert np.allclose(cp.B, c.B[:, :, inv], atol=1e-9)


def test_requires_two_responses(rng):
    d = random_design(rng, 10, 2, 1)
    with pytest.raises(ValueError):
        fit_multi(d, Hyperparameters.coupled(0.1), ResponseTree.single_leaf())
