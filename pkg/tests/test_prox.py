import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from treeplasso.prox import (
    GroupExpansion,
    assemble_C,
    build_pliable_expansion,
    build_response_expansion,
    group_soft_threshold,
    soft_threshold,
)
from treeplasso.tree import cluster_responses

finite = st.floats(-1e6, 1e6, allow_nan=False)
thresh = st.floats(0, 1e3, allow_nan=False)


@pytest.mark.parametrize("x,t,want", [(3, 1, 2), (-0.5, 1, 0), (-3, 1, -2), (0.7, 0, 0.7)])
def test_soft_threshold_examples(x, t, want):
    assert soft_threshold(x, t) == want


def test_soft_threshold_negative_threshold():
    with pytest.raises(ValueError):
        soft_threshold(1.0, -0.1)


@given(finite, finite, thresh)
def test_soft_threshold_nonexpansive(x, y, t):
    assert abs(soft_threshold(x, t) - soft_threshold(y, t)) <= abs(x - y) * (1 + 1e-12) + 1e-9


def test_group_soft_threshold_examples():
    assert np.array_equal(group_soft_threshold([3.0, 4.0], 5), [0.0, 0.0])
    assert np.allclose(group_soft_threshold([3.0, 4.0], 2.5), [1.5, 2.0], rtol=0, atol=1e-15)
    assert np.array_equal(group_soft_threshold([0.0, 0.0], 1), [0.0, 0.0])


@settings(max_examples=200)
@given(st.lists(finite, min_size=1, max_size=6), thresh)
def test_group_soft_threshold_direction(v, t):
    r = np.array(v)
    out = group_soft_threshold(r, t)
    nr = np.linalg.norm(r)
    if nr <= t:
        assert not out.any()
    else:
        assert np.allclose(out, r * (nr - t) / nr)
        assert np.linalg.norm(out) == pytest.approx(nr - t, rel=1e-9, abs=1e-9)


def test_group_soft_threshold_identity_at_zero(rng):
    r = rng.standard_normal(5)
    assert np.array_equal(group_soft_threshold(r, 0.0), r)


def test_pliable_expansion_K3():
    G = build_pliable_expansion(3)
    want = np.array([
        [1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1],
        [0, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1],
    ])
    assert np.array_equal(G, want)
    b = np.array([5.0, 1.0, 2.0, 3.0])
    assert np.array_equal(G @ b, [5, 1, 2, 3, 0, 1, 2, 3])


def test_pliable_expansion_K1_and_diag():
    assert np.array_equal(build_pliable_expansion(1), [[1, 0], [0, 1], [0, 0], [0, 1]])
    for K in range(1, 7):
        G = build_pliable_expansion(K)
        assert np.array_equal(np.diag(G.T @ G), [1] + [2] * K)
        assert G.shape == (2 * (K + 1), K + 1)
    with pytest.raises(ValueError):
        build_pliable_expansion(0)


def test_response_expansion_examples():
    I, rows = build_response_expansion([(0, 1)], 2, [1.0])
    assert np.array_equal(I, np.eye(2))
    I, rows = build_response_expansion([(0, 1), (1,)], 2, [0.5, 1.0])
    assert np.array_equal(I, [[0.5, 0], [0, 0.5], [0, 1]])
    assert rows == [(0, 0), (0, 1), (1, 1)]
    with pytest.raises(ValueError):
        build_response_expansion([()], 2)
    with pytest.raises(ValueError):
        build_response_expansion([(0,)], 2, [0.0])


def test_response_expansion_column_norms(rng):
    for _ in range(5):
        tree = cluster_responses(rng.standard_normal((8, 6)))
        I, _ = build_response_expansion(tree, 6)
        want = np.zeros(6)
        for node in tree.internal_nodes:
            for d in node.members:
                want[d] += node.weight ** 2
        assert np.allclose(np.diag(I.T @ I), want)


def test_assemble_C_examples(rng):
    assert np.array_equal(assemble_C(1.0, [1, 2], [1.0], 2, 1, 0), [4, 4, 5, 5])
    with pytest.raises(ValueError):
        assemble_C(0.0, [1, 2], [1.0], 2, 1, 0)
    for _ in range(10):
        rho = rng.uniform(0.1, 10)
        I_diag = rng.uniform(0, 5, size=3)
        p, K, d = 4, 3, int(rng.integers(3))
        C = assemble_C(rho, [1] + [2] * K, I_diag, p, K, d)
        want = [rho * (1 + (1 if k == 0 else 2)) + rho * (I_diag[d] + 1) for k in range(K + 1) for _ in range(p)]
        assert np.allclose(C, want)


def test_group_expansion_reproduces_copies(rng):
    tree = cluster_responses(rng.standard_normal((10, 4)))
    ex = GroupExpansion.build(2, tree)
    B = rng.standard_normal((3, 3, 4))
    # each I_exp row (m, u) copies w_m * B[:, :, u]
    copies = np.einsum("rd,jkd->jkr", ex.I_exp, B)
    for r, (m, u) in enumerate(ex.rows):
        assert np.allclose(copies[:, :, r], ex.internal_weights[m] * B[:, :, u])
