import numpy as np
import pytest

from treeplasso.model import (
    CoefficientSet,
    DesignData,
    DimensionError,
    Hyperparameters,
    Standardizer,
    build_interaction_tensor,
    objective,
    predict,
)
from oracles import design_flat, literal_objective
from conftest import random_design, tree_pairs, two_node_tree


def test_design_validation():
    with pytest.raises(DimensionError) as exc:
        DesignData(np.ones((3, 2)), np.ones((4, 1)), np.ones(3))
    assert exc.value.matrix == "Z"
    with pytest.raises(DimensionError):
        DesignData(np.ones((3, 2)), np.ones((3, 1)), np.array([1.0, np.nan, 2.0]))
    d = DesignData(np.ones((3, 2)), np.ones((3, 1)), np.arange(3.0))
    assert (d.N, d.p, d.K, d.D) == (3, 2, 1, 1)
    with pytest.raises(ValueError):
        d.X[0, 0] = 5.0  # read-only


def test_interaction_tensor_layout(rng):
    d = random_design(rng, 7, 3, 2)
    t = build_interaction_tensor(d)
    assert np.array_equal(t.flat, design_flat(d.X, d.Z))
    assert np.array_equal(t.column(1), t.flat[:, 3:6])


def test_predict_and_objective_match_literal(rng):
    d = random_design(rng, 12, 3, 2, D=3)
    coef = CoefficientSet(rng.standard_normal(3), rng.standard_normal((2, 3)), rng.standard_normal((3, 3, 3)))
    tree = two_node_tree()
    hp = Hyperparameters(lambda1=0.3, lambda2=0.2, lambda3=0.4, alpha=0.3)
    internal, leaf_w = tree_pairs(tree)
    want = literal_objective(d.X, d.Z, d.Y, coef.beta0, coef.theta0, coef.B, 0.3, 0.2, 0.4, 0.3, internal, leaf_w)
    assert objective(d, coef, hp, tree) == pytest.approx(want, rel=1e-12)


def test_objective_single_and_zero(rng):
    d = random_design(rng, 10, 2, 2)
    zero = CoefficientSet.zeros(2, 2)
    hp = Hyperparameters.single(0.5)
    assert objective(d, zero, hp) == pytest.approx(0.5 * np.sum(d.Y ** 2) / 10)
    with pytest.raises(ValueError):
        objective(d, zero, hp.with_(lambda1=0.1))


def test_coefficient_shapes():
    with pytest.raises(DimensionError):
        CoefficientSet(np.zeros(2), np.zeros((3, 2)), np.zeros((4, 3, 2)))
    c = CoefficientSet.zeros(4, 2, 3)
    assert c.beta.shape == (4, 3) and c.theta.shape == (4, 2, 3)


def test_hyperparameter_validation():
    with pytest.raises(ValueError):
        Hyperparameters(alpha=1.5)
    with pytest.raises(ValueError):
        Hyperparameters(lambda3=-1.0)
    hp = Hyperparameters.coupled(2.0, c1=0.5, c2=0.25)
    assert (hp.lambda1, hp.lambda2, hp.lambda3) == (1.0, 0.5, 2.0)


def test_back_transform_predictions(rng):
    X = rng.normal(3.0, 2.0, (20, 4))
    Z = rng.standard_normal((20, 2))
    Y = rng.normal(5.0, 1.0, (20, 2))
    raw = DesignData(X, Z, Y)
    s = Standardizer.fit(raw)
    std = s.transform(raw)
    coef = CoefficientSet(rng.standard_normal(2), rng.standard_normal((2, 2)), rng.standard_normal((4, 3, 2)))
    pred_std = predict(std, coef) + s.y_mean
    pred_raw = predict(raw, s.coef_to_original(coef))
    assert np.allclose(pred_std, pred_raw, atol=1e-10, rtol=0)
    back = s.inverse(std)
    assert np.allclose(back.X, X, atol=1e-12) and np.allclose(back.Y, Y, atol=1e-12)
