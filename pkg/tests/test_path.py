import warnings

import numpy as np
import pytest

from treeplasso.model import CoefficientSet, DesignData, Standardizer, objective
from treeplasso.path import (
    PathSpec,
    aggregate_nonzero,
    evaluate,
    fit_model,
    fit_path,
    fold_assignment,
    kfold_cv,
    lambda_max,
    lambda_path,
)
from treeplasso.simulate import SimConfig, simulate
from conftest import random_design, two_node_tree


def test_pathspec_validation():
    with pytest.raises(ValueError):
        PathSpec(lambdas=(1.0, 2.0))
    with pytest.raises(ValueError):
        PathSpec(lambda_min_ratio=1.5)
    assert PathSpec(lambdas=[3, 2, 1]).lambdas == (3.0, 2.0, 1.0)


def test_geometric_grid(rng):
    d = random_design(rng, 30, 4, 2)
    lam = lambda_path(d, PathSpec(n_lambda=3, lambda_min_ratio=0.01))
    lmax = lambda_max(d, PathSpec())
    assert np.allclose(lam, lmax * np.array([1.0, 0.1, 0.01]))


def test_degenerate_lambda_max(rng):
    X = rng.standard_normal((20, 3))
    Z = rng.standard_normal((20, 2))
    with pytest.raises(ValueError):
        lambda_max(DesignData(X, Z, np.zeros(20)), PathSpec())


@pytest.mark.parametrize("D", [1, 3])
def test_zero_just_above_lambda_max(rng, D):
    d = random_design(rng, 40, 5, 2, D=D)
    tree = two_node_tree() if D == 3 else None
    spec = PathSpec()
    lmax = lambda_max(d, spec, tree)
    coef, _ = fit_model(d, spec.hyperparameters(1.01 * lmax, single=D == 1), tree)
    assert not coef.B.any()
    coef, _ = fit_model(d, spec.hyperparameters(0.8 * lmax, single=D == 1), tree)
    assert coef.B.any()


def test_path_warm_vs_cold(rng):
    d = random_design(rng, 40, 5, 2, D=3)
    spec = PathSpec(n_lambda=6, lambda_min_ratio=0.05)
    warm = fit_path(d, spec, two_node_tree())
    cold = fit_path(d, spec, two_node_tree(), warm_start=False)
    assert not warm[0].coef.B.any()
    for a, b in zip(warm, cold):
        assert a.objective == pytest.approx(b.objective, rel=1e-3)


def test_single_response_signal_enters_first():
    sim = simulate(SimConfig("single", p=10, seed=3, test_N=0))
    d = Standardizer.fit(sim.train).transform(sim.train)
    path = fit_path(d, PathSpec(n_lambda=30))
    first_noise = next((i for i, pt in enumerate(path) if pt.coef.beta[4:].any()), len(path))
    all_true = next(i for i, pt in enumerate(path) if pt.coef.beta[:4].all())
    assert all_true < first_noise


def test_fold_assignment_deterministic():
    a = fold_assignment(23, 5, 11)
    assert np.array_equal(a, fold_assignment(23, 5, 11))
    assert sorted(np.bincount(a)) == [4, 4, 5, 5, 5]


def test_cv_duplicated_data_and_determinism(rng):
    base = random_design(rng, 20, 3, 2)
    dup = DesignData(np.vstack([base.X] * 5), np.vstack([base.Z] * 5), np.vstack([base.Y] * 5))
    spec = PathSpec(n_lambda=8)
    r1 = kfold_cv(dup, spec, folds=5, seed=1)
    r2 = kfold_cv(dup, spec, folds=5, seed=1)
    assert np.array_equal(r1.cv_mean, r2.cv_mean) and np.array_equal(r1.folds, r2.folds)
    # every point appears in every training fold: the validation curve keeps falling like the training curve
    assert np.all(np.diff(r1.cv_mean) <= 1e-8 * r1.cv_mean[0])
    assert r1.best_index == len(r1.lambdas) - 1
    assert r1.one_se_index <= r1.best_index


def test_cv_threads_agree(rng):
    d = random_design(rng, 40, 4, 2, D=3)
    spec = PathSpec(n_lambda=5)
    a = kfold_cv(d, spec, folds=3, seed=0)
    b = kfold_cv(d, spec, folds=3, seed=0, threads=3)
    assert np.allclose(a.cv_mean, b.cv_mean, rtol=1e-8, atol=0)


def test_cv_rejects_bad_folds(rng):
    d = random_design(rng, 4, 2, 1)
    with pytest.raises(ValueError):
        kfold_cv(d, PathSpec(), folds=5)
    with pytest.raises(ValueError):
        kfold_cv(d, PathSpec(), folds=1)


def test_constant_response_fold_warns(rng):
    d = random_design(rng, 30, 3, 2, D=3)
    Y = np.array(d.Y)
    Y[:, 2] = 1.0
    with pytest.warns(RuntimeWarning):
        kfold_cv(DesignData(d.X, d.Z, Y), PathSpec(n_lambda=3), folds=3)


def test_evaluate_examples():
    sim = simulate(SimConfig("single", p=8, seed=1, noise_scale=0.0, test_N=50))
    m = evaluate(sim.truth, sim.truth, sim.test)
    assert (m.sensitivity, m.specificity, m.mse) == (1.0, 1.0, 0.0)
    zero = CoefficientSet.zeros(8, 3)
    m = evaluate(sim.truth, zero, sim.test)
    assert (m.sensitivity, m.specificity, m.nonzero_count) == (0.0, 1.0, 0)
    m = evaluate(None, zero, sim.test)
    assert m.sensitivity is None and "sensitivity" not in m.to_dict()


def test_aggregate_nonzero():
    B = [np.zeros((3, 2, 2)) for _ in range(3)]
    B[0][0, 0, 0] = B[1][0, 0, 0] = 1.0
    B[2][1, 0, 1] = 1.0
    fits = [CoefficientSet(np.zeros(2), np.zeros((1, 2)), b) for b in B]
    assert aggregate_nonzero(fits) == 1
    assert aggregate_nonzero(fits, min_count=1) == 2
