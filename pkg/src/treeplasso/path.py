"""Regularisation paths, k-fold cross-validation and evaluation metrics."""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .admm_multi import WorkspaceMulti, fit_multi
from .admm_single import WorkspaceSingle, fit_single
from .model import (
    CoefficientSet,
    ConvergenceReport,
    DesignData,
    Hyperparameters,
    Standardizer,
    build_interaction_tensor,
    objective,
    predict,
)
from .prox import nested_prox
from .tree import ResponseTree, cluster_responses, derive_groups


@dataclass(frozen=True)
class PathSpec:
    n_lambda: int = 50
    lambda_min_ratio: float = 0.01
    lambdas: tuple[float, ...] | None = None
    alpha: float = 0.5
    c1: float = 1.0
    c2: float = 1.0

    def __post_init__(self):
        if self.lambdas is not None:
            lams = tuple(float(x) for x in self.lambdas)
            if not lams:
                raise ValueError("explicit lambda list is empty")
            if any(x <= 0 for x in lams) or any(b >= a for a, b in zip(lams, lams[1:])):
                raise ValueError("explicit lambdas must be positive and strictly decreasing")
            object.__setattr__(self, "lambdas", lams)
        if int(self.n_lambda) < 1:
            raise ValueError("n_lambda must be at least 1")
        if not 0 < self.lambda_min_ratio < 1:
            raise ValueError("lambda_min_ratio must lie in (0, 1)")
        if not 0 <= self.alpha <= 1:
            raise ValueError("alpha must lie in [0, 1]")
        if self.c1 < 0 or self.c2 < 0:
            raise ValueError("lambda coupling constants must be nonnegative")

    def hyperparameters(self, lam: float, base: Hyperparameters | None = None, single: bool = False):
        base = base or Hyperparameters()
        if single:
            return base.with_(lambda1=0.0, lambda2=0.0, lambda3=lam, alpha=self.alpha)
        return base.with_(lambda1=self.c1 * lam, lambda2=self.c2 * lam, lambda3=lam, alpha=self.alpha)


@dataclass
class MetricReport:
    mse: float
    per_response_mse: np.ndarray
    nonzero_count: int
    sensitivity: float | None = None
    specificity: float | None = None

    def to_dict(self) -> dict:
        out = {
            "mse": float(self.mse),
            "per_response_mse": [float(v) for v in self.per_response_mse],
            "nonzero_count": int(self.nonzero_count),
        }
        if self.sensitivity is not None:
            out["sensitivity"] = float(self.sensitivity)
            out["specificity"] = float(self.specificity)
        return out


def _tree_for(data: DesignData, tree: ResponseTree | None) -> ResponseTree | None:
    if data.D == 1:
        if tree is not None and tree.D != 1:
            raise ValueError("a multi-response tree was given for single-response data")
        return None
    return tree if tree is not None else cluster_responses(data.Y)


def lambda_max(data: DesignData, spec: PathSpec, tree: ResponseTree | None = None, tol: float = 1e-10) -> float:
    """Smallest λ at which the all-zero B is optimal.

    With r the residual of Y on [1, Z] and g_j = W_jᵀ r / N (shape (K+1, D)),
    B = 0 is optimal exactly when every g_j lies in the λ-scaled dual ball of
    the penalty, i.e. when the penalty's prox maps g_j to zero.  The prox of
    the nested group structure is exact, so λ_max is found by bisection,
    started from the bound that uses only the row and leaf groups.
    """
    tree = _tree_for(data, tree)
    A = np.hstack([np.ones((data.N, 1)), data.Z])
    R = data.Y - A @ (np.linalg.pinv(A) @ data.Y)
    flat = build_interaction_tensor(data).flat
    g = (flat.T @ R / data.N).reshape(data.p, data.K + 1, data.D)
    if tree is None:
        c1, c2, internal, iw, leaf_w = 0.0, 0.0, [], [], np.ones(1)
    else:
        groups = derive_groups(tree)
        c1, c2, internal, iw, leaf_w = spec.c1, spec.c2, groups.internal, groups.internal_weights, groups.leaf_weights
    denom = (1 - spec.alpha) + c2 * leaf_w
    if np.any(denom <= 0):
        raise ValueError("no finite lambda_max: main effects are unpenalised for alpha=1 without a leaf penalty")
    hi = float(np.max(np.sqrt(np.sum(g * g, axis=1)) / denom[None, :]))
    if not hi > 0:
        raise ValueError("lambda_max is zero: the responses carry no signal beyond [1, Z] (degenerate data)")

    def is_zero(lam):
        return not nested_prox(g, c1 * lam, c2 * lam, lam, spec.alpha, internal, iw, leaf_w).any()

    lo = 0.0
    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        if is_zero(mid):
            hi = mid
        else:
            lo = mid
    return hi


def lambda_path(data: DesignData, spec: PathSpec, tree: ResponseTree | None = None) -> np.ndarray:
    """Geometric decreasing grid from λ_max down to λ_max * lambda_min_ratio."""
    if spec.lambdas is not None:
        return np.asarray(spec.lambdas, dtype=np.float64)
    lmax = lambda_max(data, spec, tree)
    if spec.n_lambda == 1:
        return np.array([lmax])
    return lmax * np.geomspace(1.0, spec.lambda_min_ratio, spec.n_lambda)


def make_workspace(data: DesignData, tree: ResponseTree | None, solver: str = "auto"):
    if data.D == 1:
        return WorkspaceSingle(data)
    return WorkspaceMulti(data, tree, solver=solver)


def fit_model(
    data: DesignData,
    hp: Hyperparameters,
    tree: ResponseTree | None = None,
    init=None,
    workspace=None,
    trace: bool = False,
) -> tuple[CoefficientSet, ConvergenceReport]:
    """Dispatch to the single- or multi-response solver by the number of responses."""
    if data.D == 1:
        return fit_single(data, hp.with_(lambda1=0.0, lambda2=0.0), init=init, workspace=workspace, trace=trace)
    tree = _tree_for(data, tree)
    return fit_multi(data, hp, tree, init=init, workspace=workspace, trace=trace)


@dataclass
class PathPoint:
    lam: float
    coef: CoefficientSet
    report: ConvergenceReport
    objective: float
    nonzero_main: int
    nonzero_interactions: int


def fit_path(
    data: DesignData,
    spec: PathSpec,
    tree: ResponseTree | None = None,
    hp: Hyperparameters | None = None,
    lambdas=None,
    warm_start: bool = True,
) -> list[PathPoint]:
    """Fit every λ from largest to smallest, warm-starting all solver variables."""
    tree = _tree_for(data, tree)
    lams = lambda_path(data, spec, tree) if lambdas is None else np.asarray(lambdas, dtype=np.float64)
    ws = make_workspace(data, tree)
    single = data.D == 1
    out = []
    state = None
    for lam in lams:
        h = spec.hyperparameters(float(lam), hp, single=single)
        coef, rep = fit_model(data, h, tree, init=state if warm_start else None, workspace=ws)
        state = rep.state
        obj = objective(data, coef, h, tree, tensor=ws.tensor)
        out.append(PathPoint(
            float(lam), coef, rep, obj,
            int(np.count_nonzero(coef.beta)), int(np.count_nonzero(coef.theta)),
        ))
    return out


def fold_assignment(N: int, folds: int, seed: int) -> np.ndarray:
    """Balanced fold labels, a deterministic function of (N, folds, seed)."""
    rng = np.random.default_rng(seed)
    labels = np.empty(N, dtype=np.int64)
    labels[rng.permutation(N)] = np.arange(N) % folds
    return labels


@dataclass
class CVResult:
    lambdas: np.ndarray
    cv_mean: np.ndarray
    cv_sd: np.ndarray
    fold_errors: np.ndarray  # (folds, n_lambda)
    folds: np.ndarray
    best_index: int
    one_se_index: int
    converged: np.ndarray = field(default=None)  # (folds, n_lambda)

    @property
    def best_lambda(self) -> float:
        return float(self.lambdas[self.best_index])

    @property
    def lambda_1se(self) -> float:
        return float(self.lambdas[self.one_se_index])


def _fold_errors(data, train_idx, test_idx, spec, tree, hp, lams):
    train = data.subset(train_idx)
    test = data.subset(test_idx)
    if train.D > 1 and np.any(train.Y.std(axis=0) == 0):
        warnings.warn("a training fold has a constant response column; fold retained", RuntimeWarning)
    scaler = Standardizer.fit(train)
    train_s = scaler.transform(train)
    fold_tree = None if data.D == 1 else (tree if tree is not None else cluster_responses(train_s.Y))
    points = fit_path(train_s, spec, fold_tree, hp, lambdas=lams)
    errs = np.empty(len(points))
    conv = np.empty(len(points), dtype=bool)
    for i, pt in enumerate(points):
        pred = predict(test, scaler.coef_to_original(pt.coef))
        errs[i] = np.mean((test.Y - pred) ** 2)
        conv[i] = pt.report.converged
    return errs, conv


def kfold_cv(
    data: DesignData,
    spec: PathSpec,
    tree: ResponseTree | None = None,
    folds: int = 5,
    seed: int = 0,
    hp: Hyperparameters | None = None,
    lambdas=None,
    threads: int = 1,
) -> CVResult:
    """K-fold cross-validation of validation MSE along the λ path.

    ``data`` is on its raw scale: every fold is standardised with its own
    training statistics.  When ``tree`` is None and D > 1 the tree is
    re-clustered from each training fold's responses.  The λ grid defaults to
    the path of the standardised full data.
    """
    if folds < 2:
        raise ValueError("need at least two folds")
    if data.N < folds:
        raise ValueError(f"cannot split N={data.N} observations into {folds} folds")
    if lambdas is None:
        full = Standardizer.fit(data).transform(data)
        lambdas = lambda_path(full, spec, _tree_for(full, tree))
    lambdas = np.asarray(lambdas, dtype=np.float64)
    labels = fold_assignment(data.N, folds, seed)

    def run(f):
        return _fold_errors(
            data, np.flatnonzero(labels != f), np.flatnonzero(labels == f), spec, tree, hp, lambdas
        )

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, range(folds)))
    else:
        results = [run(f) for f in range(folds)]
    errs = np.stack([r[0] for r in results])
    conv = np.stack([r[1] for r in results])
    mean = errs.mean(axis=0)
    sd = errs.std(axis=0, ddof=1)
    best = int(np.argmin(mean))
    se = sd[best] / np.sqrt(folds)
    # largest λ (smallest index) within one standard error of the minimum
    one_se = int(np.flatnonzero(mean <= mean[best] + se)[0])
    return CVResult(lambdas, mean, sd, errs, labels, best, one_se, conv)


@dataclass
class CVFit:
    """Cross-validated fit on the full data, with coefficients on the raw scale."""

    coef: CoefficientSet
    lam: float
    cv: CVResult
    path: list[PathPoint]
    scaler: Standardizer
    tree: ResponseTree | None
    selected_index: int

    def coef_at(self, index: int) -> CoefficientSet:
        return self.scaler.coef_to_original(self.path[index].coef)


def fit_cv(
    data: DesignData,
    spec: PathSpec,
    tree: ResponseTree | None = None,
    folds: int = 5,
    seed: int = 0,
    hp: Hyperparameters | None = None,
    threads: int = 1,
    rule: str = "min",
) -> CVFit:
    """Standardise, cross-validate the λ path, refit the path on all data and select λ.

    ``rule`` is ``"min"`` (minimum mean CV error) or ``"1se"``.
    """
    if rule not in ("min", "1se"):
        raise ValueError(f"unknown selection rule {rule!r}")
    scaler = Standardizer.fit(data)
    full = scaler.transform(data)
    full_tree = _tree_for(full, tree)
    lams = lambda_path(full, spec, full_tree)
    cv = kfold_cv(data, spec, tree, folds=folds, seed=seed, hp=hp, lambdas=lams, threads=threads)
    path = fit_path(full, spec, full_tree, hp, lambdas=lams)
    idx = cv.best_index if rule == "min" else cv.one_se_index
    return CVFit(scaler.coef_to_original(path[idx].coef), float(lams[idx]), cv, path, scaler, full_tree, idx)


def evaluate(truth: CoefficientSet | None, fitted: CoefficientSet, test: DesignData) -> MetricReport:
    """Test MSE, non-zero main-effect count and (given the truth) sensitivity/specificity.

    Sensitivity and specificity are computed over the p x D main effects β_jd.
    """
    pred = predict(test, fitted)
    per = np.mean((test.Y - pred) ** 2, axis=0)
    mse = float(np.mean((test.Y - pred) ** 2))
    nz_fit = fitted.beta != 0
    report = MetricReport(mse, per, int(np.count_nonzero(nz_fit)))
    if truth is not None:
        nz_true = truth.beta != 0
        tp = np.sum(nz_fit & nz_true)
        fn = np.sum(~nz_fit & nz_true)
        tn = np.sum(~nz_fit & ~nz_true)
        fp = np.sum(nz_fit & ~nz_true)
        report.sensitivity = float(tp / (tp + fn)) if tp + fn else 1.0
        report.specificity = float(tn / (tn + fp)) if tn + fp else 1.0
    return report


def aggregate_nonzero(fits, min_count: int = 2) -> int:
    """Number of (j, d) main effects non-zero in at least ``min_count`` of the replicate fits."""
    counts = sum((np.asarray(c.beta) != 0).astype(int) for c in fits)
    return int(np.sum(counts >= min_count))
