"""Problem data, coefficient containers, prediction and objective evaluation.

Conventions (0-based throughout):

* ``X`` is N x p, ``Z`` is N x K, ``Y`` is N x D.
* ``B`` has shape (p, K+1, D); ``B[j, 0, d]`` is the main effect of
  covariate j on response d and ``B[j, 1:, d]`` its interactions with the
  K modifiers.
* The flat interaction design has column ``j*(K+1) + k`` equal to
  ``X[:, j]`` for k = 0 and ``X[:, j] * Z[:, k-1]`` otherwise, so
  ``flat @ B.reshape(p*(K+1), D)`` is the interaction part of the fit.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from .tree import ResponseTree, derive_groups


class DimensionError(ValueError):
    """Shape mismatch between the matrices of a problem; ``matrix`` names the offender."""

    def __init__(self, message: str, matrix: str | None = None):
        super().__init__(message)
        self.matrix = matrix


def _as_matrix(name, a):
    a = np.array(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise DimensionError(f"{name} must be a 2-D matrix, got shape {a.shape}", name)
    if a.shape[1] < 1:
        raise DimensionError(f"{name} has no columns", name)
    if not np.all(np.isfinite(a)):
        raise DimensionError(f"{name} contains non-finite entries", name)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class DesignData:
    X: np.ndarray
    Z: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        X = _as_matrix("X", self.X)
        Z = _as_matrix("Z", self.Z)
        Y = _as_matrix("Y", self.Y)
        for name, a in (("Z", Z), ("Y", Y)):
            if a.shape[0] != X.shape[0]:
                raise DimensionError(
                    f"{name} has {a.shape[0]} rows but X has {X.shape[0]}", name
                )
        if X.shape[0] < 1:
            raise DimensionError("X has no rows", "X")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "Y", Y)

    @property
    def N(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def K(self) -> int:
        return self.Z.shape[1]

    @property
    def D(self) -> int:
        return self.Y.shape[1]

    def subset(self, rows) -> DesignData:
        return DesignData(self.X[rows], self.Z[rows], self.Y[rows])


@dataclass(frozen=True)
class InteractionTensor:
    """``W[j, k, i]`` as a (p, K+1, N) array plus the N x p(K+1) ``flat`` design."""

    W: np.ndarray
    flat: np.ndarray

    @property
    def shape(self):
        return self.W.shape

    def column(self, j: int) -> np.ndarray:
        """The N x (K+1) block of covariate j."""
        k1 = self.W.shape[1]
        return self.flat[:, j * k1:(j + 1) * k1]

    @staticmethod
    def unflatten(flat, p, K) -> np.ndarray:
        return np.ascontiguousarray(flat.reshape(flat.shape[0], p, K + 1).transpose(1, 2, 0))


def build_interaction_tensor(data: DesignData) -> InteractionTensor:
    N, p, K = data.N, data.p, data.K
    Zaug = np.hstack([np.ones((N, 1)), data.Z])
    flat = (data.X[:, :, None] * Zaug[:, None, :]).reshape(N, p * (K + 1))
    flat.setflags(write=False)
    W = InteractionTensor.unflatten(flat, p, K)
    W.setflags(write=False)
    return InteractionTensor(W, flat)


@dataclass(frozen=True)
class CoefficientSet:
    beta0: np.ndarray  # (D,)
    theta0: np.ndarray  # (K, D)
    B: np.ndarray  # (p, K+1, D)

    def __post_init__(self):
        beta0 = np.atleast_1d(np.array(self.beta0, dtype=np.float64))
        theta0 = np.array(self.theta0, dtype=np.float64)
        B = np.array(self.B, dtype=np.float64)
        if B.ndim == 2:
            B = B[:, :, None]
        if theta0.ndim == 1:
            theta0 = theta0[:, None]
        if B.ndim != 3:
            raise DimensionError(f"B must be (p, K+1, D), got {B.shape}", "B")
        p, k1, D = B.shape
        if theta0.shape != (k1 - 1, D):
            raise DimensionError(f"theta0 must be {(k1 - 1, D)}, got {theta0.shape}", "theta0")
        if beta0.shape != (D,):
            raise DimensionError(f"beta0 must have length {D}, got {beta0.shape}", "beta0")
        for a in (beta0, theta0, B):
            a.setflags(write=False)
        object.__setattr__(self, "beta0", beta0)
        object.__setattr__(self, "theta0", theta0)
        object.__setattr__(self, "B", B)

    @classmethod
    def zeros(cls, p: int, K: int, D: int = 1) -> CoefficientSet:
        return cls(np.zeros(D), np.zeros((K, D)), np.zeros((p, K + 1, D)))

    @property
    def p(self) -> int:
        return self.B.shape[0]

    @property
    def K(self) -> int:
        return self.B.shape[1] - 1

    @property
    def D(self) -> int:
        return self.B.shape[2]

    @property
    def beta(self) -> np.ndarray:
        """Main effects, p x D."""
        return self.B[:, 0, :]

    @property
    def theta(self) -> np.ndarray:
        """Interactions, p x K x D."""
        return self.B[:, 1:, :]

    def check_against(self, data: DesignData):
        if (self.p, self.K, self.D) != (data.p, data.K, data.D):
            raise DimensionError(
                f"coefficients are sized (p={self.p}, K={self.K}, D={self.D}) "
                f"but data is (p={data.p}, K={data.K}, D={data.D})",
                "B",
            )


class RhoRule(str, enum.Enum):
    FIXED = "fixed"
    RHO_VS_DUAL = "rho_vs_dual"
    RESIDUAL_BALANCE = "residual_balance"


@dataclass(frozen=True)
class Hyperparameters:
    """Penalty levels and solver controls.

    ``lambda1`` and ``lambda2`` weight the internal-node and leaf tree terms;
    ``lambda3`` is the pliable penalty (the only one used for a single
    response).
    """

    lambda1: float = 0.0
    lambda2: float = 0.0
    lambda3: float = 0.0
    alpha: float = 0.5
    rho_init: float = 1.0
    eps_abs: float = 1e-4
    eps_rel: float = 1e-3
    max_iter: int = 5000
    rho_adapt: RhoRule = RhoRule.RESIDUAL_BALANCE

    def __post_init__(self):
        object.__setattr__(self, "rho_adapt", RhoRule(self.rho_adapt))
        for name in ("lambda1", "lambda2", "lambda3"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be a finite nonnegative number, got {v}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not self.rho_init > 0:
            raise ValueError(f"rho_init must be positive, got {self.rho_init}")
        if not (self.eps_abs > 0 and self.eps_rel > 0):
            raise ValueError("eps_abs and eps_rel must be positive")
        if int(self.max_iter) < 1:
            raise ValueError("max_iter must be at least 1")

    @classmethod
    def single(cls, lam: float, alpha: float = 0.5, **kw) -> Hyperparameters:
        return cls(lambda3=lam, alpha=alpha, **kw)

    @classmethod
    def coupled(cls, lam: float, alpha: float = 0.5, c1: float = 1.0, c2: float = 1.0, **kw) -> Hyperparameters:
        """(lambda1, lambda2, lambda3) = (c1, c2, 1) * lam."""
        return cls(lambda1=c1 * lam, lambda2=c2 * lam, lambda3=lam, alpha=alpha, **kw)

    def with_(self, **changes) -> Hyperparameters:
        return replace(self, **changes)


def predict(data: DesignData, coef: CoefficientSet, tensor: InteractionTensor | None = None) -> np.ndarray:
    """Fitted responses, N x D."""
    if coef.p != data.p or coef.K != data.K:
        raise DimensionError(
            f"coefficients expect p={coef.p}, K={coef.K}; data has p={data.p}, K={data.K}", "B"
        )
    if tensor is None:
        tensor = build_interaction_tensor(data)
    flatB = coef.B.reshape(coef.p * (coef.K + 1), coef.D)
    return coef.beta0[None, :] + data.Z @ coef.theta0 + tensor.flat @ flatB


def pliable_penalty(B: np.ndarray, lam: float, alpha: float) -> float:
    """(1-a)λ Σ_{j,d} (‖B_jd‖ + ‖B_j(-1)d‖) + aλ Σ_{j,d} ‖B_j(-1)d‖₁ for B of shape (p, K+1, D)."""
    if lam == 0:
        return 0.0
    full = np.sqrt(np.sum(B * B, axis=1)).sum()
    inter = np.sqrt(np.sum(B[:, 1:] ** 2, axis=1)).sum()
    l1 = np.abs(B[:, 1:]).sum()
    return (1 - alpha) * lam * (full + inter) + alpha * lam * l1


def tree_penalty(B: np.ndarray, tree: ResponseTree, lambda1: float, lambda2: float, weight_rule: str = "tree") -> float:
    groups = derive_groups(tree, weight_rule)
    total = 0.0
    if lambda1:
        for members, w in zip(groups.internal, groups.internal_weights):
            sub = B[:, :, list(members)]
            total += lambda1 * w * np.sqrt(np.sum(sub * sub, axis=(1, 2))).sum()
    if lambda2:
        for members, w in zip(groups.leaf, groups.leaf_weights):
            sub = B[:, :, members[0]]
            total += lambda2 * w * np.sqrt(np.sum(sub * sub, axis=1)).sum()
    return float(total)


def objective(
    data: DesignData,
    coef: CoefficientSet,
    hp: Hyperparameters,
    tree: ResponseTree | None = None,
    tensor: InteractionTensor | None = None,
    weight_rule: str = "tree",
) -> float:
    """1/(2N)‖Y − Ŷ‖_F² plus the pliable and (if ``tree`` is given) tree penalties."""
    coef.check_against(data)
    if tree is None:
        if data.D != 1:
            raise ValueError(f"a response tree is required when D={data.D} > 1")
        if hp.lambda1 > 0 or hp.lambda2 > 0:
            raise ValueError("lambda1/lambda2 are tree penalties but no tree was given")
    else:
        if data.D == 1:
            raise ValueError("tree penalties are undefined for a single response")
        if tree.D != data.D:
            raise DimensionError(f"tree covers {tree.D} responses, data has {data.D}", "Y")
    resid = data.Y - predict(data, coef, tensor)
    loss = 0.5 * np.sum(resid * resid) / data.N
    pen = pliable_penalty(coef.B, hp.lambda3, hp.alpha)
    if tree is not None:
        pen += tree_penalty(coef.B, tree, hp.lambda1, hp.lambda2, weight_rule)
    return float(loss + pen)


@dataclass(frozen=True)
class Standardizer:
    """Column standardisation of X and centring of Y, with exact back-transform.

    Columns of X with zero spread are only centred.
    """

    x_mean: np.ndarray
    x_scale: np.ndarray
    y_mean: np.ndarray

    @classmethod
    def fit(cls, data: DesignData) -> Standardizer:
        mean = data.X.mean(axis=0)
        sd = data.X.std(axis=0)
        sd = np.where(sd > 0, sd, 1.0)
        return cls(mean, sd, data.Y.mean(axis=0))

    def transform(self, data: DesignData) -> DesignData:
        return DesignData((data.X - self.x_mean) / self.x_scale, data.Z, data.Y - self.y_mean)

    def inverse(self, data: DesignData) -> DesignData:
        return DesignData(data.X * self.x_scale + self.x_mean, data.Z, data.Y + self.y_mean)

    def coef_to_original(self, coef: CoefficientSet) -> CoefficientSet:
        """Coefficients acting on raw X and uncentred Y with identical predictions."""
        B = coef.B / self.x_scale[:, None, None]
        shift = np.einsum("j,jkd->kd", self.x_mean, B)
        beta0 = coef.beta0 + self.y_mean - shift[0]
        theta0 = coef.theta0 - shift[1:]
        return CoefficientSet(beta0, theta0, B)

    def to_dict(self) -> dict:
        return {
            "x_mean": self.x_mean.tolist(),
            "x_scale": self.x_scale.tolist(),
            "y_mean": self.y_mean.tolist(),
        }


@dataclass
class ConvergenceReport:
    converged: bool
    iterations: int
    r_norm: float
    s_norm: float
    eps_pri: float
    eps_dual: float
    rho: float
    objective_trace: list[float] = field(default_factory=list)
    state: object = field(default=None, repr=False)
