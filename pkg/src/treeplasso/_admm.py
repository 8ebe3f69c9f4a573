"""Pieces shared by the single- and multi-response ADMM drivers."""

import math

import numpy as np

from .model import RhoRule
from .prox import nested_prox

RHO_MIN = 1e-6
RHO_MAX = 1e6
_MU = 10.0
_TAU = 2.0


class InterceptFit:
    """Least-squares refresh of (β0, θ0) from a residual on the design [1, Z]."""

    def __init__(self, Z):
        A = np.hstack([np.ones((Z.shape[0], 1)), Z])
        self.pinv = np.linalg.pinv(A)

    def __call__(self, R):
        coef = self.pinv @ R
        return coef[0], coef[1:]


def next_rho(rule: RhoRule, rho: float, r: float, s: float) -> float:
    """Penalty parameter for the next iteration.

    ``residual_balance`` doubles ρ when the primal residual dominates the dual
    one by a factor 10 and halves it in the opposite case.  ``rho_vs_dual``
    compares ρ itself against the dual residual.
    """
    if rule is RhoRule.FIXED:
        return rho
    if rule is RhoRule.RESIDUAL_BALANCE:
        if r > _MU * s:
            new = rho * _TAU
        elif s > _MU * r:
            new = rho / _TAU
        else:
            new = rho
    else:
        if rho > _MU * s:
            new = rho * _TAU
        elif _MU * rho < s:
            new = rho / _TAU
        else:
            new = rho
    return min(max(new, RHO_MIN), RHO_MAX)


def tolerances(n_con, n_var, eps_abs, eps_rel, ax_norm, z_norm, dual_norm):
    """Primal and dual stopping thresholds.

    ``ax_norm`` is the norm of the stacked copies of B entering the
    constraints, ``z_norm`` of the auxiliary variables and ``dual_norm`` of
    the (unscaled) multipliers.
    """
    eps_pri = math.sqrt(n_con) * eps_abs + eps_rel * max(ax_norm, z_norm)
    eps_dual = math.sqrt(n_var) * eps_abs + eps_rel * dual_norm
    return eps_pri, eps_dual


def sq(a) -> float:
    return float(np.vdot(a, a))


def zero_certified_rows(flat, R, B, n_obs, lambda1, lambda2, lambda3, alpha, groups=None, A=None):
    """Set to zero every row B_j for which zero is the exact block minimiser.

    The intercepts (β0, θ0) are profiled out: ``R`` is projected off the
    columns of ``A`` = [1, Z].  With the other rows fixed, B_j = 0 then
    minimises the objective in (B_j, intercepts) iff the penalty prox maps
    g_j = W_jᵀ(R + W_j B_j)/N to zero.  Rows are visited in order and ``R``
    (N x D, updated in place) is refreshed after each change, so every step
    is an exact block-coordinate step and the objective cannot increase.
    Returns the number of rows zeroed.
    """
    p, k1, D = B.shape
    if groups is None:
        internal, iw, leaf_w = [], [], np.ones(D)
    else:
        internal, iw, leaf_w = groups.internal, groups.internal_weights, groups.leaf_weights
    W3 = flat.reshape(flat.shape[0], p, k1)
    if A is None:
        A = np.ones((flat.shape[0], 1))
    A_pinv = np.linalg.pinv(A)

    def project(M):
        return M - A @ (A_pinv @ M)

    R[:] = project(R)
    zeroed = 0
    for j in np.flatnonzero(np.any(B != 0, axis=(1, 2))):
        Wj = W3[:, j, :]
        Rj = project(R + Wj @ B[j])
        g = Wj.T @ Rj / n_obs
        if not nested_prox(g[None], lambda1, lambda2, lambda3, alpha, internal, iw, leaf_w).any():
            R[:] = Rj
            B[j] = 0.0
            zeroed += 1
    return zeroed
