"""ADMM for the single-response pliable lasso.

Minimises

    1/(2N)‖y − β0 − Zθ0 − W*B‖² + (1−α)λ Σ_j (‖B_j‖₂ + ‖B_j(−1)‖₂) + αλ Σ_j ‖B_j(−1)‖₁

by splitting the overlapping group terms onto V (through the expansion G)
and the ℓ1 term onto Q.  Multipliers O and P are kept in scaled form.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from ._admm import InterceptFit, next_rho, sq, tolerances, zero_certified_rows
from .model import (
    CoefficientSet,
    ConvergenceReport,
    DesignData,
    Hyperparameters,
    InteractionTensor,
    build_interaction_tensor,
    pliable_penalty,
)
from .prox import build_pliable_expansion


@dataclass
class AdmmStateSingle:
    B: np.ndarray  # (p, K+1)
    V: np.ndarray  # (p, 2(K+1))
    Q: np.ndarray  # (p, K+1)
    O: np.ndarray  # (p, 2(K+1))
    P: np.ndarray  # (p, K+1)
    rho: float
    beta0: float = 0.0
    theta0: np.ndarray | None = None
    r_norm: float = 0.0
    s_norm: float = 0.0
    iter: int = 0

    @classmethod
    def zeros(cls, p: int, K: int, rho: float = 1.0) -> AdmmStateSingle:
        k1 = K + 1
        return cls(
            np.zeros((p, k1)), np.zeros((p, 2 * k1)), np.zeros((p, k1)),
            np.zeros((p, 2 * k1)), np.zeros((p, k1)), float(rho), 0.0, np.zeros(K),
        )

    def copy(self) -> AdmmStateSingle:
        return replace(
            self,
            B=self.B.copy(), V=self.V.copy(), Q=self.Q.copy(), O=self.O.copy(), P=self.P.copy(),
            theta0=None if self.theta0 is None else self.theta0.copy(),
        )


class WorkspaceSingle:
    """Data-dependent quantities reused across iterations and across λ values."""

    def __init__(self, data: DesignData, tensor: InteractionTensor | None = None):
        if data.D != 1:
            raise ValueError(f"single-response solver needs D=1, got D={data.D}")
        self.data = data
        self.tensor = tensor if tensor is not None else build_interaction_tensor(data)
        self.flat = np.ascontiguousarray(self.tensor.flat)
        self.y = data.Y[:, 0].copy()
        self.N, self.p, self.K = data.N, data.p, data.K
        self.G = build_pliable_expansion(self.K).astype(np.float64)
        self.GtG_I = self.G.T @ self.G + np.eye(self.K + 1)
        W3 = self.flat.reshape(self.N, self.p, self.K + 1)
        self.gram = np.einsum("nja,njb->jab", W3, W3) / self.N
        self.intercepts = InterceptFit(data.Z)
        self._rho = None
        self.Minv = None

    def factorize(self, rho: float):
        """Inverse of W_jᵀW_j/N + ρ(GᵀG + I) for every j, cached per ρ."""
        if self._rho == rho:
            return self.Minv
        A = self.gram + rho * self.GtG_I[None]
        L = np.linalg.cholesky(A)  # raises if not positive definite
        eye = np.broadcast_to(np.eye(self.K + 1), A.shape)
        Linv = np.linalg.solve(L, eye)
        self.Minv = np.ascontiguousarray(np.einsum("jki,jkl->jil", Linv, Linv))
        self._rho = rho
        return self.Minv

    def y_tilde(self, beta0, theta0):
        return self.y - beta0 - self.data.Z @ theta0


def _aux_rhs(state: AdmmStateSingle, G) -> np.ndarray:
    """ρ(GᵀV_jᵀ + Q_jᵀ − GᵀO_jᵀ − P_jᵀ) for all j at once, shape (p, K+1)."""
    return state.rho * ((state.V - state.O) @ G + state.Q - state.P)


def update_B_j(state: AdmmStateSingle, ws: WorkspaceSingle, j: int, resid: np.ndarray) -> np.ndarray:
    """Closed-form block update of row j; ``resid`` (the full residual) is updated in place."""
    Minv = ws.factorize(state.rho)
    Wj = ws.tensor.column(j)
    resid += Wj @ state.B[j]
    aux = state.rho * ((state.V[j] - state.O[j]) @ ws.G + state.Q[j] - state.P[j])
    b = Minv[j] @ (Wj.T @ resid / ws.N + aux)
    resid -= Wj @ b
    state.B[j] = b
    return b


def update_V(state: AdmmStateSingle, G, lam: float, alpha: float) -> np.ndarray:
    """V_j^s = group soft threshold of B_j^{g_s} + O_j^s at (1−α)λ/ρ."""
    k1 = state.B.shape[1]
    R = (state.B @ G.T + state.O).reshape(-1, k1)
    t = np.full(R.shape[0], (1 - alpha) * lam / state.rho)
    return kernels.group_shrink_rows(R, t).reshape(state.O.shape)


def update_Q(state: AdmmStateSingle, lam: float, alpha: float) -> np.ndarray:
    """Soft threshold of B + P at αλ/ρ, leaving the main-effect column untouched."""
    Q = state.B + state.P
    Q[:, 1:] = kernels.soft_threshold_array(Q[:, 1:], alpha * lam / state.rho)
    return Q


def update_multipliers(state: AdmmStateSingle, G):
    P = state.P + state.B - state.Q
    O = state.O + state.B @ G.T - state.V
    return O, P


def support_mask(V: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Entries of B that the auxiliary copies set exactly to zero.

    β_j is zero when the whole-row group copy is zero; θ_jk is zero when
    either group copy or the ℓ1 copy is zero.
    """
    k1 = Q.shape[1]
    g1 = np.any(V[:, :k1] != 0, axis=1)
    g2 = np.any(V[:, k1:] != 0, axis=1)
    mask = np.empty(Q.shape, dtype=bool)
    mask[:, 0] = g1
    mask[:, 1:] = (Q[:, 1:] != 0) & g1[:, None] & g2[:, None]
    return mask


def fit_single(
    data: DesignData,
    hp: Hyperparameters,
    init: AdmmStateSingle | None = None,
    workspace: WorkspaceSingle | None = None,
    trace: bool = True,
) -> tuple[CoefficientSet, ConvergenceReport]:
    """Fit the single-response pliable lasso at ``hp.lambda3``.

    ``init`` warm-starts every primal, auxiliary and dual variable (and ρ).
    The returned report carries the final solver state in ``report.state``.
    Non-convergence is reported through ``report.converged``, never raised.
    """
    if hp.lambda1 > 0 or hp.lambda2 > 0:
        raise ValueError("tree penalties lambda1/lambda2 do not apply to a single response")
    ws = workspace if workspace is not None else WorkspaceSingle(data)
    N, p, K = ws.N, ws.p, ws.K
    k1 = K + 1
    G = ws.G
    lam, alpha = hp.lambda3, hp.alpha

    st = AdmmStateSingle.zeros(p, K, hp.rho_init) if init is None else init.copy()
    if st.B.shape != (p, k1):
        raise ValueError(f"warm start has B of shape {st.B.shape}, expected {(p, k1)}")
    st.beta0, st.theta0 = ws.intercepts(ws.y - ws.flat @ st.B.ravel())

    n_con = p * 3 * k1
    n_var = p * k1
    trace_vals: list[float] = []
    converged = False
    eps_pri = eps_dual = np.inf
    it = 0
    for it in range(1, int(hp.max_iter) + 1):
        Minv = ws.factorize(st.rho)
        aux = _aux_rhs(st, G)
        resid = ws.y_tilde(st.beta0, st.theta0) - ws.flat @ st.B.ravel()
        kernels.pliable_sweep(ws.flat, resid, st.B, Minv, aux, float(N))

        V_old, Q_old = st.V, st.Q
        st.V = update_V(st, G, lam, alpha)
        st.Q = update_Q(st, lam, alpha)
        Bt = st.B @ G.T
        st.O, st.P = update_multipliers(st, G)

        fitted = ws.flat @ st.B.ravel()
        st.beta0, st.theta0 = ws.intercepts(ws.y - fitted)

        r = np.sqrt(sq(st.B - st.Q) + sq(Bt - st.V))
        s = st.rho * np.sqrt(sq(st.Q - Q_old) + sq(st.V - V_old))
        st.r_norm, st.s_norm, st.iter = float(r), float(s), it
        eps_pri, eps_dual = tolerances(
            n_con, n_var, hp.eps_abs, hp.eps_rel,
            np.sqrt(sq(Bt) + sq(st.B)),
            np.sqrt(sq(st.V) + sq(st.Q)),
            st.rho * np.sqrt(sq(st.O) + sq(st.P)),
        )
        if trace:
            res = ws.y - st.beta0 - ws.data.Z @ st.theta0 - fitted
            trace_vals.append(0.5 * sq(res) / N + pliable_penalty(st.B[:, :, None], lam, alpha))
        if r <= eps_pri and s <= eps_dual:
            converged = True
            break
        rho_new = next_rho(hp.rho_adapt, st.rho, r, s)
        if rho_new != st.rho:
            f = rho_new / st.rho
            st.O = st.O / f
            st.P = st.P / f
            st.rho = rho_new

    B = np.where(support_mask(st.V, st.Q), st.B, 0.0)[:, :, None]
    R = (ws.y_tilde(st.beta0, st.theta0) - ws.flat @ B.ravel())[:, None]
    zero_certified_rows(ws.flat, R, B, N, 0.0, 0.0, lam, alpha, A=np.hstack([np.ones((N, 1)), ws.data.Z]))
    B = B[:, :, 0]
    beta0, theta0 = ws.intercepts(ws.y - ws.flat @ B.ravel())
    coef = CoefficientSet(np.atleast_1d(beta0), theta0[:, None], B[:, :, None])
    report = ConvergenceReport(
        converged, it, st.r_norm, st.s_norm, float(eps_pri), float(eps_dual), st.rho, trace_vals, st,
    )
    return coef, report
