"""ADMM for the multi-response pliable lasso with a tree-guided response penalty.

Objective::

    1/(2N)‖Y − Ŷ‖_F²
      + λ1 Σ_j Σ_{m internal} w_m ‖B_j^{G_m}‖₂
      + λ2 Σ_j Σ_d w_d ‖B_jd‖₂
      + Σ_d [(1−α)λ3 Σ_j (‖B_jd‖₂ + ‖B_j(−1)d‖₂) + αλ3 Σ_j ‖B_j(−1)d‖₁]

Auxiliary copies: V (pliable groups, via G), Q (ℓ1), E (internal response
groups, via the weighted expansion I_exp) and Ẽ (leaf groups).  Multipliers
H, H̃, O, P are kept in scaled form.  The B update is an exact joint
minimisation; it separates over responses d into the linear systems
(W̃ᵀW̃/N + C_d) b_d = φ_d.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import linalg
from scipy.sparse.linalg import LinearOperator, cg

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
    tree_penalty,
)
from .prox import GroupExpansion
from .tree import ResponseTree, derive_groups

DENSE_LIMIT = 2000
SOLVERS = ("auto", "dense", "woodbury", "cg")


@dataclass
class AdmmStateMulti:
    B: np.ndarray  # (p, K+1, D)
    V: np.ndarray  # (p, 2(K+1), D)
    Q: np.ndarray  # (p, K+1, D)
    E: np.ndarray  # (R, p, K+1), R = Σ_{m internal} |G_m|
    E_tilde: np.ndarray  # (p, K+1, D)
    H: np.ndarray
    H_tilde: np.ndarray
    O: np.ndarray
    P: np.ndarray
    rho: float
    beta0: np.ndarray | None = None
    theta0: np.ndarray | None = None
    r_norm: float = 0.0
    s_norm: float = 0.0
    iter: int = 0

    @classmethod
    def zeros(cls, p: int, K: int, D: int, n_rows: int, rho: float = 1.0) -> AdmmStateMulti:
        k1 = K + 1
        z = lambda *s: np.zeros(s)  # noqa: E731
        return cls(
            z(p, k1, D), z(p, 2 * k1, D), z(p, k1, D), z(n_rows, p, k1), z(p, k1, D),
            z(n_rows, p, k1), z(p, k1, D), z(p, 2 * k1, D), z(p, k1, D),
            float(rho), np.zeros(D), np.zeros((K, D)),
        )

    def copy(self) -> AdmmStateMulti:
        arrays = {
            name: getattr(self, name).copy()
            for name in ("B", "V", "Q", "E", "E_tilde", "H", "H_tilde", "O", "P")
        }
        return replace(
            self,
            beta0=None if self.beta0 is None else self.beta0.copy(),
            theta0=None if self.theta0 is None else self.theta0.copy(),
            **arrays,
        )

    def rescale_duals(self, f: float):
        self.H = self.H / f
        self.H_tilde = self.H_tilde / f
        self.O = self.O / f
        self.P = self.P / f


class WorkspaceMulti:
    """Data, group structure and the cached B-update solver for one problem."""

    def __init__(
        self,
        data: DesignData,
        tree: ResponseTree,
        tensor: InteractionTensor | None = None,
        solver: str = "auto",
    ):
        if tree.D != data.D:
            raise ValueError(f"tree covers {tree.D} responses but Y has {data.D} columns")
        if solver not in SOLVERS:
            raise ValueError(f"unknown solver {solver!r}; expected one of {SOLVERS}")
        self.data = data
        self.tree = tree
        self.N, self.p, self.K, self.D = data.N, data.p, data.K, data.D
        self.k1 = self.K + 1
        self.dim = self.p * self.k1
        self.tensor = tensor if tensor is not None else build_interaction_tensor(data)
        self.flat = np.ascontiguousarray(self.tensor.flat)
        self.expansion = GroupExpansion.build(self.K, tree)
        self.G = self.expansion.G.astype(np.float64)
        self.row_resp = self.expansion.row_response
        self.row_w = self.expansion.row_weight
        self.leaf_w = self.expansion.leaf_weights
        self.intercepts = InterceptFit(data.Z)
        self.WtY = self.flat.T @ data.Y
        self.Wt1 = self.flat.sum(axis=0)
        self.WtZ = self.flat.T @ data.Z

        if solver == "auto":
            if self.N < self.dim:
                solver = "woodbury"
            elif self.dim <= DENSE_LIMIT:
                solver = "dense"
            else:
                solver = "cg"
        self.solver = solver
        if solver == "dense":
            self.gram = self.flat.T @ self.flat / self.N
        elif solver == "woodbury":
            is_main = (np.arange(self.dim) % self.k1) == 0
            Wm, Wi = self.flat[:, is_main], self.flat[:, ~is_main]
            self.gram_main = Wm @ Wm.T
            self.gram_inter = Wi @ Wi.T
        else:
            self.gram_diag = np.einsum("ij,ij->j", self.flat, self.flat) / self.N
        self._rho = None
        self._cache = None

    def C_flat(self, rho: float) -> np.ndarray:
        """C_d for every d, laid out as (dim, D) in the flat column order."""
        return np.stack([self.expansion.C(rho, self.p, d).ravel() for d in range(self.D)], axis=1)

    def _prepare(self, rho: float):
        if self._rho == rho:
            return self._cache
        C = self.C_flat(rho)
        if self.solver == "dense":
            cache = [linalg.cho_factor(self.gram + np.diag(C[:, d])) for d in range(self.D)]
        elif self.solver == "woodbury":
            cache = []
            eye = self.N * np.eye(self.N)
            for d in range(self.D):
                a, c = C[0, d], C[1, d]
                cache.append(linalg.cho_factor(eye + self.gram_main / a + self.gram_inter / c))
        else:
            cache = None
        self._rho, self._C, self._cache = rho, C, cache
        return cache

    def system_matrix(self, rho: float, d: int) -> np.ndarray:
        """Dense W̃ᵀW̃/N + C_d (testing aid; never used by the solver)."""
        return self.flat.T @ self.flat / self.N + np.diag(self.C_flat(rho)[:, d])

    def solve(self, phi: np.ndarray, rho: float, x0: np.ndarray | None = None, ds=None) -> np.ndarray:
        """Solve (W̃ᵀW̃/N + C_d) b_d = φ_d for the columns ``ds`` of ``phi`` (dim x D)."""
        cache = self._prepare(rho)
        C = self._C
        ds = range(self.D) if ds is None else ds
        out = np.zeros_like(phi)
        if self.solver == "dense":
            for d in ds:
                out[:, d] = linalg.cho_solve(cache[d], phi[:, d])
        elif self.solver == "woodbury":
            cols = list(ds)
            U = phi[:, cols] / C[:, cols]
            T = self.flat @ U
            for i, d in enumerate(cols):
                T[:, i] = linalg.cho_solve(cache[d], T[:, i])
            out[:, cols] = U - (self.flat.T @ T) / C[:, cols]
        else:
            flat, N = self.flat, self.N
            for d in ds:
                Cd = C[:, d]
                op = LinearOperator(
                    (self.dim, self.dim), matvec=lambda v, Cd=Cd: flat.T @ (flat @ v) / N + Cd * v,
                    dtype=np.float64,
                )
                prec = LinearOperator(
                    (self.dim, self.dim), matvec=lambda v, m=1.0 / (self.gram_diag + Cd): m * v,
                    dtype=np.float64,
                )
                start = None if x0 is None else x0[:, d]
                sol, info = cg(op, phi[:, d], x0=start, rtol=1e-10, atol=0.0, maxiter=10 * self.dim, M=prec)
                if info < 0:
                    raise FloatingPointError("conjugate gradient breakdown in the B update")
                out[:, d] = sol
        return out

    # -- expansions -------------------------------------------------------

    def expand_pliable(self, B):
        """B̃ = G-expansion of every row, shape (p, 2(K+1), D)."""
        return np.einsum("sk,jkd->jsd", self.G, B)

    def expand_responses(self, B):
        """B̃̃: row (m, u) is w_m B[:, :, u], shape (R, p, K+1)."""
        return self.row_w[:, None, None] * np.moveaxis(B[:, :, self.row_resp], 2, 0)

    def phi(self, st: AdmmStateMulti) -> np.ndarray:
        """Right-hand side of the B update, shape (dim, D)."""
        R = self.WtY - np.outer(self.Wt1, st.beta0) - self.WtZ @ st.theta0
        aux = (
            np.einsum("rd,rjk->jkd", self.expansion.I_exp, st.E - st.H)
            + np.einsum("sk,jsd->jkd", self.G, st.V - st.O)
            + (st.E_tilde - st.H_tilde)
            + (st.Q - st.P)
        )
        return R / self.N + st.rho * aux.reshape(self.dim, self.D)


def update_B_d(st: AdmmStateMulti, ws: WorkspaceMulti, d: int) -> np.ndarray:
    """Exact minimisation over B_d with everything else fixed; returns the new (p, K+1) block."""
    phi = ws.phi(st)
    x0 = st.B.reshape(ws.dim, ws.D)
    b = ws.solve(phi, st.rho, x0=x0, ds=[d])[:, d].reshape(ws.p, ws.k1)
    st.B[:, :, d] = b
    return b


def update_B(st: AdmmStateMulti, ws: WorkspaceMulti) -> np.ndarray:
    phi = ws.phi(st)
    x0 = st.B.reshape(ws.dim, ws.D)
    st.B = ws.solve(phi, st.rho, x0=x0).reshape(ws.p, ws.k1, ws.D)
    return st.B


def update_V_multi(st: AdmmStateMulti, ws: WorkspaceMulti, lambda3: float, alpha: float) -> np.ndarray:
    p, k1, D = st.B.shape
    A = (ws.expand_pliable(st.B) + st.O).reshape(p, 2, k1, D).transpose(0, 3, 1, 2)
    rows = np.ascontiguousarray(A).reshape(-1, k1)
    t = np.full(rows.shape[0], (1 - alpha) * lambda3 / st.rho)
    out = kernels.group_shrink_rows(rows, t).reshape(p, D, 2, k1).transpose(0, 2, 3, 1)
    return np.ascontiguousarray(out).reshape(p, 2 * k1, D)


def update_Q_multi(st: AdmmStateMulti, lambda3: float, alpha: float) -> np.ndarray:
    Q = st.B + st.P
    Q[:, 1:, :] = kernels.soft_threshold_array(Q[:, 1:, :], alpha * lambda3 / st.rho)
    return Q


def update_E(st: AdmmStateMulti, ws: WorkspaceMulti, lambda1: float) -> np.ndarray:
    """Group soft threshold of each internal-node block of B̃̃ + H.

    The blocks already carry the factor w_m through the expansion, so the
    threshold λ1/ρ reproduces the penalty λ1 w_m ‖B_j^{G_m}‖.
    """
    if st.E.shape[0] == 0:
        return st.E.copy()
    A = ws.expand_responses(st.B) + st.H
    t = np.full(ws.expansion.group_starts.shape[0], lambda1 / st.rho)
    return kernels.block_shrink(A, ws.expansion.group_starts, ws.expansion.group_ends, t)


def update_E_tilde(st: AdmmStateMulti, ws: WorkspaceMulti, lambda2: float) -> np.ndarray:
    p, k1, D = st.B.shape
    rows = np.ascontiguousarray((st.B + st.H_tilde).transpose(0, 2, 1)).reshape(-1, k1)
    t = np.tile(ws.leaf_w, p) * (lambda2 / st.rho)
    out = kernels.group_shrink_rows(rows, t).reshape(p, D, k1)
    return np.ascontiguousarray(out.transpose(0, 2, 1))


def update_multipliers_multi(st: AdmmStateMulti, ws: WorkspaceMulti):
    P = st.P + st.B - st.Q
    O = st.O + ws.expand_pliable(st.B) - st.V
    H = st.H + ws.expand_responses(st.B) - st.E
    H_tilde = st.H_tilde + st.B - st.E_tilde
    return H, H_tilde, O, P


def support_mask_multi(st: AdmmStateMulti, ws: WorkspaceMulti) -> np.ndarray:
    """Entries of B set exactly to zero by at least one auxiliary copy covering them."""
    p, k1, D = st.B.shape
    g1 = np.any(st.V[:, :k1, :] != 0, axis=1)
    g2 = np.any(st.V[:, k1:, :] != 0, axis=1)
    leaf = np.any(st.E_tilde != 0, axis=1)
    keep = g1 & leaf  # (p, D)
    starts, ends = ws.expansion.group_starts, ws.expansion.group_ends
    for m in range(starts.shape[0]):
        alive = np.any(st.E[starts[m]:ends[m]] != 0, axis=(0, 2))  # (p,)
        for u in ws.row_resp[starts[m]:ends[m]]:
            keep[:, u] &= alive
    mask = np.empty(st.B.shape, dtype=bool)
    mask[:, 0, :] = keep
    mask[:, 1:, :] = (st.Q[:, 1:, :] != 0) & (keep & g2)[:, None, :]
    return mask


def fit_multi(
    data: DesignData,
    hp: Hyperparameters,
    tree: ResponseTree,
    init: AdmmStateMulti | None = None,
    workspace: WorkspaceMulti | None = None,
    trace: bool = True,
    solver: str = "auto",
) -> tuple[CoefficientSet, ConvergenceReport]:
    """Fit the tree-guided multi-response model at the penalties in ``hp``.

    Each iteration updates B, then V, Q, E, Ẽ, then the multipliers, then
    refreshes the intercepts by least squares.  ``init`` warm-starts all
    variables and ρ; ``report.state`` holds the final state.
    """
    if data.D < 2:
        raise ValueError("fit_multi needs at least two responses; use fit_single for D=1")
    ws = workspace if workspace is not None else WorkspaceMulti(data, tree, solver=solver)
    p, K, D = ws.p, ws.K, ws.D
    n_rows = len(ws.row_resp)
    lam1, lam2, lam3, alpha = hp.lambda1, hp.lambda2, hp.lambda3, hp.alpha

    st = AdmmStateMulti.zeros(p, K, D, n_rows, hp.rho_init) if init is None else init.copy()
    if st.B.shape != (p, K + 1, D) or st.E.shape[0] != n_rows:
        raise ValueError("warm-start state does not match the problem dimensions or tree")
    Y = data.Y
    st.beta0, st.theta0 = ws.intercepts(Y - ws.flat @ st.B.reshape(ws.dim, D))

    n_con = st.V.size + st.Q.size + st.E.size + st.E_tilde.size
    n_var = st.B.size
    trace_vals: list[float] = []
    converged = False
    eps_pri = eps_dual = np.inf
    it = 0
    for it in range(1, int(hp.max_iter) + 1):
        update_B(st, ws)
        old = (st.V, st.Q, st.E, st.E_tilde)
        st.V = update_V_multi(st, ws, lam3, alpha)
        st.Q = update_Q_multi(st, lam3, alpha)
        st.E = update_E(st, ws, lam1)
        st.E_tilde = update_E_tilde(st, ws, lam2)
        st.H, st.H_tilde, st.O, st.P = update_multipliers_multi(st, ws)

        fitted = ws.flat @ st.B.reshape(ws.dim, D)
        st.beta0, st.theta0 = ws.intercepts(Y - fitted)

        Bt = ws.expand_pliable(st.B)
        Btt = ws.expand_responses(st.B)
        r = np.sqrt(sq(st.B - st.Q) + sq(Bt - st.V) + sq(Btt - st.E) + sq(st.B - st.E_tilde))
        s = st.rho * np.sqrt(
            sq(st.V - old[0]) + sq(st.Q - old[1]) + sq(st.E - old[2]) + sq(st.E_tilde - old[3])
        )
        st.r_norm, st.s_norm, st.iter = float(r), float(s), it
        eps_pri, eps_dual = tolerances(
            n_con, n_var, hp.eps_abs, hp.eps_rel,
            np.sqrt(2 * sq(st.B) + sq(Bt) + sq(Btt)),
            np.sqrt(sq(st.V) + sq(st.Q) + sq(st.E) + sq(st.E_tilde)),
            st.rho * np.sqrt(sq(st.O) + sq(st.P) + sq(st.H) + sq(st.H_tilde)),
        )
        if trace:
            res = Y - st.beta0[None, :] - data.Z @ st.theta0 - fitted
            pen = pliable_penalty(st.B, lam3, alpha) + tree_penalty(st.B, tree, lam1, lam2)
            trace_vals.append(0.5 * sq(res) / ws.N + pen)
        if r <= eps_pri and s <= eps_dual:
            converged = True
            break
        rho_new = next_rho(hp.rho_adapt, st.rho, r, s)
        if rho_new != st.rho:
            st.rescale_duals(rho_new / st.rho)
            st.rho = rho_new

    B = np.where(support_mask_multi(st, ws), st.B, 0.0)
    R = Y - st.beta0[None, :] - data.Z @ st.theta0 - ws.flat @ B.reshape(ws.dim, D)
    zero_certified_rows(ws.flat, R, B, ws.N, lam1, lam2, lam3, alpha, derive_groups(tree), A=np.hstack([np.ones((ws.N, 1)), data.Z]))
    beta0, theta0 = ws.intercepts(Y - ws.flat @ B.reshape(ws.dim, D))
    coef = CoefficientSet(beta0, theta0, B)
    report = ConvergenceReport(
        converged, it, st.r_norm, st.s_norm, float(eps_pri), float(eps_dual), st.rho, trace_vals, st,
    )
    return coef, report
