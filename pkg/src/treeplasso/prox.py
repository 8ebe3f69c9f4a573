"""Proximal operators and the duplication matrices behind the overlapping groups.

The pliable penalty puts two overlapping groups on each row ``B_j``: the
whole row ``[β_j, θ_j]`` and the interaction part ``θ_j``.  They are
decoupled by duplicating ``B_j`` through the binary matrix ``G`` of
:func:`build_pliable_expansion`.  Response groups of the tree penalty are
decoupled the same way through the weighted matrix of
:func:`build_response_expansion`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .tree import ResponseTree, derive_groups


def soft_threshold(x, t):
    """sign(x) * max(|x| - t, 0); elementwise for arrays."""
    if t < 0:
        raise ValueError(f"threshold must be nonnegative, got {t}")
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def group_soft_threshold(r, t):
    """max(‖r‖₂ - t, 0) r/‖r‖₂, with the zero vector returned when ‖r‖₂ = 0."""
    if t < 0:
        raise ValueError(f"threshold must be nonnegative, got {t}")
    r = np.asarray(r, dtype=np.float64)
    nrm = np.sqrt(np.sum(r * r))
    if nrm <= t or nrm == 0.0:
        return np.zeros_like(r)
    return r * ((nrm - t) / nrm)


def build_pliable_expansion(K: int) -> np.ndarray:
    """The 2(K+1) x (K+1) matrix G with ``G @ B_j = [β_j, θ_j, 0, θ_j]``.

    Rows 0..K select the whole row (group 1).  Rows K+1..2K+1 select the
    interactions (group 2); the first of them is identically zero and stands
    in for the excluded main effect.
    """
    if int(K) != K or K < 1:
        raise ValueError(f"K must be a positive integer, got {K}")
    K = int(K)
    G = np.zeros((2 * (K + 1), K + 1), dtype=np.int64)
    G[: K + 1] = np.eye(K + 1, dtype=np.int64)
    G[K + 2:, 1:] = np.eye(K, dtype=np.int64)
    return G


def build_response_expansion(groups, D: int, weights: Sequence[float] | None = None):
    """Weighted duplication matrix for response groups.

    Rows are indexed by pairs (m, u) with u in G_m, in group order and then
    member order; the entry in column d is w_m if d == u, else 0.

    ``groups`` is either a :class:`ResponseTree` (its internal nodes are
    used, with their stored weights) or a sequence of member tuples with
    ``weights`` supplied separately.

    Returns ``(I_exp, rows)`` where ``rows`` lists the (m, u) pair of each row.
    """
    if isinstance(groups, ResponseTree):
        tg = derive_groups(groups)
        groups, weights = tg.internal, tg.internal_weights
    groups = [tuple(int(u) for u in g) for g in groups]
    if weights is None:
        weights = np.ones(len(groups))
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (len(groups),):
        raise ValueError("need exactly one weight per group")
    rows = []
    for m, g in enumerate(groups):
        if len(g) == 0:
            raise ValueError(f"group {m} is empty")
        if not weights[m] > 0:
            raise ValueError(f"group {m} has non-positive weight {weights[m]}")
        for u in g:
            if not 0 <= u < D:
                raise ValueError(f"group {m} references response {u} outside 0..{D - 1}")
            rows.append((m, u))
    I_exp = np.zeros((len(rows), D))
    for r, (m, u) in enumerate(rows):
        I_exp[r, u] = weights[m]
    return I_exp, rows


def assemble_C(rho: float, G_diag, I_diag, p: int, K: int, d: int) -> np.ndarray:
    """Diagonal of C_d, length p(K+1), ordered by modifier slot k and then covariate j.

    Entry (k, j) is ρ(1 + G_diag[k]) + ρ(I_diag[d] + 1), i.e. 2ρ + ρ(I_diag[d]+1)
    for the main effects and 3ρ + ρ(I_diag[d]+1) for the interactions.
    """
    if not rho > 0:
        raise ValueError(f"rho must be positive, got {rho}")
    G_diag = np.asarray(G_diag, dtype=np.float64)
    tail = rho * (float(np.asarray(I_diag)[d]) + 1.0)
    per_k = rho * (1.0 + G_diag[: K + 1]) + tail
    return np.repeat(per_k, p)


@dataclass(frozen=True)
class GroupExpansion:
    """Everything the multi-response B update needs about the group structure."""

    G: np.ndarray
    I_exp: np.ndarray
    rows: tuple[tuple[int, int], ...]
    group_starts: np.ndarray
    group_ends: np.ndarray
    internal_weights: np.ndarray
    leaf_weights: np.ndarray

    @property
    def G_diag(self) -> np.ndarray:
        return np.diag(self.G.T @ self.G).astype(np.float64)

    @property
    def I_diag(self) -> np.ndarray:
        return np.einsum("rd,rd->d", self.I_exp, self.I_exp)

    @property
    def row_response(self) -> np.ndarray:
        return np.array([u for _, u in self.rows], dtype=np.int64)

    @property
    def row_weight(self) -> np.ndarray:
        return self.internal_weights[[m for m, _ in self.rows]] if self.rows else np.zeros(0)

    def C(self, rho: float, p: int, d: int) -> np.ndarray:
        """C_d laid out as a (p, K+1) array matching ``B[:, :, d]``."""
        K = self.G.shape[1] - 1
        return assemble_C(rho, self.G_diag, self.I_diag, p, K, d).reshape(K + 1, p).T

    @classmethod
    def build(cls, K: int, tree: ResponseTree) -> GroupExpansion:
        tg = derive_groups(tree)
        I_exp, rows = build_response_expansion(tg.internal, tree.D, tg.internal_weights)
        sizes = [len(g) for g in tg.internal]
        ends = np.cumsum(sizes).astype(np.int64)
        starts = (ends - np.asarray(sizes, dtype=np.int64)).astype(np.int64)
        return cls(
            build_pliable_expansion(K),
            I_exp,
            tuple(rows),
            starts,
            ends,
            tg.internal_weights,
            tg.leaf_weights,
        )


def _shrink_groups(A, t, axes):
    """Group soft threshold of ``A`` with groups spanning ``axes``; ``t`` broadcasts."""
    nrm = np.sqrt(np.sum(A * A, axis=axes, keepdims=True))
    scale = np.where(nrm > t, 1.0 - t / np.where(nrm > 0, nrm, 1.0), 0.0)
    return A * scale


def nested_prox(A, lambda1, lambda2, lambda3, alpha, internal=(), internal_weights=(), leaf_weights=None):
    """Exact prox of the full penalty at ``A`` of shape (p, K+1, D).

    Every group of the penalty (ℓ1 singletons of θ, the θ_jd group, the whole
    B_jd group and the internal tree nodes) is nested in the next, so the
    prox is the composition of shrinkages from the smallest group outward.
    """
    A = np.array(A, dtype=np.float64)
    D = A.shape[2]
    leaf = np.ones(D) if leaf_weights is None else np.asarray(leaf_weights, dtype=np.float64)
    A[:, 1:] = soft_threshold(A[:, 1:], alpha * lambda3)
    A[:, 1:] = _shrink_groups(A[:, 1:], (1 - alpha) * lambda3, (1,))
    A = _shrink_groups(A, ((1 - alpha) * lambda3 + lambda2 * leaf)[None, None, :], (1,))
    order = sorted(range(len(internal)), key=lambda m: len(internal[m]))
    for m in order:
        idx = list(internal[m])
        A[:, :, idx] = _shrink_groups(A[:, :, idx], lambda1 * internal_weights[m], (1, 2))
    return A
