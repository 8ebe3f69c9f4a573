"""Response hierarchies for the tree-guided penalty.

A :class:`ResponseTree` is a rooted tree over response indices ``0..D-1``.
Every node defines a group of responses; leaves are singletons and internal
nodes are unions of their children, so any two groups are either nested or
disjoint.  Trees are built by complete-linkage agglomeration
(:func:`cluster_responses`) or loaded from nested JSON.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

WEIGHT_RULES = ("tree", "sqrt_size", "unit")


class TreeError(ValueError):
    """Raised for malformed trees or invalid clustering input."""


def _default_weight(size: int) -> float:
    return 1.0 if size == 1 else math.sqrt(size)


@dataclass(frozen=True)
class TreeNode:
    members: tuple[int, ...]
    height: float = 0.0
    weight: float = 1.0
    children: tuple[TreeNode, ...] = ()

    @property
    def kind(self) -> str:
        return "leaf" if not self.children else "internal"

    def to_dict(self) -> dict:
        return {
            "members": list(self.members),
            "height": float(self.height),
            "weight": float(self.weight),
            "children": [c.to_dict() for c in self.children],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> TreeNode:
        try:
            members = tuple(int(m) for m in doc["members"])
        except (KeyError, TypeError) as exc:
            raise TreeError(f"tree node is missing a 'members' list: {doc!r}") from exc
        children = tuple(cls.from_dict(c) for c in doc.get("children", []))
        weight = doc.get("weight")
        if weight is None:
            weight = _default_weight(len(members))
        return cls(members, float(doc.get("height", 0.0)), float(weight), children)


class TreeGroups(NamedTuple):
    """Penalty groups derived from a tree.

    ``leaf_weights[d]`` is the weight of the singleton group ``{d}``.
    """

    internal: list[tuple[int, ...]]
    internal_weights: np.ndarray
    leaf: list[tuple[int, ...]]
    leaf_weights: np.ndarray


@dataclass(frozen=True)
class ResponseTree:
    root: TreeNode
    nodes: tuple[TreeNode, ...] = field(init=False, repr=False)

    def __post_init__(self):
        nodes: list[TreeNode] = []
        _postorder(self.root, nodes)
        object.__setattr__(self, "nodes", tuple(nodes))
        self._validate()

    @property
    def D(self) -> int:
        return len(self.root.members)

    @property
    def internal_nodes(self) -> list[TreeNode]:
        return [n for n in self.nodes if n.children]

    @property
    def leaf_nodes(self) -> list[TreeNode]:
        return sorted((n for n in self.nodes if not n.children), key=lambda n: n.members[0])

    def _validate(self):
        D = self.D
        if sorted(self.root.members) != list(range(D)):
            raise TreeError(f"root members must be exactly 0..{D - 1}, got {sorted(self.root.members)}")
        seen = []
        for node in self.nodes:
            if not node.weight > 0:
                raise TreeError(f"node {list(node.members)} has non-positive weight {node.weight}")
            if len(set(node.members)) != len(node.members):
                raise TreeError(f"node {list(node.members)} repeats a member")
            if node.children:
                union = sorted(m for c in node.children for m in c.members)
                if union != sorted(node.members):
                    raise TreeError(f"node {list(node.members)} is not the disjoint union of its children")
            else:
                if len(node.members) != 1:
                    raise TreeError(f"leaf {list(node.members)} is not a singleton")
                seen.append(node.members[0])
        if sorted(seen) != list(range(D)):
            raise TreeError("leaves do not cover every response exactly once")

    def to_dict(self) -> dict:
        return self.root.to_dict()

    def to_json(self, path: str | Path | None = None) -> str:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text

    @classmethod
    def from_dict(cls, doc: dict) -> ResponseTree:
        return cls(TreeNode.from_dict(doc))

    @classmethod
    def from_json(cls, source: str | Path) -> ResponseTree:
        path = Path(source)
        text = path.read_text() if path.exists() else str(source)
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise TreeError(f"invalid tree JSON: {exc}") from exc
        return cls.from_dict(doc)

    @classmethod
    def single_leaf(cls) -> ResponseTree:
        return cls(TreeNode((0,), 0.0, 1.0))

    def permuted(self, perm: Sequence[int]) -> ResponseTree:
        """Relabel responses: old index ``d`` becomes ``perm[d]``."""

        def relabel(node: TreeNode) -> TreeNode:
            return TreeNode(
                tuple(int(perm[m]) for m in node.members),
                node.height,
                node.weight,
                tuple(relabel(c) for c in node.children),
            )

        return ResponseTree(relabel(self.root))


def _postorder(node: TreeNode, out: list[TreeNode]):
    for c in node.children:
        _postorder(c, out)
    out.append(node)


def cluster_responses(M, weight_rule: str = "sqrt_size") -> ResponseTree:
    """Complete-linkage agglomerative clustering of the columns of ``M``.

    Distances are Euclidean between columns.  Among pairs at the minimal
    linkage distance, the pair whose (smallest-member) indices are
    lexicographically smallest is merged first, so the result is fully
    deterministic.  Works on either the response matrix Y or a coefficient
    matrix with one column per response.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise TreeError("clustering input must be a 2-D matrix")
    D = M.shape[1]
    if D < 2:
        raise TreeError(f"need at least two columns to cluster, got {D}")
    if not np.all(np.isfinite(M)):
        raise TreeError("clustering input contains non-finite values")
    if weight_rule not in ("sqrt_size", "unit"):
        raise TreeError(f"unknown weight rule {weight_rule!r}")

    diff = M[:, :, None] - M[:, None, :]
    dist = np.sqrt(np.einsum("idk,idk->dk", diff, diff))

    def weight(size):
        return 1.0 if weight_rule == "unit" else _default_weight(size)

    clusters = [TreeNode((d,), 0.0, 1.0) for d in range(D)]
    link = dist.copy()
    np.fill_diagonal(link, np.inf)
    while len(clusters) > 1:
        n = len(clusters)
        best = None
        for a in range(n):
            for b in range(a + 1, n):
                cand = (link[a, b], a, b)
                if best is None or cand[0] < best[0]:
                    best = cand
        h, a, b = best
        left, right = clusters[a], clusters[b]
        members = tuple(sorted(left.members + right.members))
        merged = TreeNode(members, float(h), weight(len(members)), (left, right))
        new_row = np.maximum(link[a], link[b])
        keep = [i for i in range(n) if i not in (a, b)]
        nxt = np.full((n - 1, n - 1), np.inf)
        nxt[: n - 2, : n - 2] = link[np.ix_(keep, keep)]
        nxt[-1, : n - 2] = nxt[: n - 2, -1] = new_row[keep]
        clusters = [clusters[i] for i in keep] + [merged]
        # clusters stay ordered by smallest member so scan order is the tie-break
        order = np.argsort([c.members[0] for c in clusters], kind="stable")
        clusters = [clusters[i] for i in order]
        link = nxt[np.ix_(order, order)]
    return ResponseTree(clusters[0])


def derive_groups(tree: ResponseTree, weight_rule: str = "tree") -> TreeGroups:
    """Split a tree into internal-node groups (λ1 term) and leaf groups (λ2 term).

    ``weight_rule``: ``"tree"`` uses the weights stored on the nodes,
    ``"sqrt_size"`` uses sqrt(|G_m|) for internal nodes and 1 for leaves,
    ``"unit"`` sets every weight to 1.
    """
    if weight_rule not in WEIGHT_RULES:
        raise TreeError(f"unknown weight rule {weight_rule!r}; expected one of {WEIGHT_RULES}")

    def w(node):
        if weight_rule == "tree":
            return node.weight
        if weight_rule == "unit":
            return 1.0
        return _default_weight(len(node.members)) if node.children else 1.0

    internal = tree.internal_nodes
    leaves = tree.leaf_nodes
    return TreeGroups(
        [tuple(n.members) for n in internal],
        np.array([w(n) for n in internal], dtype=np.float64),
        [tuple(n.members) for n in leaves],
        np.array([w(n) for n in leaves], dtype=np.float64),
    )
