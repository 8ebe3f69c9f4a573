import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from treeplasso.model import DesignData  # noqa: E402
from treeplasso.tree import ResponseTree, TreeNode  # noqa: E402


def random_design(rng, N, p, K, D=1, signal=True):
    X = rng.standard_normal((N, p))
    Z = rng.standard_normal((N, K))
    Y = rng.standard_normal((N, D))
    if signal:
        Y += 1.5 * X[:, :1] - X[:, 1:2] * Z[:, :1]
    return DesignData(X - X.mean(0), Z, Y - Y.mean(0))


def two_node_tree():
    """D=3 tree with internal nodes {0,1} and {0,1,2}."""
    leaves = [TreeNode((d,), 0.0, 1.0) for d in range(3)]
    inner = TreeNode((0, 1), 1.0, np.sqrt(2), (leaves[0], leaves[1]))
    return ResponseTree(TreeNode((0, 1, 2), 2.0, np.sqrt(3), (inner, leaves[2])))


def tree_pairs(tree):
    from treeplasso.tree import derive_groups

    g = derive_groups(tree)
    return list(zip(g.internal, g.internal_weights)), g.leaf_weights


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


# one line per acceptance check, echoed in the terminal summary
_ACCEPTANCE = []


@pytest.fixture
def verdict():
    def record(label, ok, detail=""):
        line = f"{label}: {'PASS' if ok else 'FAIL'}" + (f"  ({detail})" if detail else "")
        _ACCEPTANCE.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
