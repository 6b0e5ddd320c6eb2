"""Binary regression trees: structure, split rules and evaluation."""
from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np


@dataclass(eq=False, slots=True)
class TreeNode:
    """A leaf (``left is None``) carrying ``mu``, or an internal node carrying a split rule.

    Continuous rules send ``x <= threshold`` left; categorical rules send the
    codes in ``left_levels`` left. ``rows`` holds training row indices while a
    tree is being sampled and is dropped from retained draws.
    """
    depth: int = 0
    mu: float = 0.0
    var: int = -1
    threshold: float = 0.0
    left_levels: Optional[np.ndarray] = None
    left: Optional["TreeNode"] = None
    right: Optional["TreeNode"] = None
    parent: Optional["TreeNode"] = field(default=None, repr=False)
    rows: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    @property
    def is_nog(self) -> bool:
        """Internal node whose children are both leaves."""
        return not self.is_leaf and self.left.is_leaf and self.right.is_leaf

    def goes_left(self, column: np.ndarray) -> np.ndarray:
        if self.left_levels is None:
            return column <= self.threshold
        return np.isin(column, self.left_levels)

    def set_rule(self, var: int, threshold: float = 0.0, left_levels: Optional[np.ndarray] = None) -> None:
        self.var = var
        self.threshold = threshold
        self.left_levels = left_levels


def iter_nodes(root: TreeNode) -> Iterator[TreeNode]:
    stack = [root]
    while stack:
        node = stack.pop()
        yield node
        if not node.is_leaf:
            stack.append(node.right)
            stack.append(node.left)


def leaves(root: TreeNode) -> list[TreeNode]:
    return [node for node in iter_nodes(root) if node.is_leaf]


def nog_nodes(root: TreeNode) -> list[TreeNode]:
    return [node for node in iter_nodes(root) if node.is_nog]


def tree_depth(root: TreeNode) -> int:
    return max(node.depth for node in iter_nodes(root))


def freeze(root: TreeNode) -> TreeNode:
    """Copy of the tree without training rows or parent links."""
    copy = TreeNode(depth=root.depth, mu=root.mu, var=root.var, threshold=root.threshold,
                    left_levels=root.left_levels)
    if not root.is_leaf:
        copy.left = freeze(root.left)
        copy.right = freeze(root.right)
    return copy


def evaluate(root: TreeNode, X: np.ndarray) -> np.ndarray:
    """Leaf value of every row of X."""
    out = np.empty(X.shape[0])
    stack = [(root, np.arange(X.shape[0]))]
    while stack:
        node, idx = stack.pop()
        if node.is_leaf:
            out[idx] = node.mu
            continue
        mask = node.goes_left(X[idx, node.var])
        stack.append((node.left, idx[mask]))
        stack.append((node.right, idx[~mask]))
    return out


def draw_rule(node: TreeNode, X: np.ndarray, categorical: tuple[bool, ...],
              rng: np.random.Generator) -> Optional[tuple[int, float, Optional[np.ndarray]]]:
    """Uniform split variable among those not constant in the node, then a uniform rule.

    Continuous rules pick a threshold among the node's observed values except
    the largest; categorical rules pick a uniformly random nonempty proper
    subset of the levels present. Returns None when no variable can split.
    """
    rows = node.rows
    for var in rng.permutation(X.shape[1]):
        column = X[rows, var]
        if column.min() == column.max():
            continue
        values = np.unique(column)
        if not categorical[var]:
            return int(var), float(values[rng.integers(len(values) - 1)]), None
        while True:
            pick = rng.random(len(values)) < 0.5
            if 0 < pick.sum() < len(values):
                return int(var), 0.0, values[pick]
    return None


def split_rows(node: TreeNode, X: np.ndarray, var: int, threshold: float,
               left_levels: Optional[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    column = X[node.rows, var]
    mask = column <= threshold if left_levels is None else np.isin(column, left_levels)
    return node.rows[mask], node.rows[~mask]
