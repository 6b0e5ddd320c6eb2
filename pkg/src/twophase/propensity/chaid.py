"""CHAID adjustment cells.

Within each node every predictor has its categories merged while some pair
is not significantly different in response rate; the predictor with the
smallest Bonferroni-adjusted chi-square p-value then splits the node.
Ordinal predictors only merge adjacent categories.
"""
import logging
from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional, Sequence

import numpy as np
from scipy.special import comb, stirling2
from scipy.stats import chi2

from ..dataset import ColumnKind, Table
from ..errors import InvalidConfig

logger = logging.getLogger(__name__)


@dataclass(kw_only=True, frozen=True)
class ChaidOptions:
    alpha_merge: float = 0.05
    alpha_split: float = 0.05
    min_node: int = 50
    min_child: int = 25
    max_depth: Optional[int] = None
    n_bins: int = 5

    def __post_init__(self):
        if not (0.0 < self.alpha_merge < 1.0 and 0.0 < self.alpha_split < 1.0):
            raise InvalidConfig("CHAID significance levels must lie in (0, 1)")
        if self.min_child < 1 or self.min_node < 1 or self.n_bins < 2:
            raise InvalidConfig("min_child and min_node must be >= 1 and n_bins >= 2")


@dataclass
class ChaidNode:
    rows: np.ndarray
    depth: int = 0
    var: int = -1
    groups: list[tuple[int, ...]] = field(default_factory=list)
    children: list["ChaidNode"] = field(default_factory=list)
    p_value: float = 1.0
    leaf_index: int = -1

    @property
    def is_leaf(self) -> bool:
        return not self.children


@dataclass(frozen=True)
class CellPartition:
    """Cell membership of every unit and per-cell counts."""
    cell_id: np.ndarray
    respondents: np.ndarray
    sizes: np.ndarray

    @property
    def n_cells(self) -> int:
        return len(self.sizes)

    @property
    def response_rates(self) -> np.ndarray:
        return self.respondents / self.sizes

    def unit_propensity(self) -> np.ndarray:
        return self.response_rates[self.cell_id]


@dataclass(frozen=True)
class ChaidTree:
    root: ChaidNode
    leaf_to_cell: np.ndarray
    partition: CellPartition

    def assign(self, codes: np.ndarray) -> np.ndarray:
        """Cell of each row of an integer code matrix; unseen categories follow the largest child."""
        out = np.empty(len(codes), dtype=np.int64)
        for i, row in enumerate(codes):
            node = self.root
            while not node.is_leaf:
                child = next((k for k, g in enumerate(node.groups) if row[node.var] in g), None)
                if child is None:
                    child = int(np.argmax([len(c.rows) for c in node.children]))
                node = node.children[child]
            out[i] = self.leaf_to_cell[node.leaf_index]
        return out


def pearson_chi2(table: np.ndarray) -> tuple[float, float]:
    """Pearson statistic and p-value of a k x 2 table; empty margins are dropped."""
    table = np.asarray(table, dtype=float)
    table = table[table.sum(axis=1) > 0][:, table.sum(axis=0) > 0]
    if table.shape[0] < 2 or table.shape[1] < 2:
        return 0.0, 1.0
    expected = table.sum(axis=1, keepdims=True) * table.sum(axis=0, keepdims=True) / table.sum()
    stat = float(np.sum((table - expected) ** 2 / expected))
    return stat, float(chi2.sf(stat, (table.shape[0] - 1) * (table.shape[1] - 1)))


def bonferroni_multiplier(n_categories: int, n_groups: int, ordinal: bool) -> float:
    if n_groups <= 1:
        return 1.0
    if ordinal:
        return float(comb(n_categories - 1, n_groups - 1, exact=True))
    return float(stirling2(n_categories, n_groups, exact=True))


def _counts(codes: np.ndarray, r: np.ndarray, group: tuple[int, ...]) -> list[float]:
    mask = np.isin(codes, group)
    hits = float(r[mask].sum())
    return [hits, float(mask.sum()) - hits]


def merge_categories(codes: np.ndarray, r: np.ndarray, ordinal: bool, alpha_merge: float) -> list[tuple[int, ...]]:
    """Merge the least different pair of groups until every remaining pair differs at ``alpha_merge``."""
    groups = [(int(c),) for c in np.unique(codes)]
    while len(groups) > 1:
        pairs = [(i, i + 1) for i in range(len(groups) - 1)] if ordinal else list(combinations(range(len(groups)), 2))
        best, best_p = None, -1.0
        for i, k in pairs:
            _, p = pearson_chi2(np.array([_counts(codes, r, groups[i]), _counts(codes, r, groups[k])]))
            if p > best_p:
                best, best_p = (i, k), p
        if best_p < alpha_merge:
            break
        i, k = best
        merged = tuple(sorted(groups[i] + groups[k]))
        groups = [g for j, g in enumerate(groups) if j not in (i, k)]
        groups.insert(i, merged)
    return groups


class ChaidBuilder:
    def __init__(self, codes: np.ndarray, r: np.ndarray, ordinal: Sequence[bool], opts: ChaidOptions):
        self.codes = codes
        self.r = r
        self.ordinal = list(ordinal)
        self.opts = opts
        self.leaves: list[ChaidNode] = []

    def _best_split(self, node: ChaidNode) -> Optional[tuple[int, list[tuple[int, ...]], float]]:
        best = None
        for var in range(self.codes.shape[1]):
            column = self.codes[node.rows, var]
            r = self.r[node.rows]
            n_categories = len(np.unique(column))
            if n_categories < 2:
                continue
            groups = merge_categories(column, r, self.ordinal[var], self.opts.alpha_merge)
            if len(groups) < 2:
                continue
            _, p = pearson_chi2(np.array([_counts(column, r, g) for g in groups]))
            adjusted = min(1.0, p * bonferroni_multiplier(n_categories, len(groups), self.ordinal[var]))
            if best is None or adjusted < best[2]:
                best = (var, groups, adjusted)
        return best

    def grow(self, node: ChaidNode) -> ChaidNode:
        opts = self.opts
        can_split = len(node.rows) >= opts.min_node and (opts.max_depth is None or node.depth < opts.max_depth)
        best = self._best_split(node) if can_split else None
        if best is not None and best[2] < opts.alpha_split:
            var, groups, p = best
            column = self.codes[node.rows, var]
            parts = [node.rows[np.isin(column, g)] for g in groups]
            if min(len(part) for part in parts) >= opts.min_child:
                node.var, node.groups, node.p_value = var, groups, p
                logger.debug("chaid: depth %d splits %d units on column %d into %d groups (p=%.3g)",
                             node.depth, len(node.rows), var, len(groups), p)
                node.children = [self.grow(ChaidNode(rows=part, depth=node.depth + 1)) for part in parts]
                return node
        node.leaf_index = len(self.leaves)
        self.leaves.append(node)
        return node


def _merge_empty_cells(root: ChaidNode, leaves: list[ChaidNode], r: np.ndarray) -> np.ndarray:
    """Map leaves to cells so that every cell has a respondent.

    A leaf without respondents joins the cell, among leaves under the same
    parent, whose response rate is closest; if none has respondents the
    search widens to the grandparent.
    """
    parent_of: dict[int, ChaidNode] = {}
    stack = [root]
    while stack:
        node = stack.pop()
        for child in node.children:
            parent_of[id(child)] = node
            stack.append(child)

    def leaves_under(node: ChaidNode) -> list[int]:
        if node.is_leaf:
            return [node.leaf_index]
        return [i for child in node.children for i in leaves_under(child)]

    cell_of = np.arange(len(leaves))
    hits = np.array([r[leaf.rows].sum() for leaf in leaves], dtype=float)
    sizes = np.array([len(leaf.rows) for leaf in leaves], dtype=float)
    for leaf in leaves:
        if hits[leaf.leaf_index] > 0:
            continue
        node = leaf
        while id(node) in parent_of:
            node = parent_of[id(node)]
            candidates = sorted({int(cell_of[i]) for i in leaves_under(node)} - {int(cell_of[leaf.leaf_index])})
            candidates = [c for c in candidates if hits[cell_of == c].sum() > 0]
            if candidates:
                rates = [hits[cell_of == c].sum() / sizes[cell_of == c].sum() for c in candidates]
                target = candidates[int(np.argmin(np.abs(rates)))]
                cell_of[cell_of == cell_of[leaf.leaf_index]] = target
                break
    _, relabelled = np.unique(cell_of, return_inverse=True)
    return relabelled


def chaid_tree(codes: np.ndarray, r: np.ndarray, ordinal: Sequence[bool], opts: ChaidOptions = ChaidOptions()) -> ChaidTree:
    codes = np.asarray(codes, dtype=np.int64)
    if codes.ndim == 1:
        codes = codes[:, None]
    r = np.asarray(r, dtype=float)
    builder = ChaidBuilder(codes, r, ordinal, opts)
    root = builder.grow(ChaidNode(rows=np.arange(len(r))))
    leaf_to_cell = _merge_empty_cells(root, builder.leaves, r)

    cell_id = np.empty(len(r), dtype=np.int64)
    for leaf in builder.leaves:
        cell_id[leaf.rows] = leaf_to_cell[leaf.leaf_index]
    n_cells = int(leaf_to_cell.max()) + 1
    partition = CellPartition(
        cell_id=cell_id,
        respondents=np.bincount(cell_id, weights=r, minlength=n_cells),
        sizes=np.bincount(cell_id, minlength=n_cells).astype(float),
    )
    logger.info("CHAID: %d leaves, %d cells after merging empty cells", len(builder.leaves), n_cells)
    return ChaidTree(root, leaf_to_cell, partition)


@dataclass(frozen=True)
class Discretizer:
    """Quantile bin edges for continuous columns; other columns map to category codes."""
    names: tuple[str, ...]
    edges: dict
    levels: dict

    @classmethod
    def fit(cls, table: Table, n_bins: int = 5) -> "Discretizer":
        edges, levels = {}, {}
        for name in table.names:
            kind = table.kind(name)
            if kind is ColumnKind.CONTINUOUS:
                quantiles = np.quantile(table.column(name), np.linspace(0, 1, n_bins + 1)[1:-1])
                edges[name] = np.unique(quantiles)
            elif kind is ColumnKind.CATEGORICAL:
                levels[name] = tuple(table.levels[name])
        return cls(tuple(table.names), edges, levels)

    @property
    def ordinal(self) -> tuple[bool, ...]:
        return tuple(name in self.edges for name in self.names)

    def transform(self, table: Table) -> np.ndarray:
        columns = []
        for name in self.names:
            values = table.column(name)
            if name in self.edges:
                columns.append(np.searchsorted(self.edges[name], values, side="left"))
            elif name in self.levels:
                index = {level: i for i, level in enumerate(self.levels[name])}
                columns.append(np.array([index.get(v, -1) for v in values]))
            else:
                columns.append(values.astype(np.int64))
        return np.column_stack(columns).astype(np.int64)


def chaid_cells(X: Table, r, opts: ChaidOptions = ChaidOptions(), ordinal: Optional[Sequence[str]] = None) -> CellPartition:
    """Adjustment cells for a table of categorical (or binary) predictors.

    ``ordinal`` names the columns whose categories are ordered; continuous
    columns are binned into quantiles and treated as ordinal.
    """
    discretizer = Discretizer.fit(X, opts.n_bins)
    flags = discretizer.ordinal
    if ordinal is not None:
        flags = tuple(f or name in ordinal for f, name in zip(flags, discretizer.names))
    return chaid_tree(discretizer.transform(X), r, flags, opts).partition
