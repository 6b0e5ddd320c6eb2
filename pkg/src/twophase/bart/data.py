"""Numeric covariate matrices for the tree sampler."""
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from ..dataset import ColumnKind, Table
from ..errors import ColumnMismatch, NonFiniteInput


@dataclass(frozen=True)
class CovariateMatrix:
    """Covariates as floats; categorical columns hold indices into ``levels`` (-1 = unseen level)."""
    values: np.ndarray
    names: tuple[str, ...]
    categorical: tuple[bool, ...]
    levels: tuple[Optional[tuple], ...]

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    @classmethod
    def from_table(cls, table: Table, reference: Optional["CovariateMatrix"] = None) -> "CovariateMatrix":
        names = tuple(table.names)
        if reference is not None and names != reference.names:
            raise ColumnMismatch(f"expected columns {list(reference.names)}, got {list(names)}")
        columns, categorical, levels = [], [], []
        for j, name in enumerate(names):
            if table.missing(name).any():
                raise NonFiniteInput(f"column {name!r} has missing values")
            if table.kind(name) is ColumnKind.CATEGORICAL:
                known = reference.levels[j] if reference is not None else table.levels[name]
                if reference is not None and not reference.categorical[j]:
                    raise ColumnMismatch(f"column {name!r} was not categorical in training")
                index = {level: i for i, level in enumerate(known)}
                columns.append(np.array([index.get(v, -1) for v in table.column(name)], dtype=float))
                categorical.append(True)
                levels.append(tuple(known))
            else:
                if reference is not None and reference.categorical[j]:
                    raise ColumnMismatch(f"column {name!r} was categorical in training")
                columns.append(table.column(name))
                categorical.append(False)
                levels.append(None)
        values = np.column_stack(columns)
        if not np.all(np.isfinite(values)):
            raise NonFiniteInput("covariates contain non-finite values")
        return cls(values, names, tuple(categorical), tuple(levels))

    @classmethod
    def from_array(cls, values: np.ndarray, names: Optional[list[str]] = None) -> "CovariateMatrix":
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if not np.all(np.isfinite(values)):
            raise NonFiniteInput("covariates contain non-finite values")
        p = values.shape[1]
        names = tuple(names or [f"v{j}" for j in range(p)])
        return cls(values, names, (False,) * p, (None,) * p)


def as_covariates(X: Union[Table, CovariateMatrix, np.ndarray],
                  reference: Optional[CovariateMatrix] = None) -> CovariateMatrix:
    if isinstance(X, CovariateMatrix):
        if reference is not None and X.names != reference.names:
            raise ColumnMismatch(f"expected columns {list(reference.names)}, got {list(X.names)}")
        return X
    if isinstance(X, Table):
        return CovariateMatrix.from_table(X, reference)
    matrix = CovariateMatrix.from_array(X, list(reference.names) if reference is not None else None)
    if reference is not None and matrix.p != reference.p:
        raise ColumnMismatch(f"expected {reference.p} columns, got {matrix.p}")
    return matrix
