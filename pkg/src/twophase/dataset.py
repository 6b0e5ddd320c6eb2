"""Tabular data model, survey design binding and result file I/O.

Tables hold unit-level covariates and outcomes; a DesignFrame holds the
stratum, cluster, weight and phase-II indicators that go with them. Both are
immutable once built. Rows are numbered from 1 (header excluded) in every
error message.
"""
import logging
import os
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd

from .errors import (
    ClusterSpansStrata,
    EmptyFile,
    InvalidRole,
    InvalidTable,
    IoError,
    MissingCovariate,
    NonPositiveWeight,
    ParseError,
    RespondentNotSelected,
    SchemaMismatch,
)

logger = logging.getLogger(__name__)

MISSING_TOKENS = frozenset({"", "NA"})


class ColumnKind(str, Enum):
    CONTINUOUS = "continuous"
    BINARY = "binary"
    CATEGORICAL = "categorical"


class DesignRole(str, Enum):
    STRATUM = "stratum"
    CLUSTER = "cluster"
    WEIGHT = "weight"
    PHASE2_SELECTED = "phase2_selected"
    PHASE2_RESPONDENT = "phase2_respondent"
    OUTCOME = "outcome"


@dataclass(kw_only=True, frozen=True)
class ColumnSpec:
    """Declared name and kind of one column; categorical columns may fix their level set."""
    name: str
    kind: ColumnKind
    levels: Optional[tuple] = None


Schema = Sequence[ColumnSpec]


def schema_from_kinds(kinds: Mapping[str, Union[str, ColumnKind]]) -> list[ColumnSpec]:
    return [ColumnSpec(name=name, kind=ColumnKind(kind)) for name, kind in kinds.items()]


def _readonly(values: np.ndarray) -> np.ndarray:
    values = np.array(values, copy=True)
    values.setflags(write=False)
    return values


@dataclass(frozen=True)
class Table:
    """Column-typed unit-level data. Missing values are NaN (category code -1)."""
    frame: pd.DataFrame
    kinds: Mapping[str, ColumnKind]
    levels: Mapping[str, tuple] = field(default_factory=dict)

    def __post_init__(self):
        frame = self.frame
        if len(frame.columns) == 0 or len(frame) == 0:
            raise InvalidTable("a table needs at least one column and one row")
        if frame.columns.duplicated().any():
            dupes = list(frame.columns[frame.columns.duplicated()])
            raise InvalidTable(f"duplicate column names: {dupes}")
        if set(frame.columns) != set(self.kinds):
            raise InvalidTable("column kinds do not match the column names")
        frame = frame.reset_index(drop=True).copy()
        levels = dict(self.levels)
        for name in frame.columns:
            kind = ColumnKind(self.kinds[name])
            if kind is ColumnKind.CATEGORICAL:
                col = frame[name]
                declared = levels.get(name)
                if declared is None:
                    present = col.dropna().unique()
                    declared = tuple(sorted(present.tolist()))
                observed = col.dropna()
                unknown = observed[~observed.isin(declared)]
                if len(unknown):
                    row = int(unknown.index[0]) + 1
                    raise ParseError(row, name, unknown.iloc[0], "not a declared level")
                levels[name] = tuple(declared)
                frame[name] = pd.Categorical(col, categories=list(declared))
            else:
                col = pd.to_numeric(frame[name], errors="raise").astype(float)
                if kind is ColumnKind.BINARY:
                    bad = col.notna() & ~col.isin([0.0, 1.0])
                    if bad.any():
                        row = int(np.flatnonzero(bad.to_numpy())[0]) + 1
                        raise ParseError(row, name, col[bad].iloc[0], "not 0 or 1")
                frame[name] = col
        object.__setattr__(self, "frame", frame)
        object.__setattr__(self, "kinds", {k: ColumnKind(v) for k, v in self.kinds.items()})
        object.__setattr__(self, "levels", levels)

    @classmethod
    def from_columns(cls, columns: Mapping[str, tuple], levels: Optional[Mapping[str, tuple]] = None) -> "Table":
        """Build a table from ``{name: (kind, values)}`` in the given order."""
        frame = pd.DataFrame({name: np.asarray(values) for name, (_, values) in columns.items()})
        kinds = {name: ColumnKind(kind) for name, (kind, _) in columns.items()}
        return cls(frame, kinds, dict(levels or {}))

    @property
    def n(self) -> int:
        return len(self.frame)

    @property
    def names(self) -> list[str]:
        return list(self.frame.columns)

    def kind(self, name: str) -> ColumnKind:
        return self.kinds[name]

    def column(self, name: str) -> np.ndarray:
        """Values of one column; categorical columns return their level values (NaN when missing)."""
        col = self.frame[name]
        if self.kinds[name] is ColumnKind.CATEGORICAL:
            return col.astype(object).where(col.notna(), np.nan).to_numpy()
        return col.to_numpy(dtype=float, copy=True)

    def codes(self, name: str) -> np.ndarray:
        """Integer category codes of a categorical column (-1 when missing)."""
        return self.frame[name].cat.codes.to_numpy(dtype=np.int64)

    def missing(self, name: str) -> np.ndarray:
        return self.frame[name].isna().to_numpy()

    def select(self, names: Iterable[str]) -> "Table":
        names = list(names)
        return Table(self.frame[names], {n: self.kinds[n] for n in names},
                     {n: self.levels[n] for n in names if n in self.levels})

    def drop(self, names: Iterable[str]) -> "Table":
        gone = set(names)
        return self.select([n for n in self.names if n not in gone])

    def take(self, rows: np.ndarray) -> "Table":
        """Subset of rows (boolean mask or integer positions)."""
        rows = np.asarray(rows)
        if rows.dtype == bool:
            rows = np.flatnonzero(rows)
        return Table(self.frame.iloc[rows], dict(self.kinds), dict(self.levels))

    def with_column(self, name: str, kind: Union[str, ColumnKind], values: Any,
                    levels: Optional[tuple] = None) -> "Table":
        frame = self.frame.copy()
        kind = ColumnKind(kind)
        frame[name] = np.asarray(values, dtype=object) if kind is ColumnKind.CATEGORICAL else np.asarray(values, dtype=float)
        kinds = {**self.kinds, name: kind}
        all_levels = {k: v for k, v in self.levels.items() if k != name}
        if levels is not None:
            all_levels[name] = tuple(levels)
        return Table(frame, kinds, all_levels)

    def to_frame(self) -> pd.DataFrame:
        return self.frame.copy()

    def to_records(self) -> list[dict[str, Any]]:
        return self.frame.astype(object).where(self.frame.notna(), None).to_dict(orient="records")


@dataclass(frozen=True)
class DesignFrame:
    """Survey design columns aligned with a Table's rows."""
    stratum_id: np.ndarray
    cluster_id: np.ndarray
    weight: np.ndarray
    phase2_selected: np.ndarray
    phase2_respondent: np.ndarray

    def __post_init__(self):
        n = len(self.weight)
        arrays = {
            "stratum_id": np.asarray(self.stratum_id, dtype=np.int64),
            "cluster_id": np.asarray(self.cluster_id, dtype=np.int64),
            "weight": np.asarray(self.weight, dtype=float),
            "phase2_selected": np.asarray(self.phase2_selected, dtype=np.int8),
            "phase2_respondent": np.asarray(self.phase2_respondent, dtype=np.int8),
        }
        if any(len(a) != n for a in arrays.values()) or n == 0:
            raise InvalidTable("design columns must be non-empty and of equal length")
        for name, values in arrays.items():
            object.__setattr__(self, name, _readonly(values))
        self.validate()

    def validate(self) -> None:
        bad_weight = np.flatnonzero(~(self.weight > 0))
        if len(bad_weight):
            row = int(bad_weight[0])
            raise NonPositiveWeight(row + 1, float(self.weight[row]))
        pairs = pd.DataFrame({"cluster": self.cluster_id, "stratum": self.stratum_id}).drop_duplicates()
        spans = pairs.groupby("cluster", sort=True)["stratum"].nunique()
        if (spans > 1).any():
            cluster = int(spans.index[spans > 1][0])
            strata = sorted(pairs.loc[pairs["cluster"] == cluster, "stratum"].tolist())
            raise ClusterSpansStrata(cluster, strata)
        orphan = np.flatnonzero((self.phase2_respondent == 1) & (self.phase2_selected != 1))
        if len(orphan):
            raise RespondentNotSelected(int(orphan[0]) + 1)

    @property
    def n(self) -> int:
        return len(self.weight)

    @property
    def n_strata(self) -> int:
        return len(np.unique(self.stratum_id))

    @property
    def n_clusters(self) -> int:
        return len(np.unique(self.cluster_id))

    @property
    def phase1_weight_total(self) -> float:
        return float(self.weight.sum())

    def take(self, rows: np.ndarray) -> "DesignFrame":
        rows = np.asarray(rows)
        return DesignFrame(self.stratum_id[rows], self.cluster_id[rows], self.weight[rows],
                           self.phase2_selected[rows], self.phase2_respondent[rows])


def _parse_column(raw: pd.Series, spec: ColumnSpec) -> pd.Series:
    missing = raw.isin(MISSING_TOKENS)
    if spec.kind is ColumnKind.CATEGORICAL:
        values = raw.where(~missing, np.nan)
        if spec.levels is None:
            return values
        lookup = {str(level): level for level in spec.levels}
        unknown = values.notna() & ~values.isin(list(lookup))
        if unknown.any():
            row = int(np.flatnonzero(unknown.to_numpy())[0])
            raise ParseError(row + 1, spec.name, raw.iloc[row], "not a declared level")
        return values.map(lambda v: lookup.get(v, np.nan) if isinstance(v, str) else np.nan)
    parsed = pd.to_numeric(raw.where(~missing, None), errors="coerce")
    bad = (~missing) & parsed.isna()
    if spec.kind is ColumnKind.BINARY:
        bad |= parsed.notna() & ~parsed.isin([0.0, 1.0])
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0])
        reason = "not 0 or 1" if spec.kind is ColumnKind.BINARY else "not numeric"
        raise ParseError(row + 1, spec.name, raw.iloc[row], reason)
    return parsed.astype(float)


def load_table(path: Union[str, Path], schema: Schema) -> Table:
    """Read a UTF-8 CSV file with a mandatory header and validate it against ``schema``."""
    path = Path(path)
    if path.stat().st_size == 0:
        raise EmptyFile(path)
    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False, na_filter=False, encoding="utf-8")
    except pd.errors.EmptyDataError:
        raise EmptyFile(path) from None
    if len(raw) == 0:
        raise EmptyFile(path)

    names = [spec.name for spec in schema]
    missing = [n for n in names if n not in raw.columns]
    extra = [c for c in raw.columns if c not in names]
    if missing or extra:
        raise SchemaMismatch(missing, extra)

    columns = {spec.name: _parse_column(raw[spec.name], spec) for spec in schema}
    frame = pd.DataFrame(columns)
    levels = {spec.name: tuple(spec.levels) for spec in schema if spec.levels is not None}
    table = Table(frame, {spec.name: spec.kind for spec in schema}, levels)
    logger.info("Loaded %d rows x %d columns from %s", table.n, len(names), path)
    return table


def infer_schema(path: Union[str, Path], categorical: Iterable[str] = ()) -> Schema:
    """Guess column kinds from a CSV: 0/1 columns are binary, numeric ones continuous, the rest categorical."""
    path = Path(path)
    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False, na_filter=False, encoding="utf-8")
    except pd.errors.EmptyDataError:
        raise EmptyFile(path) from None
    forced = set(categorical)
    schema = []
    for name in raw.columns:
        present = raw[name][~raw[name].isin(MISSING_TOKENS)]
        numeric = pd.to_numeric(present, errors="coerce")
        if name in forced or numeric.isna().any():
            kind = ColumnKind.CATEGORICAL
        elif numeric.isin([0.0, 1.0]).all():
            kind = ColumnKind.BINARY
        else:
            kind = ColumnKind.CONTINUOUS
        schema.append(ColumnSpec(name=name, kind=kind))
    return schema


def _integer_ids(table: Table, name: str, role: DesignRole) -> np.ndarray:
    kind = table.kind(name)
    if kind is ColumnKind.CATEGORICAL:
        values = table.column(name)
        try:
            return np.array([int(v) for v in values], dtype=np.int64)
        except (TypeError, ValueError):
            return table.codes(name) + 1
    values = table.column(name)
    if kind is ColumnKind.CONTINUOUS and not np.all(np.equal(np.mod(values, 1), 0)):
        raise InvalidRole(role.value, name, "must be categorical or integer-valued")
    return values.astype(np.int64)


def bind_design(table: Table, roles: Mapping[str, Union[str, DesignRole]]) -> tuple[DesignFrame, Table]:
    """Split design columns from covariates and validate the design.

    ``roles`` maps column name -> role. Stratum, cluster, weight and
    phase2_selected are required. Without a phase2_respondent column, a
    selected unit with an observed outcome counts as a respondent. The outcome
    column (if any) stays in the returned covariate table.
    """
    by_role: dict[DesignRole, str] = {}
    for column, role in roles.items():
        try:
            role = DesignRole(role)
        except ValueError:
            raise InvalidRole(str(role), column, "unknown role") from None
        if column not in table.names:
            raise InvalidRole(role.value, column, "column not in table")
        if role in by_role:
            raise InvalidRole(role.value, column, f"already bound to {by_role[role]!r}")
        by_role[role] = column

    for required in (DesignRole.STRATUM, DesignRole.CLUSTER, DesignRole.WEIGHT, DesignRole.PHASE2_SELECTED):
        if required not in by_role:
            raise InvalidRole(required.value, None, "required role is not bound")

    weight_col = by_role[DesignRole.WEIGHT]
    if table.kind(weight_col) is not ColumnKind.CONTINUOUS:
        raise InvalidRole(DesignRole.WEIGHT.value, weight_col, "weight column must be continuous")

    for role, column in by_role.items():
        if role is not DesignRole.OUTCOME and table.missing(column).any():
            raise MissingCovariate(column, int(np.flatnonzero(table.missing(column))[0]) + 1)

    selected = table.column(by_role[DesignRole.PHASE2_SELECTED])
    outcome_col = by_role.get(DesignRole.OUTCOME)
    if DesignRole.PHASE2_RESPONDENT in by_role:
        respondent = table.column(by_role[DesignRole.PHASE2_RESPONDENT])
    elif outcome_col is not None:
        respondent = ((selected == 1) & ~table.missing(outcome_col)).astype(float)
    else:
        respondent = selected.copy()

    design = DesignFrame(
        stratum_id=_integer_ids(table, by_role[DesignRole.STRATUM], DesignRole.STRATUM),
        cluster_id=_integer_ids(table, by_role[DesignRole.CLUSTER], DesignRole.CLUSTER),
        weight=table.column(weight_col),
        phase2_selected=selected,
        phase2_respondent=respondent,
    )

    design_columns = [c for r, c in by_role.items() if r is not DesignRole.OUTCOME]
    covariates = table.drop(design_columns)
    for name in covariates.names:
        if name != outcome_col and covariates.missing(name).any():
            raise MissingCovariate(name, int(np.flatnonzero(covariates.missing(name))[0]) + 1)
    logger.info("Bound design: %d units, %d strata, %d clusters", design.n, design.n_strata, design.n_clusters)
    return design, covariates


def _records_of(records: Any) -> list[dict[str, Any]]:
    if hasattr(records, "to_records"):
        return list(records.to_records())
    rows = []
    for record in records:
        if hasattr(record, "to_record"):
            rows.append(dict(record.to_record()))
        else:
            rows.append(dict(record))
    return rows


def write_results(records: Any, path: Union[str, Path], format: str = "csv") -> None:
    """Write metrics tables, MI results or plain record lists as CSV or JSON.

    Column order follows the first record; reals keep 17 significant digits
    in CSV and 15 in JSON so a re-load reproduces them.
    """
    path = Path(path)
    if format not in ("csv", "json"):
        raise IoError(path, f"unknown format {format!r}")
    rows = _records_of(records)
    if not rows:
        raise IoError(path, "no records to write")
    frame = pd.DataFrame(rows, columns=list(rows[0].keys()))
    try:
        if path.parent and not path.parent.exists():
            os.makedirs(path.parent, exist_ok=True)
        if format == "csv":
            frame.to_csv(path, index=False, float_format="%.17g", lineterminator="\n", encoding="utf-8")
        else:
            path.write_text(frame.to_json(orient="records", double_precision=15) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoError(path, str(exc)) from exc
    logger.info("Wrote %d records to %s", len(frame), path)
