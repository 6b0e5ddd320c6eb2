"""Exception and warning types raised across the package."""
from typing import Any, Optional


class TwoPhaseError(Exception):
    """Base class for every error raised by twophase."""


class DataError(TwoPhaseError):
    """Problems with ingested tables or survey design columns."""


class ConfigError(TwoPhaseError):
    """An options object or command-line input is invalid."""


class SamplingError(TwoPhaseError):
    """Sample selection could not be carried out."""


class ModelError(TwoPhaseError):
    """A model (BART, logistic, Lasso, CHAID) could not be fitted or evaluated."""


class EstimationError(TwoPhaseError):
    """Point or variance estimation failed."""


class SimulationError(TwoPhaseError):
    """The simulation harness could not produce results."""


# dataset

class SchemaMismatch(DataError):
    def __init__(self, missing: list[str], extra: list[str]):
        self.missing = list(missing)
        self.extra = list(extra)
        super().__init__(f"header does not match schema (missing={self.missing}, extra={self.extra})")


class ParseError(DataError):
    def __init__(self, row: int, column: str, value: Any, reason: str = "not a valid value"):
        self.row = row
        self.column = column
        self.value = value
        super().__init__(f"row {row}, column {column!r}: {value!r} is {reason}")


class EmptyFile(DataError):
    def __init__(self, path: Any):
        self.path = path
        super().__init__(f"{path} contains no header or no data rows")


class InvalidTable(DataError):
    """A Table invariant (length, unique names, level set) does not hold."""


class InvalidRole(DataError):
    def __init__(self, role: str, column: Optional[str], reason: str):
        self.role = role
        self.column = column
        super().__init__(f"role {role!r} -> column {column!r}: {reason}")


class NonPositiveWeight(DataError):
    def __init__(self, row: int, value: float):
        self.row = row
        self.value = value
        super().__init__(f"weight in row {row} is not positive ({value!r})")


class ClusterSpansStrata(DataError):
    def __init__(self, cluster_id: int, strata: list[int]):
        self.cluster_id = cluster_id
        self.strata = list(strata)
        super().__init__(f"cluster {cluster_id} appears in strata {self.strata}")


class RespondentNotSelected(DataError):
    def __init__(self, row: int):
        self.row = row
        super().__init__(f"row {row} is a phase-II respondent but was not selected for phase II")


class MissingCovariate(DataError):
    def __init__(self, column: str, row: Optional[int] = None):
        self.column = column
        self.row = row
        where = f" (row {row})" if row is not None else ""
        super().__init__(f"covariate {column!r} is missing{where}")


class IoError(DataError):
    def __init__(self, path: Any, reason: str):
        self.path = path
        super().__init__(f"cannot write {path}: {reason}")


# popgen / config

class InvalidConfig(ConfigError):
    pass


# sampling

class TooManyDraws(SamplingError):
    def __init__(self, stratum: int, draws: int, available: int):
        self.stratum = stratum
        self.draws = draws
        self.available = available
        super().__init__(f"stratum {stratum}: {draws} draws requested but only {available} clusters")


class InvalidProbability(SamplingError):
    def __init__(self, value: float):
        self.value = value
        super().__init__(f"selection probability must lie in (0, 1], got {value!r}")


# bart

class NonFiniteInput(ModelError):
    pass


class InsufficientData(ModelError):
    pass


class SingleClass(ModelError):
    pass


class SingleGroup(ModelError):
    pass


class ColumnMismatch(ModelError):
    pass


class IndexOutOfRange(ModelError):
    pass


# propensity

class Separation(ModelError):
    def __init__(self, coefficients: Any = None):
        self.coefficients = coefficients
        super().__init__("logistic fit diverged (complete or quasi-complete separation)")


class SingularDesign(ModelError):
    pass


class NonPositiveInput(ModelError):
    pass


# estimators

class EmptyInput(EstimationError):
    pass


class SingletonStratumCluster(EstimationError):
    def __init__(self, stratum_id: int):
        self.stratum_id = stratum_id
        super().__init__(f"stratum {stratum_id} has a single sampled cluster")


class NonPositiveDf(EstimationError):
    def __init__(self, df: float):
        self.df = df
        super().__init__(f"design degrees of freedom must be positive, got {df}")


class InvalidLevel(EstimationError):
    def __init__(self, level: float):
        self.level = level
        super().__init__(f"confidence level must lie in (0, 1), got {level!r}")


# mi

class ChainTooShort(EstimationError):
    def __init__(self, requested: int, available: int):
        self.requested = requested
        self.available = available
        super().__init__(f"{requested} imputations requested but the chain holds {available} draws")


class CovariateMismatch(EstimationError):
    pass


# simulation

class NoSuccessfulReplicates(SimulationError):
    def __init__(self, method: str):
        self.method = method
        super().__init__(f"method {method!r} has no successful replicate")


# warnings

class DegenerateResponse(UserWarning):
    """The response is constant; the error-variance prior falls back to its floor."""


class DegenerateBetween(UserWarning):
    """All imputations agree; the Rubin degrees of freedom are capped."""
