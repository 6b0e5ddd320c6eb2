"""Per-replicate method outcomes and simulation metrics."""
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Optional

logger = logging.getLogger(__name__)


@dataclass(kw_only=True, frozen=True)
class MethodOutcome:
    """Estimate and interval produced by one method in one replicate."""
    name: str
    estimate: float = math.nan
    lower: float = math.nan
    upper: float = math.nan
    parameters: dict[str, Any] = field(default_factory=dict)
    metadata: dict[str, Any] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return "error" not in self.metadata

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def covers(self, truth: float) -> bool:
        return self.lower <= truth <= self.upper


@dataclass(kw_only=True, frozen=True)
class ReplicateResult:
    """All method outcomes of one replicate together with its true population mean."""
    scenario: str
    replicate: int
    truth: float
    outcomes: dict[str, MethodOutcome]

    @staticmethod
    def from_outcomes(scenario: str, replicate: int, truth: float,
                      outcomes: list[MethodOutcome]) -> "ReplicateResult":
        return ReplicateResult(
            scenario=scenario,
            replicate=replicate,
            truth=truth,
            outcomes={outcome.name: outcome for outcome in outcomes},
        )

    def to_records(self) -> list[dict[str, Any]]:
        return [
            {
                "scenario": self.scenario,
                "replicate": self.replicate,
                "method": name,
                "truth": self.truth,
                "estimate": outcome.estimate,
                "lower": outcome.lower,
                "upper": outcome.upper,
                "error": outcome.metadata.get("error", ""),
            }
            for name, outcome in self.outcomes.items()
        ]


@dataclass(kw_only=True, frozen=True)
class MetricsRow:
    """Bias, RMSE and width are on the x100 scale; coverage is a percentage."""
    scenario: str
    method: str
    absolute_bias: float
    rmse: float
    coverage: float
    width: float
    replicates: int
    failures: int = 0

    @property
    def failure_rate(self) -> float:
        total = self.replicates + self.failures
        return self.failures / total if total else 0.0

    def to_record(self) -> dict[str, Any]:
        return {
            "scenario": self.scenario,
            "method": self.method,
            "absolute_bias": self.absolute_bias,
            "rmse": self.rmse,
            "coverage": self.coverage,
            "width": self.width,
            "replicates": self.replicates,
            "failures": self.failures,
            "failure_rate": self.failure_rate,
        }


@dataclass(frozen=True)
class MetricsTable:
    rows: tuple[MetricsRow, ...]

    def __len__(self) -> int:
        return len(self.rows)

    def row(self, method: str, scenario: Optional[str] = None) -> MetricsRow:
        for row in self.rows:
            if row.method == method and (scenario is None or row.scenario == scenario):
                return row
        raise KeyError(method)

    def to_records(self) -> list[dict[str, Any]]:
        return [row.to_record() for row in self.rows]
