"""Synthetic finite population: strata of clusters, covariates, cluster intercepts and outcome."""
import logging
from dataclasses import dataclass

import numpy as np

from .dataset import ColumnKind, Table
from .errors import InvalidConfig

logger = logging.getLogger(__name__)

OUTCOME = "y"


def continuous_names(n: int) -> list[str]:
    return [f"x{i}" for i in range(1, n + 1)]


def binary_names(n: int) -> list[str]:
    return [f"z{i}" for i in range(1, n + 1)]


@dataclass(kw_only=True, frozen=True)
class PopulationConfig:
    strata_cluster_counts: tuple[int, ...] = (25, 20, 15, 10)
    cluster_size_mean: float = 200.0
    cluster_size_bounds: tuple[int, int] = (100, 300)
    n_continuous: int = 2
    n_binary: int = 3
    intercept: float = 2.47
    random_intercept_sd: float = 1.0
    noise_sd: float = 1.0
    # test hooks: (0, 0) and 0.0 force every covariate to zero
    binary_prevalence_range: tuple[float, float] = (0.4, 0.6)
    continuous_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not self.strata_cluster_counts or any(c < 1 for c in self.strata_cluster_counts):
            raise InvalidConfig(f"every stratum needs at least one cluster: {self.strata_cluster_counts}")
        if self.n_continuous < 2 or self.n_binary < 3:
            raise InvalidConfig("the outcome model needs x1, x2 and z1, z2, z3 (n_continuous >= 2, n_binary >= 3)")
        low, high = self.cluster_size_bounds
        if not 1 <= low <= high:
            raise InvalidConfig(f"invalid cluster size bounds {self.cluster_size_bounds}")
        if self.cluster_size_mean <= 0:
            raise InvalidConfig("cluster_size_mean must be positive")
        p_low, p_high = self.binary_prevalence_range
        if not 0.0 <= p_low <= p_high <= 1.0:
            raise InvalidConfig(f"invalid prevalence range {self.binary_prevalence_range}")
        if self.random_intercept_sd < 0 or self.noise_sd < 0 or self.continuous_scale < 0:
            raise InvalidConfig("standard deviations must be non-negative")


@dataclass(frozen=True)
class Population:
    table: Table
    stratum_id: np.ndarray
    cluster_id: np.ndarray
    cluster_intercepts: np.ndarray
    cluster_stratum: np.ndarray
    cluster_sizes: np.ndarray
    binary_prevalence: np.ndarray
    config: PopulationConfig

    @property
    def size(self) -> int:
        return self.table.n

    @property
    def n_clusters(self) -> int:
        return len(self.cluster_sizes)

    def stratum_cluster_sizes(self, stratum: int) -> np.ndarray:
        return self.cluster_sizes[self.cluster_stratum == stratum]

    def to_table(self) -> Table:
        return (self.table
                .with_column("stratum", ColumnKind.CATEGORICAL, self.stratum_id)
                .with_column("cluster", ColumnKind.CATEGORICAL, self.cluster_id))


def truncated_exponential(mean: float, low: float, high: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """Exponential(mean) draws restricted to [low, high] by rejection."""
    out = np.empty(0)
    while len(out) < size:
        draws = rng.exponential(mean, size=max(4 * size, 16))
        out = np.concatenate([out, draws[(draws >= low) & (draws <= high)]])
    return out[:size]


def generate_population(config: PopulationConfig) -> Population:
    rng = np.random.default_rng(np.random.SeedSequence(config.seed))
    low, high = config.cluster_size_bounds

    counts = np.asarray(config.strata_cluster_counts)
    n_clusters = int(counts.sum())
    cluster_stratum = np.repeat(np.arange(1, len(counts) + 1), counts)
    sizes = np.rint(truncated_exponential(config.cluster_size_mean, low, high, n_clusters, rng)).astype(np.int64)
    intercepts = rng.normal(0.0, config.random_intercept_sd, size=n_clusters)

    cluster_of_unit = np.repeat(np.arange(n_clusters), sizes)
    n = len(cluster_of_unit)
    prevalence = rng.uniform(*config.binary_prevalence_range, size=config.n_binary)
    x = config.continuous_scale * rng.standard_normal((n, config.n_continuous))
    z = (rng.random((n, config.n_binary)) < prevalence).astype(float)
    noise = rng.normal(0.0, config.noise_sd, size=n)

    q = intercepts[cluster_of_unit]
    y = (config.intercept + q
         - 2.0 * x[:, 0] + x[:, 1] ** 2
         + 2.0 * z[:, 0] - z[:, 1] - 2.0 * z[:, 2]
         + x[:, 0] * z[:, 0]
         + noise)

    columns = {}
    for j, name in enumerate(continuous_names(config.n_continuous)):
        columns[name] = (ColumnKind.CONTINUOUS, x[:, j])
    for j, name in enumerate(binary_names(config.n_binary)):
        columns[name] = (ColumnKind.BINARY, z[:, j])
    columns[OUTCOME] = (ColumnKind.CONTINUOUS, y)

    pop = Population(
        table=Table.from_columns(columns),
        stratum_id=cluster_stratum[cluster_of_unit],
        cluster_id=cluster_of_unit + 1,
        cluster_intercepts=intercepts,
        cluster_stratum=cluster_stratum,
        cluster_sizes=sizes,
        binary_prevalence=prevalence,
        config=config,
    )
    logger.info("Generated population: N=%d, %d clusters in %d strata", n, n_clusters, len(counts))
    return pop


def true_mean(pop: Population) -> float:
    y = pop.table.column(OUTCOME)
    return float(np.sum(y) / len(y))
