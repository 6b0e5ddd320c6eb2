"""Two-phase sample selection.

Phase I: PPS selection of clusters within strata, every unit of a selected
cluster invited, unit-level response. Phase II: Bernoulli subsampling of the
phase-I respondents followed by scenario-specific response.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit

from .dataset import DesignFrame, Table
from .errors import InvalidConfig, InvalidProbability, MissingCovariate, TooManyDraws
from .popgen import OUTCOME, Population, binary_names, continuous_names, true_mean
from .propensity.logistic import fit_logistic, logistic_predict
from .streams import stream

logger = logging.getLogger(__name__)


class Scenario(str, Enum):
    S1 = "S1"
    S2 = "S2"
    S3 = "S3"
    S4 = "S4"


SCENARIO_DIMENSIONS = {
    Scenario.S1: (2, 3),
    Scenario.S2: (10, 10),
    Scenario.S3: (10, 10),
    Scenario.S4: (10, 10),
}


@dataclass(kw_only=True, frozen=True)
class ScenarioConfig:
    scenario: Scenario = Scenario.S1
    n_continuous: Optional[int] = None
    n_binary: Optional[int] = None
    phase2_selection_prob: float = 0.5
    draws_per_stratum: tuple[int, ...] = (10, 8, 6, 4)
    phase1_weights_adjust_nonresponse: bool = True

    def __post_init__(self):
        scenario = self.scenario
        if not isinstance(scenario, Scenario):
            try:
                scenario = Scenario(str(scenario).upper())
            except ValueError:
                raise InvalidConfig(f"unknown scenario {self.scenario!r}") from None
        object.__setattr__(self, "scenario", scenario)
        l1, l2 = SCENARIO_DIMENSIONS[scenario]
        if self.n_continuous is None:
            object.__setattr__(self, "n_continuous", l1)
        if self.n_binary is None:
            object.__setattr__(self, "n_binary", l2)
        if (self.n_continuous, self.n_binary) != (l1, l2):
            raise InvalidConfig(f"{scenario.value} uses L1={l1}, L2={l2}; got {self.n_continuous}/{self.n_binary}")
        if not 0.0 < self.phase2_selection_prob <= 1.0:
            raise InvalidProbability(self.phase2_selection_prob)

    @property
    def high_dimensional(self) -> bool:
        return self.scenario is not Scenario.S1

    @property
    def covariate_names(self) -> list[str]:
        return continuous_names(self.n_continuous) + binary_names(self.n_binary)


@dataclass(frozen=True)
class TwoPhaseSample:
    """Phase-I respondents with the outcome masked outside the phase-II respondents."""
    table: Table
    design: DesignFrame
    true_phase2_propensity: np.ndarray
    benchmark_outcome: np.ndarray
    phase2_selection_prob: float
    population_mean: float
    scenario: ScenarioConfig

    @property
    def covariate_names(self) -> list[str]:
        return [n for n in self.table.names if n != OUTCOME]

    @property
    def outcome(self) -> np.ndarray:
        return self.table.column(OUTCOME)


def inclusion_probabilities(sizes: np.ndarray, n: int) -> np.ndarray:
    """PPS inclusion probabilities with certainty units removed and the rest renormalised."""
    sizes = np.asarray(sizes, dtype=float)
    pi = np.zeros(len(sizes))
    certain = np.zeros(len(sizes), dtype=bool)
    remaining = n
    while remaining > 0:
        rest = np.flatnonzero(~certain)
        p = remaining * sizes[rest] / sizes[rest].sum()
        newly = rest[p >= 1.0 - 1e-12]
        if len(newly) == 0:
            pi[rest] = p
            break
        certain[newly] = True
        remaining -= len(newly)
    pi[certain] = 1.0
    return pi


def systematic_pps(sizes: np.ndarray, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Systematic PPS on a random ordering; returns (selected positions, inclusion probabilities)."""
    pi = inclusion_probabilities(sizes, n)
    chosen = np.flatnonzero(pi >= 1.0)
    m = n - len(chosen)
    if m > 0:
        order = rng.permutation(np.flatnonzero(pi < 1.0))
        cumulative = np.cumsum(pi[order])
        points = rng.uniform() + np.arange(m)
        picks = np.minimum(np.searchsorted(cumulative, points, side="right"), len(order) - 1)
        chosen = np.concatenate([chosen, order[picks]])
    return np.sort(chosen), pi


def pps_select_clusters(pop: Population, draws_per_stratum: Sequence[int],
                        rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Select clusters per stratum with probability proportional to size.

    Returns the selected (global) cluster ids and their base weights 1/pi.
    """
    strata = np.unique(pop.cluster_stratum)
    if len(draws_per_stratum) != len(strata):
        raise InvalidConfig(f"{len(draws_per_stratum)} draw counts for {len(strata)} strata")
    ids, weights = [], []
    for h, n_h in zip(strata, draws_per_stratum):
        members = np.flatnonzero(pop.cluster_stratum == h)
        if n_h > len(members) or n_h < 1:
            raise TooManyDraws(int(h), int(n_h), len(members))
        picks, pi = systematic_pps(pop.cluster_sizes[members], int(n_h), rng)
        ids.append(members[picks] + 1)
        weights.append(1.0 / pi[picks])
    return np.concatenate(ids), np.concatenate(weights)


def _require(units: Table, names: Sequence[str]) -> None:
    for name in names:
        if name not in units.names:
            raise MissingCovariate(name)
        if units.missing(name).any():
            raise MissingCovariate(name, int(np.flatnonzero(units.missing(name))[0]) + 1)


def phase1_response_probability(units: Table) -> np.ndarray:
    _require(units, ("z1", "z2", "z3"))
    z1, z2, z3 = (units.column(n) for n in ("z1", "z2", "z3"))
    return expit(-1.0 + 2.0 * z1 + 2.0 * z2 - z3)


def phase1_response(units: Table, rng: np.random.Generator) -> np.ndarray:
    prob = phase1_response_probability(units)
    return (rng.random(len(prob)) < prob).astype(np.int8)


def phase2_select(n: int, p: float, rng: np.random.Generator) -> np.ndarray:
    if not 0.0 < p <= 1.0:
        raise InvalidProbability(p)
    return (rng.random(n) < p).astype(np.int8)


def scenario_propensity(scenario: ScenarioConfig, units: Table) -> np.ndarray:
    scenario_id = scenario.scenario
    quadratic = "x3" if scenario_id is Scenario.S4 else "x2"
    _require(units, ("x1", quadratic, "z1", "z2", "z3"))
    x1, xq = units.column("x1"), units.column(quadratic)
    z1, z2, z3 = (units.column(n) for n in ("z1", "z2", "z3"))
    sign = 1.0 if scenario_id in (Scenario.S1, Scenario.S2) else -1.0
    eta = 1.0 + 2.0 * x1 + sign * 1.5 * xq ** 2 + 2.0 * z1 + z2 - 2.0 * z3 - x1 * z1
    return expit(eta)


def draw_two_phase_sample(pop: Population, scenario: ScenarioConfig, seed: int,
                          replicate: int = 0) -> TwoPhaseSample:
    """Run every selection stage, each on its own (seed, replicate, stage) stream."""
    names = scenario.covariate_names
    missing = [n for n in names if n not in pop.table.names]
    if missing:
        raise InvalidConfig(f"population lacks covariates {missing} needed by {scenario.scenario.value}")

    cluster_ids, base_weights = pps_select_clusters(pop, scenario.draws_per_stratum,
                                                    stream(seed, replicate, "pps"))
    base_by_cluster = dict(zip(cluster_ids.tolist(), base_weights.tolist()))
    invited = np.flatnonzero(np.isin(pop.cluster_id, cluster_ids))
    invited_units = pop.table.take(invited)

    responded = phase1_response(invited_units, stream(seed, replicate, "phase1-response"))
    w0 = np.array([base_by_cluster[c] for c in pop.cluster_id[invited]])
    if scenario.phase1_weights_adjust_nonresponse:
        z = np.column_stack([invited_units.column(n) for n in ("z1", "z2", "z3")])
        coef = fit_logistic(z, responded)
        weights = w0 / logistic_predict(coef, z)
    else:
        weights = w0

    keep = responded == 1
    rows = invited[keep]
    units = invited_units.take(keep)
    selected = phase2_select(units.n, scenario.phase2_selection_prob, stream(seed, replicate, "phase2-select"))
    propensity = scenario_propensity(scenario, units)
    rng = stream(seed, replicate, "phase2-response", scenario.scenario.value)
    respondent = ((rng.random(units.n) < propensity) & (selected == 1)).astype(np.int8)

    full_y = units.column(OUTCOME)
    masked = np.where(respondent == 1, full_y, np.nan)
    table = units.select(names).with_column(OUTCOME, "continuous", masked)
    design = DesignFrame(
        stratum_id=pop.stratum_id[rows],
        cluster_id=pop.cluster_id[rows],
        weight=weights[keep],
        phase2_selected=selected,
        phase2_respondent=respondent,
    )
    logger.info("%s replicate %d: %d phase-I respondents, %d selected, %d phase-II respondents",
                scenario.scenario.value, replicate, units.n, int(selected.sum()), int(respondent.sum()))
    return TwoPhaseSample(
        table=table,
        design=design,
        true_phase2_propensity=propensity,
        benchmark_outcome=full_y,
        phase2_selection_prob=scenario.phase2_selection_prob,
        population_mean=true_mean(pop),
        scenario=scenario,
    )
