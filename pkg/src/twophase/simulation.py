"""Replicated two-phase simulations and their bias / RMSE / coverage summaries."""
import logging
from typing import Optional, Sequence

import numpy as np
from joblib import Parallel, delayed
from tqdm import tqdm

from .config import RunConfig
from .dataset import write_results
from .errors import NoSuccessfulReplicates, TwoPhaseError
from .methods import AnalysisContext, failed_outcomes, run_methods
from .popgen import generate_population
from .results import MetricsRow, MetricsTable, ReplicateResult
from .sampling import draw_two_phase_sample

logger = logging.getLogger(__name__)


def run_replicate(config: RunConfig, replicate: int) -> ReplicateResult:
    """Every configured method on one freshly generated population and two-phase sample."""
    scenario = config.scenario.scenario.value
    methods = list(config.methods)
    try:
        population = generate_population(config.population_for(replicate))
        sample = draw_two_phase_sample(population, config.scenario, config.seed, replicate)
    except TwoPhaseError as e:
        logger.warning("replicate %d could not be drawn: %s", replicate, e)
        return ReplicateResult.from_outcomes(scenario, replicate, float("nan"), failed_outcomes(methods, e))

    ctx = AnalysisContext(
        covariates=sample.table.select(sample.covariate_names),
        outcome=sample.outcome,
        design=sample.design,
        phase2_selection_prob=sample.phase2_selection_prob,
        seed=config.seed,
        replicate=replicate,
        imputations=config.imputations,
        level=config.level,
        collapse_singletons=config.collapse_singletons,
        adjustment_options=config.adjustment,
        imputation_options=config.bart,
        benchmark_outcome=sample.benchmark_outcome,
    )
    outcomes = run_methods(ctx, methods)
    return ReplicateResult.from_outcomes(scenario, replicate, sample.population_mean, outcomes)


def compute_metrics(results: Sequence[ReplicateResult], methods: Optional[Sequence[str]] = None) -> MetricsTable:
    """Absolute bias, RMSE and mean width (all x100) and coverage (%) per method.

    Failed replicates are left out of a method's metrics and counted in
    ``failures``.
    """
    results = sorted(results, key=lambda r: r.replicate)
    if not results:
        raise NoSuccessfulReplicates(", ".join(methods or []) or "all")
    if methods is None:
        methods = list(results[0].outcomes)
    rows = []
    for method in methods:
        ok = [(r.truth, r.outcomes[method]) for r in results if method in r.outcomes and r.outcomes[method].ok]
        failures = sum(1 for r in results if method in r.outcomes and not r.outcomes[method].ok)
        if not ok:
            raise NoSuccessfulReplicates(method)
        truth = np.array([t for t, _ in ok])
        estimate = np.array([o.estimate for _, o in ok])
        error = estimate - truth
        rows.append(MetricsRow(
            scenario=results[0].scenario,
            method=method,
            absolute_bias=float(abs(np.mean(error)) * 100.0),
            rmse=float(np.sqrt(np.mean(error ** 2)) * 100.0),
            coverage=float(100.0 * np.mean([o.covers(t) for t, o in ok])),
            width=float(np.mean([o.width for _, o in ok]) * 100.0),
            replicates=len(ok),
            failures=failures,
        ))
        if failures:
            logger.warning("%s failed in %d of %d replicates", method, failures, len(results))
    return MetricsTable(tuple(rows))


def run_replicates(config: RunConfig, replicates: Optional[Sequence[int]] = None,
                   progress: bool = True) -> list[ReplicateResult]:
    indices = list(range(config.replicates)) if replicates is None else list(replicates)
    results = Parallel(n_jobs=config.jobs)(
        delayed(run_replicate)(config, r)
        for r in tqdm(indices, desc=config.scenario.scenario.value, disable=not progress)
    )
    return sorted(results, key=lambda r: r.replicate)


def run_simulation(config: RunConfig, progress: bool = True) -> MetricsTable:
    logger.info("Simulating %s: %d replicates, methods %s, D=%d, B=%d, %d jobs",
                config.scenario.scenario.value, config.replicates, ",".join(config.methods),
                config.imputations, config.bart.n_trees, config.jobs)
    results = run_replicates(config, progress=progress)
    table = compute_metrics(results, config.methods)
    if config.replicate_out is not None:
        write_results([row for r in results for row in r.to_records()], config.replicate_out, config.format)
    if config.out is not None:
        write_results(table, config.out, config.format)
    for row in table.rows:
        logger.info("%s %s: bias %.2f, rmse %.2f, coverage %.1f%%, width %.2f (%d ok, %d failed)",
                    row.scenario, row.method, row.absolute_bias, row.rmse, row.coverage, row.width,
                    row.replicates, row.failures)
    return table
