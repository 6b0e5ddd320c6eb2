"""Bayesian backfitting MCMC for sum-of-trees models.

Each iteration visits every tree: partial residuals, one grow/prune/change
Metropolis-Hastings proposal under the conjugate leaf prior, then fresh leaf
values; afterwards the error variance (continuous) or the latent responses
(probit) and, for grouped data, the random intercepts are redrawn.
"""
import logging
import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.stats import chi2, norm, truncnorm

from ..errors import (
    DegenerateResponse,
    InsufficientData,
    InvalidConfig,
    ModelError,
    NonFiniteInput,
    SingleClass,
    SingleGroup,
)
from .chain import ModelKind, PosteriorChain, TreeEnsembleDraw
from .data import CovariateMatrix, as_covariates
from .tree import TreeNode, draw_rule, freeze, leaves, nog_nodes, split_rows

logger = logging.getLogger(__name__)

LAMBDA_FLOOR = 1e-8
MIN_TRAINING_UNITS = 10


@dataclass(kw_only=True, frozen=True)
class BartOptions:
    n_trees: int = 100
    alpha: float = 0.95
    beta: float = 2.0
    k: float = 2.0
    nu: float = 3.0
    q: float = 0.90
    n_burn: int = 1000
    n_keep: int = 1000
    thin: int = 10
    move_probabilities: tuple[float, float, float] = (0.25, 0.25, 0.50)
    min_leaf_size: int = 5
    nu_tau: float = 3.0
    # test hooks
    flat_likelihood: bool = False
    fixed_sigma: Optional[float] = None
    freeze_trees: bool = False

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0 or self.beta < 0.0:
            raise InvalidConfig(f"tree prior needs alpha in (0,1) and beta >= 0 (got {self.alpha}, {self.beta})")
        probs = self.move_probabilities
        if len(probs) != 3 or min(probs) < 0 or abs(sum(probs) - 1.0) > 1e-9:
            raise InvalidConfig(f"move probabilities must be three non-negative numbers summing to 1: {probs}")
        if (probs[0] > 0) != (probs[1] > 0):
            raise InvalidConfig("grow and prune must both be enabled or both disabled")
        if self.n_trees < 1 or self.n_keep < 1 or self.thin < 1 or self.n_burn < 0 or self.min_leaf_size < 1:
            raise InvalidConfig("n_trees, n_keep, thin and min_leaf_size must be >= 1 and n_burn >= 0")
        if self.k <= 0 or self.nu <= 0 or self.nu_tau <= 0 or not 0.0 < self.q < 1.0:
            raise InvalidConfig("k, nu and nu_tau must be positive and q in (0, 1)")
        if self.fixed_sigma is not None and not (math.isfinite(self.fixed_sigma) and self.fixed_sigma >= 0.0):
            raise InvalidConfig(f"fixed_sigma must be finite and >= 0 (got {self.fixed_sigma})")

    def split_probability(self, depth: int) -> float:
        return self.alpha * (1.0 + depth) ** (-self.beta)


def _scaled_inv_chi2(nu: float, scale_sum: float, rng: np.random.Generator) -> float:
    """Draw from (scale_sum) / chi2_nu."""
    return scale_sum / rng.chisquare(nu)


class BackfittingSampler:
    """Shared backfitting loop; subclasses define the working response and sigma."""
    model_kind = ModelKind.CONTINUOUS
    leaf_scale = 0.5

    def __init__(self, X: CovariateMatrix, opts: BartOptions, rng: np.random.Generator,
                 groups: Optional[Sequence] = None):
        self.covariates = X
        self.X = X.values
        self.categorical = X.categorical
        self.opts = opts
        self.rng = rng
        self.n = X.n
        self.leaf_sd = self.leaf_scale / (opts.k * math.sqrt(opts.n_trees))
        self.trees = [TreeNode(rows=np.arange(self.n)) for _ in range(opts.n_trees)]
        self.fits = np.zeros((opts.n_trees, self.n))
        self.total = np.zeros(self.n)
        self.accepted = {"grow": 0, "prune": 0, "change": 0}
        self.proposed = {"grow": 0, "prune": 0, "change": 0}

        self.group_labels = None
        if groups is not None:
            labels, index = np.unique(np.asarray(groups), return_inverse=True)
            if len(labels) < 2:
                raise SingleGroup(f"random intercepts need at least 2 groups, got {len(labels)}")
            self.group_labels = labels
            self.group_index = index
            self.group_sizes = np.bincount(index, minlength=len(labels)).astype(float)
            self.delta = np.zeros(len(labels))

    # working response -------------------------------------------------------

    def _target(self) -> np.ndarray:
        raise NotImplementedError

    def _before_iteration(self) -> None:
        pass

    def _draw_sigma(self, resid: np.ndarray) -> None:
        pass

    def _intercepts(self) -> np.ndarray:
        if self.group_labels is None:
            return 0.0
        return self.delta[self.group_index]

    @property
    def noiseless(self) -> bool:
        """sigma fixed at zero: leaves and intercepts interpolate their residuals exactly."""
        return self.sigma2 == 0.0

    @property
    def _inv_sigma2(self) -> float:
        return 0.0 if self.opts.flat_likelihood else 1.0 / self.sigma2

    # tree moves ---------------------------------------------------------------

    def _log_marginal(self, resid: np.ndarray, rows: np.ndarray) -> float:
        inv = self._inv_sigma2
        if inv == 0.0:
            return 0.0
        m = len(rows)
        s = resid[rows].sum()
        prior_var = self.leaf_sd ** 2
        return -0.5 * math.log1p(m * prior_var * inv) + 0.5 * (s * inv) ** 2 / (1.0 / prior_var + m * inv)

    def _accept(self, log_ratio: float) -> bool:
        return math.log(self.rng.random()) < log_ratio

    def _grow(self, root: TreeNode, resid: np.ndarray) -> None:
        opts = self.opts
        leaf_list = leaves(root)
        leaf = leaf_list[self.rng.integers(len(leaf_list))]
        rule = draw_rule(leaf, self.X, self.categorical, self.rng)
        if rule is None:
            return
        left_rows, right_rows = split_rows(leaf, self.X, *rule)
        if min(len(left_rows), len(right_rows)) < opts.min_leaf_size:
            return
        p_grow, p_prune, _ = opts.move_probabilities
        n_nog_after = len(nog_nodes(root)) + 1 - int(leaf.parent is not None and leaf.parent.is_nog)
        d = leaf.depth
        log_ratio = (self._log_marginal(resid, left_rows) + self._log_marginal(resid, right_rows)
                     - self._log_marginal(resid, leaf.rows)
                     + math.log(opts.split_probability(d)) + 2.0 * math.log1p(-opts.split_probability(d + 1))
                     - math.log1p(-opts.split_probability(d))
                     + math.log(p_prune / n_nog_after) - math.log(p_grow / len(leaf_list)))
        if self._accept(log_ratio):
            leaf.set_rule(*rule)
            leaf.left = TreeNode(depth=d + 1, parent=leaf, rows=left_rows)
            leaf.right = TreeNode(depth=d + 1, parent=leaf, rows=right_rows)
            self.accepted["grow"] += 1

    def _prune(self, root: TreeNode, resid: np.ndarray) -> None:
        opts = self.opts
        nogs = nog_nodes(root)
        if not nogs:
            return
        node = nogs[self.rng.integers(len(nogs))]
        p_grow, p_prune, _ = opts.move_probabilities
        n_leaves_after = len(leaves(root)) - 1
        d = node.depth
        log_ratio = (self._log_marginal(resid, node.rows)
                     - self._log_marginal(resid, node.left.rows) - self._log_marginal(resid, node.right.rows)
                     + math.log1p(-opts.split_probability(d)) - math.log(opts.split_probability(d))
                     - 2.0 * math.log1p(-opts.split_probability(d + 1))
                     + math.log(p_grow / n_leaves_after) - math.log(p_prune / len(nogs)))
        if self._accept(log_ratio):
            node.left = node.right = None
            node.set_rule(-1)
            self.accepted["prune"] += 1

    def _change(self, root: TreeNode, resid: np.ndarray) -> None:
        nogs = nog_nodes(root)
        if not nogs:
            return
        node = nogs[self.rng.integers(len(nogs))]
        rule = draw_rule(node, self.X, self.categorical, self.rng)
        if rule is None:
            return
        left_rows, right_rows = split_rows(node, self.X, *rule)
        if min(len(left_rows), len(right_rows)) < self.opts.min_leaf_size:
            return
        log_ratio = (self._log_marginal(resid, left_rows) + self._log_marginal(resid, right_rows)
                     - self._log_marginal(resid, node.left.rows) - self._log_marginal(resid, node.right.rows))
        if self._accept(log_ratio):
            node.set_rule(*rule)
            node.left.rows = left_rows
            node.right.rows = right_rows
            self.accepted["change"] += 1

    def _propose(self, root: TreeNode, resid: np.ndarray) -> None:
        p_grow, p_prune, _ = self.opts.move_probabilities
        u = self.rng.random()
        if u < p_grow:
            self.proposed["grow"] += 1
            self._grow(root, resid)
        elif u < p_grow + p_prune:
            self.proposed["prune"] += 1
            self._prune(root, resid)
        else:
            self.proposed["change"] += 1
            self._change(root, resid)

    def _draw_leaves(self, b: int, resid: np.ndarray) -> None:
        fit = np.empty(self.n)
        if self.noiseless:
            for leaf in leaves(self.trees[b]):
                leaf.mu = float(resid[leaf.rows].mean())
                fit[leaf.rows] = leaf.mu
        else:
            inv = self._inv_sigma2
            prior_prec = 1.0 / self.leaf_sd ** 2
            for leaf in leaves(self.trees[b]):
                rows = leaf.rows
                prec = prior_prec + len(rows) * inv
                mean = resid[rows].sum() * inv / prec
                leaf.mu = mean + self.rng.standard_normal() / math.sqrt(prec)
                fit[rows] = leaf.mu
        self.total += fit - self.fits[b]
        self.fits[b] = fit

    # group intercepts ----------------------------------------------------------

    def _init_tau(self, group_means: np.ndarray) -> None:
        spread = float(np.var(group_means, ddof=1)) if len(group_means) > 1 else 0.0
        self.lambda_tau = max(spread, LAMBDA_FLOOR)
        self.tau2 = self.lambda_tau

    def _absorb_level(self, shift: float) -> None:
        """Add a constant to the ensemble through the first tree's leaves."""
        for leaf in leaves(self.trees[0]):
            leaf.mu += shift
        self.fits[0] += shift
        self.total += shift

    def _draw_random_intercepts(self, target: np.ndarray) -> None:
        resid = target - self.total
        sums = np.bincount(self.group_index, weights=resid, minlength=len(self.group_labels))
        if self.noiseless:
            self.delta = sums / self.group_sizes
        else:
            inv = 1.0 / self.sigma2
            prec = 1.0 / self.tau2 + self.group_sizes * inv
            self.delta = sums * inv / prec + self.rng.standard_normal(len(prec)) / np.sqrt(prec)
        # intercepts average to zero; the common level lives in the trees
        shift = float(self.delta.mean())
        self.delta = self.delta - shift
        self._absorb_level(shift)
        self.tau2 = _scaled_inv_chi2(self.opts.nu_tau + len(self.delta),
                                     self.opts.nu_tau * self.lambda_tau + float(self.delta @ self.delta), self.rng)

    # main loop -----------------------------------------------------------------

    def step(self) -> None:
        self._before_iteration()
        target = self._target()
        adjusted = target - self._intercepts()
        if not self.opts.freeze_trees:
            for b, root in enumerate(self.trees):
                resid = adjusted - (self.total - self.fits[b])
                if not self.noiseless:
                    self._propose(root, resid)
                self._draw_leaves(b, resid)
        if self.group_labels is not None:
            self._draw_random_intercepts(target)
        self._draw_sigma(target - self.total - self._intercepts())

    def _snapshot(self) -> TreeEnsembleDraw:
        raise NotImplementedError

    def run(self) -> PosteriorChain:
        opts = self.opts
        n_iter = opts.n_burn + opts.n_keep * opts.thin
        draws = []
        for it in range(n_iter):
            self.step()
            if it >= opts.n_burn and (it - opts.n_burn + 1) % opts.thin == 0:
                draws.append(self._snapshot())
            if it % 100 == 0:
                logger.debug("%s iteration %d/%d, sigma^2=%.4g", self.model_kind.value, it, n_iter, self.sigma2)
        rates = {move: self.accepted[move] / max(self.proposed[move], 1) for move in self.accepted}
        logger.info("Fitted %s BART: n=%d, B=%d, kept %d draws, acceptance grow=%.2f prune=%.2f change=%.2f",
                    self.model_kind.value, self.n, opts.n_trees, len(draws),
                    rates["grow"], rates["prune"], rates["change"])
        return PosteriorChain(tuple(draws), self.model_kind, self.covariates)

    def _frozen_trees(self) -> tuple[TreeNode, ...]:
        return tuple(freeze(root) for root in self.trees)


class ContinuousSampler(BackfittingSampler):
    """Gaussian errors on the response rescaled to [-0.5, 0.5]."""

    def __init__(self, X: CovariateMatrix, y: np.ndarray, opts: BartOptions, rng: np.random.Generator,
                 groups: Optional[Sequence] = None):
        super().__init__(X, opts, rng, groups)
        if groups is not None:
            self.model_kind = ModelKind.CONTINUOUS_RANDOM_INTERCEPT
        y_min, y_max = float(y.min()), float(y.max())
        self.center = 0.5 * (y_min + y_max)
        self.span = y_max - y_min
        if self.span == 0.0:
            warnings.warn(DegenerateResponse(f"constant response {y_min}; sigma prior uses the floor"))
            self.span = 1.0
        self.y = (y - self.center) / self.span

        sigma_hat2 = float(np.var(self.y, ddof=1))
        self.lambda_ = max(sigma_hat2 * chi2.ppf(1.0 - opts.q, opts.nu) / opts.nu, LAMBDA_FLOOR)
        if opts.fixed_sigma is not None:
            self.sigma2 = (opts.fixed_sigma / self.span) ** 2
        else:
            self.sigma2 = max(sigma_hat2, self.lambda_)
        if groups is not None:
            sums = np.bincount(self.group_index, weights=self.y, minlength=len(self.group_labels))
            self._init_tau(sums / self.group_sizes)

    def _target(self) -> np.ndarray:
        return self.y

    def _draw_sigma(self, resid: np.ndarray) -> None:
        if self.opts.fixed_sigma is not None:
            return
        self.sigma2 = _scaled_inv_chi2(self.opts.nu + self.n,
                                       self.opts.nu * self.lambda_ + float(resid @ resid), self.rng)

    def _snapshot(self) -> TreeEnsembleDraw:
        intercepts = tau2 = None
        if self.group_labels is not None:
            intercepts = {label.item(): float(self.span * d) for label, d in zip(self.group_labels, self.delta)}
            tau2 = float(self.span ** 2 * self.tau2)
        return TreeEnsembleDraw(
            trees=self._frozen_trees(),
            sigma=float(self.span * math.sqrt(self.sigma2)),
            scaling=(self.center - 0.5 * self.span, self.center + 0.5 * self.span),
            random_intercepts=intercepts,
            tau2=tau2,
        )


class ProbitSampler(BackfittingSampler):
    """Binary response through normal latents truncated at zero; sigma fixed at 1."""
    model_kind = ModelKind.PROBIT
    leaf_scale = 3.0

    def __init__(self, X: CovariateMatrix, r: np.ndarray, opts: BartOptions, rng: np.random.Generator,
                 groups: Optional[Sequence] = None):
        super().__init__(X, opts, rng, groups)
        if groups is not None:
            self.model_kind = ModelKind.PROBIT_RANDOM_INTERCEPT
        self.r = r.astype(bool)
        self.offset = float(norm.ppf(self.r.mean()))
        self.sigma2 = 1.0
        self.latent = np.zeros(self.n)
        if groups is not None:
            rates = np.bincount(self.group_index, weights=r, minlength=len(self.group_labels)) / self.group_sizes
            self._init_tau(norm.ppf(np.clip(rates, 0.05, 0.95)))

    def _before_iteration(self) -> None:
        loc = self.offset + self.total + self._intercepts()
        lower = np.where(self.r, -loc, -np.inf)
        upper = np.where(self.r, np.inf, -loc)
        self.latent = truncnorm.rvs(lower, upper, loc=loc, scale=1.0, random_state=self.rng)

    def _target(self) -> np.ndarray:
        return self.latent - self.offset

    def _snapshot(self) -> TreeEnsembleDraw:
        intercepts = tau2 = None
        if self.group_labels is not None:
            intercepts = {label.item(): float(d) for label, d in zip(self.group_labels, self.delta)}
            tau2 = float(self.tau2)
        return TreeEnsembleDraw(
            trees=self._frozen_trees(),
            sigma=1.0,
            scaling=(self.offset - 0.5, self.offset + 0.5),
            random_intercepts=intercepts,
            tau2=tau2,
        )


def _check_response(X: CovariateMatrix, y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if len(y) != X.n:
        raise InsufficientData(f"{len(y)} responses for {X.n} covariate rows")
    if len(y) < MIN_TRAINING_UNITS:
        raise InsufficientData(f"BART needs at least {MIN_TRAINING_UNITS} units, got {len(y)}")
    if not np.all(np.isfinite(y)):
        raise NonFiniteInput("response contains missing or non-finite values")
    return y


def _default_rng(rng: Optional[np.random.Generator]) -> np.random.Generator:
    return rng if rng is not None else np.random.default_rng()


def fit_bart(X, y, opts: BartOptions = BartOptions(), rng: Optional[np.random.Generator] = None) -> PosteriorChain:
    X = as_covariates(X)
    y = _check_response(X, y)
    return ContinuousSampler(X, y, opts, _default_rng(rng)).run()


def fit_bart_probit(X, r, opts: BartOptions = BartOptions(), rng: Optional[np.random.Generator] = None,
                    groups: Optional[Sequence] = None) -> PosteriorChain:
    X = as_covariates(X)
    r = _check_response(X, r)
    if not np.isin(r, (0.0, 1.0)).all():
        raise NonFiniteInput("probit response must be 0/1")
    if r.min() == r.max():
        raise SingleClass(f"probit response has a single class ({int(r[0])})")
    return ProbitSampler(X, r, opts, _default_rng(rng), groups).run()


def fit_rbart(X, y, group_ids: Sequence, opts: BartOptions = BartOptions(),
              rng: Optional[np.random.Generator] = None) -> PosteriorChain:
    X = as_covariates(X)
    y = _check_response(X, y)
    if len(group_ids) != X.n:
        raise InsufficientData(f"{len(group_ids)} group ids for {X.n} rows")
    return ContinuousSampler(X, y, opts, _default_rng(rng), groups=group_ids).run()


def sample_tree_prior(X, opts: BartOptions, rng: np.random.Generator, max_attempts: int = 100_000) -> TreeNode:
    """One tree from the split prior restricted to trees whose leaves hold >= min_leaf_size units.

    Proposals that try to split an unsplittable node, or create a small leaf,
    are rejected as a whole.
    """
    X = as_covariates(X)
    for _ in range(max_attempts):
        root = TreeNode(rows=np.arange(X.n))
        stack, valid = [root], True
        while stack and valid:
            node = stack.pop()
            if rng.random() >= opts.split_probability(node.depth):
                continue
            rule = draw_rule(node, X.values, X.categorical, rng)
            if rule is None:
                valid = False
                break
            left_rows, right_rows = split_rows(node, X.values, *rule)
            if min(len(left_rows), len(right_rows)) < opts.min_leaf_size:
                valid = False
                break
            node.set_rule(*rule)
            node.left = TreeNode(depth=node.depth + 1, parent=node, rows=left_rows)
            node.right = TreeNode(depth=node.depth + 1, parent=node, rows=right_rows)
            stack.extend([node.left, node.right])
        if valid:
            return freeze(root)
    raise ModelError(f"no valid prior tree in {max_attempts} attempts")
