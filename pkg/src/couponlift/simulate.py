"""Synthetic marketplace generation and RCT logs with known ground truth.

The generator produces a heavy-tailed marketplace: per-provider item counts
follow a capped Zipf law, so a few providers hold very many items while most
hold one or two. Base sale rates rise with provider size (large sellers are
better at selling), each item carries a multiplicative coupon lift, and a
configurable "stale" segment models inventory that will not sell even with a
price cut: low base rate and a lift pinned near 1. Features emitted per item
are noisy transforms of the latent quantities, so a fitted scorer sees them
only imperfectly.

Ground-truth oracles for evaluating plans live here too, including the exact
expectations of the RCT uplift estimators (see ``expected_uplift_*``): the
estimators read only RCT-consistent records, so their targets are
consistent-subsample quantities, not the full deployed-plan uplift.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from statistics import NormalDist

import numpy as np

from .domain import AllocationPlan, Dataset
from .errors import DuplicateItemId, InvalidConfig, MissingGroundTruth


@dataclass(frozen=True)
class MarketConfig:
    """Declarative description of a synthetic marketplace.

    Attributes:
        n_providers: number of providers to generate.
        zipf_alpha: exponent of the capped Zipf item-count law (> 0).
        max_items: per-provider item-count cap.
        p0_a / p0_b: Beta shape parameters of the base (no-coupon) sale rate
            before the provider-size adjustment.
        size_rate_exp: exponent tying base rates to provider size; 0 turns
            the adjustment off.
        lift_sigma: log-space spread of the coupon lift factor.
        negative_uplift_prob: probability a fresh item's lift falls below 1
            (the lift location is calibrated so this holds exactly).
        stale_frac: fraction of items that are stale (lift pinned near 1).
        stale_p0_scale: base-rate multiplier for stale items.
        stale_lift_sd: spread of the stale lift around 1.
        feature_noise_sd: noise added to the latent-feature transforms.
        seed: master seed; generation is bit-reproducible.
    """

    n_providers: int
    zipf_alpha: float = 1.5
    max_items: int = 200
    p0_a: float = 1.3
    p0_b: float = 30.0
    size_rate_exp: float = 0.35
    lift_sigma: float = 0.45
    negative_uplift_prob: float = 0.05
    stale_frac: float = 0.10
    stale_p0_scale: float = 0.6
    stale_lift_sd: float = 0.04
    feature_noise_sd: float = 0.6
    seed: int = 0

    def validate(self) -> None:
        if self.n_providers < 1:
            raise InvalidConfig("n_providers must be positive")
        if self.zipf_alpha <= 0:
            raise InvalidConfig("zipf_alpha must be > 0")
        if self.max_items < 1:
            raise InvalidConfig("max_items must be positive")
        if self.p0_a <= 0 or self.p0_b <= 0:
            raise InvalidConfig("p0 Beta shapes must be positive")
        if not (0.0 <= self.negative_uplift_prob < 1.0):
            raise InvalidConfig("negative_uplift_prob must be in [0, 1)")
        if not (0.0 <= self.stale_frac <= 1.0):
            raise InvalidConfig("stale_frac must be in [0, 1]")
        if self.lift_sigma < 0 or self.stale_lift_sd < 0:
            raise InvalidConfig("spread parameters must be nonnegative")

    @property
    def lift_mu(self) -> float:
        """Log-space lift location putting ``negative_uplift_prob`` below 1."""
        p = max(self.negative_uplift_prob, 1e-9)
        return -self.lift_sigma * NormalDist().inv_cdf(p)


@dataclass(frozen=True)
class RctLog:
    """Per-item RCT assignment and sale outcome, one record per item."""

    item_ids: np.ndarray
    assignment: np.ndarray
    sold: np.ndarray

    def __post_init__(self) -> None:
        if not (len(self.item_ids) == len(self.assignment) == len(self.sold)):
            raise InvalidConfig("RCT log columns must have equal length")
        if len(np.unique(self.item_ids)) != len(self.item_ids):
            raise DuplicateItemId("duplicate item ids in RCT log")

    def __len__(self) -> int:
        return len(self.item_ids)

    @property
    def n_treated(self) -> int:
        return int(self.assignment.sum())


def generate_market(config: MarketConfig) -> Dataset:
    """Generates a dataset with ground-truth (p0, p1) per item."""
    config.validate()
    rng = np.random.default_rng(np.random.SeedSequence(config.seed))

    ks = np.arange(1, config.max_items + 1, dtype=np.float64)
    pmf = ks ** (-config.zipf_alpha)
    pmf /= pmf.sum()
    counts = rng.choice(
        np.arange(1, config.max_items + 1), p=pmf, size=config.n_providers
    )
    n = int(counts.sum())
    provider_ids = np.repeat(np.arange(config.n_providers, dtype=np.int64), counts)

    size_factor = (counts / max(float(np.median(counts)), 1.0)) ** config.size_rate_exp
    size_factor = np.clip(size_factor, 0.25, 12.0)

    p0 = rng.beta(config.p0_a, config.p0_b, size=n)
    p0 = p0 * np.repeat(size_factor, counts)

    stale = rng.random(n) < config.stale_frac
    p0 = np.where(stale, p0 * config.stale_p0_scale, p0)
    p0 = np.clip(p0, 1e-4, 0.95)

    lift_fresh = np.exp(
        config.lift_mu + config.lift_sigma * rng.standard_normal(n)
    )
    if config.negative_uplift_prob == 0.0:
        lift_fresh = np.maximum(lift_fresh, 1.0)
    lift_stale = 1.0 + config.stale_lift_sd * rng.standard_normal(n)
    lift = np.where(stale, lift_stale, lift_fresh)
    p1 = np.clip(p0 * lift, 0.0, 1.0)

    noise = config.feature_noise_sd
    features = np.column_stack(
        [
            np.log(p0 / (1.0 - p0)) + noise * rng.standard_normal(n),
            np.log(np.maximum(lift, 1e-3)) + noise * rng.standard_normal(n),
            np.log(np.repeat(counts, counts)) + 0.3 * rng.standard_normal(n),
            rng.standard_normal(n),
        ]
    )

    return Dataset(
        item_ids=np.arange(n, dtype=np.int64),
        provider_ids=provider_ids,
        features=features,
        true_p0=p0,
        true_p1=p1,
    )


def run_rct(dataset: Dataset, treat_prob: float = 0.5, seed: int = 0) -> RctLog:
    """Per-item Bernoulli treatment assignment and sale draw.

    Each item independently receives a coupon with probability
    ``treat_prob`` and then sells with its true rate for the assigned arm.
    """
    if not dataset.has_ground_truth:
        raise MissingGroundTruth("run_rct needs true_p0/true_p1 on every item")
    if not (0.0 <= treat_prob <= 1.0):
        raise InvalidConfig(f"treat_prob={treat_prob} outside [0, 1]")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    assignment = rng.random(dataset.n_items) < treat_prob
    rate = np.where(assignment, dataset.true_p1, dataset.true_p0)
    sold = rng.random(dataset.n_items) < rate
    return RctLog(
        item_ids=dataset.item_ids.copy(),
        assignment=assignment.astype(np.int8),
        sold=sold.astype(np.int8),
    )


def _require_truth(dataset: Dataset, what: str) -> None:
    if not dataset.has_ground_truth:
        raise MissingGroundTruth(f"{what} needs ground-truth probabilities")


def true_uplift_items(dataset: Dataset, plan: AllocationPlan) -> float:
    """Exact expected extra items sold if the plan were deployed.

    Sum of (true_p1 - true_p0) over the couponed items.
    """
    _require_truth(dataset, "true_uplift_items")
    d = plan.decisions(dataset.item_ids).astype(bool)
    return float(np.sum(dataset.true_p1[d] - dataset.true_p0[d]))


def true_uplift_providers(dataset: Dataset, plan: AllocationPlan) -> float:
    """Exact expected extra successful providers if the plan were deployed.

    Sum over providers of SER(s, z_s) - SER(s, 0) computed with the true
    rates; providers without coupons contribute zero.
    """
    _require_truth(dataset, "true_uplift_providers")
    d = plan.decisions(dataset.item_ids).astype(bool)
    total = 0.0
    for k in range(dataset.n_providers):
        pos = dataset.provider_positions(k)
        mask = d[pos]
        if not mask.any():
            continue
        no_sale_base = 1.0 - dataset.true_p0[pos]
        no_sale_plan = np.where(
            mask, 1.0 - dataset.true_p1[pos], no_sale_base
        )
        total += float(np.prod(no_sale_base) - np.prod(no_sale_plan))
    return total


def expected_uplift_items_sold(dataset: Dataset, plan: AllocationPlan) -> float:
    """Exact expectation of the items-sold uplift estimator.

    The estimator compares sale rates between the RCT-consistent halves of
    the couponed items and scales by half their count, so its target is half
    the deployed-plan uplift; conditional on both cells being nonempty the
    identity is exact for any treatment probability.
    """
    return 0.5 * true_uplift_items(dataset, plan)


def expected_uplift_successful_providers(
    dataset: Dataset, plan: AllocationPlan, treat_prob: float = 0.5
) -> float:
    """Exact expectation of the successful-providers uplift estimator.

    Mirrors the estimator's mechanics: a treated provider lands in the
    consistent-treatment group when all its couponed items drew the coupon
    in the RCT (probability treat_prob^k), in the consistent-control group
    when none did; group success reads the couponed items at the arm's rate
    plus organic conversion, which only counts untreated non-couponed items,
    so each non-couponed item contributes the attenuated no-sale factor
    1 - (1 - treat_prob) * p0. Exact for one-coupon-per-provider plans;
    for multi-coupon plans the group rates are the weighted means below, a
    large-sample approximation.
    """
    _require_truth(dataset, "expected_uplift_successful_providers")
    if not (0.0 < treat_prob < 1.0):
        raise InvalidConfig("treat_prob must be strictly inside (0, 1)")
    d = plan.decisions(dataset.item_ids).astype(bool)
    tau = treat_prob
    w_t_sum = w_c_sum = 0.0
    q_t_sum = q_c_sum = 0.0
    n_treated = 0
    for k in range(dataset.n_providers):
        pos = dataset.provider_positions(k)
        mask = d[pos]
        k_s = int(mask.sum())
        if k_s == 0:
            continue
        n_treated += 1
        p0 = dataset.true_p0[pos]
        p1 = dataset.true_p1[pos]
        surv_treat = float(np.prod(1.0 - p1[mask]))
        surv_control = float(np.prod(1.0 - p0[mask]))
        organic = float(np.prod(1.0 - (1.0 - tau) * p0[~mask]))
        w_t = tau**k_s
        w_c = (1.0 - tau) ** k_s
        w_t_sum += w_t
        w_c_sum += w_c
        q_t_sum += w_t * (1.0 - surv_treat * organic)
        q_c_sum += w_c * (1.0 - surv_control * organic)
    if n_treated == 0:
        return 0.0
    rate_t = q_t_sum / w_t_sum
    rate_c = q_c_sum / w_c_sum
    return 0.5 * n_treated * (rate_t - rate_c)
