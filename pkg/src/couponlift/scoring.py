"""Per-item sale-rate estimation and item-quality filtering.

Two scorers are provided. ``BinnedFrequencyScorer`` is a deliberately simple
two-model learner: it fits separate control and treatment response surfaces
on the two arms of an RCT log, each surface being Laplace-smoothed empirical
sale rates over hashed feature-quantile bins. ``NoisyOracleScorer`` reads the
simulator's ground-truth rates and perturbs them with multiplicative noise,
independently per item and per arm; that independence matters, because the
uplift estimate is a difference of the two surfaces and inherits noise from
both.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from .domain import Dataset, ScoreTable
from .errors import EmptyArm, InvalidConfig, MissingGroundTruth

_HASH_PRIMES = (
    2654435761,
    2246822519,
    3266489917,
    668265263,
    374761393,
    2654435789,
    1190494759,
    2910392911,
)


@dataclass(frozen=True)
class QualityThreshold:
    """Percentile floor on the predicted with-coupon sale rate."""

    percentile_q: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.percentile_q <= 100.0):
            raise InvalidConfig(
                f"percentile_q={self.percentile_q} outside [0, 100]"
            )


class Scorer(ABC):
    """Fitted control/treatment response surfaces."""

    @abstractmethod
    def rates(self, dataset: Dataset) -> tuple[np.ndarray, np.ndarray]:
        """Returns (f0, f1) arrays aligned with the dataset rows."""


class BinnedFrequencyScorer(Scorer):
    """Hashed feature-bin frequency model, one surface per arm.

    Each feature is quantile-binned on the training data; the per-feature bin
    indices are mixed into a single bucket in ``[0, bins)``. Rates are
    Laplace-smoothed (+1 sale, +2 trials) so no bucket ever returns 0 or 1,
    which would make downstream survival products degenerate.
    """

    def __init__(
        self,
        bins: int,
        edges: list[np.ndarray],
        control_rates: np.ndarray,
        treatment_rates: np.ndarray,
    ):
        self.bins = bins
        self.edges = edges
        self.control_rates = control_rates
        self.treatment_rates = treatment_rates

    def bucket_of(self, features: np.ndarray) -> np.ndarray:
        """Maps a (n, n_features) array to hashed bucket indices."""
        n = len(features)
        mixed = np.zeros(n, dtype=np.uint64)
        if not self.edges:
            return mixed.astype(np.int64)
        for j, edge in enumerate(self.edges):
            idx = np.searchsorted(edge, features[:, j], side="right").astype(
                np.uint64
            )
            prime = np.uint64(_HASH_PRIMES[j % len(_HASH_PRIMES)])
            mixed = (mixed + (idx + np.uint64(1)) * prime) % np.uint64(2**61 - 1)
        return (mixed % np.uint64(self.bins)).astype(np.int64)

    def rates(self, dataset: Dataset) -> tuple[np.ndarray, np.ndarray]:
        buckets = self.bucket_of(dataset.features)
        return self.control_rates[buckets], self.treatment_rates[buckets]


class NoisyOracleScorer(Scorer):
    """Ground-truth rates with multiplicative noise, clamped to [0, 1].

    Each arm of each item gets an independent factor ``1 + noise * z`` with
    ``z`` standard normal. ``noise=0`` reproduces the true rates exactly.
    Output is deterministic for a fixed seed.
    """

    def __init__(self, noise: float = 0.0, seed: int = 0):
        if noise < 0:
            raise InvalidConfig(f"noise={noise} must be nonnegative")
        self.noise = noise
        self.seed = seed

    def rates(self, dataset: Dataset) -> tuple[np.ndarray, np.ndarray]:
        if not dataset.has_ground_truth:
            raise MissingGroundTruth(
                "noisy oracle scoring needs true_p0/true_p1 on every item"
            )
        if self.noise == 0.0:
            return self.dataset_truth(dataset)
        rng = np.random.default_rng(np.random.SeedSequence(self.seed))
        z = rng.standard_normal((2, dataset.n_items))
        f0 = np.clip(dataset.true_p0 * (1.0 + self.noise * z[0]), 0.0, 1.0)
        f1 = np.clip(dataset.true_p1 * (1.0 + self.noise * z[1]), 0.0, 1.0)
        return f0, f1

    @staticmethod
    def dataset_truth(dataset: Dataset) -> tuple[np.ndarray, np.ndarray]:
        return dataset.true_p0.copy(), dataset.true_p1.copy()


def fit_t_learner(training_log, dataset: Dataset, bins: int) -> BinnedFrequencyScorer:
    """Fits the two-arm binned-frequency scorer on an RCT log.

    The control surface is fit only on RCT-untreated rows and the treatment
    surface only on RCT-treated rows; the fit is deterministic.

    Args:
        training_log: RCT log covering the dataset's items.
        dataset: item population carrying the features to bin.
        bins: number of hash buckets per arm (positive).

    Raises:
        EmptyArm: if either arm of the log has zero items.
    """
    if bins < 1:
        raise InvalidConfig(f"bins={bins} must be positive")
    assignment = np.asarray(training_log.assignment, dtype=np.int8)
    sold = np.asarray(training_log.sold, dtype=np.int8)
    n_treated = int(assignment.sum())
    if n_treated == 0:
        raise EmptyArm("training log has no treated items")
    if n_treated == len(assignment):
        raise EmptyArm("training log has no control items")

    positions = np.array(
        [dataset.position_of(int(i)) for i in training_log.item_ids],
        dtype=np.int64,
    )
    features = dataset.features[positions]
    n_features = features.shape[1]

    edges: list[np.ndarray] = []
    if n_features:
        per_feature = max(2, int(round(bins ** (1.0 / n_features))))
        quantiles = np.linspace(0.0, 1.0, per_feature + 1)[1:-1]
        for j in range(n_features):
            edges.append(np.unique(np.quantile(features[:, j], quantiles)))

    scorer = BinnedFrequencyScorer(
        bins=bins,
        edges=edges,
        control_rates=np.empty(0),
        treatment_rates=np.empty(0),
    )
    buckets = scorer.bucket_of(features)

    def _arm_rates(mask: np.ndarray) -> np.ndarray:
        trials = np.bincount(buckets[mask], minlength=bins).astype(np.float64)
        sales = np.bincount(
            buckets[mask], weights=sold[mask], minlength=bins
        ).astype(np.float64)
        return (sales + 1.0) / (trials + 2.0)

    scorer.control_rates = _arm_rates(assignment == 0)
    scorer.treatment_rates = _arm_rates(assignment == 1)
    return scorer


def score_items(scorer: Scorer, dataset: Dataset) -> ScoreTable:
    """Scores every item; the stored uplift is exactly ``f1 - f0``."""
    f0, f1 = scorer.rates(dataset)
    return ScoreTable(dataset.item_ids.copy(), f0, f1)


def apply_quality_filter(scores: ScoreTable, q: QualityThreshold) -> frozenset[int]:
    """Coupon-eligible item ids after the quality-assurance cut.

    The lowest ``floor(q/100 * n)`` items by predicted with-coupon rate are
    barred from receiving coupons (ties broken by ascending item id, so the
    cut is deterministic). With ``q=0`` every item is eligible. Filtered
    items stay in the dataset; they still count toward baseline survival.
    """
    n = len(scores)
    if n == 0:
        raise InvalidConfig("cannot filter an empty score table")
    k = int(np.floor(q.percentile_q / 100.0 * n))
    if k == 0:
        return frozenset(int(i) for i in scores.item_ids)
    order = np.lexsort((scores.item_ids, scores.f1))
    keep = order[k:]
    return frozenset(int(i) for i in scores.item_ids[keep])


def eligible_items(
    scores: ScoreTable,
    q: QualityThreshold | float = 0.0,
    allow_negative_uplift: bool = False,
) -> frozenset[int]:
    """Composes the quality cut with the positive-uplift bar.

    Items with ``f1 <= f0`` are additionally barred unless
    ``allow_negative_uplift`` is set: an exact coupon budget would otherwise
    force value-destroying assignments.
    """
    if not isinstance(q, QualityThreshold):
        q = QualityThreshold(float(q))
    eligible = apply_quality_filter(scores, q)
    if allow_negative_uplift:
        return eligible
    positive = frozenset(
        int(i) for i in scores.item_ids[scores.pi > 0.0]
    )
    return eligible & positive
