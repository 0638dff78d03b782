"""Sales Experience Rate: per-provider success probability and its uplift.

A provider's SER under a coupon assignment z is the complement of the
probability that none of its items sell, assuming independent item sales:

    SER(s, z) = 1 - prod_i (1 - r_i),   r_i = f1_i if z_i = 1 else f0_i

The uplift delta(s, z) = SER(s, z) - SER(s, 0) collapses, for budget
optimization, to per-provider value curves delta_s(0..K): the value of
giving the provider exactly k coupons on the first k items of a fixed
intervention order. Two orders are supported:

* ``PI_DESC`` ranks eligible items by predicted uplift, descending. This is
  the cheap heuristic order; a witness test documents instances where its
  k-item prefix is strictly suboptimal.
* ``SURVIVAL_RATIO`` ranks by r_i = (1 - f1_i) / (1 - f0_i), ascending. For
  every fixed k this prefix maximizes delta over all k-subsets (treating an
  item multiplies the no-sale product by r_i, so the k smallest ratios are
  optimal), and the resulting curve is concave.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .domain import Dataset, ScoreTable
from .errors import DimensionMismatch

# Above this many factors, products switch to log space to dodge underflow.
_DIRECT_PRODUCT_LIMIT = 64


class OrderingPolicy(Enum):
    PI_DESC = "pi-desc"
    SURVIVAL_RATIO = "survival-ratio"


def _product(factors: Sequence[float]) -> float:
    if len(factors) <= _DIRECT_PRODUCT_LIMIT:
        return math.prod(factors)
    total = 0.0
    for f in factors:
        if f == 0.0:
            return 0.0
        total += math.log(f)
    return math.exp(total)


def _prefix_products(factors: Sequence[float]) -> list[float]:
    """Returns P with P[k] = product of the first k factors (P[0] = 1)."""
    out = [1.0]
    if len(factors) <= _DIRECT_PRODUCT_LIMIT:
        acc = 1.0
        for f in factors:
            acc *= f
            out.append(acc)
        return out
    zeros = 0
    logsum = 0.0
    for f in factors:
        if f == 0.0:
            zeros += 1
        else:
            logsum += math.log(f)
        out.append(0.0 if zeros else math.exp(logsum))
    return out


@dataclass(frozen=True)
class ProviderPortfolio:
    """One provider's scored items with eligibility flags.

    ``base_survival`` is the probability that nothing sells without coupons,
    taken over ALL items of the provider (eligible or not), so
    SER(s, 0) = 1 - base_survival.
    """

    provider_id: int
    item_ids: tuple[int, ...]
    f0: tuple[float, ...]
    f1: tuple[float, ...]
    eligible: tuple[bool, ...]
    ordering_policy: OrderingPolicy = OrderingPolicy.PI_DESC
    base_survival: float = None  # type: ignore[assignment]

    def __post_init__(self) -> None:
        n = len(self.item_ids)
        if not (len(self.f0) == len(self.f1) == len(self.eligible) == n):
            raise DimensionMismatch(
                f"portfolio {self.provider_id}: inconsistent field lengths"
            )
        if self.base_survival is None:
            object.__setattr__(
                self,
                "base_survival",
                _product([1.0 - p for p in self.f0]),
            )

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    @property
    def n_eligible(self) -> int:
        return sum(self.eligible)


@dataclass(frozen=True)
class PatternCurve:
    """Value curve delta_s(k) for k = 0..K eligible-item coupons.

    ``item_order`` lists the eligible item ids in intervention order; the
    k-coupon pattern treats its first k entries. ``item_pis`` mirrors that
    order with the items' predicted uplifts (used by the provider-greedy
    baseline's round ordering).
    """

    provider_id: int
    deltas: tuple[float, ...]
    item_order: tuple[int, ...]
    item_pis: tuple[float, ...] = ()

    @property
    def max_coupons(self) -> int:
        return len(self.deltas) - 1

    @property
    def best_pi(self) -> float:
        return self.item_pis[0] if self.item_pis else float("-inf")

    def marginals(self) -> list[float]:
        return [
            self.deltas[k] - self.deltas[k - 1]
            for k in range(1, len(self.deltas))
        ]


def _coerce_z(portfolio: ProviderPortfolio, z: Sequence[int]) -> list[int]:
    if len(z) != portfolio.n_items:
        raise DimensionMismatch(
            f"z has {len(z)} entries for a {portfolio.n_items}-item portfolio"
        )
    out = []
    for v in z:
        iv = int(v)
        if iv not in (0, 1):
            raise DimensionMismatch(f"z entries must be binary, got {v!r}")
        out.append(iv)
    return out


def ser(portfolio: ProviderPortfolio, z: Sequence[int]) -> float:
    """Probability the provider sells at least one item under assignment z."""
    zz = _coerce_z(portfolio, z)
    factors = [
        1.0 - (portfolio.f1[i] if zz[i] else portfolio.f0[i])
        for i in range(portfolio.n_items)
    ]
    return 1.0 - _product(factors)


def ser_delta(portfolio: ProviderPortfolio, z: Sequence[int]) -> float:
    """SER uplift of assignment z over the no-coupon baseline."""
    zz = _coerce_z(portfolio, z)
    untreated = [1.0 - p for p in portfolio.f0]
    treated = [
        1.0 - (portfolio.f1[i] if zz[i] else portfolio.f0[i])
        for i in range(portfolio.n_items)
    ]
    return _product(untreated) - _product(treated)


def survival_ratio(f0: float, f1: float) -> float:
    """Factor the no-sale product gains when an item is couponed.

    Items that already sell for sure (f0 = 1) contribute nothing either way;
    they sort last so they are never preferred.
    """
    if f0 >= 1.0:
        return 1.0 if f1 >= 1.0 else float("inf")
    return (1.0 - f1) / (1.0 - f0)


def build_pattern_curve(portfolio: ProviderPortfolio) -> PatternCurve:
    """Computes the provider's coupon-count value curve.

    The k = 0 pattern is always present (deltas[0] == 0 exactly) so a budget
    split can leave the provider untreated. Ordering ties break by ascending
    item id for cross-platform determinism.
    """
    idx = [i for i in range(portfolio.n_items) if portfolio.eligible[i]]
    if portfolio.ordering_policy is OrderingPolicy.SURVIVAL_RATIO:
        idx.sort(
            key=lambda i: (
                survival_ratio(portfolio.f0[i], portfolio.f1[i]),
                portfolio.item_ids[i],
            )
        )
    else:
        idx.sort(
            key=lambda i: (
                -(portfolio.f1[i] - portfolio.f0[i]),
                portfolio.item_ids[i],
            )
        )

    ineligible = [
        1.0 - portfolio.f0[i]
        for i in range(portfolio.n_items)
        if not portfolio.eligible[i]
    ]
    fixed = _product(ineligible)
    untreated = [1.0 - portfolio.f0[i] for i in idx]
    treated = [1.0 - portfolio.f1[i] for i in idx]

    prefix_treated = _prefix_products(treated)
    suffix_untreated = _prefix_products(untreated[::-1])[::-1]

    # survival(k): first k items treated, the rest at their base rates.
    baseline = fixed * suffix_untreated[0]
    deltas = [0.0]
    for k in range(1, len(idx) + 1):
        deltas.append(baseline - fixed * prefix_treated[k] * suffix_untreated[k])

    return PatternCurve(
        provider_id=portfolio.provider_id,
        deltas=tuple(deltas),
        item_order=tuple(portfolio.item_ids[i] for i in idx),
        item_pis=tuple(portfolio.f1[i] - portfolio.f0[i] for i in idx),
    )


def build_portfolios(
    dataset: Dataset,
    scores: ScoreTable,
    eligible: frozenset[int] | set[int],
    policy: OrderingPolicy = OrderingPolicy.PI_DESC,
) -> list[ProviderPortfolio]:
    """One portfolio per provider, in provider-id order.

    ``scores`` must be row-aligned with ``dataset`` (as produced by
    ``score_items``).
    """
    if not np.array_equal(scores.item_ids, dataset.item_ids):
        raise DimensionMismatch("scores are not aligned with the dataset")
    if eligible:
        eligible_arr = np.fromiter(eligible, dtype=np.int64, count=len(eligible))
        eligible_mask = np.isin(dataset.item_ids, eligible_arr)
    else:
        eligible_mask = np.zeros(dataset.n_items, dtype=bool)
    portfolios = []
    for k in range(dataset.n_providers):
        pos = dataset.provider_positions(k)
        pid = int(dataset.provider_ids[pos[0]])
        portfolios.append(
            ProviderPortfolio(
                provider_id=pid,
                item_ids=tuple(int(i) for i in dataset.item_ids[pos]),
                f0=tuple(float(x) for x in scores.f0[pos]),
                f1=tuple(float(x) for x in scores.f1[pos]),
                eligible=tuple(bool(b) for b in eligible_mask[pos]),
                ordering_policy=policy,
            )
        )
    return portfolios


def build_pattern_curves(
    dataset: Dataset,
    scores: ScoreTable,
    eligible: frozenset[int] | set[int],
    policy: OrderingPolicy = OrderingPolicy.PI_DESC,
) -> list[PatternCurve]:
    """Pattern curves for every provider, in provider-id order."""
    return [
        build_pattern_curve(p)
        for p in build_portfolios(dataset, scores, eligible, policy)
    ]
