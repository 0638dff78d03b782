"""Unbiased uplift estimation from RCT logs.

Every item falls into one of eight cells by (RCT assignment, algorithm
decision, sold). Restricting to records where the algorithm's decision
matches the random assignment gives unbiased sale-rate contrasts.

The items-sold estimator contrasts sale rates between couponed items the
RCT treated and couponed items it left untreated, scaled by half the number
of couponed items (the asymptotic size of each consistent cell).

The successful-providers estimator works at the provider level: treated
providers whose couponed items were all RCT-treated form the consistent
treatment group, those whose couponed items were all untreated form the
consistent control group, and providers with a mixed draw are excluded
(their count is surfaced as a diagnostic). A provider counts as successful
if any of its couponed items sold, or if an item the algorithm left alone
and the RCT left untreated sold anyway - the organic conversion that stops
wasted coupons from being credited.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .domain import AllocationPlan, Dataset
from .errors import (
    EmptyCell,
    EmptyGroup,
    EstimatorWarning,
    PopulationMismatch,
)
from .simulate import RctLog

_CELL_NAMES = {
    (0, 0, 1): "I_S_00",
    (0, 1, 1): "I_S_01",
    (1, 0, 1): "I_S_10",
    (1, 1, 1): "I_S_11",
    (0, 0, 0): "I_N_00",
    (0, 1, 0): "I_N_01",
    (1, 0, 0): "I_N_10",
    (1, 1, 0): "I_N_11",
}


@dataclass(frozen=True)
class ItemSegment:
    """Eight-way partition of the item population.

    Cells are keyed (assignment, decision, sold); ``cell_counts`` always
    carries all eight keys and the counts sum to the population size.
    """

    item_ids: np.ndarray
    assignment: np.ndarray
    decision: np.ndarray
    sold: np.ndarray

    def cell_mask(self, a: int, d: int, sold: int) -> np.ndarray:
        return (
            (self.assignment == a) & (self.decision == d) & (self.sold == sold)
        )

    def cell(self, a: int, d: int, sold: int) -> np.ndarray:
        """Item ids in one cell."""
        return self.item_ids[self.cell_mask(a, d, sold)]

    @property
    def cell_counts(self) -> dict[str, int]:
        return {
            name: int(self.cell_mask(*key).sum())
            for key, name in _CELL_NAMES.items()
        }

    @property
    def n_algo_couponed(self) -> int:
        return int((self.decision == 1).sum())

    def __len__(self) -> int:
        return len(self.item_ids)


@dataclass(frozen=True)
class ProviderDiagnostics:
    """Group sizes behind the successful-providers estimate."""

    n_treated_providers: int
    n_consistent_treat: int
    n_consistent_control: int
    n_mixed_excluded: int
    n_successful_treat: int
    n_successful_control: int
    ser_lift: float


@dataclass(frozen=True)
class UpliftReport:
    """All evaluation metrics for one strategy."""

    strategy_name: str
    uplift_items_sold: float
    uplift_successful_providers: float
    n_treated_providers: int
    ser_lift: float
    n_consistent_treat: int
    n_consistent_control: int
    n_mixed_excluded: int

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy_name,
            "uplift_items_sold": self.uplift_items_sold,
            "uplift_successful_providers": self.uplift_successful_providers,
            "n_treated_providers": self.n_treated_providers,
            "ser_lift": self.ser_lift,
            "n_consistent_treat": self.n_consistent_treat,
            "n_consistent_control": self.n_consistent_control,
            "n_mixed_excluded": self.n_mixed_excluded,
        }


def segment_items(log: RctLog, plan: AllocationPlan) -> ItemSegment:
    """Assigns every logged item to its (assignment, decision, sold) cell."""
    decision = plan.decisions(log.item_ids)
    n_flagged = int(decision.sum())
    if n_flagged != plan.n_couponed:
        missing = plan.couponed - set(int(i) for i in log.item_ids)
        raise PopulationMismatch(
            f"plan coupons {len(missing)} items absent from the log: "
            f"{sorted(missing)[:10]}"
        )
    return ItemSegment(
        item_ids=log.item_ids,
        assignment=np.asarray(log.assignment, dtype=np.int8),
        decision=decision,
        sold=np.asarray(log.sold, dtype=np.int8),
    )


def uplift_items_sold(seg: ItemSegment) -> float:
    """Estimated uplift in the number of items sold.

    Rate difference between consistent-treated and consistent-control
    couponed items, scaled by half the couponed count. A zero-coupon plan
    yields 0.0 with a warning; an empty consistency cell on a nonempty plan
    raises, because the estimator is undefined there.
    """
    d1 = seg.decision == 1
    n_couponed = int(d1.sum())
    if n_couponed == 0:
        warnings.warn(
            "no algorithm-couponed items: items-sold uplift is 0 by "
            "convention",
            EstimatorWarning,
            stacklevel=2,
        )
        return 0.0
    treated = d1 & (seg.assignment == 1)
    control = d1 & (seg.assignment == 0)
    n_treated = int(treated.sum())
    n_control = int(control.sum())
    if n_treated == 0 or n_control == 0:
        raise EmptyCell(
            f"consistency cells have sizes treated={n_treated}, "
            f"control={n_control}; the rate contrast is undefined"
        )
    rate_treated = float(seg.sold[treated].mean())
    rate_control = float(seg.sold[control].mean())
    return (rate_treated - rate_control) * n_couponed / 2.0


def _positions_in(dataset: Dataset, item_ids: np.ndarray) -> np.ndarray:
    """Vectorized dataset row positions of ``item_ids``."""
    if np.array_equal(item_ids, dataset.item_ids):
        return np.arange(dataset.n_items, dtype=np.int64)
    order = np.argsort(dataset.item_ids, kind="stable")
    idx = np.searchsorted(dataset.item_ids[order], item_ids)
    if (idx >= dataset.n_items).any() or (
        dataset.item_ids[order][idx] != item_ids
    ).any():
        raise PopulationMismatch("log references items absent from the dataset")
    return order[idx]


def _provider_groups(
    dataset: Dataset, seg: ItemSegment
) -> tuple[np.ndarray, ...]:
    """Per-provider aggregates in dataset provider order."""
    pos = _positions_in(dataset, seg.item_ids)
    providers = dataset.provider_ids[pos]
    _, dense = np.unique(providers, return_inverse=True)
    n = dense.max() + 1 if len(dense) else 0
    d = seg.decision.astype(np.int64)
    a = seg.assignment.astype(np.int64)
    y = seg.sold.astype(np.int64)
    n_d1 = np.bincount(dense, weights=d, minlength=n)
    n_d1_a1 = np.bincount(dense, weights=d * a, minlength=n)
    sold_d1_a1 = np.bincount(dense, weights=d * a * y, minlength=n)
    sold_d1_a0 = np.bincount(dense, weights=d * (1 - a) * y, minlength=n)
    sold_organic = np.bincount(
        dense, weights=(1 - d) * (1 - a) * y, minlength=n
    )
    return n_d1, n_d1_a1, sold_d1_a1, sold_d1_a0, sold_organic


def uplift_successful_providers(
    dataset: Dataset, log: RctLog, plan: AllocationPlan
) -> tuple[float, ProviderDiagnostics]:
    """Estimated uplift in the number of successful providers.

    Returns the estimate together with the group-size diagnostics. A
    zero-coupon plan yields 0.0 with a warning; an empty consistent group on
    a nonempty plan raises.
    """
    if len(log.item_ids) != dataset.n_items or not np.array_equal(
        np.sort(log.item_ids), np.sort(dataset.item_ids)
    ):
        raise PopulationMismatch(
            "RCT log and dataset cover different item populations"
        )
    return _provider_estimate(dataset, segment_items(log, plan))


def _provider_estimate(
    dataset: Dataset, seg: ItemSegment
) -> tuple[float, ProviderDiagnostics]:
    n_d1, n_d1_a1, sold_d1_a1, sold_d1_a0, sold_organic = _provider_groups(
        dataset, seg
    )

    treated = n_d1 > 0
    n_treated = int(treated.sum())
    if n_treated == 0:
        warnings.warn(
            "no algorithm-treated providers: successful-providers uplift is "
            "0 by convention",
            EstimatorWarning,
            stacklevel=2,
        )
        diag = ProviderDiagnostics(0, 0, 0, 0, 0, 0, 0.0)
        return 0.0, diag

    in_t = treated & (n_d1_a1 == n_d1)
    in_c = treated & (n_d1_a1 == 0)
    n_t = int(in_t.sum())
    n_c = int(in_c.sum())
    n_mixed = n_treated - n_t - n_c
    if n_t == 0 or n_c == 0:
        raise EmptyGroup(
            f"consistent groups have sizes treatment={n_t}, control={n_c}; "
            "the rate contrast is undefined"
        )

    succ_t = int(((sold_d1_a1 > 0) | (sold_organic > 0))[in_t].sum())
    succ_c = int(((sold_d1_a0 > 0) | (sold_organic > 0))[in_c].sum())
    ser_lift = succ_t / n_t - succ_c / n_c
    estimate = ser_lift * n_treated / 2.0
    diag = ProviderDiagnostics(
        n_treated_providers=n_treated,
        n_consistent_treat=n_t,
        n_consistent_control=n_c,
        n_mixed_excluded=n_mixed,
        n_successful_treat=succ_t,
        n_successful_control=succ_c,
        ser_lift=ser_lift,
    )
    return estimate, diag


def evaluate_strategy(
    dataset: Dataset, log: RctLog, plan: AllocationPlan
) -> UpliftReport:
    """Bundles both uplift estimates and the treated-provider counters."""
    if len(log.item_ids) != dataset.n_items or not np.array_equal(
        np.sort(log.item_ids), np.sort(dataset.item_ids)
    ):
        raise PopulationMismatch(
            "RCT log and dataset cover different item populations"
        )
    seg = segment_items(log, plan)
    if plan.n_couponed == 0:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", EstimatorWarning)
            items = uplift_items_sold(seg)
            providers, diag = _provider_estimate(dataset, seg)
    else:
        items = uplift_items_sold(seg)
        providers, diag = _provider_estimate(dataset, seg)
    return UpliftReport(
        strategy_name=plan.strategy_name,
        uplift_items_sold=items,
        uplift_successful_providers=providers,
        n_treated_providers=diag.n_treated_providers,
        ser_lift=diag.ser_lift,
        n_consistent_treat=diag.n_consistent_treat,
        n_consistent_control=diag.n_consistent_control,
        n_mixed_excluded=diag.n_mixed_excluded,
    )
