"""Core data types shared by every module.

All types validate at construction and are immutable afterwards, so they can
be shared freely across parallel workers. Item and provider identifiers are
64-bit integers; the simulator assigns them densely (0..n-1) so the solvers
can use them for cheap array indexing, but any unique integers are accepted
at ingestion.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .errors import (
    DuplicateItemId,
    InfeasibleBudget,
    ProbabilityOutOfRange,
)


def _check_probability(value: float, what: str, item_id: int) -> None:
    if not (0.0 <= value <= 1.0):
        raise ProbabilityOutOfRange(
            f"{what}={value!r} out of [0, 1] for item {item_id}"
        )


@dataclass(frozen=True, slots=True)
class ItemRecord:
    """One marketplace item.

    Attributes:
        item_id: Unique identifier within a dataset.
        provider_id: Owning provider.
        features: Real-valued covariates (unitless); may be empty.
        true_p0: Ground-truth sale probability without a coupon. Present only
            for simulator output; None for external datasets.
        true_p1: Ground-truth sale probability with a coupon.
    """

    item_id: int
    provider_id: int
    features: tuple[float, ...] = ()
    true_p0: float | None = None
    true_p1: float | None = None

    def __post_init__(self) -> None:
        if self.true_p0 is not None:
            _check_probability(self.true_p0, "true_p0", self.item_id)
        if self.true_p1 is not None:
            _check_probability(self.true_p1, "true_p1", self.item_id)


@dataclass(frozen=True, slots=True)
class ItemScore:
    """Predicted sale rates for one item.

    ``pi`` is exposed as a property so it always equals ``f1 - f0`` exactly.
    """

    item_id: int
    f0: float
    f1: float

    def __post_init__(self) -> None:
        _check_probability(self.f0, "f0", self.item_id)
        _check_probability(self.f1, "f1", self.item_id)

    @property
    def pi(self) -> float:
        """Predicted per-item coupon effect (treatment minus control rate)."""
        return self.f1 - self.f0


class ScoreTable(Sequence[ItemScore]):
    """Columnar collection of per-item scores.

    Behaves as a sequence of :class:`ItemScore` while keeping the underlying
    numpy columns available for vectorized consumers (solvers, estimators).
    Row order matches the dataset that produced it.
    """

    __slots__ = ("item_ids", "f0", "f1", "pi", "_pos")

    def __init__(self, item_ids: np.ndarray, f0: np.ndarray, f1: np.ndarray):
        item_ids = np.asarray(item_ids, dtype=np.int64)
        f0 = np.asarray(f0, dtype=np.float64)
        f1 = np.asarray(f1, dtype=np.float64)
        if not (len(item_ids) == len(f0) == len(f1)):
            raise ValueError("score columns must have equal length")
        if len(np.unique(item_ids)) != len(item_ids):
            raise DuplicateItemId("duplicate item ids in score table")
        for name, col in (("f0", f0), ("f1", f1)):
            if col.size and (col.min() < 0.0 or col.max() > 1.0):
                bad = int(item_ids[int(np.argmax((col < 0) | (col > 1)))])
                raise ProbabilityOutOfRange(f"{name} out of [0, 1] for item {bad}")
        self.item_ids = item_ids
        self.f0 = f0
        self.f1 = f1
        self.pi = f1 - f0
        self._pos: dict[int, int] | None = None

    @classmethod
    def from_item_scores(cls, scores: Sequence[ItemScore]) -> "ScoreTable":
        return cls(
            np.array([s.item_id for s in scores], dtype=np.int64),
            np.array([s.f0 for s in scores], dtype=np.float64),
            np.array([s.f1 for s in scores], dtype=np.float64),
        )

    def position_of(self, item_id: int) -> int:
        if self._pos is None:
            self._pos = {int(i): k for k, i in enumerate(self.item_ids)}
        return self._pos[item_id]

    def score_of(self, item_id: int) -> ItemScore:
        return self[self.position_of(item_id)]

    def __len__(self) -> int:
        return len(self.item_ids)

    def __getitem__(self, index):  # type: ignore[override]
        if isinstance(index, slice):
            return [self[i] for i in range(*index.indices(len(self)))]
        return ItemScore(
            item_id=int(self.item_ids[index]),
            f0=float(self.f0[index]),
            f1=float(self.f1[index]),
        )

    def __iter__(self) -> Iterator[ItemScore]:
        for i in range(len(self)):
            yield self[i]


@dataclass(frozen=True)
class AllocationPlan:
    """The 0/1 coupon decision per item plus budget accounting.

    Invariant: for a feasible exact-budget plan the number of couponed items
    equals ``budget_n``; at-most-budget plans may place fewer.
    """

    couponed: frozenset[int]
    budget_n: int
    strategy_name: str
    objective_value: float | None = None
    exact_budget: bool = True
    feasible: bool = True

    def __post_init__(self) -> None:
        if self.budget_n < 0:
            raise InfeasibleBudget(f"budget_n={self.budget_n} is negative")
        if self.feasible:
            if self.exact_budget and len(self.couponed) != self.budget_n:
                raise InfeasibleBudget(
                    f"plan '{self.strategy_name}' placed {len(self.couponed)} "
                    f"coupons but the exact budget is {self.budget_n}"
                )
            if not self.exact_budget and len(self.couponed) > self.budget_n:
                raise InfeasibleBudget(
                    f"plan '{self.strategy_name}' placed {len(self.couponed)} "
                    f"coupons, above the budget {self.budget_n}"
                )

    @property
    def n_couponed(self) -> int:
        return len(self.couponed)

    def decision(self, item_id: int) -> int:
        """Binary coupon flag for one item."""
        return 1 if item_id in self.couponed else 0

    def decisions(self, item_ids: np.ndarray) -> np.ndarray:
        """Vector of coupon flags aligned with ``item_ids``."""
        if not self.couponed:
            return np.zeros(len(item_ids), dtype=np.int8)
        table = np.fromiter(self.couponed, dtype=np.int64, count=len(self.couponed))
        return np.isin(np.asarray(item_ids, dtype=np.int64), table).astype(np.int8)


class Dataset:
    """An immutable item population with its provider index.

    Stored as columns for vectorized access; :meth:`records` and
    :attr:`provider_index` provide the object views. Every item belongs to
    exactly one provider and the index is derived from the item records, so
    the two can never disagree.
    """

    __slots__ = (
        "item_ids",
        "provider_ids",
        "features",
        "true_p0",
        "true_p1",
        "_pos",
        "_provider_order",
        "_provider_starts",
        "_provider_unique",
        "_provider_index",
    )

    def __init__(
        self,
        item_ids: np.ndarray,
        provider_ids: np.ndarray,
        features: np.ndarray | None = None,
        true_p0: np.ndarray | None = None,
        true_p1: np.ndarray | None = None,
    ):
        item_ids = np.asarray(item_ids, dtype=np.int64)
        provider_ids = np.asarray(provider_ids, dtype=np.int64)
        n = len(item_ids)
        if len(provider_ids) != n:
            raise ValueError("item_ids and provider_ids must have equal length")

        problems: list[str] = []
        uniq, counts = np.unique(item_ids, return_counts=True)
        dup_ids = uniq[counts > 1]
        if dup_ids.size:
            problems.append(f"duplicate item ids: {dup_ids.tolist()}")

        if features is None:
            features = np.zeros((n, 0), dtype=np.float64)
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or len(features) != n:
            raise ValueError("features must be a (n_items, n_features) array")

        def _clean(col: np.ndarray | None, name: str) -> np.ndarray:
            if col is None:
                return np.full(n, np.nan)
            col = np.asarray(col, dtype=np.float64)
            present = ~np.isnan(col)
            bad = present & ((col < 0.0) | (col > 1.0))
            if bad.any():
                offenders = item_ids[bad].tolist()
                problems.append(f"{name} out of [0, 1] for items {offenders}")
            return col

        true_p0 = _clean(true_p0, "true_p0")
        true_p1 = _clean(true_p1, "true_p1")

        if problems:
            message = "; ".join(problems)
            if dup_ids.size:
                raise DuplicateItemId(message)
            raise ProbabilityOutOfRange(message)

        self.item_ids = item_ids
        self.provider_ids = provider_ids
        self.features = features
        self.true_p0 = true_p0
        self.true_p1 = true_p1
        self._pos: dict[int, int] | None = None
        order = np.argsort(provider_ids, kind="stable")
        sorted_pids = provider_ids[order]
        boundaries = np.flatnonzero(np.diff(sorted_pids)) + 1
        self._provider_order = order
        self._provider_starts = np.concatenate(
            ([0], boundaries, [n])
        ) if n else np.array([0])
        self._provider_unique = sorted_pids[
            np.concatenate(([0], boundaries))
        ] if n else np.array([], dtype=np.int64)
        self._provider_index: dict[int, list[int]] | None = None

    # -- construction ------------------------------------------------------

    @classmethod
    def from_records(cls, records: Sequence[ItemRecord]) -> "Dataset":
        n = len(records)
        n_features = len(records[0].features) if n else 0
        features = np.zeros((n, n_features), dtype=np.float64)
        item_ids = np.empty(n, dtype=np.int64)
        provider_ids = np.empty(n, dtype=np.int64)
        true_p0 = np.full(n, np.nan)
        true_p1 = np.full(n, np.nan)
        for i, rec in enumerate(records):
            if len(rec.features) != n_features:
                raise ValueError(
                    f"item {rec.item_id} has {len(rec.features)} features, "
                    f"expected {n_features}"
                )
            item_ids[i] = rec.item_id
            provider_ids[i] = rec.provider_id
            features[i] = rec.features
            if rec.true_p0 is not None:
                true_p0[i] = rec.true_p0
            if rec.true_p1 is not None:
                true_p1[i] = rec.true_p1
        return cls(item_ids, provider_ids, features, true_p0, true_p1)

    # -- basic accessors ----------------------------------------------------

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    @property
    def n_providers(self) -> int:
        return len(self._provider_unique)

    @property
    def has_ground_truth(self) -> bool:
        if self.n_items == 0:
            return False
        return bool(
            (~np.isnan(self.true_p0)).all() and (~np.isnan(self.true_p1)).all()
        )

    def position_of(self, item_id: int) -> int:
        if self._pos is None:
            self._pos = {int(i): k for k, i in enumerate(self.item_ids)}
        return self._pos[item_id]

    def record(self, index: int) -> ItemRecord:
        p0 = self.true_p0[index]
        p1 = self.true_p1[index]
        return ItemRecord(
            item_id=int(self.item_ids[index]),
            provider_id=int(self.provider_ids[index]),
            features=tuple(float(x) for x in self.features[index]),
            true_p0=None if np.isnan(p0) else float(p0),
            true_p1=None if np.isnan(p1) else float(p1),
        )

    def records(self) -> list[ItemRecord]:
        return [self.record(i) for i in range(self.n_items)]

    @property
    def items(self) -> list[ItemRecord]:
        return self.records()

    @property
    def provider_index(self) -> dict[int, list[int]]:
        """Provider id -> item ids, in dataset order."""
        if self._provider_index is None:
            index: dict[int, list[int]] = {}
            for pid, start, end in self.iter_provider_slices():
                positions = np.sort(self._provider_order[start:end])
                index[pid] = [int(i) for i in self.item_ids[positions]]
            self._provider_index = index
        return self._provider_index

    def iter_provider_slices(self) -> Iterator[tuple[int, int, int]]:
        """Yields (provider_id, start, end) over the provider-sorted order.

        Positions ``self._provider_order[start:end]`` are the dataset rows of
        that provider.
        """
        for k in range(self.n_providers):
            yield (
                int(self._provider_unique[k]),
                int(self._provider_starts[k]),
                int(self._provider_starts[k + 1]),
            )

    def provider_positions(self, k: int) -> np.ndarray:
        """Dataset row positions of the k-th provider (sorted order)."""
        start = self._provider_starts[k]
        end = self._provider_starts[k + 1]
        return np.sort(self._provider_order[start:end])

    def __len__(self) -> int:
        return self.n_items


def validate_dataset(raw_items: Sequence[ItemRecord]) -> Dataset:
    """Builds a consistent :class:`Dataset`, enumerating every violation.

    Raises:
        DuplicateItemId: if any item id repeats (message lists all offenders,
            including any probability violations found alongside).
        ProbabilityOutOfRange: if any ground-truth probability is outside
            [0, 1].
    """
    return Dataset.from_records(list(raw_items))
