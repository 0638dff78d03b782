"""Coupon-allocation strategies and exact solvers for the budgeted problem.

Baselines: uniform random, item-level greedy on predicted uplift,
provider-level round-robin greedy, and a Nash-social-welfare allocator that
maximizes the product of item sale rates (separable in log space, so it
reduces to ranking by log(f1/f0)).

The provider-success objective is solved over per-provider pattern curves:
choose k_s coupons per provider maximizing sum_s delta_s(k_s) subject to
sum_s k_s = N. After the curve reduction this is a textbook multiple-choice
knapsack, solved exactly by dynamic programming in O(n_providers * N * K);
a marginal-gain greedy (optimal whenever the curves are concave, which the
survival-ratio ordering guarantees) and a brute-force enumerator (test
oracle, small instances only) are provided alongside. ``export_ilp`` writes
the equivalent pattern-selection integer program in CPLEX-LP format for
cross-checking against external MILP solvers.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .domain import AllocationPlan, Dataset, ScoreTable
from .errors import (
    BruteForceTooLarge,
    InfeasibleBudget,
    InsufficientEligibleItems,
    IoError,
)
from .ser import PatternCurve

_BRUTE_FORCE_ITEM_CAP = 20


class BudgetMode(Enum):
    EXACT = "exact"
    AT_MOST = "at-most"


class SolverChoice(Enum):
    DP_EXACT = "dp"
    GREEDY_MARGINAL = "greedy"
    BRUTE_FORCE = "brute"


@dataclass(frozen=True)
class BudgetSpec:
    """Total coupon budget N; EXACT mode enforces equality."""

    n_coupons: int
    mode: BudgetMode = BudgetMode.EXACT

    def __post_init__(self) -> None:
        if self.n_coupons < 0:
            raise InfeasibleBudget(f"n_coupons={self.n_coupons} is negative")

    @property
    def exact(self) -> bool:
        return self.mode is BudgetMode.EXACT


def _effective_n(budget: BudgetSpec, available: int, what: str) -> int:
    if budget.exact:
        if available < budget.n_coupons:
            raise InsufficientEligibleItems(
                f"{what}: {available} eligible items cannot absorb an exact "
                f"budget of {budget.n_coupons}"
            )
        return budget.n_coupons
    return min(budget.n_coupons, available)


def _make_plan(
    couponed: Sequence[int],
    budget: BudgetSpec,
    strategy_name: str,
    objective_value: float | None = None,
) -> AllocationPlan:
    return AllocationPlan(
        couponed=frozenset(int(i) for i in couponed),
        budget_n=budget.n_coupons,
        strategy_name=strategy_name,
        objective_value=objective_value,
        exact_budget=budget.exact,
    )


def allocate_random(
    dataset: Dataset,
    eligible: frozenset[int] | set[int],
    budget: BudgetSpec,
    seed: int = 0,
    strategy_name: str = "random",
) -> AllocationPlan:
    """Uniformly random N-subset of the eligible items; seed-deterministic."""
    pool = np.array(sorted(eligible), dtype=np.int64)
    n = _effective_n(budget, len(pool), "random")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    chosen = rng.choice(pool, size=n, replace=False) if n else pool[:0]
    return _make_plan(chosen, budget, strategy_name)


def allocate_item_greedy(
    scores: ScoreTable,
    eligible: frozenset[int] | set[int],
    budget: BudgetSpec,
    strategy_name: str = "i-greedy",
) -> AllocationPlan:
    """Coupons on the N eligible items with the largest predicted uplift.

    Ties break by ascending item id.
    """
    mask = _eligible_mask(scores.item_ids, eligible)
    ids = scores.item_ids[mask]
    pis = scores.pi[mask]
    n = _effective_n(budget, len(ids), "i-greedy")
    order = np.lexsort((ids, -pis))
    return _make_plan(ids[order[:n]], budget, strategy_name)


def allocate_nsw(
    scores: ScoreTable,
    eligible: frozenset[int] | set[int],
    budget: BudgetSpec,
    strategy_name: str = "nsw",
) -> AllocationPlan:
    """Maximizes the product of eligible-item sale rates under the budget.

    In log space the objective separates, so the optimum coupons the N items
    with the largest log(f1/f0). An item with f0 = 0 and f1 > 0 has an
    unbounded ratio and is forced to the front of the ranking; an item with
    f1 = f0 gains nothing and never precedes a positive-ratio item.
    """
    mask = _eligible_mask(scores.item_ids, eligible)
    ids = scores.item_ids[mask]
    f0 = scores.f0[mask]
    f1 = scores.f1[mask]
    n = _effective_n(budget, len(ids), "nsw")
    with np.errstate(divide="ignore", invalid="ignore"):
        log_ratio = np.log(f1) - np.log(f0)
    log_ratio[np.isnan(log_ratio)] = 0.0  # f1 == f0 == 0: no gain either way
    order = np.lexsort((ids, -log_ratio))
    return _make_plan(ids[order[:n]], budget, strategy_name)


def allocate_provider_greedy(
    curves: Sequence[PatternCurve],
    budget: BudgetSpec,
    strategy_name: str = "p-greedy",
) -> AllocationPlan:
    """Round-robin: one coupon per provider per round, best items first.

    Providers are visited in descending order of their best item's predicted
    uplift (ties by ascending provider id); round r gives each provider with
    at least r eligible items a coupon on its r-th item. A partial final
    round truncates in the same provider order.
    """
    active = [c for c in curves if c.max_coupons > 0]
    total = sum(c.max_coupons for c in active)
    n = _effective_n(budget, total, "p-greedy")
    active.sort(key=lambda c: (-c.best_pi, c.provider_id))
    chosen: list[int] = []
    round_idx = 0
    while len(chosen) < n:
        placed_any = False
        for curve in active:
            if round_idx < curve.max_coupons:
                chosen.append(curve.item_order[round_idx])
                placed_any = True
                if len(chosen) == n:
                    break
        if not placed_any:
            break
        round_idx += 1
    return _make_plan(chosen, budget, strategy_name)


def _eligible_mask(
    item_ids: np.ndarray, eligible: frozenset[int] | set[int]
) -> np.ndarray:
    if not eligible:
        return np.zeros(len(item_ids), dtype=bool)
    arr = np.fromiter(eligible, dtype=np.int64, count=len(eligible))
    return np.isin(item_ids, arr)


# -- provider-success solvers -----------------------------------------------


def _solve_dp(
    deltas: list[tuple[float, ...]], n: int, exact: bool
) -> tuple[list[int], float]:
    neg = float("-inf")
    dp = np.full(n + 1, neg)
    dp[0] = 0.0
    choices: list[np.ndarray] = []
    for d in deltas:
        kmax = min(len(d) - 1, n)
        new = dp + d[0]
        ch = np.zeros(n + 1, dtype=np.int32)
        for k in range(1, kmax + 1):
            cand = dp[: n + 1 - k] + d[k]
            tail = new[k:]
            better = cand > tail
            tail[better] = cand[better]
            ch[k:][better] = k
        dp = new
        choices.append(ch)
    if exact:
        best_n = n
        if dp[best_n] == neg:
            raise InfeasibleBudget(
                f"exact budget {n} exceeds the {sum(len(d) - 1 for d in deltas)} "
                "available eligible-item coupons"
            )
    else:
        best_n = int(np.argmax(dp))
    ks: list[int] = []
    remaining = best_n
    for ch in reversed(choices):
        k = int(ch[remaining])
        ks.append(k)
        remaining -= k
    ks.reverse()
    return ks, _refold_objective(deltas, ks)


def _refold_objective(deltas: list[tuple[float, ...]], ks: list[int]) -> float:
    total = 0.0
    for d, k in zip(deltas, ks):
        total += d[k]
    return total


def _solve_greedy(
    deltas: list[tuple[float, ...]], n: int, exact: bool
) -> tuple[list[int], float]:
    ks = [0] * len(deltas)
    heap: list[tuple[float, int, int]] = []
    for s, d in enumerate(deltas):
        if len(d) > 1:
            heap.append((-(d[1] - d[0]), s, 1))
    heapq.heapify(heap)
    placed = 0
    while placed < n and heap:
        gain, s, k = heapq.heappop(heap)
        if not exact and -gain <= 0.0:
            break
        ks[s] = k
        placed += 1
        d = deltas[s]
        if k + 1 < len(d):
            heapq.heappush(heap, (-(d[k + 1] - d[k]), s, k + 1))
    if exact and placed < n:
        raise InfeasibleBudget(
            f"exact budget {n} exceeds the available eligible-item coupons"
        )
    return ks, _refold_objective(deltas, ks)


def _solve_brute(
    deltas: list[tuple[float, ...]], n: int, exact: bool
) -> tuple[list[int], float]:
    total_items = sum(len(d) - 1 for d in deltas)
    if total_items > _BRUTE_FORCE_ITEM_CAP:
        raise BruteForceTooLarge(
            f"brute force refuses {total_items} eligible items "
            f"(cap {_BRUTE_FORCE_ITEM_CAP})"
        )
    if exact and total_items < n:
        raise InfeasibleBudget(
            f"exact budget {n} exceeds {total_items} eligible-item coupons"
        )
    best_obj = float("-inf")
    best_ks: list[int] | None = None
    ks = [0] * len(deltas)

    def recurse(s: int, spent: int, acc: float) -> None:
        nonlocal best_obj, best_ks
        if s == len(deltas):
            if (spent == n if exact else spent <= n) and acc > best_obj:
                best_obj = acc
                best_ks = ks.copy()
            return
        d = deltas[s]
        for k in range(0, min(len(d) - 1, n - spent) + 1):
            ks[s] = k
            recurse(s + 1, spent + k, acc + d[k])
        ks[s] = 0

    recurse(0, 0, 0.0)
    if best_ks is None:
        raise InfeasibleBudget(f"no feasible pattern selection for budget {n}")
    return best_ks, best_obj


_SOLVERS = {
    SolverChoice.DP_EXACT: _solve_dp,
    SolverChoice.GREEDY_MARGINAL: _solve_greedy,
    SolverChoice.BRUTE_FORCE: _solve_brute,
}


def allocate_ser(
    curves: Sequence[PatternCurve],
    budget: BudgetSpec,
    solver: SolverChoice = SolverChoice.DP_EXACT,
    strategy_name: str = "ser",
) -> AllocationPlan:
    """Optimal coupon counts per provider against the pattern curves.

    DP_EXACT returns a provably optimal split. GREEDY_MARGINAL repeatedly
    takes the globally largest next marginal gain; it matches DP_EXACT
    whenever every curve is concave. BRUTE_FORCE enumerates the whole
    pattern family and exists as a test oracle.
    """
    deltas = [c.deltas for c in curves]
    ks, objective = _SOLVERS[solver](deltas, budget.n_coupons, budget.exact)
    chosen: list[int] = []
    for curve, k in zip(curves, ks):
        chosen.extend(curve.item_order[:k])
    return _make_plan(chosen, budget, strategy_name, objective_value=objective)


def export_ilp(
    curves: Sequence[PatternCurve], budget: BudgetSpec, path
) -> None:
    """Writes the pattern-selection integer program in CPLEX-LP format.

    One binary w_{s}_{t} per provider s and coupon count t = 0..K_s;
    objective sum delta_s(t) * w_s_t, one budget row sum t * w_s_t = N and
    one choose-exactly-one row per provider. Coefficients are printed with
    12 decimals so an external solver sees the same numbers the native
    solvers use.
    """
    lines = ["\\ pattern-selection coupon allocation", "Maximize", " obj:"]
    terms = []
    for s, curve in enumerate(curves):
        for t, d in enumerate(curve.deltas):
            if t and d != 0.0:
                terms.append(f"{d:+.12f} w_{s}_{t}")
    lines.append("   " + (" ".join(terms) if terms else "0 w_0_0"))
    lines.append("Subject To")
    budget_terms = [
        f"+{t} w_{s}_{t}"
        for s, curve in enumerate(curves)
        for t in range(1, len(curve.deltas))
    ]
    op = "=" if budget.exact else "<="
    lines.append(
        f" budget: {' '.join(budget_terms) if budget_terms else '0 w_0_0'} "
        f"{op} {budget.n_coupons}"
    )
    for s, curve in enumerate(curves):
        row = " + ".join(f"w_{s}_{t}" for t in range(len(curve.deltas)))
        lines.append(f" choose_{s}: {row} = 1")
    lines.append("Binary")
    names = [
        f" w_{s}_{t}"
        for s, curve in enumerate(curves)
        for t in range(len(curve.deltas))
    ]
    lines.extend(names)
    lines.append("End")
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write LP file {path}: {exc}") from exc
