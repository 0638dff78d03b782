"""File formats: CSV interchange plus JSON mirrors.

All CSVs carry headers, use UTF-8 and '.' decimals, and print probabilities
with 12 significant digits so reruns are byte-identical and round-trips stay
within 1e-12. OS-level failures surface as :class:`IoError`.
"""

from __future__ import annotations

import csv
import json
import os
from typing import Iterable, Sequence

import numpy as np

from .domain import AllocationPlan, Dataset, ScoreTable
from .errors import IoError
from .evaluation import UpliftReport
from .ser import PatternCurve
from .simulate import RctLog


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def _open_write(path):
    try:
        parent = os.path.dirname(os.fspath(path))
        if parent:
            os.makedirs(parent, exist_ok=True)
        return open(path, "w", newline="", encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def _open_read(path):
    try:
        return open(path, "r", newline="", encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc


# -- dataset ------------------------------------------------------------------


def write_items_csv(dataset: Dataset, path) -> None:
    n_features = dataset.features.shape[1]
    header = (
        ["item_id", "provider_id"]
        + [f"feature_{j}" for j in range(n_features)]
        + ["true_p0", "true_p1"]
    )
    with _open_write(path) as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(dataset.n_items):
            row = [int(dataset.item_ids[i]), int(dataset.provider_ids[i])]
            row += [_fmt(x) for x in dataset.features[i]]
            p0 = dataset.true_p0[i]
            p1 = dataset.true_p1[i]
            row.append("" if np.isnan(p0) else _fmt(p0))
            row.append("" if np.isnan(p1) else _fmt(p1))
            writer.writerow(row)


def read_items_csv(path) -> Dataset:
    with _open_read(path) as fh:
        reader = csv.reader(fh)
        header = next(reader)
        feature_cols = [h for h in header if h.startswith("feature_")]
        rows = list(reader)
    n = len(rows)
    item_ids = np.empty(n, dtype=np.int64)
    provider_ids = np.empty(n, dtype=np.int64)
    features = np.zeros((n, len(feature_cols)), dtype=np.float64)
    true_p0 = np.full(n, np.nan)
    true_p1 = np.full(n, np.nan)
    base = 2
    for i, row in enumerate(rows):
        item_ids[i] = int(row[0])
        provider_ids[i] = int(row[1])
        for j in range(len(feature_cols)):
            features[i, j] = float(row[base + j])
        p0_raw = row[base + len(feature_cols)]
        p1_raw = row[base + len(feature_cols) + 1]
        if p0_raw:
            true_p0[i] = float(p0_raw)
        if p1_raw:
            true_p1[i] = float(p1_raw)
    return Dataset(item_ids, provider_ids, features, true_p0, true_p1)


# -- RCT log ------------------------------------------------------------------


def write_rct_csv(log: RctLog, path) -> None:
    with _open_write(path) as fh:
        writer = csv.writer(fh)
        writer.writerow(["item_id", "assignment", "sold"])
        for i in range(len(log)):
            writer.writerow(
                [int(log.item_ids[i]), int(log.assignment[i]), int(log.sold[i])]
            )


def read_rct_csv(path) -> RctLog:
    with _open_read(path) as fh:
        reader = csv.reader(fh)
        next(reader)
        rows = list(reader)
    return RctLog(
        item_ids=np.array([int(r[0]) for r in rows], dtype=np.int64),
        assignment=np.array([int(r[1]) for r in rows], dtype=np.int8),
        sold=np.array([int(r[2]) for r in rows], dtype=np.int8),
    )


# -- scores -------------------------------------------------------------------


def write_scores_csv(scores: ScoreTable, path) -> None:
    with _open_write(path) as fh:
        writer = csv.writer(fh)
        writer.writerow(["item_id", "f0", "f1", "pi"])
        for i in range(len(scores)):
            writer.writerow(
                [
                    int(scores.item_ids[i]),
                    _fmt(scores.f0[i]),
                    _fmt(scores.f1[i]),
                    _fmt(scores.pi[i]),
                ]
            )


def read_scores_csv(path) -> ScoreTable:
    with _open_read(path) as fh:
        reader = csv.reader(fh)
        next(reader)
        rows = list(reader)
    # pi is rederived from f0/f1 so the stored identity holds exactly.
    return ScoreTable(
        item_ids=np.array([int(r[0]) for r in rows], dtype=np.int64),
        f0=np.array([float(r[1]) for r in rows], dtype=np.float64),
        f1=np.array([float(r[2]) for r in rows], dtype=np.float64),
    )


# -- plans ---------------------------------------------------------------------


def write_plan_csv(plan: AllocationPlan, item_ids: np.ndarray, path) -> None:
    flags = plan.decisions(item_ids)
    with _open_write(path) as fh:
        writer = csv.writer(fh)
        writer.writerow(["item_id", "coupon_flag"])
        for i, flag in zip(item_ids, flags):
            writer.writerow([int(i), int(flag)])


def read_plan_csv(
    path,
    budget_n: int | None = None,
    strategy_name: str | None = None,
    objective_value: float | None = None,
) -> AllocationPlan:
    with _open_read(path) as fh:
        reader = csv.reader(fh)
        next(reader)
        couponed = [int(r[0]) for r in reader if int(r[1]) == 1]
    name = strategy_name or os.path.splitext(os.path.basename(path))[0]
    if name.startswith("plan_"):
        name = name[len("plan_"):]
    return AllocationPlan(
        couponed=frozenset(couponed),
        budget_n=budget_n if budget_n is not None else len(couponed),
        strategy_name=name,
        objective_value=objective_value,
    )


def write_plan_json(plan: AllocationPlan, path) -> None:
    payload = {
        "strategy": plan.strategy_name,
        "budget_n": plan.budget_n,
        "exact_budget": plan.exact_budget,
        "objective_value": plan.objective_value,
        "couponed_item_ids": sorted(plan.couponed),
    }
    with _open_write(path) as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


# -- reports --------------------------------------------------------------------

_REPORT_FIELDS = [
    "strategy",
    "uplift_items_sold",
    "uplift_successful_providers",
    "n_treated_providers",
    "ser_lift",
    "n_consistent_treat",
    "n_consistent_control",
    "n_mixed_excluded",
]


def write_report_csv(reports: Sequence[UpliftReport], path) -> None:
    with _open_write(path) as fh:
        writer = csv.writer(fh)
        writer.writerow(_REPORT_FIELDS)
        for rep in reports:
            d = rep.to_dict()
            writer.writerow(
                [
                    d["strategy"],
                    _fmt(d["uplift_items_sold"]),
                    _fmt(d["uplift_successful_providers"]),
                    d["n_treated_providers"],
                    _fmt(d["ser_lift"]),
                    d["n_consistent_treat"],
                    d["n_consistent_control"],
                    d["n_mixed_excluded"],
                ]
            )


def read_report_csv(path) -> list[UpliftReport]:
    with _open_read(path) as fh:
        reader = csv.DictReader(fh)
        reports = []
        for row in reader:
            reports.append(
                UpliftReport(
                    strategy_name=row["strategy"],
                    uplift_items_sold=float(row["uplift_items_sold"]),
                    uplift_successful_providers=float(
                        row["uplift_successful_providers"]
                    ),
                    n_treated_providers=int(row["n_treated_providers"]),
                    ser_lift=float(row["ser_lift"]),
                    n_consistent_treat=int(row["n_consistent_treat"]),
                    n_consistent_control=int(row["n_consistent_control"]),
                    n_mixed_excluded=int(row["n_mixed_excluded"]),
                )
            )
    return reports


def write_report_json(reports: Sequence[UpliftReport], path) -> None:
    with _open_write(path) as fh:
        json.dump([r.to_dict() for r in reports], fh, indent=2, sort_keys=True)
        fh.write("\n")


# -- pattern curves ---------------------------------------------------------------


def write_curves_jsonl(curves: Iterable[PatternCurve], path) -> None:
    with _open_write(path) as fh:
        for curve in curves:
            fh.write(
                json.dumps(
                    {
                        "provider_id": curve.provider_id,
                        "item_order": list(curve.item_order),
                        "deltas": [float(d) for d in curve.deltas],
                    },
                    sort_keys=True,
                )
                + "\n"
            )
