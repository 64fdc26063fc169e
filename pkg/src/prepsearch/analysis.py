"""Post-hoc analysis of Shapley tables across datasets.

An operator's "signature" is its vector of Shapley values over a collection
of datasets. Operators in the same category should have correlated
signatures; that is the coherence check that justifies searching categories
before operators.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InsufficientData, ZeroVariance
from .operators import OperatorLibrary
from .shapley import ShapleyEstimate


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    xa = np.asarray(x, dtype=np.float64)
    ya = np.asarray(y, dtype=np.float64)
    if xa.shape != ya.shape or xa.ndim != 1:
        raise ValueError(f"mismatched shapes {xa.shape} vs {ya.shape}")
    if xa.size < 2:
        raise InsufficientData("need at least 2 points for a correlation")
    xc = xa - xa.mean()
    yc = ya - ya.mean()
    denom = float(np.sqrt((xc * xc).sum() * (yc * yc).sum()))
    if denom == 0.0:
        raise ZeroVariance("constant input has no correlation")
    return float((xc * yc).sum() / denom)


@dataclass(frozen=True)
class SignatureMatrix:
    """Rows are operators, columns are datasets, cells are Shapley values."""

    op_ids: tuple[int, ...]
    dataset_names: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (len(self.op_ids), len(self.dataset_names)):
            raise ValueError(
                f"values shape {v.shape} does not match "
                f"{len(self.op_ids)} ops x {len(self.dataset_names)} datasets"
            )
        object.__setattr__(self, "values", v)

    def signature(self, op_id: int) -> np.ndarray:
        return self.values[self.op_ids.index(op_id)]

    @staticmethod
    def from_tables(
        tables: dict[str, dict[int, float]], op_ids: Sequence[int]
    ) -> "SignatureMatrix":
        names = tuple(sorted(tables))
        values = np.array(
            [[tables[name][op] for name in names] for op in op_ids], dtype=np.float64
        )
        return SignatureMatrix(tuple(op_ids), names, values)


def coherence_report(matrix: SignatureMatrix, library: OperatorLibrary) -> dict:
    """Mean pairwise signature correlation within categories versus between.

    Pairs where either signature is constant are excluded (and counted), since
    they have no defined correlation.
    """
    within: list[float] = []
    between: list[float] = []
    excluded = 0
    ops = matrix.op_ids
    for i in range(len(ops)):
        for j in range(i + 1, len(ops)):
            try:
                r = pearson(matrix.values[i], matrix.values[j])
            except ZeroVariance:
                excluded += 1
                continue
            same = library.category_of(ops[i]) == library.category_of(ops[j])
            (within if same else between).append(r)

    def stats(rs: list[float]) -> dict:
        if not rs:
            return {"mean": None, "sd": None, "n_pairs": 0}
        arr = np.asarray(rs)
        sd = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
        return {"mean": float(arr.mean()), "sd": sd, "n_pairs": int(arr.size)}

    return {
        "within": stats(within),
        "between": stats(between),
        "excluded_pairs": excluded,
        "n_datasets": len(matrix.dataset_names),
    }


def shapley_winrate_correlation(matrix: SignatureMatrix) -> dict:
    """Correlate each operator's mean Shapley value with its win rate, where a
    "win" on a dataset means scoring strictly above that dataset's median."""
    if len(matrix.op_ids) < 5:
        raise InsufficientData(
            f"need at least 5 operators, got {len(matrix.op_ids)}"
        )
    medians = np.median(matrix.values, axis=0)
    wins = (matrix.values > medians[None, :]).mean(axis=1)
    means = matrix.values.mean(axis=1)
    return {
        "pearson_r": pearson(means, wins),
        "mean_value": {op: float(m) for op, m in zip(matrix.op_ids, means)},
        "win_rate": {op: float(w) for op, w in zip(matrix.op_ids, wins)},
    }


def position_effect_report(
    table: dict[tuple[int, int], ShapleyEstimate]
) -> dict[int, dict]:
    """Per-operator spread of Shapley value across pipeline positions.

    A large spread relative to the table's typical magnitude is direct
    evidence that slot placement matters for that operator.
    """
    by_op: dict[int, list[float]] = {}
    for (_, op), est in table.items():
        by_op.setdefault(op, []).append(est.value)
    scale = max(
        (abs(v) for vals in by_op.values() for v in vals), default=0.0
    )
    report: dict[int, dict] = {}
    for op, vals in sorted(by_op.items()):
        lo, hi = min(vals), max(vals)
        report[op] = {
            "min": lo,
            "max": hi,
            "spread": hi - lo,
            "relative_spread": (hi - lo) / scale if scale > 0 else 0.0,
            "n_positions": len(vals),
        }
    return report


def write_signature_csv(matrix: SignatureMatrix, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["op_id", *matrix.dataset_names])
        for i, op in enumerate(matrix.op_ids):
            writer.writerow([op, *[repr(float(v)) for v in matrix.values[i]]])


def write_coherence_csv(report: dict, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["group", "mean", "sd", "n_pairs"])
        for group in ("within", "between"):
            row = report[group]
            writer.writerow([group, row["mean"], row["sd"], row["n_pairs"]])
        writer.writerow(["excluded_pairs", report["excluded_pairs"], "", ""])
