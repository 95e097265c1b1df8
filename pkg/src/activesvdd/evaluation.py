"""Transductive evaluation: AUC, per-group aggregation, report export.

AUC comes from the rank-sum identity in O(n log n): sum the average ranks
of the abnormal class and normalize by the number of (abnormal, normal)
pairs. Ties receive average ranks, which matches pairwise counting with
half credit for equal scores.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "auc",
    "StageMetrics",
    "aggregate",
    "aggregate_across_datasets",
    "REPORT_COLUMNS",
    "export_report",
    "read_report",
]


def _average_ranks(x: np.ndarray) -> np.ndarray:
    n = x.size
    order = np.argsort(x, kind="mergesort")
    sx = x[order]
    group_start = np.flatnonzero(np.concatenate(([True], sx[1:] != sx[:-1])))
    group_end = np.concatenate((group_start[1:], [n]))
    avg = (group_start + group_end + 1) / 2.0
    ranks = np.empty(n, dtype=np.float64)
    ranks[order] = np.repeat(avg, group_end - group_start)
    return ranks


def auc(scores, labels) -> float:
    """Probability a random abnormal outscores a random normal (ties 0.5)."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.ndim != 1 or s.shape != y.shape:
        raise ValueError("scores and labels must be 1-d and equally long")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must hold only 0 or 1")
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both classes present")
    ranks = _average_ranks(s)
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


@dataclass
class StageMetrics:
    """One seeded run: stage-0 state plus one entry per completed stage.

    auc and loss cover stages 0..T; r, q_used, q_next, and the label counts
    cover stages 1..T.
    """

    dataset: str
    objective: str
    strategy: str
    ssl_method: str
    seed: int
    auc: list = field(default_factory=list)
    r: list = field(default_factory=list)
    q_used: list = field(default_factory=list)
    q_next: list = field(default_factory=list)
    n_labeled_normal: list = field(default_factory=list)
    n_labeled_abnormal: list = field(default_factory=list)
    loss: list = field(default_factory=list)

    def __post_init__(self) -> None:
        t = len(self.auc) - 1
        if t < 0:
            raise ValueError("metrics need at least the stage-0 entry")
        for name in ("r", "q_used", "q_next", "n_labeled_normal", "n_labeled_abnormal"):
            if len(getattr(self, name)) != t:
                raise ValueError(f"{name} must have one entry per stage (expected {t})")
        if self.loss and len(self.loss) != t + 1:
            raise ValueError("loss must have one entry per stage including stage 0")

    @property
    def stages(self) -> int:
        return len(self.auc) - 1


def _sample_std(values: np.ndarray) -> float:
    if values.size <= 1:
        return 0.0
    return float(np.std(values, ddof=1))


def aggregate(runs) -> list[dict]:
    """Mean and sample std of AUC per (dataset, objective, strategy, ssl, stage).

    Also averages r and q over seeds for stages 1..T. Groups must agree on
    their stage count.
    """
    runs = list(runs)
    if not runs:
        raise ValueError("no runs to aggregate")
    groups: dict[tuple, list[StageMetrics]] = {}
    for m in runs:
        groups.setdefault((m.dataset, m.objective, m.strategy, m.ssl_method), []).append(m)
    rows: list[dict] = []
    for key in sorted(groups):
        members = groups[key]
        stages = members[0].stages
        if any(m.stages != stages for m in members):
            raise ValueError(f"runs in group {key} disagree on stage count")
        dataset, objective, strategy, ssl_method = key
        for stage in range(stages + 1):
            aucs = np.array([m.auc[stage] for m in members], dtype=np.float64)
            if stage == 0:
                r_mean = None
                q_mean = None
            else:
                r_mean = float(np.mean([m.r[stage - 1] for m in members]))
                q_mean = float(np.mean([m.q_used[stage - 1] for m in members]))
            rows.append(
                {
                    "dataset": dataset,
                    "objective": objective,
                    "strategy": strategy,
                    "ssl": ssl_method,
                    "stage": stage,
                    "auc_mean": float(np.mean(aucs)),
                    "auc_std": _sample_std(aucs),
                    "r_mean": r_mean,
                    "q_mean": q_mean,
                    "n_runs": len(members),
                }
            )
    return rows


def aggregate_across_datasets(rows) -> list[dict]:
    """Average the per-dataset means (and stds) into dataset="ALL" rows."""
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        groups.setdefault((row["objective"], row["strategy"], row["ssl"], row["stage"]), []).append(row)
    out: list[dict] = []
    for key in sorted(groups):
        members = groups[key]
        objective, strategy, ssl_method, stage = key

        def _mean_of(field_name):
            vals = [m[field_name] for m in members if m[field_name] is not None]
            return float(np.mean(vals)) if vals else None

        out.append(
            {
                "dataset": "ALL",
                "objective": objective,
                "strategy": strategy,
                "ssl": ssl_method,
                "stage": stage,
                "auc_mean": _mean_of("auc_mean"),
                "auc_std": _mean_of("auc_std"),
                "r_mean": _mean_of("r_mean"),
                "q_mean": _mean_of("q_mean"),
                "n_runs": int(sum(m["n_runs"] for m in members)),
            }
        )
    return out


REPORT_COLUMNS = (
    "dataset",
    "objective",
    "strategy",
    "ssl",
    "stage",
    "auc_mean",
    "auc_std",
    "r_mean",
    "q_mean",
    "n_runs",
)

_INT_COLUMNS = {"stage", "n_runs"}
_STR_COLUMNS = {"dataset", "objective", "strategy", "ssl"}


def export_report(rows, path, fmt: str = "csv") -> Path:
    """Write aggregated rows as CSV or JSON; floats keep full precision."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        with open(p, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(REPORT_COLUMNS)
            for row in rows:
                record = []
                for col in REPORT_COLUMNS:
                    v = row[col]
                    if v is None:
                        record.append("")
                    elif col in _INT_COLUMNS:
                        record.append(str(int(v)))
                    elif col in _STR_COLUMNS:
                        record.append(str(v))
                    else:
                        record.append(repr(float(v)))
                writer.writerow(record)
    elif fmt == "json":
        doc = {"format_version": 1, "rows": [dict(row) for row in rows]}
        with open(p, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    return p


def read_report(path, fmt: str | None = None) -> list[dict]:
    """Load a report written by export_report back into row dicts."""
    p = Path(path)
    if fmt is None:
        fmt = "json" if p.suffix == ".json" else "csv"
    if fmt == "json":
        with open(p, encoding="utf-8") as fh:
            return json.load(fh)["rows"]
    rows: list[dict] = []
    with open(p, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for record in reader:
            row: dict = {}
            for col in REPORT_COLUMNS:
                raw = record[col]
                if raw == "":
                    row[col] = None
                elif col in _INT_COLUMNS:
                    row[col] = int(raw)
                elif col in _STR_COLUMNS:
                    row[col] = raw
                else:
                    row[col] = float(raw)
            rows.append(row)
    return rows
