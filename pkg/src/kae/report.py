"""Metric records, seed aggregation, best-config selection and rendering."""

from __future__ import annotations

import csv
import io
import json
import math
import statistics
from dataclasses import asdict, dataclass
from pathlib import Path

from .metrics import LOWER_IS_BETTER

__all__ = [
    "MetricRecord",
    "AggregateRow",
    "RecordFormatError",
    "RECORD_COLUMNS",
    "REPORT_COLUMNS",
    "write_records_csv",
    "read_records",
    "aggregate",
    "select_best",
    "improvement_rows",
    "render",
    "task_label",
]

RECORD_COLUMNS = ("run_id", "task", "n", "dataset", "d_latent", "family", "p", "lr", "wd", "seed", "value")
REPORT_COLUMNS = ("task", "dataset", "d_latent", "family", "p", "lr", "wd", "mean", "std", "n_seeds")


class RecordFormatError(ValueError):
    pass


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass(frozen=True)
class MetricRecord:
    run_id: str
    task: str
    dataset: str
    d_latent: int
    family: str
    p: int | None
    lr: float
    wd: float
    seed: int
    value: float
    n: int | None = None  # retrieval cut-off N; None for other tasks

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError(f"non-finite metric value in {self.run_id}/{self.task}")
        if not LOWER_IS_BETTER.get(self.task, True) and not 0.0 <= self.value <= 1.0:
            raise ValueError(f"{self.task} value {self.value} outside [0, 1]")

    @property
    def label(self) -> str:
        return task_label(self.task, self.n)

    def row(self) -> list:
        return [_fmt(getattr(self, c)) for c in RECORD_COLUMNS]


def task_label(task: str, n) -> str:
    return f"{task}@{n}" if n not in (None, "") else task


def _split_label(label: str):
    task, _, n = label.partition("@")
    return task, (int(n) if n else None)


@dataclass(frozen=True)
class AggregateRow:
    task: str  # includes "@N" for retrieval
    dataset: str
    d_latent: int
    family: str
    p: int | None
    lr: float
    wd: float
    mean: float
    std: float
    n_seeds: int

    def row(self) -> list:
        return [_fmt(getattr(self, c)) for c in REPORT_COLUMNS]

    @property
    def model(self) -> str:
        return f"{self.family}-p{self.p}" if self.p is not None else self.family


def write_records_csv(records, path, append: bool = False) -> None:
    path = Path(path)
    new = not append or not path.exists() or path.stat().st_size == 0
    with open(path, "a" if append else "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if new:
            w.writerow(RECORD_COLUMNS)
        for r in records:
            w.writerow(r.row())


def _opt_int(s):
    return int(s) if s not in ("", None) else None


def _parse_record(d: dict) -> MetricRecord:
    return MetricRecord(
        run_id=d["run_id"], task=d["task"], dataset=d["dataset"], d_latent=int(d["d_latent"]),
        family=d["family"], p=_opt_int(d["p"]), lr=float(d["lr"]), wd=float(d["wd"]),
        seed=int(d["seed"]), value=float(d["value"]), n=_opt_int(d.get("n")))


def _parse_aggregate(d: dict) -> AggregateRow:
    return AggregateRow(
        task=d["task"], dataset=d["dataset"], d_latent=int(d["d_latent"]), family=d["family"],
        p=_opt_int(d["p"]), lr=float(d["lr"]), wd=float(d["wd"]), mean=float(d["mean"]),
        std=float(d["std"]), n_seeds=int(d["n_seeds"]))


def read_records(path):
    """Load raw records or aggregate rows from CSV or JSON.

    Returns ``("records", [MetricRecord])`` or ``("aggregate", [AggregateRow])``
    depending on the columns present. Malformed rows raise
    :class:`RecordFormatError` naming the file and line.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"records file not found: {path}")
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".json":
        try:
            payload = json.loads(text) if text.strip() else {"rows": []}
        except json.JSONDecodeError as exc:
            raise RecordFormatError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
        rows = [(i + 1, {k: ("" if v is None else v) for k, v in r.items()}) for i, r in enumerate(payload["rows"])]
        columns = tuple(payload.get("columns") or (rows[0][1].keys() if rows else RECORD_COLUMNS))
    else:
        reader = csv.reader(io.StringIO(text))
        try:
            columns = tuple(next(reader))
        except StopIteration:
            return "records", []
        rows = []
        for lineno, values in enumerate(reader, 2):
            if not values:
                continue
            if len(values) != len(columns):
                raise RecordFormatError(f"{path}:{lineno}: expected {len(columns)} fields, got {len(values)}")
            rows.append((lineno, dict(zip(columns, values))))
    if set(REPORT_COLUMNS) <= set(columns):
        kind, parse = "aggregate", _parse_aggregate
    elif set(RECORD_COLUMNS) <= set(columns):
        kind, parse = "records", _parse_record
    else:
        raise RecordFormatError(f"{path}:1: unrecognised columns {columns}")
    out = []
    for lineno, d in rows:
        try:
            out.append(parse(d))
        except (KeyError, ValueError, TypeError) as exc:
            raise RecordFormatError(f"{path}:{lineno}: {exc}") from None
    return kind, out


def aggregate(records) -> list:
    """Mean and sample std (n-1) over seeds per (task, N, dataset, model, lr, wd).

    A single seed reports ``std = 0.0``.
    """
    groups = {}
    for r in records:
        key = (r.label, r.dataset, r.d_latent, r.family, r.p, r.lr, r.wd)
        groups.setdefault(key, []).append(r.value)
    rows = []
    for key in sorted(groups, key=_group_sort_key):
        vals = groups[key]
        mean = math.fsum(vals) / len(vals)
        std = statistics.stdev(vals) if len(vals) > 1 else 0.0
        rows.append(AggregateRow(*key, mean=mean, std=std, n_seeds=len(vals)))
    return rows


def _task_order(label: str):
    task, n = _split_label(label)
    order = list(LOWER_IS_BETTER)
    return (order.index(task) if task in order else len(order), task, n or 0)


def _group_sort_key(key):
    label, dataset, d_latent, family, p, lr, wd = key
    return (_task_order(label), dataset, d_latent, family, -1 if p is None else p, -lr, -wd)


def _lower_better(label: str) -> bool:
    return LOWER_IS_BETTER.get(_split_label(label)[0], True)


def select_best(rows, selection_metric: str = "task") -> list:
    """Keep, per model and task, the (lr, wd) grid point with the best mean.

    ``selection_metric="task"`` ranks each task by its own metric (retrieval
    by Recall@10 when present, applied to every N); ``"reconstruction"`` picks
    the grid point by reconstruction error for all tasks.
    """
    by_model = {}
    for r in rows:
        by_model.setdefault((r.dataset, r.d_latent, r.family, r.p), []).append(r)
    keep = []
    for key in sorted(by_model, key=lambda k: (k[0], k[1], k[2], -1 if k[3] is None else k[3])):
        model_rows = by_model[key]
        tasks = sorted({_split_label(r.task)[0] for r in model_rows}, key=lambda t: _task_order(t))
        for task in tasks:
            task_rows = [r for r in model_rows if _split_label(r.task)[0] == task]
            if selection_metric == "reconstruction" and any(r.task == "reconstruction" for r in model_rows):
                basis = [r for r in model_rows if r.task == "reconstruction"]
            else:
                labels = sorted({r.task for r in task_rows}, key=_task_order)
                pick = f"{task}@10" if f"{task}@10" in labels else labels[0]
                basis = [r for r in task_rows if r.task == pick]
            lower = _lower_better(basis[0].task)
            best = min(basis, key=lambda r: ((r.mean if lower else -r.mean), -r.lr, -r.wd))
            keep.extend(r for r in task_rows if (r.lr, r.wd) == (best.lr, best.wd))
    keep.sort(key=lambda r: _group_sort_key((r.task, r.dataset, r.d_latent, r.family, r.p, r.lr, r.wd)))
    return keep


def improvement_rows(rows) -> list:
    """Per (task, dataset, d_latent): AE mean minus best KAE mean (lower-is-better tasks),
    best KAE minus AE for higher-is-better tasks. Positive means KAE is better."""
    out = []
    groups = {}
    for r in rows:
        groups.setdefault((r.task, r.dataset, r.d_latent), []).append(r)
    for key in sorted(groups, key=lambda k: (_task_order(k[0]), k[1], k[2])):
        grp = groups[key]
        ae = [r.mean for r in grp if r.family == "ae"]
        kae = [r.mean for r in grp if r.family == "kae"]
        if not ae or not kae:
            continue
        lower = _lower_better(key[0])
        delta = ae[0] - min(kae) if lower else max(kae) - ae[0]
        out.append((*key, delta))
    return out


def _render_markdown(rows) -> str:
    if not rows:
        return "| model |\n|---|\n"
    best_rows = rows
    tasks = sorted({r.task for r in best_rows}, key=_task_order)
    columns = sorted({(r.dataset, r.d_latent) for r in best_rows})
    models = sorted({(r.family, -1 if r.p is None else r.p) for r in best_rows})
    improve = {(t, d, k): v for t, d, k, v in improvement_rows(best_rows)}
    lines = []
    for task in tasks:
        lower = _lower_better(task)
        lines.append(f"### {task} ({'lower' if lower else 'higher'} is better)")
        lines.append("")
        lines.append("| model | " + " | ".join(f"{d} d={k}" for d, k in columns) + " |")
        lines.append("|---|" + "---|" * len(columns))
        cell = {}
        for r in best_rows:
            if r.task == task:
                cell[(r.family, -1 if r.p is None else r.p, r.dataset, r.d_latent)] = r
        best = {}
        for d, k in columns:
            vals = [r.mean for (f, p, dd, kk), r in cell.items() if (dd, kk) == (d, k)]
            if vals:
                best[(d, k)] = min(vals) if lower else max(vals)
        for fam, p in models:
            name = f"{fam} (p={p})" if p >= 0 else fam
            parts = []
            for d, k in columns:
                r = cell.get((fam, p, d, k))
                if r is None:
                    parts.append("")
                    continue
                txt = f"{r.mean:.3f} ± {r.std:.3f}"
                parts.append(f"**{txt}**" if r.mean == best[(d, k)] else txt)
            lines.append(f"| {name} | " + " | ".join(parts) + " |")
        if any((task, d, k) in improve for d, k in columns):
            parts = [f"{improve[(task, d, k)]:+.3f}" if (task, d, k) in improve else "" for d, k in columns]
            lines.append("| Improve | " + " | ".join(parts) + " |")
        lines.append("")
    return "\n".join(lines)


def render(rows, fmt: str) -> str:
    """Render aggregate rows as ``csv``, ``json`` or ``markdown``."""
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in rows:
            w.writerow(r.row())
        return buf.getvalue()
    if fmt == "json":
        payload = {"columns": list(REPORT_COLUMNS), "rows": [asdict(r) for r in rows]}
        return json.dumps(payload, indent=2) + "\n"
    if fmt in ("markdown", "md", "markdown-table"):
        return _render_markdown(rows)
    raise ValueError(f"unknown report format {fmt!r}; expected csv, json or markdown")
