"""Grid x seed sweeps: train, checkpoint, evaluate, select, report."""

from __future__ import annotations

import csv
import functools
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from . import metrics
from .config import ExperimentConfig, ModelSpec
from .data import Dataset, load_dataset, subsample
from .model import Autoencoder, AutoencoderConfig, build, read_checkpoint, save_checkpoint
from .ndcore import RngStream
from .optim import Adam
from .report import MetricRecord, aggregate, render, select_best, write_records_csv
from .train import fit

logger = logging.getLogger(__name__)

CURVE_COLUMNS = ("run_id", "family", "p", "lr", "wd", "seed", "epoch", "test_mse")

__all__ = [
    "RunSpec",
    "DimensionMismatchError",
    "expand_runs",
    "load_splits",
    "train_run",
    "evaluate",
    "run_bench",
    "spot_check",
    "CURVE_COLUMNS",
]


class DimensionMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class RunSpec:
    model: ModelSpec
    lr: float
    wd: float
    seed: int
    dataset: str
    d_latent: int

    @property
    def run_id(self) -> str:
        return f"{self.dataset}-d{self.d_latent}-{self.model.label}-lr{self.lr:g}-wd{self.wd:g}-s{self.seed}"


def expand_runs(cfg: ExperimentConfig) -> list:
    runs = [RunSpec(m, lr, wd, s, cfg.dataset, cfg.d_latent)
            for m in cfg.models for lr in cfg.lr_grid for wd in cfg.wd_grid for s in cfg.seeds]
    return sorted(runs, key=lambda r: r.run_id)


@functools.lru_cache(maxsize=4)
def _load_cached(name: str, directory: str, n_train: int, n_test: int):
    train = load_dataset(name, "train", directory)
    test = load_dataset(name, "test", directory)
    # fixed stream (seed 0) so every run and family sees the same reduced split
    if n_train and n_train < len(train):
        train = subsample(train, n_train, RngStream(0, "train-subset"))
    if n_test and n_test < len(test):
        test = subsample(test, n_test, RngStream(0, "test-subset"))
    return train, test


def load_splits(cfg: ExperimentConfig):
    return _load_cached(cfg.dataset, str(cfg.resolved_data_dir()), cfg.n_train, cfg.n_test)


def model_config(cfg: ExperimentConfig, run: RunSpec, d_input: int) -> AutoencoderConfig:
    return AutoencoderConfig(
        d_input=d_input, d_latent=run.d_latent, family=run.model.family,
        order_p=run.model.order_p or 1, latent_sigmoid=cfg.latent_sigmoid,
        poly_init=cfg.poly_init, master_seed=run.seed)


def checkpoint_path(cfg: ExperimentConfig, run: RunSpec) -> Path:
    return Path(cfg.out_dir) / "checkpoints" / f"{run.run_id}.kae"


def _run_metadata(run: RunSpec, cfg: ExperimentConfig) -> dict:
    return {"run_id": run.run_id, "dataset": run.dataset, "lr": run.lr, "wd": run.wd,
            "epochs": cfg.epochs, "batch_size": cfg.batch_size, "model": run.model.token}


def train_run(cfg: ExperimentConfig, run: RunSpec):
    """Train one (grid point, seed); save its checkpoint and return the test curve."""
    train, test = load_splits(cfg)
    model = build(model_config(cfg, run, train.d))
    opt = Adam(model, lr=run.lr, weight_decay=run.wd)
    curve = fit(model, train.X, epochs=cfg.epochs, batch_size=cfg.batch_size, seed=run.seed,
                X_test=test.X, optimizer=opt)
    path = checkpoint_path(cfg, run)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model, path, optimizer=opt, metadata=_run_metadata(run, cfg))
    return model, curve


def evaluate(model: Autoencoder, task: str, run: RunSpec, cfg: ExperimentConfig,
             train: Dataset, test: Dataset) -> list:
    """Compute one task's records; noise and subsets come from seed-derived streams."""
    if task not in metrics.TASKS:
        raise ValueError(f"unknown task {task!r}; expected one of {metrics.TASKS}")
    if model.config.d_input != test.d:
        raise DimensionMismatchError(
            f"model expects {model.config.d_input} features but {test.name} has {test.d}")

    def rec(value, n=None, name=task):
        return MetricRecord(run.run_id, name, run.dataset, run.d_latent, run.model.family,
                            run.model.order_p, run.lr, run.wd, run.seed, float(value), n)

    if task == "reconstruction":
        return [rec(metrics.reconstruction_error(model, test))]
    if task == "retrieval":
        k = min(cfg.retrieval_subset, len(test))
        sub = subsample(test, k, RngStream(run.seed, "retrieval-subset"))
        ns = [n for n in cfg.recall_ns if n < k]
        curve = metrics.recall_curve(sub.X, model.encode(sub.X), cfg.recall_k, ns)
        return [rec(v, n) for n, v in curve.items()]
    if task == "classification":
        acc = metrics.knn_classify(model.encode(train.X), train.labels, model.encode(test.X), test.labels)
        return [rec(acc)]
    kind = task.split("-", 1)[1]
    strength = cfg.gaussian_sigma if kind == "gaussian" else cfg.saltpepper_prob
    stream = RngStream(run.seed, f"noise/{kind}")
    return [rec(metrics.denoising_error(model, test, kind, stream, strength=strength, clip=cfg.clip_noise))]


def _train_and_eval(cfg: ExperimentConfig, run: RunSpec):
    model, curve = train_run(cfg, run)
    train, test = load_splits(cfg)
    records = []
    for task in cfg.tasks:
        records.extend(evaluate(model, task, run, cfg, train, test))
    logger.info("%s done: test_mse=%s", run.run_id, curve[-1] if curve else "n/a")
    return run, curve, records


def curve_rows(run: RunSpec, curve) -> list:
    return [[run.run_id, run.model.family, "" if run.model.order_p is None else run.model.order_p,
             repr(run.lr), repr(run.wd), run.seed, epoch, repr(v)] for epoch, v in enumerate(curve, 1)]


def write_curves(path, rows, append: bool = False) -> None:
    path = Path(path)
    new = not append or not path.exists() or path.stat().st_size == 0
    with open(path, "a" if append else "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if new:
            w.writerow(CURVE_COLUMNS)
        w.writerows(rows)


def spot_check(cfg: ExperimentConfig, records: list, count: int) -> int:
    """Re-derive ``count`` random records from their checkpoints; raise on mismatch."""
    if not records or count <= 0:
        return 0
    stream = RngStream(cfg.seeds[0], "spot-check")
    picks = stream.permutation(len(records))[:count]
    train, test = load_splits(cfg)
    by_run = {r.run_id: r for r in expand_runs(cfg)}
    for i in sorted(int(j) for j in picks):
        rec = records[i]
        model, _, _ = read_checkpoint(checkpoint_path(cfg, by_run[rec.run_id]))
        again = {(r.task, r.n): r.value for r in evaluate(model, rec.task, by_run[rec.run_id], cfg, train, test)}
        if again[(rec.task, rec.n)] != rec.value:
            raise RuntimeError(f"spot check failed for {rec.run_id}/{rec.label}: "
                               f"{rec.value!r} != {again[(rec.task, rec.n)]!r}")
    return len(picks)


def run_bench(cfg: ExperimentConfig) -> dict:
    """Full sweep. Writes records.csv, curves.csv, report.{csv,json,md} under ``out_dir``.

    Runs may execute in ``cfg.workers`` processes; outputs are written once,
    sorted by run id, so they do not depend on completion order.
    """
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    runs = expand_runs(cfg)
    load_splits(cfg)  # fail fast on missing data
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_train_and_eval, [cfg] * len(runs), runs))
    else:
        results = [_train_and_eval(cfg, r) for r in runs]
    results.sort(key=lambda t: t[0].run_id)
    records = [rec for _, _, recs in results for rec in recs]
    curves = [row for run, curve, _ in results for row in curve_rows(run, curve)]
    write_records_csv(records, out / "records.csv")
    write_curves(out / "curves.csv", curves)
    checked = spot_check(cfg, records, cfg.spot_checks)
    rows = select_best(aggregate(records), cfg.selection_metric)
    for fmt, name in (("csv", "report.csv"), ("json", "report.json"), ("markdown", "report.md")):
        (out / name).write_text(render(rows, fmt), encoding="utf-8")
    return {"records": records, "report": rows, "curves": {r.run_id: c for r, c, _ in results},
            "spot_checked": checked, "out_dir": out}
