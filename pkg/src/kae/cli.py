"""``kae`` command line: train, eval, bench, report."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import metrics
from .bench import (DimensionMismatchError, RunSpec, curve_rows, evaluate, expand_runs, load_splits,
                    run_bench, train_run, write_curves)
from .config import ConfigError, ExperimentConfig, ModelSpec, load_config, parse_seeds
from .model import CheckpointError, read_checkpoint
from .report import RecordFormatError, aggregate, read_records, render, select_best, write_records_csv

logger = logging.getLogger("kae")


class UsageError(Exception):
    pass


def _models_from_args(args):
    if args.family is None:
        return None
    models = []
    for fam in args.family.split(","):
        fam = fam.strip()
        if fam == "kae" and args.order:
            models.extend(ModelSpec("kae", int(p)) for p in str(args.order).split(","))
        else:
            models.append(ModelSpec.parse(fam))
    return tuple(models)


def build_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    tasks = None
    if getattr(args, "tasks", None):
        tasks = tuple(t.strip() for t in args.tasks.split(",") if t.strip())
        for t in tasks:
            if t not in metrics.TASKS:
                raise UsageError(f"unknown task {t!r}; expected one of {', '.join(metrics.TASKS)}")
    return cfg.with_overrides(
        dataset=args.dataset,
        models=_models_from_args(args),
        d_latent=args.latent,
        seeds=parse_seeds(args.seeds) if args.seeds else None,
        tasks=tasks,
        out_dir=args.out,
        data_dir=args.data_dir,
        epochs=args.epochs,
        lr_grid=tuple(float(v) for v in args.lr.split(",")) if args.lr else None,
        wd_grid=tuple(float(v) for v in args.wd.split(",")) if args.wd else None,
        workers=args.workers,
        n_train=args.n_train,
        n_test=args.n_test,
    )


def cmd_train(cfg: ExperimentConfig) -> list:
    """Train every (model, grid point, seed); append per-epoch test MSE to curves.csv."""
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    load_splits(cfg)
    paths = []
    for run in expand_runs(cfg):
        _, curve = train_run(cfg, run)
        write_curves(out / "curves.csv", curve_rows(run, curve), append=True)
        paths.append(out / "checkpoints" / f"{run.run_id}.kae")
        print(f"{run.run_id}: final test_mse={curve[-1]:.6f}" if curve else f"{run.run_id}: saved (0 epochs)")
    return paths


def cmd_eval(checkpoint, tasks, cfg: ExperimentConfig) -> list:
    """Evaluate a saved checkpoint; records are appended to ``out_dir/records.csv``."""
    for t in tasks:
        if t not in metrics.TASKS:
            raise UsageError(f"unknown task {t!r}; expected one of {', '.join(metrics.TASKS)}")
    model, header, _ = read_checkpoint(checkpoint)
    meta = header.get("metadata", {})
    if meta.get("dataset") and meta["dataset"] != cfg.dataset:
        cfg = cfg.with_overrides(dataset=meta["dataset"])
    train, test = load_splits(cfg)
    if model.config.d_input != test.d:
        raise DimensionMismatchError(
            f"checkpoint {checkpoint} expects {model.config.d_input} features, {cfg.dataset} has {test.d}")
    c = model.config
    run = RunSpec(ModelSpec(c.family, c.order_p if c.family == "kae" else None),
                  float(meta.get("lr", 0.0)), float(meta.get("wd", 0.0)), c.master_seed, cfg.dataset, c.d_latent)
    records = []
    for t in tasks:
        records.extend(evaluate(model, t, run, cfg, train, test))
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_records_csv(records, out / "records.csv", append=True)
    for r in records:
        print(f"{r.run_id} {r.label} {r.value:.6f}")
    return records


def cmd_report(records_path, fmt: str, best: bool = False, selection_metric: str = "task") -> str:
    kind, rows = read_records(records_path)
    if kind == "records":
        rows = aggregate(rows)
    if best or fmt in ("markdown", "md", "markdown-table"):
        rows = select_best(rows, selection_metric)
    return render(rows, fmt)


def _add_common(p):
    p.add_argument("--config", help="key = value experiment file")
    p.add_argument("--dataset", choices=["mnist", "fashion_mnist", "cifar10", "cifar100"])
    p.add_argument("--family", help="comma list of ae, kae, kan, fourierkan, wavkan (or kae:P)")
    p.add_argument("--order", help="polynomial order(s) for kae, e.g. 3 or 1,2,3")
    p.add_argument("--latent", type=int, help="latent dimension")
    p.add_argument("--seeds", help="e.g. 2024..2033 or 2024,2025")
    p.add_argument("--tasks", help="comma list of " + ", ".join(metrics.TASKS))
    p.add_argument("--out", help="output directory")
    p.add_argument("--data-dir", help="dataset root (default: $KAE_DATA_DIR)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", help="learning-rate grid, comma separated")
    p.add_argument("--wd", help="weight-decay grid, comma separated")
    p.add_argument("--workers", type=int)
    p.add_argument("--n-train", type=int, help="use a fixed random subset of the training split")
    p.add_argument("--n-test", type=int, help="use a fixed random subset of the test split")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kae", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (("train", "train models and save checkpoints"),
                           ("bench", "sweep grid x seeds, evaluate, select and report")):
        _add_common(sub.add_parser(name, help=helptext))
    ev = sub.add_parser("eval", help="evaluate a checkpoint")
    _add_common(ev)
    ev.add_argument("checkpoint")
    rp = sub.add_parser("report", help="aggregate and render a records file")
    rp.add_argument("records")
    rp.add_argument("--format", default="markdown", choices=["csv", "json", "markdown"])
    rp.add_argument("--best", action="store_true", help="keep only the selected grid point per model")
    rp.add_argument("--selection-metric", default="task", choices=["task", "reconstruction"])
    rp.add_argument("-o", "--output", help="write to file instead of stdout")
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        if args.command == "report":
            text = cmd_report(args.records, args.format, args.best, args.selection_metric)
            if args.output:
                Path(args.output).write_text(text, encoding="utf-8")
            else:
                sys.stdout.write(text)
            return 0
        cfg = build_config(args)
        if args.command == "train":
            cmd_train(cfg)
        elif args.command == "eval":
            cmd_eval(args.checkpoint, cfg.tasks, cfg)
        else:
            result = run_bench(cfg)
            sys.stdout.write((Path(cfg.out_dir) / "report.md").read_text(encoding="utf-8"))
            logger.info("spot-checked %d records", result["spot_checked"])
        return 0
    except UsageError as exc:
        parser.error(str(exc))
    except (ConfigError, RecordFormatError, CheckpointError, DimensionMismatchError, FileNotFoundError,
            PermissionError) as exc:
        print(f"kae {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
