"""Command line interface.

Subcommands: train and sweep (driven by a YAML config), dry-run and gen-data
(flag-driven), and schedule check. Exit codes are a stable contract: 0 on
success, 2 for configuration or input-format problems, 3 for numerical
failures. The PDD_SEED environment variable overrides the config seed for
config-driven commands.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .config import ExperimentConfig, load_config
from .data import gen_synthetic, save_dataset
from .errors import ConfigError, NumericalError
from .policy import DropoutPolicy, ScheduleRecord, schedule_read, schedule_write
from .trainer import (RunConfig, RunMetrics, dry_run_schedule, record_dbpd_schedule,
                      run_training)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pdd",
        description="Train classifiers that backpropagate only the samples a "
                    "dropout policy keeps, and account for the savings exactly.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run one training config")
    p_train.add_argument("config", help="YAML config file")
    p_train.add_argument("--force", action="store_true",
                         help="write into a non-empty output directory")
    p_train.add_argument("--no-figures", action="store_true",
                         help="skip figure rendering regardless of the config")
    p_train.set_defaults(func=cmd_train)

    p_dry = sub.add_parser("dry-run", help="predict a count-driven schedule without training")
    p_dry.add_argument("--variant", required=True,
                       choices=["srd", "smrd-replay", "analytic"])
    p_dry.add_argument("--gamma", type=float, help="srd retention decay, in (0, 1)")
    p_dry.add_argument("--fn", help="analytic decay kind")
    p_dry.add_argument("--alpha", type=float, help="analytic decay rate")
    p_dry.add_argument("--schedule", help="schedule file for smrd-replay")
    p_dry.add_argument("--epochs", type=int, help="total epochs")
    p_dry.add_argument("--revision", type=int, default=1, help="trailing full epochs")
    p_dry.add_argument("--n", type=int, help="dataset size")
    p_dry.add_argument("--batch", type=int, default=32, help="batch size of the eventual run")
    p_dry.add_argument("--write-schedule", metavar="PATH", help="write the predicted schedule file")
    p_dry.add_argument("--plot", metavar="PATH", help="render the schedule curve to a figure")
    p_dry.set_defaults(func=cmd_dry_run)

    p_sweep = sub.add_parser("sweep", help="run the config's sweep axes")
    p_sweep.add_argument("config", help="YAML config file with a sweep section")
    p_sweep.add_argument("--force", action="store_true",
                         help="write into a non-empty output directory")
    p_sweep.set_defaults(func=cmd_sweep)

    p_gen = sub.add_parser("gen-data", help="write a synthetic IDX dataset pair")
    p_gen.add_argument("--classes", type=int, required=True)
    p_gen.add_argument("--per-class", type=int, required=True)
    p_gen.add_argument("--dims", type=int, default=16)
    p_gen.add_argument("--spread", type=float, default=0.1)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--test-per-class", type=int, default=100)
    p_gen.add_argument("--out", required=True, help="output directory")
    p_gen.add_argument("--force", action="store_true")
    p_gen.set_defaults(func=cmd_gen_data)

    p_sched = sub.add_parser("schedule", help="schedule file utilities")
    sched_sub = p_sched.add_subparsers(dest="schedule_command", required=True)
    p_check = sched_sub.add_parser("check", help="validate a schedule file")
    p_check.add_argument("file")
    p_check.add_argument("--n", type=int, help="expected dataset size")
    p_check.set_defaults(func=cmd_schedule_check)

    return parser


def _env_seed() -> int | None:
    raw = os.environ.get("PDD_SEED")
    if raw is None or raw == "":
        return None
    try:
        seed = int(raw)
    except ValueError as exc:
        raise ConfigError(f"PDD_SEED must be an integer, got {raw!r}") from exc
    if seed < 0:
        raise ConfigError(f"PDD_SEED must be non-negative, got {seed}")
    return seed


def _prepare_dir(path: Path, force: bool) -> None:
    if path.exists():
        if not path.is_dir():
            raise ConfigError(f"{path} exists and is not a directory")
        if any(path.iterdir()) and not force:
            raise ConfigError(f"{path} is not empty; pass --force to write into it")
    else:
        path.mkdir(parents=True)


def _write_run_artifacts(out_dir: Path, exp: ExperimentConfig, metrics: RunMetrics,
                         figures: bool) -> None:
    from . import report

    report.write_metrics_csv(out_dir / "metrics.csv", metrics)
    report.write_summary_json(out_dir / "summary.json", metrics, exp.echo())
    if exp.histogram:
        report.write_histogram_csv(out_dir / "histogram.csv", metrics)
    if metrics.variant == "dbpd":
        schedule_write(record_dbpd_schedule(metrics), out_dir / "schedule.csv")
    if figures:
        report.render_run_figures(out_dir, metrics)


def cmd_train(args: argparse.Namespace) -> int:
    exp = load_config(args.config, seed_override=_env_seed())
    if exp.output_dir is None:
        raise ConfigError("config.output_dir is required for train")
    _prepare_dir(exp.output_dir, args.force)
    train, test = exp.data.build()
    metrics = run_training(train, test, exp.run)
    _write_run_artifacts(exp.output_dir, exp, metrics,
                         figures=exp.figures and not args.no_figures)
    print(f"effective_epochs = {metrics.effective_epochs!r}")
    print(f"final_accuracy = {metrics.final_accuracy!r}")
    print(f"wrote {exp.output_dir}")
    return 0


def _dry_run_policy(args: argparse.Namespace) -> tuple[DropoutPolicy, int]:
    if args.variant == "smrd-replay":
        if args.schedule is None:
            raise ConfigError("smrd-replay dry run needs --schedule")
        record = schedule_read(args.schedule, n=args.n)
        if args.epochs is not None and args.epochs != record.epochs:
            raise ConfigError(f"--epochs {args.epochs} does not match the schedule's "
                              f"{record.epochs}")
        policy = DropoutPolicy(variant="smrd-replay", epochs=record.epochs,
                               revision_epochs=0, schedule=record)
        return policy, record.n
    if args.epochs is None or args.n is None:
        raise ConfigError(f"{args.variant} dry run needs --epochs and --n")
    if args.variant == "srd":
        if args.gamma is None:
            raise ConfigError("srd dry run needs --gamma")
        if not (0.0 < args.gamma < 1.0):
            raise ConfigError(f"--gamma must be in (0, 1), got {args.gamma}")
        policy = DropoutPolicy(variant="srd", epochs=args.epochs,
                               revision_epochs=args.revision, gamma=args.gamma)
    else:
        if args.fn is None or args.alpha is None:
            raise ConfigError("analytic dry run needs --fn and --alpha")
        policy = DropoutPolicy(variant="analytic", epochs=args.epochs,
                               revision_epochs=args.revision,
                               decay_kind=args.fn, alpha=args.alpha)
    return policy, args.n


def _print_schedule(record: ScheduleRecord) -> None:
    rows = record.rows()
    print("epoch,retained")
    if len(rows) <= 40:
        shown = rows
        hidden = 0
    else:
        shown = rows[:10]
        hidden = len(rows) - 12
    for e, k in shown:
        print(f"{e},{k}")
    if hidden:
        print(f"... ({hidden} more epochs)")
        for e, k in rows[-2:]:
            print(f"{e},{k}")


def cmd_dry_run(args: argparse.Namespace) -> int:
    policy, n = _dry_run_policy(args)
    cfg = RunConfig(policy=policy, seed=0, batch_size=args.batch)
    record, ee = dry_run_schedule(cfg, n)
    _print_schedule(record)
    print(f"effective_epochs = {ee!r}")
    if args.write_schedule:
        schedule_write(record, args.write_schedule)
        print(f"wrote {args.write_schedule}")
    if args.plot:
        from . import report

        report.render_schedule_figure(args.plot, record)
        print(f"wrote {args.plot}")
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    exp = load_config(args.config, seed_override=_env_seed())
    if exp.sweep is None:
        raise ConfigError("config has no sweep section")
    if exp.output_dir is None:
        raise ConfigError("config.output_dir is required for sweep")
    _prepare_dir(exp.output_dir, args.force)

    # Validate every point up front so axis mistakes abort before any run.
    points = exp.sweep.points()
    runs = [(point, exp.with_overrides(**point)) for point in points]

    train, test = exp.data.build()
    rows: list[dict] = []
    failures = 0
    for point, sub in runs:
        label = " ".join(f"{k}={v!r}" if isinstance(v, float) else f"{k}={v}"
                         for k, v in point.items())
        sub_dir = exp.output_dir / "_".join(f"{k}-{v}" for k, v in point.items())
        _prepare_dir(sub_dir, force=True)
        try:
            metrics = run_training(train, test, sub.run)
        except NumericalError as exc:
            print(f"{label}: numerical failure: {exc}", file=sys.stderr)
            rows.append({"label": label, "effective_epochs": None, "final_acc": None})
            failures += 1
            continue
        _write_run_artifacts(sub_dir, sub, metrics, figures=exp.figures)
        rows.append({"label": label, "effective_epochs": metrics.effective_epochs,
                     "final_acc": metrics.final_accuracy})
        print(f"{label}: effective_epochs = {metrics.effective_epochs!r}, "
              f"final_accuracy = {metrics.final_accuracy!r}")

    lines = ["axis_values,effective_epochs,final_acc"]
    for row in rows:
        ee = "n/a" if row["effective_epochs"] is None else repr(row["effective_epochs"])
        acc = "n/a" if row["final_acc"] is None else repr(row["final_acc"])
        lines.append(f"{row['label']},{ee},{acc}")
    (exp.output_dir / "sweep.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    if exp.figures:
        from . import report

        report.render_sweep_figure(exp.output_dir / "sweep.png", rows)
    print(f"wrote {exp.output_dir / 'sweep.csv'}")
    return 3 if failures else 0


def cmd_gen_data(args: argparse.Namespace) -> int:
    out = Path(args.out)
    _prepare_dir(out, args.force)
    train = gen_synthetic(args.classes, args.per_class, args.dims, args.spread, args.seed)
    test = gen_synthetic(args.classes, args.test_per_class, args.dims, args.spread,
                         args.seed + 1)
    for name, ds in (("train", train), ("test", test)):
        images = out / f"{name}-images.idx"
        labels = out / f"{name}-labels.idx"
        save_dataset(ds, images, labels)
        print(f"wrote {images} and {labels} ({ds.n} samples)")
    return 0


def cmd_schedule_check(args: argparse.Namespace) -> int:
    record = schedule_read(args.file, n=args.n)
    print(f"epochs = {record.epochs}")
    print(f"dataset_size = {record.n}")
    print(f"effective_epochs = {record.effective_epochs!r}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
