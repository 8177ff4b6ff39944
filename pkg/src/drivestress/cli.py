"""Command-line pipeline: extract -> profile -> train / evaluate -> report.

Stages persist their outputs so expensive extraction runs once; every stage
is re-runnable from files and byte-identical for identical inputs, seed, and
config. Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path

from . import plots
from .clustering import assign_tasks, load_assignment, save_profiles_csv
from .config import PipelineConfig, load_config
from .datasets import (
    extract_dataset,
    load_manifest,
    make_two_profile_instances,
    write_synth_dataset,
)
from .errors import DriveStressError, EXIT_USAGE, InvalidParameterError
from .features import (
    WindowInstance,
    balance_downsample,
    instances_to_arrays,
    load_instances,
    save_instances,
    sidecar_path,
)
from .harness import ModelChoice, run_experiment
from .kernels import VIEW_NAMES
from .serialize import save_model

MODEL_FLAGS = ("logreg-l1", "logreg-l2", "stk-linear", "stk-rbf", "mtmkl")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


class UsageError(DriveStressError):
    exit_code = EXIT_USAGE


def atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="drivestress", description=__doc__)
    parser.add_argument("--config", type=Path, help="flat key-value config file")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--out", type=Path, default=Path("."), help="output directory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="run signal conditioning and feature extraction")
    p.add_argument("--manifest", type=Path, required=True)

    p = sub.add_parser("profile", help="cluster drives into task profiles")
    p.add_argument("--instances", type=Path, required=True)
    p.add_argument("--tasks", type=int, default=2)

    for name in ("train", "evaluate"):
        p = sub.add_parser(
            name,
            help="fit a deployable model" if name == "train" else "run nested cross-validation",
        )
        p.add_argument("--instances", type=Path, required=True)
        p.add_argument("--model", choices=MODEL_FLAGS, default="mtmkl")
        p.add_argument("--tasks", type=int, default=1)
        p.add_argument("--kernel", choices=("linear", "rbf"), default="rbf")
        p.add_argument("--reg", choices=("l1", "l2"), default="l1")
        if name == "train":
            p.add_argument("--assignment", type=Path, help="assignment.json from 'profile'")
            p.add_argument("--C", type=float, default=1.0)
            p.add_argument("--nu", type=float, default=0.1)
            p.add_argument("--gamma", type=float, default=1.0)
            p.add_argument("--lam", type=float, default=1.0)

    p = sub.add_parser("report", help="print a CvReport and rewrite its plots")
    p.add_argument("--report", type=Path, required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--level", choices=("signals", "instances"), default="signals")
    p.add_argument("--drives", type=int, default=3)
    p.add_argument("--duration", type=float, default=120.0)
    p.add_argument("--kind", choices=("segments", "score"), default="segments")
    p.add_argument("--windows", type=int, default=50, help="windows per drive (instances level)")
    return parser


def _load_pipeline_config(args) -> PipelineConfig:
    config = load_config(args.config) if args.config else PipelineConfig()
    if args.seed is not None:
        config = config.replace(seed=args.seed)
    return config


def cmd_extract(args, config: PipelineConfig) -> int:
    manifest = load_manifest(args.manifest)
    instances, log = extract_dataset(manifest, config)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    tmp = out / ".instances.tmp.csv"
    save_instances(instances, tmp)
    os.replace(sidecar_path(tmp), sidecar_path(out / "instances.csv"))
    os.replace(tmp, out / "instances.csv")
    atomic_write_text(out / "extract_log.json", json.dumps(log, indent=2, sort_keys=True))
    print(f"extracted {len(instances)} windows from {len(log['drives'])} drives -> {out / 'instances.csv'}")
    if log["errors"]:
        print(f"{len(log['errors'])} drive(s) failed; see extract_log.json", file=sys.stderr)
    return 0


def cmd_profile(args, config: PipelineConfig) -> int:
    instances = load_instances(args.instances)
    drive_ids = sorted({inst.drive_id for inst in instances})
    if args.tasks < 1 or args.tasks > len(drive_ids):
        raise InvalidParameterError(
            f"--tasks must lie in [1, {len(drive_ids)}] for {len(drive_ids)} drives, got {args.tasks}"
        )
    assignment, profiles, W = assign_tasks(
        instances,
        args.tasks,
        gamma=config.profile_gamma,
        seed=config.seed,
        n_restarts=config.kmeans_restarts,
        max_iter=config.kmeans_max_iter,
    )
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    save_profiles_csv(profiles, out / "profiles.csv")
    atomic_write_text(out / "assignment.json", assignment.to_json())
    svg = plots.similarity_heatmap(
        W,
        [pv.drive_id for pv in profiles],
        assignment.tasks,
    )
    atomic_write_text(out / "similarity.svg", svg)
    print(f"assigned {len(drive_ids)} drives to {args.tasks} task(s) -> {out / 'assignment.json'}")
    return 0


def _binary_dataset(path: Path, seed: int):
    instances = load_instances(path)
    kept = [i for i in instances if i.label in ("L", "H")]
    balanced = balance_downsample(kept, seed=seed)
    return instances_to_arrays(balanced)


def cmd_train(args, config: PipelineConfig) -> int:
    X, y, drives = _binary_dataset(args.instances, config.seed)
    choice = ModelChoice(kind=args.model, tasks=args.tasks, kernel=args.kernel, reg=args.reg)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)

    from .harness import _make_estimator  # single construction point for all kinds

    params = {"C": args.C, "nu": args.nu, "gamma": args.gamma, "lam": args.lam}
    estimator = _make_estimator(choice, params, config)
    if choice.uses_tasks and args.tasks > 1:
        if args.assignment:
            assignment = load_assignment(args.assignment)
        else:
            instances = [
                WindowInstance(
                    drive_id=str(d),
                    start=0.0,
                    duration=0.0,
                    eda_features=x[:9],
                    hr_features=x[9:],
                    label="H" if yy == 1.0 else "L",
                )
                for x, yy, d in zip(X, y, drives)
            ]
            assignment, _, _ = assign_tasks(
                instances, args.tasks, gamma=config.profile_gamma, seed=config.seed
            )
        estimator.fit(X, y, drives=drives, assignment=assignment)
    elif choice.uses_tasks:
        estimator.fit(X, y)
    else:
        estimator.fit(X, y)
    model_path = out / "model.json"
    save_model(estimator, model_path)
    print(f"trained {args.model} on {len(X)} instances -> {model_path}")
    return 0


def cmd_evaluate(args, config: PipelineConfig) -> int:
    X, y, drives = _binary_dataset(args.instances, config.seed)
    choice = ModelChoice(kind=args.model, tasks=args.tasks, kernel=args.kernel, reg=args.reg)
    report = run_experiment(X, y, drives, choice, config=config, seed=config.seed)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    report_path = out / f"report_{args.model}.json"
    atomic_write_text(report_path, report.to_json())
    if choice.uses_tasks:
        atomic_write_text(
            out / f"eta_{args.model}.svg",
            plots.eta_heatmap(report.eta_matrix(), VIEW_NAMES),
        )
    mean = report.mean
    print(
        f"{args.model}: accuracy {mean['accuracy']:.3f} precision {mean['precision']:.3f} "
        f"recall {mean['recall']:.3f} f1 {mean['f1']:.3f} -> {report_path}"
    )
    return 0


def cmd_report(args, config: PipelineConfig) -> int:
    from .harness import CvReport

    report = CvReport.from_json(args.report.read_text(encoding="utf-8"))
    print(f"model: {report.model} (tasks={report.tasks}, kernel={report.kernel}, reg={report.reg})")
    print(f"folds: {report.n_outer} outer / {report.n_inner} inner, seed {report.seed}")
    print(f"{'fold':>4} {'acc':>7} {'prec':>7} {'rec':>7} {'f1':>7}  params")
    for fold in report.folds:
        print(
            f"{fold['fold']:>4} {fold['accuracy']:>7.3f} {fold['precision']:>7.3f} "
            f"{fold['recall']:>7.3f} {fold['f1']:>7.3f}  {fold['params']}"
        )
    mean = report.mean
    print(
        f"mean {mean['accuracy']:>7.3f} {mean['precision']:>7.3f} "
        f"{mean['recall']:>7.3f} {mean['f1']:>7.3f}"
    )
    rows = report.eta_matrix()
    if rows:
        svg_path = args.out / f"eta_{report.model}.svg"
        args.out.mkdir(parents=True, exist_ok=True)
        atomic_write_text(svg_path, plots.eta_heatmap(rows, VIEW_NAMES))
        print(f"kernel-weight heatmap -> {svg_path}")
    for flag in report.flags:
        print(f"flag: {flag}", file=sys.stderr)
    return 0


def cmd_synth(args, config: PipelineConfig) -> int:
    out = args.out
    if args.level == "signals":
        manifest_path = write_synth_dataset(
            out,
            n_drives=args.drives,
            duration=args.duration,
            seed=config.seed,
            annotation_kind=args.kind,
        )
        print(f"synthetic dataset ({args.drives} drives, {args.duration:.0f}s) -> {manifest_path}")
    else:
        X, y, drives, profile_of = make_two_profile_instances(
            n_drives=args.drives, windows_per_drive=args.windows, seed=config.seed
        )
        out.mkdir(parents=True, exist_ok=True)
        instances = [
            WindowInstance(
                drive_id=str(d),
                start=float(i),
                duration=30.0,
                eda_features=x[:9],
                hr_features=x[9:],
                label="H" if yy == 1.0 else "L",
            )
            for i, (x, yy, d) in enumerate(zip(X, y, drives))
        ]
        save_instances(instances, out / "instances.csv")
        atomic_write_text(out / "profiles_truth.json", json.dumps(profile_of, indent=2, sort_keys=True))
        print(f"synthetic instances ({len(instances)} windows, 2 profiles) -> {out / 'instances.csv'}")
    return 0


_COMMANDS = {
    "extract": cmd_extract,
    "profile": cmd_profile,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        config = _load_pipeline_config(args)
        return _COMMANDS[args.command](args, config)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return exc.exit_code
    except DriveStressError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
