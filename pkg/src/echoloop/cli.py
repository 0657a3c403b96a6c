"""``echoloop`` command line: run, diagnose, gen-synthetic."""

from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import sys
from contextlib import contextmanager
from importlib import resources
from pathlib import Path

from .config import load_run_config
from .diagnostics.report import DiagnosticsConfig, build_report, write_report
from .errors import ConfigError, EchoLoopError, TraceError, UsageError
from .ingest import load_dataset
from .loop import load_trace, run_feedback_loop, save_trace
from .synthetic import write_synthetic

logger = logging.getLogger("echoloop")

LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}
LOCK_NAME = ".echoloop.lock"
TOY_FILES = ("config.toml", "interactions.csv", "users.csv", "items.csv")


def _configure_logging():
    name = os.environ.get("ECHOLOOP_LOG", "warn").lower()
    level = LOG_LEVELS.get(name, logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr, force=True)


@contextmanager
def _locked(directory):
    """Hold an exclusive lock file in ``directory`` for the duration of a run."""
    directory.mkdir(parents=True, exist_ok=True)
    lock = directory / LOCK_NAME
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise ConfigError(f"output directory {directory} is locked by another run ({lock})") from None
    except OSError as exc:
        raise ConfigError(f"output directory {directory} is not writable: {exc.strerror}") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        lock.unlink(missing_ok=True)


def _load_inputs(paths):
    try:
        return load_dataset(paths["interactions"], paths.get("user_attributes"), paths.get("item_attributes"))
    except OSError as exc:
        raise ConfigError(f"cannot read input data: {exc}") from None


def diagnose_trace(trace_dir, config: DiagnosticsConfig | None = None):
    """Recompute the report for a stored trace; returns ``(report, rows)``."""
    trace, metadata = load_trace(trace_dir)
    if "data" not in metadata:
        raise TraceError(f"{trace_dir}/trace.json has no input data paths in its metadata")
    if config is None:
        config = DiagnosticsConfig(**{k: tuple(v) if k == "phases" else v for k, v in metadata.get("diagnostics", {}).items()})
    dataset = _load_inputs(metadata["data"])
    return build_report(trace, dataset, config)


def _summary(report):
    s = report["summary"]
    lines = [
        f"common users: {s['num_common_users']}",
        f"dataset sizes: {s['dataset_sizes']}",
        f"injected per period: {s['injected_counts']}",
    ]
    if "phase2" in report and report["phase2"]["gap_stats"]:
        lines.append(f"phase 2 mean popularity gap: {report['phase2']['gap_stats']['mean']:.4f}")
    if "phase3" in report:
        for entry in report["phase3"]["per_period"]:
            gap = entry["gap_stats"]["mean"] if entry["gap_stats"] else float("nan")
            dist = entry["centroid_distance"]["user"]
            dist = f"{dist:.4f}" if isinstance(dist, float) else dist
            lines.append(f"period {entry['period']}: mean gap {gap:.4f}, catalog fef {entry['fef']['catalog']}, user centroid distance {dist}")
    return "\n".join(lines)


def cmd_run(config_path) -> int:
    cfg = load_run_config(config_path)
    out = cfg.output_dir
    with _locked(out):
        dataset = load_dataset(cfg.interactions, cfg.user_attributes, cfg.item_attributes)
        logger.info("loaded %d interactions, %d users, %d items", len(dataset), len(dataset.users), len(dataset.items))
        trace = run_feedback_loop(dataset, cfg.split, cfg.pipeline)
        trace_dir = out / "trace"
        if trace_dir.exists():
            shutil.rmtree(trace_dir)
        metadata = {"data": cfg.data_paths(), "diagnostics": cfg.diagnostics.to_dict()}
        save_trace(trace, trace_dir, metadata)
        report, rows = diagnose_trace(trace_dir, cfg.diagnostics)
        write_report(report, rows, out)
    print(_summary(report))
    print(f"wrote {out}")
    return 0


def cmd_diagnose(trace_dir, phases=None, out=None) -> int:
    config = None
    if phases is not None:
        _, metadata = load_trace(trace_dir)
        base = dict(metadata.get("diagnostics", {}))
        base["phases"] = tuple(phases)
        config = DiagnosticsConfig(**base)
    report, rows = diagnose_trace(trace_dir, config)
    if out is None:
        print(json.dumps(report, indent=2, sort_keys=True))
    else:
        write_report(report, rows, out)
        print(f"wrote {out}")
    return 0


def cmd_gen_synthetic(
    users, items, communities, inter_prob, seed, out, interactions_per_user=10, item_skew=0.0, late_items=0
) -> int:
    paths = write_synthetic(
        out,
        n_users=users,
        n_items=items,
        n_communities=communities,
        inter_prob=inter_prob,
        seed=seed,
        interactions_per_user=interactions_per_user,
        item_skew=item_skew,
        late_items=late_items,
    )
    print(f"wrote {', '.join(str(p) for p in paths.values())}")
    return 0


def cmd_init_toy(out) -> int:
    """Copy the bundled toy dataset and config into ``out``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    toy = resources.files("echoloop") / "data" / "toy"
    for name in TOY_FILES:
        (out / name).write_bytes((toy / name).read_bytes())
    print(f"wrote toy dataset and config to {out}; run with: echoloop run --config {out / 'config.toml'}")
    return 0


def _phases(text):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"phases must look like 1,2,3, got {text!r}") from None


def build_parser():
    parser = argparse.ArgumentParser(prog="echoloop", description="Simulate recommendation feedback loops and measure their risks.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the loop and write a trace plus report")
    run.add_argument("--config", required=True, type=Path)

    diag = sub.add_parser("diagnose", help="recompute the report from a stored trace")
    diag.add_argument("--trace", required=True, type=Path)
    diag.add_argument("--phases", type=_phases, default=None)
    diag.add_argument("--out", type=Path, default=None, help="write report.json and plot_data.csv here instead of stdout")

    gen = sub.add_parser("gen-synthetic", help="write a planted-partition dataset")
    gen.add_argument("--users", type=int, required=True)
    gen.add_argument("--items", type=int, required=True)
    gen.add_argument("--communities", type=int, required=True)
    gen.add_argument("--inter-prob", type=float, required=True)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--interactions-per-user", type=int, default=10)
    gen.add_argument("--item-skew", type=float, default=0.0)
    gen.add_argument("--late-items", type=int, default=0, help="items whose interactions all fall in the last tenth of the timeline")
    gen.add_argument("--out", type=Path, required=True)

    toy = sub.add_parser("init-toy", help="copy the bundled toy dataset and config")
    toy.add_argument("--out", type=Path, required=True)
    return parser


def main(argv=None) -> int:
    _configure_logging()
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args.config)
        if args.command == "diagnose":
            return cmd_diagnose(args.trace, args.phases, args.out)
        if args.command == "init-toy":
            return cmd_init_toy(args.out)
        return cmd_gen_synthetic(
            args.users, args.items, args.communities, args.inter_prob, args.seed, args.out,
            args.interactions_per_user, args.item_skew, args.late_items,
        )
    except EchoLoopError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
