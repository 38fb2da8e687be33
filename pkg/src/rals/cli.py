"""Command line for experiment sweeps and the labeling service.

``rals run`` executes strategy x seed jobs against a CSV dataset or a
synthetic preset, writing JSON-lines histories, curve CSVs, and a summary
table of accuracies at labeled-count checkpoints. ``rals serve`` hosts the
HTTP labeling service. All run outputs are written atomically and every run
file is stamped with the manifest hash, so --resume can skip work that is
already on disk.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import socket
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from .data import FeatureMatrix, LabelPool, RalsConfig, load_csv, z_normalize
from .driver import STRATEGIES, ActiveLearningLoop, draw_initial_labels
from .evaluation import (
    ECG_CLASS_RATIO,
    generate_unbalanced,
    scaled_class_sizes,
    write_accuracy_curve_csv,
    write_pr_points_csv,
)
from .noise import GroundTruthOracle, NoisyOracle

DEFAULT_CHECKPOINTS = (25, 75, 125, 175)
SYNTHETIC_PRESETS = ("ecg-ratio", "balanced")

# CLI flag -> RalsConfig field, all optional so precedence can be
# flags > config file > dataclass defaults.
_CONFIG_FLAGS = {
    "gamma": "gamma",
    "alpha": "alpha",
    "batch_size": "batch_size",
    "delta": "delta",
    "embed_dim": "embed_dim",
    "embed_source": "embed_source",
    "perplexity": "perplexity",
    "budget": "label_budget",
    "label_mode": "label_mode",
    "tsne_iters": "tsne_iters",
    "tsne_dtype": "tsne_dtype",
    "kmeans_k": "kmeans_k",
    "holdout_fraction": "holdout_fraction",
}


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=str(path.parent), prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _build_config(args) -> RalsConfig:
    base: dict = {}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            loaded = json.load(fh)
        valid = {f.name for f in fields(RalsConfig)}
        unknown = set(loaded) - valid
        if unknown:
            raise ValueError(f"unknown config file keys: {sorted(unknown)}")
        base.update(loaded)
    for flag, field in _CONFIG_FLAGS.items():
        value = getattr(args, flag, None)
        if value is not None:
            base[field] = value
    if getattr(args, "gate_oracle_labels", False):
        base["gate_oracle_labels"] = True
    config = RalsConfig(**base)
    config.validate()
    return config


def _load_inputs(args) -> tuple[FeatureMatrix, LabelPool, dict]:
    """Dataset from --dataset CSV or a --synthetic preset, plus its fingerprint."""
    if bool(args.dataset) == bool(args.synthetic):
        raise ValueError("exactly one of --dataset or --synthetic is required")
    if args.dataset:
        features, pool = load_csv(args.dataset, args.label_column)
        if not args.no_normalize:
            features = z_normalize(features)
        digest = hashlib.sha256(Path(args.dataset).read_bytes()).hexdigest()
        descriptor = {"kind": "csv", "path": str(args.dataset), "sha256": digest}
        return features, pool, descriptor

    preset = args.synthetic
    if preset not in SYNTHETIC_PRESETS:
        raise ValueError(f"synthetic preset must be one of {SYNTHETIC_PRESETS}, got {preset!r}")
    if preset == "ecg-ratio":
        sizes = scaled_class_sizes(ECG_CLASS_RATIO, args.synthetic_size)
    else:
        c = args.synthetic_classes
        sizes = scaled_class_sizes([1] * c, args.synthetic_size)
    features, pool = generate_unbalanced(
        args.data_seed, sizes, args.synthetic_dims, args.synthetic_separation
    )
    digest = hashlib.sha256(features.values.tobytes()).hexdigest()
    descriptor = {
        "kind": "synthetic",
        "preset": preset,
        "sizes": sizes,
        "dims": args.synthetic_dims,
        "separation": args.synthetic_separation,
        "data_seed": args.data_seed,
        "sha256": digest,
    }
    return features, pool, descriptor


def _parse_seeds(raw: str) -> list[int]:
    if "," in raw:
        return [int(s) for s in raw.split(",") if s.strip() != ""]
    return list(range(int(raw)))


def _run_job(
    features: FeatureMatrix,
    pool_template: LabelPool,
    config: RalsConfig,
    strategy: str,
    seed: int,
    initial: int,
    noise_rate: float,
    out_dir: Path,
    manifest_hash: str,
) -> None:
    pool = pool_template.copy()
    draw_initial_labels(pool, initial, seed)
    if noise_rate > 0:
        oracle = NoisyOracle(pool.ground_truth, pool.n_classes, noise_rate, seed=seed)
    else:
        oracle = GroundTruthOracle(pool.ground_truth)

    loop = ActiveLearningLoop(features, pool, replace(config, seed=seed), strategy)
    history = loop.run(oracle)

    header = json.dumps({"manifest_hash": manifest_hash, "strategy": strategy, "seed": seed})
    lines = [header] + history.to_jsonl_lines()
    _atomic_write(out_dir / "runs" / f"{strategy}-seed{seed}.jsonl", "\n".join(lines) + "\n")

    acc_rows = [
        (s.labeled_count, s.metrics.total_accuracy, s.metrics.average_accuracy)
        for s in history.snapshots
        if s.metrics is not None
    ]
    write_accuracy_curve_csv(out_dir / "curves" / f"{strategy}-seed{seed}-accuracy.csv", acc_rows)
    final = next((s for s in reversed(history.snapshots) if s.metrics is not None), None)
    if final is not None:
        write_pr_points_csv(out_dir / "curves" / f"{strategy}-seed{seed}-pr.csv", final.metrics)


def _job_is_done(path: Path, manifest_hash: str) -> bool:
    if not path.exists():
        return False
    try:
        with open(path) as fh:
            header = json.loads(fh.readline())
        return header.get("manifest_hash") == manifest_hash
    except (OSError, ValueError):
        return False


def _load_records(out_dir: Path, strategy: str, seed: int) -> list[dict]:
    with open(out_dir / "runs" / f"{strategy}-seed{seed}.jsonl") as fh:
        lines = fh.read().splitlines()
    return [json.loads(line) for line in lines[1:]]


def _summarize(
    out_dir: Path,
    strategies: list[str],
    seeds: list[int],
    checkpoints: list[int],
) -> str:
    rows = []
    for strategy in strategies:
        per_seed = {seed: _load_records(out_dir, strategy, seed) for seed in seeds}
        for checkpoint in checkpoints:
            totals, averages = [], []
            for records in per_seed.values():
                hit = next((r for r in records if r["labeled_count"] >= checkpoint), None)
                if hit is not None and hit["total_accuracy"] is not None:
                    totals.append(hit["total_accuracy"])
                    averages.append(hit["average_accuracy"])
            if totals:
                rows.append(
                    {
                        "strategy": strategy,
                        "checkpoint": checkpoint,
                        "runs": len(totals),
                        "total_accuracy_mean": float(np.mean(totals)),
                        "total_accuracy_std": float(np.std(totals)),
                        "average_accuracy_mean": float(np.mean(averages)),
                        "average_accuracy_std": float(np.std(averages)),
                    }
                )

    buf = []
    with open(out_dir / "summary.csv", "w", newline="") as fh:
        writer = csv.DictWriter(
            fh,
            fieldnames=[
                "strategy",
                "checkpoint",
                "runs",
                "total_accuracy_mean",
                "total_accuracy_std",
                "average_accuracy_mean",
                "average_accuracy_std",
            ],
        )
        writer.writeheader()
        for row in rows:
            writer.writerow(row)

    buf.append(f"{'strategy':<10}{'labeled':>8}{'runs':>6}{'total acc':>16}{'average acc':>18}")
    for row in rows:
        buf.append(
            f"{row['strategy']:<10}{row['checkpoint']:>8}{row['runs']:>6}"
            f"{row['total_accuracy_mean']:>10.4f} ±{row['total_accuracy_std']:.4f}"
            f"{row['average_accuracy_mean']:>11.4f} ±{row['average_accuracy_std']:.4f}"
        )
    return "\n".join(buf)


def cmd_run(args) -> int:
    try:
        config = _build_config(args)
        features, pool_template, dataset_descriptor = _load_inputs(args)
        strategies = [s.strip() for s in args.strategies.split(",") if s.strip()]
        for s in strategies:
            if s not in STRATEGIES:
                raise ValueError(f"unknown strategy {s!r}; choose from {STRATEGIES}")
        seeds = _parse_seeds(args.seeds)
        checkpoints = [int(c) for c in args.checkpoints.split(",")]
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    out_dir = Path(args.out)
    (out_dir / "runs").mkdir(parents=True, exist_ok=True)
    (out_dir / "curves").mkdir(parents=True, exist_ok=True)

    manifest = {
        "config": config.to_dict(),
        "dataset": dataset_descriptor,
        "strategies": strategies,
        "seeds": seeds,
        "initial_labels": args.initial,
        "noise_rate": args.noise_rate,
        "checkpoints": checkpoints,
        "out": str(out_dir),
    }
    manifest_hash = hashlib.sha256(json.dumps(manifest, sort_keys=True).encode()).hexdigest()
    manifest["manifest_hash"] = manifest_hash
    manifest["created_at"] = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
    _atomic_write(out_dir / "manifest.json", json.dumps(manifest, indent=2) + "\n")

    jobs = []
    for strategy in strategies:
        for seed in seeds:
            target = out_dir / "runs" / f"{strategy}-seed{seed}.jsonl"
            if args.resume and _job_is_done(target, manifest_hash):
                print(f"skip {strategy} seed {seed} (resume)", flush=True)
                continue
            jobs.append((strategy, seed))

    workers = 1 if args.deterministic else int(os.environ.get("RALS_THREADS", "1"))
    failures = []

    def execute(job):
        strategy, seed = job
        try:
            _run_job(
                features, pool_template, config, strategy, seed,
                args.initial, args.noise_rate, out_dir, manifest_hash,
            )
            print(f"done {strategy} seed {seed}", flush=True)
        except Exception as exc:  # noqa: BLE001 - enumerate per-job failures
            failures.append((strategy, seed, str(exc)))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(execute, jobs))
    else:
        for job in jobs:
            execute(job)

    if failures:
        for strategy, seed, message in failures:
            print(f"failed: {strategy} seed {seed}: {message}", file=sys.stderr)
        return 1

    summary = _summarize(out_dir, strategies, seeds, checkpoints)
    print(summary)
    _atomic_write(out_dir / "summary.txt", summary + "\n")
    return 0


def cmd_serve(args) -> int:
    try:
        config = _build_config(args)
        features, pool_template, _ = _load_inputs(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    import uvicorn

    from .service import create_app

    app = create_app(
        features,
        pool_template,
        config,
        initial_labels=args.initial,
        console_dir=args.console_dir,
        snapshot_dir=args.snapshot_dir,
    )
    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    try:
        sock.bind((args.host, args.port))
    except OSError as exc:
        print(f"error: cannot bind {args.host}:{args.port}: {exc}", file=sys.stderr)
        sock.close()
        return 2
    print(f"listening on http://{args.host}:{sock.getsockname()[1]}", flush=True)
    server = uvicorn.Server(uvicorn.Config(app, log_level="warning"))
    server.run(sockets=[sock])
    return 0


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON file of config fields (flags win)")
    parser.add_argument("--gamma", type=float)
    parser.add_argument("--alpha", type=float)
    parser.add_argument("--batch-size", type=int, dest="batch_size")
    parser.add_argument("--delta", type=float)
    parser.add_argument("--embed-dim", type=int, dest="embed_dim")
    parser.add_argument("--embed-source", dest="embed_source", choices=["label-distribution", "raw-features"])
    parser.add_argument("--perplexity", type=float)
    parser.add_argument("--budget", type=int)
    parser.add_argument("--label-mode", dest="label_mode", choices=["self-estimated", "oracle"])
    parser.add_argument("--tsne-iters", type=int, dest="tsne_iters")
    parser.add_argument("--tsne-dtype", dest="tsne_dtype", choices=["float64", "float32"])
    parser.add_argument("--kmeans-k", type=int, dest="kmeans_k")
    parser.add_argument("--gate-oracle-labels", action="store_true", dest="gate_oracle_labels")
    parser.add_argument("--holdout-fraction", type=float, dest="holdout_fraction",
                        help="evaluate on a fixed seeded split instead of the unlabeled set")
    parser.add_argument("--initial", type=int, default=25, help="initial labeled count")


def _add_data_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--dataset", help="CSV feature matrix with a label column")
    parser.add_argument("--label-column", default="label", dest="label_column")
    parser.add_argument("--no-normalize", action="store_true", dest="no_normalize")
    parser.add_argument("--synthetic", help=f"synthetic preset: {', '.join(SYNTHETIC_PRESETS)}")
    parser.add_argument("--synthetic-size", type=int, default=2000, dest="synthetic_size")
    parser.add_argument("--synthetic-dims", type=int, default=8, dest="synthetic_dims")
    parser.add_argument("--synthetic-separation", type=float, default=6.0, dest="synthetic_separation")
    parser.add_argument("--synthetic-classes", type=int, default=6, dest="synthetic_classes")
    parser.add_argument("--data-seed", type=int, default=0, dest="data_seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rals", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute strategy x seed experiment sweeps")
    _add_data_flags(run)
    _add_config_flags(run)
    run.add_argument("--strategies", default="rals", help="comma list: rals,us,random")
    run.add_argument("--seeds", default="1", help="count (10 -> seeds 0..9) or comma list")
    run.add_argument("--noise-rate", type=float, default=0.0, dest="noise_rate",
                     help="oracle label flip probability")
    run.add_argument("--checkpoints", default=",".join(str(c) for c in DEFAULT_CHECKPOINTS))
    run.add_argument("--out", default="rals-out")
    run.add_argument("--resume", action="store_true")
    run.add_argument("--deterministic", action="store_true", help="single-threaded bit-exact mode")
    run.set_defaults(func=cmd_run)

    serve = sub.add_parser("serve", help="host the labeling service and console")
    _add_data_flags(serve)
    _add_config_flags(serve)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000, help="0 picks a free port")
    serve.add_argument("--console-dir", dest="console_dir", help="static console bundle directory")
    serve.add_argument("--snapshot-dir", dest="snapshot_dir", help="persist session snapshots here")
    serve.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
