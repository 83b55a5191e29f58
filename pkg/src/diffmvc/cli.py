"""Command-line entry points: gen-data, train, evaluate, sweep, ablate,
export-proj."""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .data import generate_synthetic, load_matrix, save_manifest, save_matrix
from .data.synthetic import SyntheticSpec
from .errors import StageError
from .pipeline import (
    ABLATION_VARIANTS,
    ExperimentConfig,
    ablate,
    evaluate_run,
    export_projection,
    resolve_out_dir,
    run_experiment,
    sweep_missing_rate,
    write_projection_csv,
)


def _load_config(args) -> ExperimentConfig:
    if args.config is not None:
        cfg = ExperimentConfig.from_file(args.config)
    else:
        cfg = ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
        if cfg.synthetic is not None:
            cfg = replace(cfg, synthetic=replace(cfg.synthetic, seed=args.seed))
    if getattr(args, "out", None) is not None:
        cfg = replace(cfg, out_dir=args.out)
    return cfg


def _print_metrics(metrics: dict | None) -> None:
    if metrics is None:
        print("metrics: n/a (no ground-truth labels)")
        return
    for name in ("acc", "nmi", "ari"):
        print(f"{name}={metrics[name]:.4f}")


def cmd_gen_data(args) -> int:
    spec = SyntheticSpec(seed=args.seed) if args.seed is not None else SyntheticSpec()
    if args.config is not None:
        doc = json.loads(Path(args.config).read_text())
        if args.seed is not None:
            doc.setdefault("seed", args.seed)
        if "view_dims" in doc:
            doc["view_dims"] = tuple(doc["view_dims"])
        spec = SyntheticSpec(**doc)
    out = resolve_out_dir(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data = generate_synthetic(spec)
    view_files = []
    for v, X in enumerate(data.views):
        name = f"view{v}.mat"
        save_matrix(out / name, X)
        view_files.append(name)
    (out / "labels.txt").write_text("\n".join(map(str, data.labels)) + "\n")
    save_manifest(out / "manifest.json", view_files, "labels.txt", eta=args.eta)
    print(f"wrote {out / 'manifest.json'} (n={data.n}, k={spec.k}, eta={args.eta})")
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args)
    if cfg.out_dir is None:
        cfg = replace(cfg, out_dir="run")
    record = run_experiment(cfg)
    print(f"run complete; outputs in {resolve_out_dir(cfg.out_dir)}")
    _print_metrics(record.metrics)
    return 0


def cmd_evaluate(args) -> int:
    result = evaluate_run(args.run)
    _print_metrics(result["metrics"])
    out = resolve_out_dir(args.run) / "evaluation.json"
    out.write_text(json.dumps(result["metrics"], indent=2, sort_keys=True) + "\n")
    return 0


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    etas = [float(x) for x in args.etas.split(",")]
    records = sweep_missing_rate(cfg, etas)
    print("eta  acc     nmi     ari")
    for rec in records:
        if rec.error:
            print(f"{rec.eta:.2f} failed: {rec.error}")
        elif rec.metrics:
            m = rec.metrics
            print(f"{rec.eta:.2f} {m['acc']:.4f}  {m['nmi']:.4f}  {m['ari']:.4f}")
        else:
            print(f"{rec.eta:.2f} (no labels)")
    failures = [rec for rec in records if rec.error]
    return 1 if failures else 0


def cmd_ablate(args) -> int:
    cfg = _load_config(args)
    records = ablate(cfg)
    print("variant  acc     nmi     ari")
    for variant in ABLATION_VARIANTS:
        m = records[variant].metrics
        if m is None:
            print(f"{variant:8s} (no labels)")
        else:
            print(f"{variant:8s} {m['acc']:.4f}  {m['nmi']:.4f}  {m['ari']:.4f}")
    return 0


def cmd_export_proj(args) -> int:
    X = load_matrix(args.features)
    labels = None
    if args.labels is not None:
        labels = np.array([int(x) for x in Path(args.labels).read_text().split()])
    coords, ratios = export_projection(X)
    write_projection_csv(resolve_out_dir(args.out), coords, labels, ratios)
    print(f"wrote {resolve_out_dir(args.out)} (variance ratios {ratios[0]:.4f}, {ratios[1]:.4f})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="diffmvc",
        description="Incomplete two-view clustering with diffusion-completed latents",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic two-view dataset + manifest")
    p.add_argument("--config", help="JSON file of synthetic-spec fields")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--eta", type=float, default=0.5, help="missing rate recorded in the manifest")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train", help="run the full staged pipeline")
    p.add_argument("--config", help="experiment config JSON (defaults apply)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("evaluate", help="recompute metrics from a run directory")
    p.add_argument("--run", required=True)
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("sweep", help="missing-rate sweep")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--etas", default="0.3,0.4,0.5,0.6,0.7,0.8,0.9")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("ablate", help="four-variant ablation table")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("export-proj", help="PCA 2-D coordinates of a feature matrix")
    p.add_argument("--features", required=True, help="imvcdc-mat-v1 file")
    p.add_argument("--labels", default=None, help="plain integer-per-line label file")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(fn=cmd_export_proj)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except StageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (FileNotFoundError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
