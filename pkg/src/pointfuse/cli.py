"""Command-line surface: build-memory, evaluate, and sweep subcommands."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .core import PipelineConfig
from .datasets import read_manifest
from .errors import ConfigError, MissingEmbedding, PointfuseError
from .evaluation import (
    RunContext,
    format_ablation_table,
    run_ablation,
    run_build_memory,
    run_evaluate,
    run_sweep,
    sweep_csv,
)
from .fusion import load_memory, save_memory
from .semantic import SemanticProvider

DEFAULTS = PipelineConfig()


def _add_config_flags(p: argparse.ArgumentParser, grid: bool = False) -> None:
    # sweep accepts comma-separated grids for the three query-time weights
    num = str if grid else float
    p.add_argument("--alpha", type=num, default=DEFAULTS.alpha,
                   help="fusion weight on the geometric branch")
    p.add_argument("--gamma", type=num, default=DEFAULTS.gamma,
                   help="similarity activation sharpness")
    p.add_argument("--lambda", dest="lambda_ensemble", type=num,
                   default=DEFAULTS.lambda_ensemble,
                   help="ensemble weight on the memory classifier")
    p.add_argument("--k-shot", type=int, default=None,
                   help="keys per class; omit for full-shot")
    p.add_argument("--seed", type=int, default=DEFAULTS.seed)
    p.add_argument("--points", type=int, default=DEFAULTS.points,
                   help="points per cloud after resampling")
    p.add_argument("--pose-dim", type=int, default=DEFAULTS.pose_dim)
    p.add_argument("--pose-alpha", type=float, default=DEFAULTS.pose_alpha,
                   help="position-encoding frequency scale")
    p.add_argument("--pose-beta", type=float, default=DEFAULTS.pose_beta)
    p.add_argument("--stages", type=str,
                   default=",".join(f"{m}:{k}" for m, k in DEFAULTS.stages),
                   help="aggregation stages as count:k pairs, e.g. 512:32,256:32")
    p.add_argument("--fusion-mode", choices=("feature", "score"),
                   default=DEFAULTS.fusion_mode)
    p.add_argument("--geo-only", action="store_true",
                   help="geometric branch only (no embeddings required)")
    p.add_argument("--sem-only", action="store_true",
                   help="semantic branch only")
    p.add_argument("--no-gfe", action="store_true",
                   help="drop the 17-channel local geometry augmentation")


def _parse_stages(text: str):
    stages = []
    for part in text.split(","):
        m, _, k = part.partition(":")
        stages.append((int(m), int(k)))
    return tuple(stages)


def _config_from_args(args) -> PipelineConfig:
    return PipelineConfig(
        alpha=args.alpha,
        gamma=args.gamma,
        lambda_ensemble=args.lambda_ensemble,
        pose_dim=args.pose_dim,
        pose_alpha=args.pose_alpha,
        pose_beta=args.pose_beta,
        stages=_parse_stages(args.stages),
        k_shot=args.k_shot,
        seed=args.seed,
        fusion_mode=args.fusion_mode,
        points=args.points,
        use_local_geometry=not args.no_gfe,
        selection="mff",
    )


def _branch_from_args(args) -> str:
    if args.geo_only and args.sem_only:
        raise PointfuseError("--geo-only and --sem-only are mutually exclusive")
    if args.geo_only:
        return "geo"
    if args.sem_only:
        return "sem"
    return "fused"


def _context_from_args(args) -> RunContext:
    manifest = read_manifest(args.manifest)
    branch = _branch_from_args(args)
    provider = None
    if args.embeddings is not None:
        provider = SemanticProvider.from_files(args.embeddings, args.class_text)
    return RunContext.create(manifest, provider, _config_from_args(args), branch)


def _sidecar_path(key_path: str) -> Path:
    return Path(str(key_path) + ".json")


def cmd_build_memory(args) -> int:
    ctx = _context_from_args(args)
    memory, timings = run_build_memory(ctx)
    extra = {
        "alpha": ctx.config.alpha,
        "gamma": ctx.config.gamma,
        "k_shot": ctx.config.k_shot,
        "seed": ctx.config.seed,
        "branch": ctx.branch,
        "config": ctx.config.to_dict(),
    }
    save_memory(memory, args.out, _sidecar_path(args.out), extra=extra)
    counts = memory.labels_onehot.sum(axis=0)
    for name, count in zip(memory.catalog.names, counts):
        print(f"{name}: {int(count)} keys")
    print(f"wrote {memory.size} keys to {args.out} "
          f"(encode {timings['encode_support']:.2f}s, build {timings['build']:.2f}s)")
    return 0


def cmd_evaluate(args) -> int:
    ctx = _context_from_args(args)
    warn = lambda msg: print(f"warning: {msg}", file=sys.stderr)
    if args.ablate:
        rows = ("geo", "sem", "no-gfe", "no-mff", "full") if args.ablate == "matrix" \
            else (args.ablate,)
        results = run_ablation(ctx, rows=rows, warn=warn)
        print(format_ablation_table(results))
        if args.out:
            payload = {
                "schema": 1,
                "ablation": [
                    {"row": row, **report.to_json_dict()} for row, report in results
                ],
            }
            Path(args.out).write_text(
                json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8"
            )
        return 0
    if not args.memory:
        raise PointfuseError("--memory is required unless --ablate is given")
    memory, _ = load_memory(args.memory, _sidecar_path(args.memory))
    report = run_evaluate(ctx, memory, use_ensemble=args.ensemble, warn=warn)
    print(report.format_table())
    if args.out:
        Path(args.out).write_text(report.to_json(), encoding="utf-8")
    return 0


def cmd_sweep(args) -> int:
    grid = lambda text: [float(v) for v in str(text).split(",") if v != ""]
    alphas = grid(args.alpha)
    gammas = grid(args.gamma)
    lambdas = grid(args.lambda_ensemble)
    if not alphas or not gammas or not lambdas:
        raise ConfigError("sweep grid is empty")
    # the base context carries the first grid point; run_sweep overrides per row
    args.alpha, args.gamma, args.lambda_ensemble = alphas[0], gammas[0], lambdas[0]
    ctx = _context_from_args(args)
    rows = run_sweep(
        ctx,
        alphas=alphas,
        gammas=gammas,
        lambdas=lambdas,
        use_ensemble=args.ensemble,
        warn=lambda msg: print(f"warning: {msg}", file=sys.stderr),
    )
    csv = sweep_csv(rows)
    if args.out:
        Path(args.out).write_text(csv, encoding="utf-8")
    else:
        print(csv, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pointfuse",
        description="Training-free point-cloud recognition with a feature memory",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_build = sub.add_parser("build-memory", help="encode the support split into memory files")
    p_build.add_argument("--manifest", required=True)
    p_build.add_argument("--embeddings", default=None, help="SEMB file of sample embeddings")
    p_build.add_argument("--class-text", default=None, help="SEMB file of class-text embeddings")
    p_build.add_argument("--out", required=True, help="key file path; sidecar gets .json appended")
    _add_config_flags(p_build)
    p_build.set_defaults(func=cmd_build_memory)

    p_eval = sub.add_parser("evaluate", help="classify the test split and report accuracy")
    p_eval.add_argument("--manifest", required=True)
    p_eval.add_argument("--embeddings", default=None)
    p_eval.add_argument("--class-text", default=None)
    p_eval.add_argument("--memory", default=None, help="key file written by build-memory")
    p_eval.add_argument("--ensemble", action="store_true",
                        help="mix in the zero-shot class-text classifier")
    p_eval.add_argument("--ablate", choices=("geo", "sem", "no-gfe", "no-mff", "matrix"),
                        default=None, help="run an ablation row (or the full matrix)")
    p_eval.add_argument("--out", default=None, help="write the JSON report here")
    _add_config_flags(p_eval)
    p_eval.set_defaults(func=cmd_evaluate)

    p_sweep = sub.add_parser("sweep", help="grid-evaluate alpha/gamma/lambda, emit CSV")
    p_sweep.add_argument("--manifest", required=True)
    p_sweep.add_argument("--embeddings", required=True)
    p_sweep.add_argument("--class-text", default=None)
    p_sweep.add_argument("--ensemble", action="store_true")
    p_sweep.add_argument("--out", default=None, help="CSV path (stdout when omitted)")
    _add_config_flags(p_sweep, grid=True)
    p_sweep.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except MissingEmbedding as exc:
        print("missing embeddings for ids:", file=sys.stderr)
        for sample_id in exc.missing_ids:
            print(f"  {sample_id}", file=sys.stderr)
        return 1
    except PointfuseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
