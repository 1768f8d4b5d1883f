"""Command-line interface.

Subcommands mirror the harness runners one to one. Exit codes: 0 success,
2 configuration/input error, 3 training divergence or failure, 4 file I/O or
parse error. A failing `check-grads` exits 1 (the check ran; the gradients
did not meet the bar).
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .checkpoint import Checkpoint
from .decompose import LogitBatch, batch_decompose
from .errors import (
    ConfigError,
    EmptyBatchError,
    FileFormatError,
    InvalidInputError,
    TrainingDivergedError,
    TrainingFailedError,
)
from .gradients import fd_check
from .harness import (
    Experiment,
    distill,
    parse_config_file,
    run_landscape,
    run_objective_ablation,
    run_sweep,
    run_token_split,
    run_unc_dist,
    spec_from_config,
    train_teacher,
)
from .logit_io import read_logit_file, write_report
from .objective import Mode, ObjectiveConfig, rank_and_split

__all__ = ["main"]


def _spec(args, experiment=None):
    mapping = parse_config_file(args.config)
    ce_mix = getattr(args, "ce_mix", None)
    if ce_mix is not None:
        mapping["ce_mix"] = repr(ce_mix)
    return spec_from_config(
        mapping, seed_override=getattr(args, "seed", None), experiment=experiment
    )


def _cmd_train_teacher(args) -> int:
    spec = _spec(args)
    ckpt = train_teacher(spec, out_dir=args.out_dir)
    cfg = ckpt.config
    print(
        f"teacher d{cfg.d_model}L{cfg.n_layers} seed {cfg.seed}: "
        f"{ckpt.step_count} steps, checkpoint in {args.out_dir}"
    )
    return 0


def _cmd_distill(args) -> int:
    spec = _spec(args)
    teacher = Checkpoint.load(args.teacher)
    ckpt, record = distill(
        spec, teacher, out_dir=args.out_dir, save_checkpoint=True
    )
    print(f"{record.experiment_id}: final val perplexity {record.final_ppl:.4f}")
    return 0


def _cmd_token_split(args) -> int:
    spec = _spec(args, experiment=Experiment.TOKEN_SPLIT)
    teacher = Checkpoint.load(args.teacher)
    records = run_token_split(spec, teacher, out_dir=args.out_dir, jobs=args.jobs)
    for r in records:
        print(f"{r.experiment_id}: final val perplexity {r.final_ppl:.4f}")
    return 0


def _cmd_ablation(args) -> int:
    spec = _spec(args, experiment=Experiment.OBJECTIVE_ABLATION)
    teacher = Checkpoint.load(args.teacher)
    records = run_objective_ablation(spec, teacher, out_dir=args.out_dir, jobs=args.jobs)
    print(f"{len(records)} runs written to {args.out_dir}/ablation.csv")
    return 0


_SWEEP_BY_PARAM = {
    "k": Experiment.K_SWEEP,
    "k_ratio": Experiment.K_SWEEP,
    "lambda": Experiment.LAMBDA_SWEEP,
    "lam": Experiment.LAMBDA_SWEEP,
    "alpha": Experiment.ALPHA_SWEEP,
}


def _cmd_sweep(args) -> int:
    experiment = None
    if args.param is not None:
        key = args.param.strip().lower()
        if key not in _SWEEP_BY_PARAM:
            raise ConfigError(f"--param must be one of {sorted(_SWEEP_BY_PARAM)}")
        experiment = _SWEEP_BY_PARAM[key]
    spec = _spec(args, experiment=experiment)
    if spec.experiment not in (
        Experiment.K_SWEEP,
        Experiment.LAMBDA_SWEEP,
        Experiment.ALPHA_SWEEP,
    ):
        raise ConfigError(
            "sweep needs a sweep experiment; set experiment=k_sweep/lambda_sweep/"
            "alpha_sweep in the config or pass --param"
        )
    teacher = Checkpoint.load(args.teacher)
    records = run_sweep(spec, teacher, out_dir=args.out_dir, jobs=args.jobs)
    print(f"{len(records)} runs written to {args.out_dir}/sweep.csv")
    return 0


def _cmd_unc_dist(args) -> int:
    spec = _spec(args, experiment=Experiment.UNC_DIST)
    teachers = [Checkpoint.load(p) for p in args.teacher]
    summary = run_unc_dist(
        spec,
        teachers,
        out_dir=args.out_dir,
        sample_tokens=args.sample_tokens,
        grid_points=args.grid_points,
    )
    for label, params, median in summary:
        print(f"{label}: {params} params, median UnC {median:.6f}")
    return 0


def _cmd_landscape(args) -> int:
    spec = _spec(args, experiment=Experiment.LANDSCAPE)
    theta0 = Checkpoint.load(args.theta0)
    theta1 = Checkpoint.load(args.theta1)
    curve = run_landscape(spec, theta0, theta1, out_dir=args.out_dir, points=args.points)
    print(f"{len(curve)} points written to {args.out_dir}/landscape.csv")
    return 0


def _cmd_decompose(args) -> int:
    batch = read_logit_file(args.logits)
    if batch.student_logits is None:
        raise InvalidInputError(
            "logit file has no student logits; decomposition needs both models"
        )
    d = batch_decompose(batch)
    split = rank_and_split(d.unc, batch.mask, args.k)
    write_report(d, split, args.out)
    print(f"{int(np.count_nonzero(batch.mask))} tokens decomposed into {args.out}")
    return 0


def _cmd_check_grads(args) -> int:
    if args.logits is not None:
        batch = read_logit_file(args.logits)
        if batch.student_logits is None:
            raise InvalidInputError("logit file has no student logits to differentiate")
    else:
        rng = np.random.default_rng(args.seed if args.seed is not None else 0)
        batch = LogitBatch(
            rng.normal(scale=2.0, size=(args.tokens, args.classes)),
            rng.normal(scale=2.0, size=(args.tokens, args.classes)),
            rng.integers(0, args.classes, size=args.tokens),
        )
    worst = 0.0
    for mode in Mode:
        cfg = ObjectiveConfig(mode=mode)
        err = fd_check(batch, cfg, epsilon=args.epsilon)
        worst = max(worst, err)
        status = "ok" if err <= args.tolerance else "FAIL"
        print(f"{mode.value:15s} max rel error {err:.3e}  {status}")
    if worst > args.tolerance:
        print(f"worst {worst:.3e} exceeds tolerance {args.tolerance:.1e}")
        return 1
    return 0


def _add_common(p: argparse.ArgumentParser, config=True, jobs=False) -> None:
    if config:
        p.add_argument("--config", required=True, help="key=value experiment config file")
        p.add_argument("--seed", type=int, default=None, help="override to a single seed")
    p.add_argument("--out-dir", default="runs", help="output directory (default: runs)")
    if jobs:
        p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="atkd",
        description="Decomposed knowledge distillation (TKD/DKD/UnC + adaptive objective) "
        "on a byte-level toy transformer.",
        epilog="exit codes: 0 success, 2 config error, 3 training divergence, 4 I/O error",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-teacher", help="train a teacher on next-token cross-entropy")
    _add_common(p)
    p.set_defaults(func=_cmd_train_teacher)

    p = sub.add_parser("distill", help="distill a student against a teacher checkpoint")
    _add_common(p)
    p.add_argument("--teacher", required=True, help="teacher checkpoint path")
    p.add_argument(
        "--ce-mix",
        type=float,
        default=None,
        dest="ce_mix",
        help="weight of ground-truth cross-entropy mixed into the KD loss (default 0)",
    )
    p.set_defaults(func=_cmd_distill)

    p = sub.add_parser("token-split", help="hard-only vs easy-only vs full-mask students")
    _add_common(p, jobs=True)
    p.add_argument("--teacher", required=True)
    p.set_defaults(func=_cmd_token_split)

    p = sub.add_parser("ablation", help="objective x token-set grid (9 runs per seed)")
    _add_common(p, jobs=True)
    p.add_argument("--teacher", required=True)
    p.set_defaults(func=_cmd_ablation)

    p = sub.add_parser("sweep", help="k / lambda / alpha hyperparameter sweep")
    _add_common(p, jobs=True)
    p.add_argument("--teacher", required=True)
    p.add_argument("--param", default=None, help="k, lambda, or alpha (else from config)")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("unc-dist", help="teacher UnC kernel densities across sizes")
    _add_common(p)
    p.add_argument("--teacher", action="append", required=True, help="repeatable, >= 2")
    p.add_argument("--sample-tokens", type=int, default=10_000)
    p.add_argument("--grid-points", type=int, default=256)
    p.set_defaults(func=_cmd_unc_dist)

    p = sub.add_parser("landscape", help="perplexity along the line between two students")
    _add_common(p)
    p.add_argument("--theta0", required=True, help="checkpoint at beta=-1")
    p.add_argument("--theta1", required=True, help="checkpoint at beta=0")
    p.add_argument("--points", type=int, default=21)
    p.set_defaults(func=_cmd_landscape)

    p = sub.add_parser("decompose", help="logit file -> per-token report CSV")
    p.add_argument("--logits", required=True, help="LogitFile path")
    p.add_argument("--out", required=True, help="report CSV path")
    p.add_argument("--k", type=float, default=0.5, help="hard-token ratio (default 0.5)")
    p.set_defaults(func=_cmd_decompose)

    p = sub.add_parser("check-grads", help="finite-difference audit of all loss modes")
    p.add_argument("--logits", default=None, help="optional LogitFile; else synthetic")
    p.add_argument("--seed", type=int, default=None, help="seed for the synthetic batch")
    p.add_argument("--tokens", type=int, default=64)
    p.add_argument("--classes", type=int, default=16)
    p.add_argument("--epsilon", type=float, default=1e-5)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.set_defaults(func=_cmd_check_grads)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return int(args.func(args))
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (InvalidInputError, EmptyBatchError) as e:
        print(f"input error: {e}", file=sys.stderr)
        return 2
    except (TrainingDivergedError, TrainingFailedError) as e:
        print(f"training error: {e}", file=sys.stderr)
        return 3
    except FileFormatError as e:
        print(f"file format error: {e}", file=sys.stderr)
        return 4
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
