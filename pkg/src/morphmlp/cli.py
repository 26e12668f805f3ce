"""Command-line entry point: ``morphmlp {count,gradcheck,oracle-diff,train,eval,bench}``.

Exit codes: 0 when every check passes, 1 on a failed check, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from typing import Optional, Sequence

from . import checkpoint
from .checkpoint import CheckpointError
from .config import ConfigError, RunConfig, load_config, parse_input
from .counting import best_ratio, count_flops, count_params, mlp_ratio_sweep
from .data import DatasetSpec
from .model import PUBLISHED_TARGETS, ModelConfig, build_model, variant_config
from .nn import skip_init
from .optim import AdamW, Schedule
from .train import evaluate, tail_accuracy, train_loop, write_metrics
from .verify import gradcheck_model, oracle_diff, toy_gradcheck_model

PARAM_TOL = 0.07
FLOP_TOL = 0.10

log = logging.getLogger("morphmlp")


class UsageError(Exception):
    pass


def _model_config(args) -> ModelConfig:
    if args.config:
        cfg = load_config(args.config).model
    elif getattr(args, "variant", None) == "custom":
        raise UsageError("--variant custom needs --config")
    elif getattr(args, "variant", None):
        cfg = variant_config(args.variant)
    else:
        raise UsageError("either --config or --variant is required")
    if getattr(args, "input", None):
        dims = parse_input(args.input)
        cfg = replace(cfg, height=dims[0], width=dims[1])
        if len(dims) == 3:
            cfg = replace(cfg, input_kind="video", frames=dims[2])
    return cfg


def _run_config(args) -> RunConfig:
    if not args.config:
        raise UsageError("--config is required")
    run = load_config(args.config)
    if args.seed is not None:
        run = replace(run, train=replace(run.train, seed=args.seed),
                      data=replace(run.data, seed=args.seed))
    if getattr(args, "steps", None) is not None:
        run = replace(run, train=replace(run.train, steps=args.steps))
    return run


def cmd_count(args) -> int:
    if args.sweep:
        rows = mlp_ratio_sweep()
        print(f"{'ratio':<7}{'variant':<8}{'params':>14}{'dev':>9}{'GMACs':>10}{'dev':>9}")
        for r in rows:
            print(f"{r.ratio:<7g}{r.variant:<8}{r.params:>14,d}{r.param_dev:>+9.2%}"
                  f"{r.macs / 1e9:>10.3f}{r.flop_dev:>+9.2%}")
        print(f"best ratio (smallest worst-case deviation): {best_ratio(rows):g}")
        return 0
    if args.all_variants:
        h, w = parse_input(args.input)[:2] if args.input else (224, 224)
        print(f"{'variant':<8}{'params':>14}{'target':>8}{'dev':>9}{'GMACs':>10}{'target':>8}{'dev':>9}")
        ok = True
        for v, (tp, tf) in PUBLISHED_TARGETS.items():
            with skip_init():
                model = build_model(variant_config(v, height=h, width=w))
            p, f = count_params(model), count_flops(model, (h, w))
            dp, df = (p / 1e6 - tp) / tp, (f / 1e9 - tf) / tf
            flag = abs(dp) <= PARAM_TOL and abs(df) <= FLOP_TOL
            ok &= flag
            print(f"{v:<8}{p:>14,d}{tp:>7.1f}M{dp:>+9.2%}{f / 1e9:>10.3f}{tf:>8.1f}{df:>+9.2%}"
                  f"  {'ok' if flag else 'OUT OF TOLERANCE'}")
        return 0 if ok else 1
    cfg = _model_config(args)
    with skip_init():
        model = build_model(cfg)
    shape = (cfg.height, cfg.width) + ((cfg.frames,) if cfg.input_kind == "video" else ())
    p, f = count_params(model), count_flops(model, shape)
    print(f"variant={cfg.variant} input={'x'.join(map(str, shape))} params={p} macs={f}")
    return 0


def cmd_gradcheck(args) -> int:
    if args.config:
        cfg = replace(_model_config(args), dtype="float64")
        model = build_model(cfg, seed=args.seed or 0)
    else:
        model = toy_gradcheck_model(seed=args.seed or 0)
    report = gradcheck_model(model, seed=args.seed or 0, tol=args.tol, max_entries=args.entries)
    for line in report.lines():
        print(line)
    print(f"max_rel_err={report.max_error:.3e} tol={args.tol:g} {'PASS' if report.passed else 'FAIL'}")
    return 0 if report.passed else 1


def cmd_oracle_diff(args) -> int:
    diffs = oracle_diff(trials=args.trials, seed=args.seed or 0)
    ok = True
    for name, d in diffs.items():
        flag = d < args.tol
        ok &= flag
        print(f"{name:<10} trials={args.trials} max_abs_diff={d:.3e} {'PASS' if flag else 'FAIL'}")
    return 0 if ok else 1


def _data_for(run: RunConfig, split: str) -> DatasetSpec:
    return replace(run.data, split=split)


def cmd_train(args) -> int:
    run = _run_config(args)
    cfg = run.model
    model = build_model(cfg, seed=run.train.seed)
    opt = AdamW(model.named_parameters(), lr=run.train.lr, weight_decay=run.train.weight_decay)
    sched = Schedule(run.train.lr, run.train.steps, min(run.train.warmup, run.train.steps),
                     run.train.floor_lr)
    records = train_loop(model, _data_for(run, "train"), opt, sched, run.train.steps,
                         seed=run.train.seed, label_smoothing=run.train.label_smoothing)
    if args.out:
        write_metrics(records, args.out)
    else:
        for r in records:
            print(r.to_line())
    if args.checkpoint:
        checkpoint.save(model, args.checkpoint)
    val = evaluate(model, _data_for(run, "val"))
    print(f"final train_acc={tail_accuracy(records):.4f} val_acc={val:.4f}", file=sys.stderr)
    return 0


def cmd_eval(args) -> int:
    run = _run_config(args)
    if not args.checkpoint:
        raise UsageError("--checkpoint is required")
    model = build_model(run.model)
    model.load_state_dict(checkpoint.load(args.checkpoint))
    acc = evaluate(model, _data_for(run, "val"), num_batches=args.batches)
    print(f"acc={acc!r}")
    return 0


def cmd_bench(args) -> int:
    from .bench import bench_token_mixers

    if args.config or args.variant:
        cfg = _model_config(args)
        stage = cfg.stages[0]
        h, w = -(-cfg.height // 4), -(-cfg.width // 4)
        c, length = stage.channels, stage.chunk_len
    else:
        h, w = parse_input(args.input)[:2] if args.input else (56, 56)
        c, length = 84, 14
    rows = bench_token_mixers(h, w, c, length, batch=args.batch, seed=args.seed or 0)
    print(f"token mixers at {h}x{w}x{c}, L={length}, batch={args.batch} (single process, "
          f"numpy threads as configured)")
    print(f"{'operation':<12}{'params':>10}{'seconds':>12}{'samples/s':>12}")
    for r in rows:
        print(f"{r.name:<12}{r.params:>10d}{r.seconds:>12.5f}{r.throughput:>12.1f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="morphmlp", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, variant=False):
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--input", help="HxW or HxWxT")
        if variant:
            p.add_argument("--variant", choices=["T", "S", "B", "L", "custom"])

    p = sub.add_parser("count", help="parameter and MAC counts")
    common(p, variant=True)
    p.add_argument("--all-variants", action="store_true",
                   help="the four published variants against their reported numbers")
    p.add_argument("--sweep", action="store_true", help="MLP ratio 2/3/4 against the published counts")
    p.set_defaults(func=cmd_count)

    p = sub.add_parser("gradcheck", help="finite-difference gradient check")
    common(p, variant=True)
    p.add_argument("--tol", type=float, default=1e-5)
    p.add_argument("--entries", type=int, default=None,
                   help="check at most this many coordinates per parameter")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("oracle-diff", help="fast layers vs brute-force oracles")
    common(p)
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--tol", type=float, default=1e-12)
    p.set_defaults(func=cmd_oracle_diff)

    p = sub.add_parser("train", help="desk-scale training run")
    common(p)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--out", help="metrics log path (stdout when omitted)")
    p.add_argument("--checkpoint", help="save the trained weights here")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="accuracy of a checkpoint on the validation stream")
    common(p)
    p.add_argument("--checkpoint")
    p.add_argument("--batches", type=int, default=8)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="MorphFC vs convolution throughput (informational)")
    common(p, variant=True)
    p.add_argument("--batch", type=int, default=8)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError, CheckpointError, FileNotFoundError) as exc:
        print(f"morphmlp {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
