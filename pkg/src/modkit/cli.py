"""Command-line surface for data generation, training, inference, and checks."""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import evaluation, pipeline, training
from .config import ConfigError, load_config
from .gradcheck import grad_check
from .modk import write_modk
from .ppm import read_ppm, write_ppm
from .scenes import DEFAULT_HOLDOUT, gen_dataset, load_dataset
from .tensor import mse, tensor


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="modkit")
    parser.add_argument("--config", help="key = value configuration file")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic scene dataset")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--include-holdout", action="store_true",
                   help="also generate the held-out tone/texture combinations")

    p = sub.add_parser("train-backbone", help="train and freeze the denoiser")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("pretrain-adapter", help="feature-matching adapter pretraining")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--variant", default="full")

    p = sub.add_parser("train-adapter", help="denoising-objective adapter training")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("infer", help="sample an image, optionally with concepts")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--prompt", required=True)
    p.add_argument("--concept", nargs=2, action="append", default=[],
                   metavar=("IMAGE", "WORD"))
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--dump-directions", help="write predicted direction sets to a MODK file")

    p = sub.add_parser("eval", help="score a checkpoint on the held-out bench")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--n", type=int)
    p.add_argument("--categories", default="tone,texture")
    p.add_argument("--scale", type=float)

    p = sub.add_parser("ablate", help="train and score one ablation variant")
    p.add_argument("--variant", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True, help="frozen backbone checkpoint")
    p.add_argument("--out", required=True)
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--n", type=int)

    p = sub.add_parser("gradcheck", help="finite-difference verification suite")
    p.add_argument("--seed", type=int, default=0)
    return parser


def _seeds(text):
    return [int(s) for s in text.split(",") if s.strip() != ""]


def _load(args, overrides=None):
    return load_config(args.config, overrides)


def cmd_gen_data(args) -> int:
    exclude = () if args.include_holdout else DEFAULT_HOLDOUT
    cfg = _load(args)
    gen_dataset(args.n, args.seed, args.out, size=cfg.image_size, exclude=exclude)
    print(f"wrote {args.n} samples to {args.out}")
    return 0


def cmd_train_backbone(args) -> int:
    cfg = _load(args)
    seed = cfg.seed if args.seed is None else args.seed
    steps = cfg.backbone_steps if args.steps is None else args.steps
    samples = load_dataset(args.data)
    enc = pipeline.build_encoders(cfg)
    model = pipeline.build_model(cfg, enc)
    losses = training.train_backbone(model, samples, steps, batch_size=cfg.batch_size,
                                     seed=seed, lr=cfg.lr, weight_decay=cfg.weight_decay,
                                     scale=cfg.scale, concept_prob=cfg.concept_prob,
                                     log_every=max(steps // 10, 1))
    pipeline.save_checkpoint(args.out, model)
    print(f"backbone loss {losses[0]:.4f} -> {np.mean(losses[-100:]):.4f}; saved {args.out}")
    return 0


def cmd_pretrain_adapter(args) -> int:
    cfg = _load(args)
    seed = cfg.seed if args.seed is None else args.seed
    steps = cfg.pretrain_steps if args.steps is None else args.steps
    samples = load_dataset(args.data)
    model, _ = pipeline.load_checkpoint(args.ckpt, cfg)
    adapter = pipeline.build_adapter(cfg, model.enc, variant=args.variant)
    if args.variant != "linear_gating":
        adapter.fit_routing(pipeline.concept_words(samples), seed=cfg.seed)
    losses = training.pretrain_adapter(adapter, samples, steps,
                                       batch_size=cfg.pretrain_batch, seed=seed,
                                       lr=cfg.lr, weight_decay=cfg.weight_decay,
                                       log_every=max(steps // 10, 1))
    pipeline.save_checkpoint(args.out, model, adapter)
    print(f"pretrain loss {losses[0]:.4f} -> {np.mean(losses[-50:]):.4f}; saved {args.out}")
    return 0


def cmd_train_adapter(args) -> int:
    cfg = _load(args)
    seed = cfg.seed if args.seed is None else args.seed
    steps = cfg.adapter_steps if args.steps is None else args.steps
    samples = load_dataset(args.data)
    model, adapter = pipeline.load_checkpoint(args.ckpt, cfg)
    if adapter is None:
        raise ValueError("checkpoint has no adapter; run pretrain-adapter first")
    losses = training.train_adapter(model, adapter, samples, steps,
                                    batch_size=cfg.batch_size, seed=seed, lr=cfg.lr,
                                    weight_decay=cfg.weight_decay, scale=cfg.scale,
                                    log_every=max(steps // 10, 1))
    pipeline.save_checkpoint(args.out, model, adapter)
    print(f"adapter loss {losses[0]:.4f} -> {np.mean(losses[-100:]):.4f}; saved {args.out}")
    return 0


def cmd_infer(args) -> int:
    cfg = _load(args)
    model, adapter = pipeline.load_checkpoint(args.ckpt, cfg)
    prompt = args.prompt.lower().split()
    injections = []
    dumps = {}
    for image_path, word in args.concept:
        if adapter is None:
            raise ValueError("checkpoint has no adapter; cannot bind concepts")
        if word not in prompt:
            raise ValueError(f"concept word {word!r} does not occur in the prompt")
        directions, _ = adapter.predict_directions(read_ppm(image_path), word)
        injections.append((prompt.index(word), directions.data))
        dumps[f"directions/{word}"] = directions.data
    image = model.sample(prompt, injections, steps=args.steps or cfg.sample_steps,
                         seed=args.seed, scale=args.scale)
    write_ppm(args.out, image)
    if args.dump_directions:
        write_modk(args.dump_directions, dumps)
    print(f"wrote {args.out}")
    return 0


def cmd_eval(args) -> int:
    cfg = _load(args)
    model, adapter = pipeline.load_checkpoint(args.ckpt, cfg)
    if adapter is None:
        raise ValueError("checkpoint has no adapter")
    categories = tuple(args.categories.split(","))
    bench = evaluation.build_bench(categories, args.n or cfg.eval_samples,
                                   seed=cfg.seed + 9000, size=cfg.image_size)
    scale = cfg.scale if args.scale is None else args.scale
    rows = [
        evaluation.evaluate(model, adapter, bench, seed, sample_steps=cfg.sample_steps,
                            scale=scale, variant=adapter.variant)
        for seed in _seeds(args.seeds)
    ]
    evaluation.write_metrics_csv(args.out, rows)
    for m in rows:
        print(f"seed {m.seed}: CP {m.cp:.3f} PF {m.pf:.3f} CP*PF {m.cp_pf:.3f}")
    return 0


def cmd_ablate(args) -> int:
    cfg = _load(args)
    samples = load_dataset(args.data)
    seeds = _seeds(args.seeds)
    model, _ = pipeline.load_checkpoint(args.ckpt, cfg)
    backbones = {seed: model for seed in seeds}
    bench = evaluation.build_bench(("tone", "texture"), args.n or cfg.eval_samples,
                                   seed=cfg.seed + 9000, size=cfg.image_size)
    rows = evaluation.run_ablation(args.variant, cfg, seeds, backbones, samples, bench)
    evaluation.write_metrics_csv(args.out, rows)
    for m in rows:
        print(f"{m.variant} seed {m.seed}: CP*PF {m.cp_pf:.3f}")
    return 0


def cmd_gradcheck(args) -> int:
    from .gradcheck_suite import run_suite

    report, ok = run_suite(seed=args.seed)
    print(report)
    return 0 if ok else 1


_COMMANDS = {
    "gen-data": cmd_gen_data,
    "train-backbone": cmd_train_backbone,
    "pretrain-adapter": cmd_pretrain_adapter,
    "train-adapter": cmd_train_adapter,
    "infer": cmd_infer,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "gradcheck": cmd_gradcheck,
}


def run_command(argv) -> int:
    """Dispatch one subcommand; returns the process exit code."""
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, FileNotFoundError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    raise ValueError(run_command(sys.argv[1:]))
