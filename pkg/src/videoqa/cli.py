"""Command-line interface.

Subcommands: gen-data, train, pretrain, eval, gradcheck, report-params.
Every run is driven by a flat key=value config file; a handful of flags
override config fields for convenience.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .checkpoint import load_checkpoint
from .config import RunConfig
from .data import corpus_texts, load_dataset
from .model import Model
from .qa import PLACEMENTS
from .synth import generate_files
from .text import Vocab
from .train import check_arch_match, evaluate, train


def _load_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "ablate", None):
        cfg.ablate = args.ablate
    if getattr(args, "cm_placement", None):
        cfg.cm_placement = args.cm_placement
    if getattr(args, "freeze_text", False):
        cfg.freeze_text = True
    return cfg.validate()


def _add_common(p: argparse.ArgumentParser, *, config_required: bool = False):
    p.add_argument("--config", required=config_required,
                   help="flat key=value config file")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", default="runs/out", help="output directory")
    p.add_argument("--checkpoint", help="checkpoint file to load")
    p.add_argument("--ablate", help="comma-joined ablation flags "
                   "(no_graph,no_temporal,no_node_attn,no_edge_attn,no_frame_feat)")
    p.add_argument("--cm-placement", dest="cm_placement", choices=PLACEMENTS,
                   help="where text interacts with the video stream")
    p.add_argument("--freeze-text", dest="freeze_text", action="store_true",
                   help="freeze the text encoder (stage-two fine-tuning)")


def cmd_gen_data(args) -> int:
    cfg = _load_config(args)
    written = generate_files(cfg, args.out)
    for path in written:
        print(path)
    if not written:
        print("nothing to generate: num_train/num_val/num_pretrain are all 0",
              file=sys.stderr)
        return 1
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args)
    if args.resume and not args.checkpoint:
        raise SystemExit("--resume needs --checkpoint")
    summary = train(
        cfg, args.out,
        resume_from=args.checkpoint if args.resume else None,
        warm_start=args.checkpoint if not args.resume else None,
        stop_after=args.stop_after,
    )
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def cmd_pretrain(args) -> int:
    cfg = _load_config(args)
    cfg.mode = "pretrain"
    if cfg.pretrain_data:
        cfg.train_data = cfg.pretrain_data
    cfg.eval_data = ""    # no QA accuracy during pretraining
    summary = train(cfg, args.out,
                    warm_start=args.checkpoint, stop_after=args.stop_after)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def cmd_eval(args) -> int:
    if not args.checkpoint:
        raise SystemExit("eval needs --checkpoint")
    ck = load_checkpoint(args.checkpoint)
    cfg = ck.cfg
    if args.config:
        override = RunConfig.from_file(args.config)
        check_arch_match(override, cfg)
        cfg.eval_data = override.eval_data or cfg.eval_data
        cfg.batch_size = override.batch_size
    if not cfg.eval_data:
        raise SystemExit("no eval_data path (set it in the config)")
    samples = load_dataset(cfg.eval_data, cfg)
    report = evaluate(ck.model, samples, cfg.batch_size)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "eval.json"), "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
    rows = ["split,acc_all," + ",".join(sorted(report["families"]))]
    rows.append("eval," + ",".join(
        [f"{report['acc_all']:.10g}"]
        + [f"{report['families'][f]:.10g}" for f in sorted(report["families"])]))
    with open(os.path.join(args.out, "eval.csv"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(rows) + "\n")
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def cmd_gradcheck(args) -> int:
    from .gradsuite import run_gradient_suite

    seeds = (args.seed,) if args.seed is not None else (0, 1, 2)
    errors = run_gradient_suite(seeds=seeds)
    width = max(len(k) for k in errors)
    for name, err in errors.items():
        print(f"{name:<{width}}  {err:.3e}")
    worst = max(errors.values())
    print(f"{'max':<{width}}  {worst:.3e}")
    return 0 if worst < 1e-4 else 1


def cmd_report_params(args) -> int:
    if args.checkpoint:
        model = load_checkpoint(args.checkpoint).model
    else:
        cfg = _load_config(args)
        if cfg.train_data:
            texts = corpus_texts(load_dataset(cfg.train_data, cfg))
        else:
            # no data: vocab size still matters for the embedding and MLM
            # head, so count with a deterministic stand-in corpus
            texts = [" ".join(f"w{i}" for i in range(100))]
        vocab = Vocab.build(texts)
        model = Model(cfg, vocab, np.random.default_rng(cfg.seed))
    groups = model.store.count_by_group()
    total = model.store.count()
    width = max(len(g) for g in groups)
    for group in sorted(groups):
        print(f"{group:<{width}}  {groups[group]:>10,}")
    print(f"{'total':<{width}}  {total:>10,}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="videoqa",
        description="Graph-transformer video question answering, desk scale.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write synthetic JSONL datasets")
    _add_common(p, config_required=True)

    p = sub.add_parser("train", help="train QA (fresh, warm-started, or resumed)")
    _add_common(p, config_required=True)
    p.add_argument("--resume", action="store_true",
                   help="continue the checkpoint's run bitwise")
    p.add_argument("--stop-after", type=int, dest="stop_after",
                   help="checkpoint and halt after this many epochs")

    p = sub.add_parser("pretrain", help="contrastive + MLM pretraining")
    _add_common(p, config_required=True)
    p.add_argument("--stop-after", type=int, dest="stop_after")

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    _add_common(p)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    _add_common(p)

    p = sub.add_parser("report-params", help="parameter counts by module")
    _add_common(p)

    args = parser.parse_args(argv)
    handlers = {
        "gen-data": cmd_gen_data,
        "train": cmd_train,
        "pretrain": cmd_pretrain,
        "eval": cmd_eval,
        "gradcheck": cmd_gradcheck,
        "report-params": cmd_report_params,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
