"""Training and evaluation loops.

A run is fully determined by (config, data files, seed): parameter init,
shuffling, negative sampling, and MLM corruption each draw from their own
named RNG stream, and checkpoints capture every stream plus optimizer
moments, so resuming from the per-epoch checkpoint reproduces an
uninterrupted run bitwise.
"""

from __future__ import annotations

import json
import math
import os

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig
from .data import Sample, corpus_texts, epoch_batches, load_dataset
from .model import Model
from .optim import AdamState, adam_step
from .rng import RngHub
from .tensor import no_grad
from .text import Vocab, split_words

ARCH_KEYS = ("l_v", "k", "l_c", "n", "d", "d_r", "d_i", "heads", "edge_heads",
             "layers", "gcn_layers", "d_text", "text_heads", "text_layers",
             "max_text_len")


def check_arch_match(a: RunConfig, b: RunConfig) -> None:
    bad = [k for k in ARCH_KEYS if getattr(a, k) != getattr(b, k)]
    if bad:
        raise ValueError(f"config does not match checkpoint architecture on: {bad}")


def _fmt(x: float) -> str:
    return f"{float(x):.10g}"


class MetricsWriter:
    """Appends deterministic CSV rows: epoch, split, loss, accuracies."""

    def __init__(self, path: str, families: list[str]):
        self.path = path
        self.families = families
        if not os.path.exists(path):
            header = ["epoch", "split", "loss", "acc_all"]
            header += [f"acc_{f}" for f in families]
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(",".join(header) + "\n")

    def row(self, epoch: int, split: str, loss: float, report: dict | None) -> None:
        cells = [str(epoch), split, _fmt(loss)]
        if report is None:
            cells += [""] * (1 + len(self.families))
        else:
            cells.append(_fmt(report["acc_all"]))
            cells += [_fmt(report["families"][f]) if f in report["families"] else ""
                      for f in self.families]
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(",".join(cells) + "\n")


def accuracy_report(preds: np.ndarray, gold: np.ndarray,
                    families: list[str]) -> dict:
    correct = preds == gold
    by_family: dict[str, list[bool]] = {}
    for ok, fam in zip(correct, families):
        by_family.setdefault(fam, []).append(bool(ok))
    return {
        "n": int(len(gold)),
        "acc_all": float(np.mean(correct)) if len(gold) else 0.0,
        "families": {f: float(np.mean(v)) for f, v in sorted(by_family.items())},
    }


def evaluate(model: Model, samples: list[Sample], batch_size: int) -> dict:
    """Accuracy and mean loss without gradient bookkeeping."""
    preds, gold, fams = [], [], []
    total_loss = 0.0
    with no_grad():
        for start in range(0, len(samples), batch_size):
            chunk = samples[start:start + batch_size]
            loss, p, g = model.qa_batch_loss(chunk)
            total_loss += float(loss.data) * len(chunk)
            preds.extend(p)
            gold.extend(g)
            fams.extend(s.family for s in chunk)
    report = accuracy_report(np.array(preds), np.array(gold), fams)
    report["loss"] = total_loss / len(samples)
    return report


def _build_fresh(cfg: RunConfig, train_samples: list[Sample], hub: RngHub,
                 steps_per_epoch: int) -> tuple[Model, AdamState]:
    vocab = Vocab.build(corpus_texts(train_samples))
    model = Model(cfg, vocab, hub.get("init"))
    total = max(1, cfg.epochs * steps_per_epoch)
    return model, AdamState(model.store, cfg.lr, total)


def train(cfg: RunConfig, out_dir: str, resume_from: str | None = None,
          warm_start: str | None = None, stop_after: int | None = None) -> dict:
    """Run the configured training mode; returns the summary dict.

    resume_from: continue an interrupted run bitwise (config, optimizer, RNG
    and epoch counter all come from the checkpoint).
    warm_start: initialize parameters and vocabulary from a checkpoint but
    start a fresh optimizer/schedule (stage-two fine-tuning).
    """
    cfg.validate()
    if resume_from and warm_start:
        raise ValueError("resume_from and warm_start are mutually exclusive")
    os.makedirs(out_dir, exist_ok=True)

    start_epoch = 0
    if resume_from:
        ck = load_checkpoint(resume_from)
        cfg, model, optim, hub = ck.cfg, ck.model, ck.optim, ck.hub
        start_epoch = int(ck.meta["epoch"])
        best_metric = ck.meta.get("best_metric")
        train_samples = load_dataset(cfg.train_data, cfg)
        steps_per_epoch = math.ceil(len(train_samples) / cfg.batch_size)
    else:
        if not cfg.train_data:
            raise ValueError("config key train_data is required")
        train_samples = load_dataset(cfg.train_data, cfg)
        steps_per_epoch = math.ceil(len(train_samples) / cfg.batch_size)
        hub = RngHub(cfg.seed)
        best_metric = None
        if warm_start:
            ck = load_checkpoint(warm_start)
            check_arch_match(cfg, ck.cfg)
            # the checkpoint's vocabulary (e.g. from pretraining descriptions)
            # rarely covers this run's corpus; novel tokens get fresh rows so
            # distinct answer words never collapse onto UNK
            vocab = Vocab.from_lines(ck.model.vocab.to_lines())
            for text in corpus_texts(train_samples):
                for word in split_words(text):
                    vocab.add(word)
            old_v = len(ck.model.vocab)
            model = Model(cfg, vocab, hub.get("init"))
            for name, tensor in ck.model.store.items():
                dst = model.store[name].data
                if name == "text.emb":
                    dst[:old_v] = tensor.data
                elif name == "mlm.proj.w":
                    dst[:, :old_v] = tensor.data
                elif name == "mlm.proj.b":
                    dst[:old_v] = tensor.data
                else:
                    model.store[name].data = tensor.data.copy()
            optim = AdamState(model.store, cfg.lr,
                              max(1, cfg.epochs * steps_per_epoch))
        else:
            model, optim = _build_fresh(cfg, train_samples, hub, steps_per_epoch)
    if cfg.freeze_text:
        model.store.freeze("text")

    eval_samples = load_dataset(cfg.eval_data, cfg) if cfg.eval_data else None
    pretraining = cfg.mode == "pretrain"
    if pretraining and any(s.description is None for s in train_samples):
        raise ValueError("pretrain mode needs description rows")
    if not pretraining and any(s.answer is None for s in train_samples):
        raise ValueError("QA training needs question/candidates/answer rows")

    fam_names = sorted({s.family for s in train_samples}
                       | ({s.family for s in eval_samples} if eval_samples else set()))
    metrics = MetricsWriter(os.path.join(out_dir, "metrics.csv"), fam_names)
    descriptions = [s.description for s in train_samples] if pretraining else []

    summary = {"epochs_run": start_epoch, "stopped_early": False,
               "first_epoch_at_target": None, "mode": cfg.mode}
    last_path = os.path.join(out_dir, "last.ckpt")
    best_path = os.path.join(out_dir, "best.ckpt")
    last_loss = None

    for epoch in range(start_epoch, cfg.epochs):
        batches = epoch_batches(len(train_samples), cfg.batch_size,
                                hub.get("shuffle"))
        epoch_loss = 0.0
        preds, gold, fams = [], [], []
        for idx in batches:
            chunk = [train_samples[i] for i in idx]
            model.store.zero_grad()
            if pretraining:
                contrastive, mlm = model.pretrain_losses(
                    chunk, idx, descriptions, hub.get("neg"), hub.get("mlm"))
                loss = contrastive + cfg.mlm_weight * mlm
                epoch_loss += float(contrastive.data) * len(chunk)
            else:
                loss, p, g = model.qa_batch_loss(chunk)
                epoch_loss += float(loss.data) * len(chunk)
                preds.extend(p)
                gold.extend(g)
                fams.extend(s.family for s in chunk)
            loss.backward()
            adam_step(model.store, model.store.gradients(), optim)

        epoch_loss /= len(train_samples)
        last_loss = epoch_loss
        report = None
        if not pretraining:
            report = accuracy_report(np.array(preds), np.array(gold), fams)
        metrics.row(epoch, "train", epoch_loss, report)

        metric = None
        if eval_samples is not None:
            ev = evaluate(model, eval_samples, cfg.batch_size)
            metrics.row(epoch, "val", ev["loss"], ev)
            metric = ev["acc_all"]
        elif report is not None:
            metric = report["acc_all"]

        # best must update before last.ckpt is written so a resumed run
        # carries the same comparison state as an uninterrupted one
        improved = metric is not None and (best_metric is None or metric > best_metric)
        if improved:
            best_metric = metric
        summary["epochs_run"] = epoch + 1
        meta = {"epoch": epoch + 1, "best_metric": best_metric, "mode": cfg.mode}
        save_checkpoint(last_path, model, optim, hub, meta)
        if improved:
            save_checkpoint(best_path, model, optim, hub, meta)

        target = cfg.early_stop_acc
        if target > 0 and report is not None and report["acc_all"] >= target:
            if summary["first_epoch_at_target"] is None:
                summary["first_epoch_at_target"] = epoch + 1
            confirm = evaluate(model, train_samples, cfg.batch_size)
            if confirm["acc_all"] >= target:
                summary["stopped_early"] = True
                summary["final_train_acc"] = confirm["acc_all"]
                break
        if stop_after is not None and epoch + 1 >= stop_after:
            break

    if summary["epochs_run"] == 0:
        save_checkpoint(last_path, model, optim, hub,
                        {"epoch": 0, "best_metric": None, "mode": cfg.mode})

    summary["best_metric"] = best_metric
    summary["final_loss"] = last_loss
    with open(os.path.join(out_dir, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    return summary
