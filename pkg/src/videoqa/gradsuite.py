"""Gradient verification suite.

Runs finite_diff_check over every differentiable primitive, the loss heads,
and the full multi-choice forward+loss on a tiny 2-clip x 2-frame x 3-object
x 5-candidate instance. The model-level check splices slices of the probe
vector into a subset of live parameters (weights from every group, both
halves of the shared relation maps' consumers, embedding rows, position
tables) so end-to-end accumulation across reuse is exercised, not just each
op in isolation.
"""

from __future__ import annotations

import numpy as np

from .config import RunConfig
from .data import Sample
from .gradcheck import finite_diff_check
from .model import Model
from .params import ParamStore
from .pretrain import batch_contrastive_loss, init_mlm_params, mlm_loss
from .qa import batch_qa_loss
from .attention import self_attention
from .tensor import (Tensor, concat, elu, exp, layer_norm, log,
                     log_softmax_rows, logsumexp, relu, softmax_rows,
                     take_rows)
from .text import Vocab


def _mix(t: Tensor, w: np.ndarray) -> Tensor:
    """Weighted sum: gives every output coordinate a distinct sensitivity."""
    return (t * w).sum()


def _w(rng, shape):
    return rng.normal(0.0, 1.0, size=shape)


# -- primitive op cases ---------------------------------------------------------
# each builder returns (fn, point); fn maps a Tensor of point's shape to a scalar


def _case_add_sub(rng):
    c = _w(rng, (4,))
    w = _w(rng, (3, 4))

    def fn(x):
        return _mix((x + c) * 0.5 + (2.0 - x) + (-x) / 3.0, w)

    return fn, _w(rng, (3, 4))


def _case_mul_div(rng):
    c = _w(rng, (3, 4))
    denom = rng.uniform(0.5, 1.5, size=(4,))
    w = _w(rng, (3, 4))

    def fn(x):
        return _mix(x * c / denom + x * 0.25, w)

    return fn, _w(rng, (3, 4))


def _case_matmul_left(rng):
    b = _w(rng, (4, 5))
    w = _w(rng, (3, 5))
    return (lambda x: _mix(x @ b, w)), _w(rng, (3, 4))


def _case_matmul_right(rng):
    a = Tensor(_w(rng, (3, 4)))
    w = _w(rng, (3, 5))
    return (lambda x: _mix(a @ x, w)), _w(rng, (4, 5))


def _case_matmul_broadcast(rng):
    # stacked left operand against a shared right operand: the right
    # operand's gradient must sum over the broadcast batch axis
    a = Tensor(_w(rng, (2, 3, 4)))
    w = _w(rng, (2, 3, 5))
    return (lambda x: _mix(a @ x, w)), _w(rng, (4, 5))


def _case_reshape_transpose(rng):
    w = _w(rng, (8, 3))

    def fn(x):
        return _mix(x.transpose((1, 0, 2)).reshape(3, 8).swap_last2(), w)

    return fn, _w(rng, (2, 3, 4))


def _case_slicing(rng):
    wy = _w(rng, (2, 2, 5))
    wz = _w(rng, (4, 5))

    def fn(x):
        return _mix(x[1:, ::2, :], wy) + _mix(x[0], wz) + x[2, 3, 4] * 0.25

    return fn, _w(rng, (3, 4, 5))


def _case_reductions(rng):
    w1 = _w(rng, (3, 2))
    w2 = _w(rng, (4,))
    w3 = _w(rng, (3, 4, 1))

    def fn(x):
        return (_mix(x.sum(axis=1), w1) + _mix(x.mean(axis=(0, 2)), w2)
                + x.sum() * 0.1 + _mix(x.sum(axis=-1, keepdims=True), w3))

    return fn, _w(rng, (3, 4, 2))


def _case_exp_log(rng):
    w1 = _w(rng, (3, 4))
    w2 = _w(rng, (3, 4))

    def fn(x):
        return _mix(exp(x * 0.7), w1) + _mix(log(x + 2.5), w2)

    return fn, rng.uniform(-1.0, 1.0, size=(3, 4))


def _off_zero(rng, shape):
    # keep every coordinate at least 0.1 from the relu/elu kink so central
    # differences with step 1e-4 never straddle it
    return rng.uniform(0.1, 1.0, size=shape) * rng.choice([-1.0, 1.0], size=shape)


def _case_relu(rng):
    w = _w(rng, (3, 4))
    return (lambda x: _mix(relu(x), w)), _off_zero(rng, (3, 4))


def _case_elu(rng):
    w = _w(rng, (3, 4))
    return (lambda x: _mix(elu(x), w)), _off_zero(rng, (3, 4))


def _case_concat(rng):
    w1 = _w(rng, (3, 4))
    w2 = _w(rng, (3, 8))

    def fn(x):
        rebuilt = concat([x[0:1], x[1:3]], axis=0)
        doubled = concat([x, x], axis=-1)    # repeated parent: grads add
        return _mix(rebuilt, w1) + _mix(doubled, w2)

    return fn, _w(rng, (3, 4))


def _case_take_rows(rng):
    idx = np.array([0, 2, 2, 4, 0, 1])
    w = _w(rng, (6, 3))
    return (lambda x: _mix(take_rows(x, idx), w)), _w(rng, (5, 3))


def _case_softmax(rng):
    w = _w(rng, (3, 5))
    return (lambda x: _mix(softmax_rows(x * 2.0), w)), _w(rng, (3, 5))


def _case_log_softmax(rng):
    w = _w(rng, (3, 5))

    def fn(x):
        return _mix(log_softmax_rows(x * 1.5), w) + logsumexp(x) * 0.3

    return fn, _w(rng, (3, 5))


def _case_layer_norm(rng):
    w = _w(rng, (2, 6))

    def fn(p):
        x = p[0:12].reshape(2, 6)
        gain = p[12:18]
        bias = p[18:24]
        return _mix(layer_norm(x, gain, bias), w)

    return fn, _w(rng, (24,))


def _case_attention(rng):
    mask = np.zeros((2, 1, 3))
    mask[1, 0, 2] = -1e9
    w = _w(rng, (2, 3, 4))

    def fn(p):
        xq = p[0:24].reshape(2, 3, 4)
        xk = p[24:48].reshape(2, 3, 4)
        xv = p[48:72].reshape(2, 3, 4)
        return _mix(self_attention(xq, xk, xv, mask), w)

    return fn, _w(rng, (72,)) * 0.5


def _case_qa_loss(rng):
    gold = np.array([1, 3, 0])
    return (lambda x: batch_qa_loss(x, gold)), _w(rng, (3, 4))


def _case_contrastive(rng):
    def fn(p):
        f_qv = p[0:8].reshape(2, 4)
        f_pos = p[8:16].reshape(2, 4)
        f_negs = p[16:40].reshape(2, 3, 4)
        return batch_contrastive_loss(f_qv, f_pos, f_negs)

    return fn, _w(rng, (40,)) * 0.5


def _case_mlm(rng):
    store = ParamStore()
    init_mlm_params(store, rng, "mlm", 4, 7)
    positions = np.array([0, 4, 5])
    originals = np.array([5, 6, 5])

    def fn(p):
        feats = p.reshape(2, 3, 4)
        return mlm_loss(feats, positions, originals, store, "mlm")

    return fn, _w(rng, (24,)) * 0.5


OP_CASES = [
    ("add_sub", _case_add_sub),
    ("mul_div", _case_mul_div),
    ("matmul_left", _case_matmul_left),
    ("matmul_right", _case_matmul_right),
    ("matmul_broadcast", _case_matmul_broadcast),
    ("reshape_transpose", _case_reshape_transpose),
    ("slicing", _case_slicing),
    ("reductions", _case_reductions),
    ("exp_log", _case_exp_log),
    ("relu", _case_relu),
    ("elu", _case_elu),
    ("concat", _case_concat),
    ("take_rows", _case_take_rows),
    ("softmax", _case_softmax),
    ("log_softmax", _case_log_softmax),
    ("layer_norm", _case_layer_norm),
    ("attention_masked", _case_attention),
    ("qa_loss", _case_qa_loss),
    ("contrastive", _case_contrastive),
    ("mlm", _case_mlm),
]


# -- end-to-end model case -------------------------------------------------------


def _tiny_config(placement: str) -> RunConfig:
    return RunConfig(l_v=4, k=2, l_c=2, n=3, d=8, d_r=8, d_i=8, heads=2,
                     edge_heads=3, layers=1, gcn_layers=2, d_text=8,
                     text_heads=2, text_layers=1, max_text_len=16,
                     num_candidates=5, cm_placement=placement)


def _toy_sample(cfg: RunConfig, rng: np.random.Generator) -> Sample:
    feats = rng.normal(0.0, 0.5, size=(cfg.k, cfg.l_c, cfg.n, cfg.d_r))
    x1 = rng.uniform(0.0, 0.5, size=(cfg.k, cfg.l_c, cfg.n))
    y1 = rng.uniform(0.0, 0.5, size=(cfg.k, cfg.l_c, cfg.n))
    bw = rng.uniform(0.1, 0.4, size=(cfg.k, cfg.l_c, cfg.n))
    bh = rng.uniform(0.1, 0.4, size=(cfg.k, cfg.l_c, cfg.n))
    boxes = np.stack([x1, y1, x1 + bw, y1 + bh, bw * bh], axis=-1)
    frame_feats = rng.normal(0.0, 0.5, size=(cfg.l_v, cfg.d_i))
    candidates = ["red cube", "blue ball", "green cone", "gray ring", "tan disk"]
    return Sample(sid="toy-00000", family="toy", feats=feats, boxes=boxes,
                  frame_feats=frame_feats,
                  question="what moves across the table",
                  candidates=candidates, answer=2)


# (name, leading-rows limit): None splices the whole tensor; an int splices
# only that many leading rows, keeping the rest constant
MODEL_SPLICE = [
    ("graph.loc.w", None),
    ("graph.rel_k.w", None),
    ("dgt.ntrans.layer0.head0.q.w", None),
    ("dgt.etrans.layer0.head1.v.w", None),
    ("dgt.gcn1.w", 4),
    ("dgt.pool.w", None),
    ("dgt.frame_map.b", None),
    ("dgt.fuse.b", None),
    ("text.emb", 6),
    ("text.layer0.out.b", None),
    ("text.layer0.ln.gain", None),
    ("text.proj.b", None),
    ("global.pos.table", None),
    ("global.layer0.head0.k.w", None),
    ("global.layer0.ln.bias", None),
]


def _model_case(placement: str, seed: int):
    rng = np.random.default_rng(seed)
    cfg = _tiny_config(placement)
    sample = _toy_sample(cfg, rng)
    vocab = Vocab.build([sample.question] + sample.candidates)
    model = Model(cfg, vocab, rng)
    store = model.store

    pieces = []
    for name, rows in MODEL_SPLICE:
        base = store[name].data
        shape = base.shape if rows is None else (rows,) + base.shape[1:]
        pieces.append((name, rows, shape, int(np.prod(shape))))
    point = np.concatenate(
        [store[name].data[:rows].reshape(-1) if rows is not None
         else store[name].data.reshape(-1)
         for name, rows, _, _ in pieces])

    def fn(p):
        originals = {}
        off = 0
        for name, rows, shape, size in pieces:
            originals[name] = store._params[name]
            seg = p[off:off + size].reshape(shape)
            if rows is not None:
                seg = concat([seg, Tensor(originals[name].data[rows:])], axis=0)
            store._params[name] = seg
            off += size
        try:
            loss, _, _ = model.qa_batch_loss([sample])
        finally:
            store._params.update(originals)
        return loss

    return fn, point


def run_gradient_suite(seeds=(0, 1, 2), include_model: bool = True,
                       step: float = 1e-4) -> dict[str, float]:
    """Name -> max relative error, over all cases and seeds."""
    errors: dict[str, float] = {}
    for seed in seeds:
        rng = np.random.default_rng(1000 + seed)
        for name, build in OP_CASES:
            fn, point = build(rng)
            errors[f"{name}[s{seed}]"] = finite_diff_check(
                fn, Tensor(point), step)
        if include_model:
            fn, point = _model_case("clip", seed)
            errors[f"model_clip[s{seed}]"] = finite_diff_check(
                fn, Tensor(point), step)
    if include_model:
        # remaining text placements once: the same parameters, different
        # interaction sites
        for placement in ("object", "frame", "frame+clip"):
            fn, point = _model_case(placement, seeds[0])
            key = f"model_{placement.replace('+', '_')}[s{seeds[0]}]"
            errors[key] = finite_diff_check(fn, Tensor(point), step)
    return errors
