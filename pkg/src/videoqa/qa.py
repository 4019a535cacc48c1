"""Cross-modal interaction, global temporal reasoning, and answer scoring.

Text enters the visual stream through a residual attention: each visual
vector attends over the question's token features and adds the summary back
onto itself. A short transformer with trainable (sinusoidal-initialized)
positions then reasons over the clip sequence, and its mean-pooled output is
dotted against candidate-answer vectors. Training minimizes softmax
cross-entropy over the candidate scores.
"""

from __future__ import annotations

import numpy as np

from .attention import add_position, init_mhsa_params, init_position_params, mhsa_stack
from .params import ParamStore
from .tensor import Tensor, log_softmax_rows, softmax_rows

PLACEMENTS = ("object", "frame", "clip", "frame+clip")


def init_global_params(store: ParamStore, rng: np.random.Generator, prefix: str,
                       d: int, heads: int, layers: int, max_clips: int) -> None:
    init_position_params(store, f"{prefix}.pos", max_clips, d)
    init_mhsa_params(store, rng, prefix, d, heads, layers)


def cross_modal_interact(x_v: Tensor, x_q: Tensor, mask: np.ndarray) -> Tensor:
    """Residual text attention: x + softmax(x X_q^T) X_q per visual row.

    x_v: (..., N_v, d); x_q: (..., M, d); mask: (..., M) bool, True at real
    tokens. PAD tokens get -1e9 logits, so their attention weight underflows
    to exactly zero.
    """
    if x_q.shape[-2] == 0 or not mask.any():
        raise ValueError("cross-modal interaction against empty text")
    logits = x_v @ x_q.swap_last2()                          # (..., N_v, M)
    logits = logits + np.where(mask, 0.0, -1e9)[..., None, :]
    beta = softmax_rows(logits)
    return x_v + beta @ x_q


def global_transform(clips: Tensor, store: ParamStore, prefix: str, heads: int,
                     layers: int) -> Tensor:
    """Position-tagged transformer over (..., k, d) clip features, mean-pooled
    to (..., d)."""
    if clips.shape[-2] == 0:
        raise ValueError("global transform over zero clips")
    x = add_position(clips, store, f"{prefix}.pos")
    x = mhsa_stack(x, store, prefix, heads, layers)
    return x.mean(axis=-2)


def score_answers(f_qv: Tensor, f_a: Tensor) -> Tensor:
    """Per-candidate dot products.

    f_a is (|A|, d). f_qv may be a single (d,) vector (shared video-question
    representation) or (|A|, d) with one row per candidate; the result is
    (|A|,) raw scores either way.
    """
    if f_a.shape[0] == 0:
        raise ValueError("no candidates to score")
    # broadcasting covers both layouts
    return (f_qv * f_a).sum(axis=-1)


def joint_score(f_qv: Tensor, f_q: Tensor, f_a: Tensor) -> Tensor:
    """Element-wise product of video-question and question-only similarities
    (open-ended decision rule)."""
    return score_answers(f_qv, f_a) * score_answers(f_q, f_a)


def predict(scores: np.ndarray) -> int:
    """Argmax with ties resolved to the lowest index."""
    return int(np.argmax(scores))


def qa_loss(scores: Tensor, gold: int) -> Tensor:
    """Softmax cross-entropy of the gold candidate against raw scores (|A|,)."""
    num = scores.shape[-1]
    if not 0 <= gold < num:
        raise ValueError(f"gold index {gold} outside 0..{num - 1}")
    onehot = np.zeros(num)
    onehot[gold] = 1.0
    return -(log_softmax_rows(scores) * onehot).sum()


def batch_qa_loss(scores: Tensor, gold: np.ndarray) -> Tensor:
    """Mean cross-entropy over a (batch, |A|) score matrix."""
    b, num = scores.shape
    if np.any((gold < 0) | (gold >= num)):
        raise ValueError("gold index outside the candidate range")
    onehot = np.zeros((b, num))
    onehot[np.arange(b), gold] = 1.0
    return -(log_softmax_rows(scores) * onehot).sum() * (1.0 / b)
