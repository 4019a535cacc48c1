"""Weakly-paired video-description pretraining objectives.

Cross-modal matching pulls a video's description-aware representation toward
its own description and away from descriptions sampled fresh from the rest
of the training set each iteration. Masked language modeling corrupts only
the positive description (15% of eligible tokens; of those 80% -> [MASK],
10% -> random token, 10% left as-is) and predicts the originals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .params import ParamStore
from .tensor import Tensor, concat, log_softmax_rows, take_rows
from .text import MASK_ID, NUM_RESERVED


def sample_negatives(num_samples: int, positive: int, count: int,
                     rng: np.random.Generator) -> np.ndarray:
    """`count` distinct indices drawn uniformly from all samples but the
    positive one."""
    if count < 1:
        raise ValueError("need at least one negative")
    if count > num_samples - 1:
        raise ValueError(
            f"cannot draw {count} negatives from {num_samples - 1} other samples"
        )
    pool = rng.choice(num_samples - 1, size=count, replace=False)
    return np.where(pool >= positive, pool + 1, pool)


def contrastive_loss(f_qv: Tensor, f_pos: Tensor, f_negs: Tensor) -> Tensor:
    """-log of the positive's share of similarity mass.

    f_qv, f_pos: (d,); f_negs: (N_neg, d). Dot products, no temperature.
    """
    if f_negs.shape[0] == 0:
        raise ValueError("contrastive loss needs at least one negative")
    pos = (f_qv * f_pos).sum(axis=-1, keepdims=True)       # (1,)
    negs = f_negs @ f_qv.reshape((f_qv.shape[-1], 1))      # (N_neg, 1)
    logits = concat([pos, negs.reshape((f_negs.shape[0],))], axis=0)
    return -log_softmax_rows(logits)[0]


def batch_contrastive_loss(f_qv: Tensor, f_pos: Tensor, f_negs: Tensor) -> Tensor:
    """Mean contrastive loss over a batch: (B, d), (B, d), (B, N_neg, d)."""
    b, n_neg = f_negs.shape[0], f_negs.shape[1]
    if n_neg == 0:
        raise ValueError("contrastive loss needs at least one negative")
    pos = (f_qv * f_pos).sum(axis=-1, keepdims=True)       # (B, 1)
    negs = (f_negs @ f_qv.reshape(f_qv.shape + (1,))).reshape((b, n_neg))
    logits = concat([pos, negs], axis=-1)                  # (B, 1 + N_neg)
    onehot = np.zeros((b, 1 + n_neg))
    onehot[:, 0] = 1.0
    return -(log_softmax_rows(logits) * onehot).sum() * (1.0 / b)


@dataclass
class MlmTarget:
    """Corruption record for one token sequence."""

    corrupted: np.ndarray      # (M,) ids after corruption
    positions: np.ndarray      # indices of corrupted tokens
    originals: np.ndarray      # true ids at those positions


def corrupt_tokens(tokens: np.ndarray, vocab_size: int, rng: np.random.Generator,
                   prob: float = 0.15) -> MlmTarget:
    """BERT-style corruption of the eligible (non-reserved) tokens.

    Reserved ids (PAD/MASK/UNK/CLS/SEP) are never touched. Draw counts are
    fixed by the sequence length, so the RNG stream stays aligned across
    samples with different contents.
    """
    tokens = np.asarray(tokens, dtype=np.int64)
    m = tokens.shape[0]
    pick = rng.random(m)
    mode = rng.random(m)
    randoms = rng.integers(NUM_RESERVED, vocab_size, size=m)
    eligible = tokens >= NUM_RESERVED
    hit = eligible & (pick < prob)
    corrupted = tokens.copy()
    corrupted[hit & (mode < 0.8)] = MASK_ID
    swap = hit & (mode >= 0.8) & (mode < 0.9)
    corrupted[swap] = randoms[swap]
    # the remaining 10% keep their token but still count as targets
    positions = np.flatnonzero(hit)
    return MlmTarget(corrupted=corrupted, positions=positions,
                     originals=tokens[positions])


def mlm_loss(token_feats: Tensor, positions: np.ndarray, originals: np.ndarray,
             store: ParamStore, prefix: str) -> Tensor:
    """Mean cross-entropy of original ids at corrupted positions.

    token_feats: (B, M, d) contextual features of the corrupted batch;
    positions: flat indices into the (B*M) token grid. No positions -> 0.
    """
    if len(positions) == 0:
        return Tensor(0.0)
    b, m, d = token_feats.shape
    flat = token_feats.reshape((b * m, d))
    picked = take_rows(flat, np.asarray(positions, dtype=np.int64))
    logits = picked @ store[f"{prefix}.proj.w"] + store[f"{prefix}.proj.b"]
    vocab_size = logits.shape[-1]
    onehot = np.zeros((len(positions), vocab_size))
    onehot[np.arange(len(positions)), originals] = 1.0
    return -(log_softmax_rows(logits) * onehot).sum() * (1.0 / len(positions))


def init_mlm_params(store: ParamStore, rng: np.random.Generator, prefix: str,
                    d: int, vocab_size: int) -> None:
    store.add_linear(rng, f"{prefix}.proj", d, vocab_size)
