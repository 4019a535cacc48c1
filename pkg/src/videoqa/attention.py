"""Multi-head self-attention layers and temporal position embeddings.

Attention weights are computed as softmax(X_k X_q^T / sqrt(d_k)) and applied
to X_v; each transformer layer is post-norm: LN(MHSA(X) + X). Per-head
query/key/value maps go d -> d/e so head concatenation restores d. No
dropout anywhere (determinism aids verification).
"""

from __future__ import annotations

import math

import numpy as np

from .params import ParamStore
from .tensor import Tensor, concat, layer_norm, softmax_rows


def self_attention(x_q: Tensor, x_k: Tensor, x_v: Tensor,
                   key_mask: np.ndarray | None = None) -> Tensor:
    """Scaled dot-product attention over the second-to-last axis.

    Inputs are (..., seq, d_k); output rows are convex combinations of the
    X_v rows. `key_mask`, if given, is an additive (..., 1, seq) or
    (..., seq, seq) tensor of 0 / -1e9 entries excluding key positions.
    """
    if x_q.shape[-2] == 0:
        raise ValueError("self_attention on an empty sequence")
    d_k = x_q.shape[-1]
    logits = (x_k @ x_q.swap_last2()) * (1.0 / math.sqrt(d_k))
    if key_mask is not None:
        logits = logits + key_mask
    weights = softmax_rows(logits)
    return weights @ x_v


def attention_weights(x_q: Tensor, x_k: Tensor,
                      key_mask: np.ndarray | None = None) -> Tensor:
    """The softmax weight matrix alone (for invariant checks)."""
    d_k = x_q.shape[-1]
    logits = (x_k @ x_q.swap_last2()) * (1.0 / math.sqrt(d_k))
    if key_mask is not None:
        logits = logits + key_mask
    return softmax_rows(logits)


def init_mhsa_params(store: ParamStore, rng: np.random.Generator, prefix: str,
                     dim: int, heads: int, layers: int) -> None:
    """Register weights for a stack of `layers` untied MHSA layers."""
    if dim % heads != 0:
        raise ValueError(f"model dim {dim} not divisible by head count {heads}")
    d_k = dim // heads
    for layer in range(layers):
        base = f"{prefix}.layer{layer}"
        for h in range(heads):
            store.add_linear(rng, f"{base}.head{h}.q", dim, d_k)
            store.add_linear(rng, f"{base}.head{h}.k", dim, d_k)
            store.add_linear(rng, f"{base}.head{h}.v", dim, d_k)
        store.add_linear(rng, f"{base}.out", dim, dim)
        store.add(f"{base}.ln.gain", np.ones(dim))
        store.add(f"{base}.ln.bias", np.zeros(dim))


def mhsa_layer(x: Tensor, store: ParamStore, prefix: str, heads: int,
               key_mask: np.ndarray | None = None) -> Tensor:
    """One MHSA layer with skip connection and layer norm: LN(out + x)."""
    dim = x.shape[-1]
    if dim % heads != 0:
        raise ValueError(f"model dim {dim} not divisible by head count {heads}")
    head_outs = []
    for h in range(heads):
        hp = f"{prefix}.head{h}"
        q = x @ store[f"{hp}.q.w"] + store[f"{hp}.q.b"]
        k = x @ store[f"{hp}.k.w"] + store[f"{hp}.k.b"]
        v = x @ store[f"{hp}.v.w"] + store[f"{hp}.v.b"]
        head_outs.append(self_attention(q, k, v, key_mask))
    x_out = concat(head_outs, axis=-1) @ store[f"{prefix}.out.w"] + store[f"{prefix}.out.b"]
    return layer_norm(x_out + x, store[f"{prefix}.ln.gain"], store[f"{prefix}.ln.bias"])


def mhsa_stack(x: Tensor, store: ParamStore, prefix: str, heads: int, layers: int,
               key_mask: np.ndarray | None = None) -> Tensor:
    for layer in range(layers):
        x = mhsa_layer(x, store, f"{prefix}.layer{layer}", heads, key_mask)
    return x


def sinusoidal_table(length: int, dim: int) -> np.ndarray:
    """sin/cos position table: even columns sine, odd columns cosine."""
    table = np.zeros((length, dim))
    pos = np.arange(length, dtype=np.float64)[:, None]
    idx = np.arange(0, dim, 2, dtype=np.float64)
    angle = pos / np.power(10000.0, idx / dim)
    table[:, 0::2] = np.sin(angle)
    table[:, 1::2] = np.cos(angle[:, : table[:, 1::2].shape[1]])
    return table


def init_position_params(store: ParamStore, prefix: str, length: int, dim: int) -> None:
    """A trainable position table, sinusoidal at init."""
    store.add(f"{prefix}.table", sinusoidal_table(length, dim))


def add_position(x: Tensor, store: ParamStore, prefix: str) -> Tensor:
    """Add the first `seq` rows of the position table to x (..., seq, dim)."""
    table = store[f"{prefix}.table"]
    seq = x.shape[-2]
    if seq > table.shape[0]:
        raise ValueError(f"sequence length {seq} exceeds position table {table.shape[0]}")
    return x + table[:seq]
