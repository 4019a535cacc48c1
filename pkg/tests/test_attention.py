"""Attention layers against straight-line numpy recomputation."""

import numpy as np
import pytest

from videoqa.attention import (add_position, attention_weights,
                               init_mhsa_params, init_position_params,
                               mhsa_layer, mhsa_stack, self_attention,
                               sinusoidal_table)
from videoqa.params import ParamStore
from videoqa.tensor import Tensor

rng = np.random.default_rng(17)


def numpy_attention(xq, xk, xv, mask=None):
    logits = xk @ np.swapaxes(xq, -1, -2) / np.sqrt(xq.shape[-1])
    if mask is not None:
        logits = logits + mask
    e = np.exp(logits - logits.max(axis=-1, keepdims=True))
    return (e / e.sum(axis=-1, keepdims=True)) @ xv


def test_self_attention_matches_numpy():
    xq = rng.normal(size=(2, 5, 4))
    xk = rng.normal(size=(2, 5, 4))
    xv = rng.normal(size=(2, 5, 4))
    got = self_attention(Tensor(xq), Tensor(xk), Tensor(xv))
    assert np.allclose(got.data, numpy_attention(xq, xk, xv), atol=1e-12)


def test_key_mask_excludes_positions():
    x = rng.normal(size=(1, 4, 4))
    mask = np.zeros((1, 1, 4))
    mask[..., 2] = -1e9
    w = attention_weights(Tensor(x), Tensor(x), key_mask=mask)
    assert np.allclose(w.data[..., 2], 0.0)
    assert np.allclose(w.data.sum(axis=-1), 1.0, atol=1e-9)


def test_weights_stochastic_at_extreme_magnitude():
    x = np.array([[[1e9, -1e9], [-1e9, 1e9], [3.0, 3.0]]])
    w = attention_weights(Tensor(x), Tensor(x))
    assert np.allclose(w.data.sum(axis=-1), 1.0, atol=1e-9)
    assert np.all(w.data >= 0.0)


def test_empty_sequence_rejected():
    with pytest.raises(ValueError):
        self_attention(Tensor(np.zeros((1, 0, 4))), Tensor(np.zeros((1, 0, 4))),
                       Tensor(np.zeros((1, 0, 4))))


def test_token_permutation_equivariance():
    x = rng.normal(size=(6, 4))
    perm = np.array([3, 0, 5, 1, 4, 2])
    out = self_attention(Tensor(x), Tensor(x), Tensor(x)).data
    out_p = self_attention(Tensor(x[perm]), Tensor(x[perm]), Tensor(x[perm])).data
    assert np.allclose(out[perm], out_p, atol=1e-12)


def mhsa_layer_numpy(x, store, prefix, heads):
    outs = []
    for h in range(heads):
        hp = f"{prefix}.head{h}"
        q = x @ store[f"{hp}.q.w"].data + store[f"{hp}.q.b"].data
        k = x @ store[f"{hp}.k.w"].data + store[f"{hp}.k.b"].data
        v = x @ store[f"{hp}.v.w"].data + store[f"{hp}.v.b"].data
        outs.append(numpy_attention(q, k, v))
    y = np.concatenate(outs, axis=-1) @ store[f"{prefix}.out.w"].data \
        + store[f"{prefix}.out.b"].data
    z = y + x
    mu = z.mean(axis=-1, keepdims=True)
    var = ((z - mu) ** 2).mean(axis=-1, keepdims=True)
    zh = (z - mu) / np.sqrt(var + 1e-5)
    return zh * store[f"{prefix}.ln.gain"].data + store[f"{prefix}.ln.bias"].data


def test_mhsa_layer_matches_numpy():
    store = ParamStore()
    init_mhsa_params(store, np.random.default_rng(3), "m", dim=8, heads=2, layers=2)
    x = rng.normal(size=(3, 5, 8))
    got = mhsa_stack(Tensor(x), store, "m", heads=2, layers=2)
    expect = mhsa_layer_numpy(x, store, "m.layer0", 2)
    expect = mhsa_layer_numpy(expect, store, "m.layer1", 2)
    assert np.allclose(got.data, expect, atol=1e-12)


def test_head_count_must_divide_dim():
    store = ParamStore()
    with pytest.raises(ValueError):
        init_mhsa_params(store, rng, "m", dim=10, heads=3, layers=1)
    init_mhsa_params(store, np.random.default_rng(1), "m", dim=8, heads=2, layers=1)
    with pytest.raises(ValueError):
        mhsa_layer(Tensor(np.zeros((2, 3, 9))), store, "m.layer0", heads=2)


def test_sinusoidal_table_formula():
    table = sinusoidal_table(10, 6)
    assert np.array_equal(table[0], np.array([0, 1, 0, 1, 0, 1], dtype=float))
    assert np.isclose(table[3, 0], np.sin(3.0))
    assert np.isclose(table[3, 1], np.cos(3.0))
    assert np.isclose(table[3, 2], np.sin(3.0 / 10000.0 ** (2 / 6)))
    # odd dim: one more sine column than cosine
    odd = sinusoidal_table(4, 5)
    assert odd.shape == (4, 5)
    assert np.isclose(odd[1, 4], np.sin(1.0 / 10000.0 ** (4 / 5)))


def test_add_position_slices_table():
    store = ParamStore()
    init_position_params(store, "pos", length=8, dim=6)
    x = rng.normal(size=(2, 5, 6))
    out = add_position(Tensor(x), store, "pos")
    assert np.allclose(out.data, x + sinusoidal_table(8, 6)[:5])
    with pytest.raises(ValueError):
        add_position(Tensor(np.zeros((1, 9, 6))), store, "pos")
