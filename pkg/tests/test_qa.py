"""Cross-modal interaction, global reasoning, scoring, and the QA loss."""

import numpy as np
import pytest

from videoqa.attention import sinusoidal_table
from videoqa.params import ParamStore
from videoqa.qa import (batch_qa_loss, cross_modal_interact, global_transform,
                        init_global_params, joint_score, predict, qa_loss,
                        score_answers)
from videoqa.tensor import Tensor

rng = np.random.default_rng(31)


def test_cross_modal_closed_form():
    x_v = rng.normal(size=(2, 3, 4))
    x_q = rng.normal(size=(2, 5, 4))
    mask = np.ones((2, 5), dtype=bool)
    out = cross_modal_interact(Tensor(x_v), Tensor(x_q), mask)
    logits = x_v @ np.swapaxes(x_q, -1, -2)
    e = np.exp(logits - logits.max(axis=-1, keepdims=True))
    beta = e / e.sum(axis=-1, keepdims=True)
    assert np.allclose(out.data, x_v + beta @ x_q, atol=1e-12)


def test_cross_modal_ignores_pad_rows():
    """Appending PAD tokens with arbitrary junk features changes nothing."""
    x_v = rng.normal(size=(1, 3, 4))
    x_q = rng.normal(size=(1, 4, 4))
    mask = np.ones((1, 4), dtype=bool)
    base = cross_modal_interact(Tensor(x_v), Tensor(x_q), mask)
    junk = np.concatenate([x_q, 50.0 * np.ones((1, 2, 4))], axis=1)
    mask_p = np.concatenate([mask, np.zeros((1, 2), dtype=bool)], axis=1)
    padded = cross_modal_interact(Tensor(x_v), Tensor(junk), mask_p)
    assert np.allclose(base.data, padded.data, atol=1e-9)
    with pytest.raises(ValueError):
        cross_modal_interact(Tensor(x_v), Tensor(junk),
                             np.zeros((1, 6), dtype=bool))


def test_global_transform_uses_positions():
    store = ParamStore()
    init_global_params(store, np.random.default_rng(1), "g", d=8, heads=2,
                       layers=1, max_clips=4)
    clips = rng.normal(size=(2, 4, 8))
    out = global_transform(Tensor(clips), store, "g", 2, 1)
    assert out.data.shape == (2, 8)
    # clip order matters precisely because of the position table
    rev = global_transform(Tensor(clips[:, ::-1].copy()), store, "g", 2, 1)
    assert not np.allclose(out.data, rev.data, atol=1e-6)
    # zeroing the table restores permutation invariance of the mean pool
    store["g.pos.table"].data[:] = 0.0
    out0 = global_transform(Tensor(clips), store, "g", 2, 1)
    rev0 = global_transform(Tensor(clips[:, ::-1].copy()), store, "g", 2, 1)
    assert np.allclose(out0.data, rev0.data, atol=1e-12)
    with pytest.raises(ValueError):
        global_transform(Tensor(np.zeros((2, 0, 8))), store, "g", 2, 1)


def test_global_position_table_is_sinusoidal_at_init():
    store = ParamStore()
    init_global_params(store, np.random.default_rng(1), "g", d=8, heads=2,
                       layers=1, max_clips=6)
    assert np.array_equal(store["g.pos.table"].data, sinusoidal_table(6, 8))


def test_score_answers_both_layouts():
    f_a = rng.normal(size=(4, 6))
    shared = rng.normal(size=6)
    got = score_answers(Tensor(shared), Tensor(f_a))
    assert np.allclose(got.data, f_a @ shared)
    per_cand = rng.normal(size=(4, 6))
    got2 = score_answers(Tensor(per_cand), Tensor(f_a))
    assert np.allclose(got2.data, (per_cand * f_a).sum(axis=1))
    with pytest.raises(ValueError):
        score_answers(Tensor(shared), Tensor(np.zeros((0, 6))))


def test_joint_score_multiplies_similarities():
    f_a = rng.normal(size=(3, 4))
    f_qv = rng.normal(size=4)
    f_q = rng.normal(size=4)
    got = joint_score(Tensor(f_qv), Tensor(f_q), Tensor(f_a))
    assert np.allclose(got.data, (f_a @ f_qv) * (f_a @ f_q))


def test_predict_tie_rule():
    assert predict(np.array([1.0, 3.0, 3.0, 0.0])) == 1
    assert predict(np.array([-2.0, -2.0])) == 0


def test_qa_loss_analytic_values():
    # uniform scores: loss is exactly ln |A| for any constant vector
    for a in (2, 5, 7):
        loss = qa_loss(Tensor(np.full(a, 3.7)), gold=a - 1)
        assert abs(loss.item() - np.log(a)) < 1e-9
    # hand case: scores [2, 0], gold 0 -> ln(1 + e^-2)
    loss = qa_loss(Tensor(np.array([2.0, 0.0])), gold=0)
    assert np.isclose(loss.item(), np.log(1 + np.exp(-2.0)), atol=1e-12)
    with pytest.raises(ValueError):
        qa_loss(Tensor(np.zeros(3)), gold=3)


def test_qa_loss_gradient_is_softmax_minus_onehot():
    scores = Tensor(np.array([1.0, -2.0, 0.5]), requires_grad=True)
    qa_loss(scores, gold=2).backward()
    e = np.exp(scores.data - scores.data.max())
    p = e / e.sum()
    p[2] -= 1.0
    assert np.allclose(scores.grad, p, atol=1e-12)


def test_batch_qa_loss_means_per_sample_losses():
    s = rng.normal(size=(3, 4))
    gold = np.array([0, 2, 3])
    got = batch_qa_loss(Tensor(s), gold)
    expect = np.mean([qa_loss(Tensor(s[i]), int(gold[i])).item() for i in range(3)])
    assert np.isclose(got.item(), expect, atol=1e-12)
    assert abs(batch_qa_loss(Tensor(np.zeros((2, 5))), np.array([1, 4])).item()
               - np.log(5)) < 1e-9
    with pytest.raises(ValueError):
        batch_qa_loss(Tensor(s), np.array([0, 4, 1]))


def test_qa_loss_extreme_scores_stay_finite():
    loss = qa_loss(Tensor(np.array([1e9, 0.0, -1e9])), gold=1)
    assert np.isclose(loss.item(), 1e9)
    loss0 = qa_loss(Tensor(np.array([1e9, 0.0, -1e9])), gold=0)
    assert loss0.item() == 0.0
