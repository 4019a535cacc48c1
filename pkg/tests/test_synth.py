"""Synthetic corpus generator: schema, task semantics, determinism."""

import json

import numpy as np
import pytest

from videoqa.config import RunConfig
from videoqa.synth import (CLASS_WORDS, DIRECTIONS, gen_attribute, gen_order,
                           gen_transition, generate_files, generate_order_pairs,
                           generate_rows, prototype, write_rows)


def gen_cfg(**kw):
    base = dict(l_v=8, k=4, l_c=2, n=6, d_r=32, d_i=16, num_candidates=5)
    base.update(kw)
    return RunConfig(**base)


def sides_per_object(row, cfg):
    """(l_v, n) box side lengths; generator emits regions in class order."""
    out = np.empty((cfg.l_v, cfg.n))
    for t, frame in enumerate(row["frames"]):
        for j, region in enumerate(frame["regions"]):
            out[t, j] = region["box"][2] - region["box"][0]
    return out


def match_word(feat, dim):
    """Class word whose prototype is closest to a (noisy) region feature."""
    v = np.asarray(feat)
    sims = {w: float(prototype(w, dim) @ v) for w in CLASS_WORDS}
    return max(sims, key=sims.get)


def test_prototypes_unit_deterministic_distinct():
    a = prototype("dog", 32)
    assert np.isclose(np.linalg.norm(a), 1.0)
    assert np.array_equal(a, prototype("dog", 32))
    assert abs(a @ prototype("cat", 32)) < 0.7


def test_row_schema():
    cfg = gen_cfg()
    row = gen_attribute(cfg, np.random.default_rng(0))
    assert len(row["frames"]) == cfg.l_v
    for frame in row["frames"]:
        assert len(frame["regions"]) == cfg.n
        for region in frame["regions"]:
            assert len(region["feat"]) == cfg.d_r
            x1, y1, x2, y2 = region["box"]
            assert 0.0 <= x1 < x2 <= 1.0 and 0.0 <= y1 < y2 <= 1.0
            assert 0.5 <= region["conf"] <= 1.0
        assert len(frame["frame_feat"]) == cfg.d_i
    assert len(row["candidates"]) == cfg.num_candidates
    assert row["candidates"][row["answer"]] in CLASS_WORDS
    assert len(set(row["candidates"])) == cfg.num_candidates


def test_attribute_gold_is_biggest_every_frame():
    cfg = gen_cfg()
    for seed in range(5):
        row = gen_attribute(cfg, np.random.default_rng(seed))
        sides = sides_per_object(row, cfg)
        big = int(np.argmax(sides[0]))
        assert (np.argmax(sides, axis=1) == big).all()
        gold = row["candidates"][row["answer"]]
        assert match_word(row["frames"][0]["regions"][big]["feat"], cfg.d_r) == gold
        assert gold in row["description"]


def test_transition_actor_moves_monotonically():
    cfg = gen_cfg()
    row = gen_transition(cfg, np.random.default_rng(1))
    gold = row["candidates"][row["answer"]]
    assert gold in DIRECTIONS
    xs = np.array([f["regions"][0]["box"][0] for f in row["frames"]])
    ys = np.array([f["regions"][0]["box"][1] for f in row["frames"]])
    moving = xs if gold in ("left", "right") else ys
    steps = np.diff(moving)
    assert (steps > 0).all() or (steps < 0).all()


def test_order_actors_swap_at_midpoint():
    cfg = gen_cfg()
    for seed in range(5):
        row = gen_order(cfg, np.random.default_rng(seed))
        sides = sides_per_object(row, cfg)
        big = sides > sides.min() + 0.5 * (sides.max() - sides.min())
        half = cfg.l_v // 2
        gold = row["candidates"][row["answer"]]
        w0 = match_word(row["frames"][0]["regions"][0]["feat"], cfg.d_r)
        w1 = match_word(row["frames"][0]["regions"][1]["feat"], cfg.d_r)
        # one actor is big exactly in the first half, the other in the second
        assert big[:half, 0].all() != big[half:, 0].all()
        assert big[:half, 1].all() != big[half:, 1].all()
        assert gold == (w0 if big[:half, 0].all() else w1)


def test_order_fillers_never_mimic_actor_schedule():
    cfg = gen_cfg(n=8)
    for seed in range(20):
        row = gen_order(cfg, np.random.default_rng(seed))
        sides = sides_per_object(row, cfg)
        big = sides > sides.min() + 0.5 * (sides.max() - sides.min())
        clip_big = big.reshape(cfg.k, cfg.l_c, cfg.n).all(axis=1)
        first = tuple(clip_big[:, 0])
        second = tuple(clip_big[:, 1])
        assert first == tuple(not b for b in second)
        for obj in range(2, cfg.n):
            assert tuple(clip_big[:, obj]) not in (first, second)


def test_order_candidates_come_from_scene():
    cfg = gen_cfg()
    row = gen_order(cfg, np.random.default_rng(3))
    scene_feats = [r["feat"] for r in row["frames"][0]["regions"]]
    scene = {match_word(f, cfg.d_r) for f in scene_feats}
    assert set(row["candidates"]) <= scene


def test_order_reverse_flips_gold_only():
    cfg = gen_cfg()
    for seed in range(5):
        fwd = gen_order(cfg, np.random.default_rng(seed), reverse=False)
        rev = gen_order(cfg, np.random.default_rng(seed), reverse=True)
        assert fwd["candidates"] == rev["candidates"]
        assert fwd["question"] == rev["question"]
        assert fwd["answer"] != rev["answer"]
        gold_f = fwd["candidates"][fwd["answer"]]
        gold_r = rev["candidates"][rev["answer"]]
        assert {gold_f, gold_r} <= set(fwd["candidates"])
        assert gold_f != gold_r


def test_order_needs_two_objects_and_clips():
    with pytest.raises(ValueError, match="two objects"):
        gen_order(RunConfig(l_v=4, k=2, l_c=2, n=1), np.random.default_rng(0))
    with pytest.raises(ValueError, match="two clips"):
        gen_order(RunConfig(l_v=2, k=1, l_c=2, n=4), np.random.default_rng(0))


def test_order_pairs_differ_only_in_actor_boxes():
    cfg = gen_cfg()
    rows = generate_order_pairs(cfg, 3, seed=4)
    assert [r["id"] for r in rows] == [f"order-{i:05d}" for i in range(6)]
    for a, b in zip(rows[0::2], rows[1::2]):
        assert a["candidates"] == b["candidates"]
        assert a["question"] == b["question"]
        assert a["answer"] != b["answer"]
        diffs = 0
        for fa, fb in zip(a["frames"], b["frames"]):
            assert fa["frame_feat"] == fb["frame_feat"]
            for ra, rb in zip(fa["regions"], fb["regions"]):
                assert ra["feat"] == rb["feat"]
                assert ra["conf"] == rb["conf"]
                diffs += ra["box"] != rb["box"]
        assert diffs > 0  # schedules move the actor boxes
    again = generate_order_pairs(cfg, 3, seed=4)
    assert json.dumps(rows) == json.dumps(again)


def test_generate_rows_ids_cycle_families_and_are_deterministic():
    cfg = gen_cfg()
    rows = generate_rows(cfg, 6, ["attribute", "order"], seed=7)
    assert [r["id"] for r in rows] == [
        "attribute-00000", "order-00001", "attribute-00002",
        "order-00003", "attribute-00004", "order-00005"]
    again = generate_rows(cfg, 6, ["attribute", "order"], seed=7)
    assert json.dumps(rows) == json.dumps(again)
    other = generate_rows(cfg, 6, ["attribute", "order"], seed=8)
    assert json.dumps(rows) != json.dumps(other)


def test_generate_rows_pretrain_swaps_qa_for_description():
    cfg = gen_cfg()
    row = generate_rows(cfg, 1, ["order"], seed=0, pretrain=True)[0]
    assert "description" in row and "question" not in row and "answer" not in row
    qa = generate_rows(cfg, 1, ["order"], seed=0)[0]
    assert "description" not in qa and "question" in qa


def test_generate_rows_arg_errors():
    cfg = gen_cfg()
    with pytest.raises(ValueError, match="unknown task family"):
        generate_rows(cfg, 2, ["motion"], seed=0)
    with pytest.raises(ValueError, match="no task families"):
        generate_rows(cfg, 2, [], seed=0)
    with pytest.raises(ValueError, match=">= 0"):
        generate_rows(cfg, -1, ["order"], seed=0)


def test_generate_files_counts_and_loadability(tmp_path):
    cfg = gen_cfg(num_train=4, num_val=2, num_pretrain=3,
                  families="attribute,order", seed=5)
    paths = generate_files(cfg, str(tmp_path))
    assert [p.rsplit("/", 1)[1] for p in paths] == [
        "train.jsonl", "val.jsonl", "pretrain.jsonl"]
    counts = {}
    for p in paths:
        with open(p) as fh:
            counts[p.rsplit("/", 1)[1]] = len(fh.readlines())
    assert counts == {"train.jsonl": 4, "val.jsonl": 2, "pretrain.jsonl": 3}
    first_train = json.loads(open(paths[0]).readline())
    first_val = json.loads(open(paths[1]).readline())
    assert first_train["frames"] != first_val["frames"]


def test_write_rows_jsonl(tmp_path):
    p = tmp_path / "x.jsonl"
    write_rows(str(p), [{"a": 1}, {"b": [1.5]}])
    lines = p.read_text().splitlines()
    assert [json.loads(x) for x in lines] == [{"a": 1}, {"b": [1.5]}]
