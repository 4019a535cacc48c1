"""Synthetic video QA corpus generator.

Videos are built from class-prototype region features (a fixed unit vector
per class word, derived from a hash of the word, so prototypes agree across
files and runs) plus per-frame noise, and box layouts on a coarse grid.
Three task families:

  attribute    "what is the big object": one object is much larger than the
               rest in every frame; single-frame decidable.
  transition   "which way does the <x> move": the named actor crosses the
               screen while a second actor moves a different way, so the
               answer requires binding motion to the right object.
  order        "what is big at the start and small at the end": two actors
               are present in every frame, one prominent (large) in the
               first half of the video and the other in the second half;
               filler objects flip sizes at random each clip (actor-like
               schedules are redrawn). Distractor candidates come from the
               scene, so presence never identifies the answer: the gold
               word is whichever object follows the big-then-small
               schedule, and reversing the schedule flips it.

Rows carry the detector-style schema: per-frame region features, boxes,
confidences, a frame feature, and either question/candidates/answer or a
description (pretraining).
"""

from __future__ import annotations

import hashlib
import json
import math

import numpy as np

from .config import RunConfig

CLASS_WORDS = (
    "dog", "cat", "car", "bus", "ball", "bird", "cup", "book", "fish", "hat",
    "box", "star", "tree", "lamp", "shoe", "ring", "kite", "drum", "leaf", "bell",
)
DIRECTIONS = ("left", "right", "up", "down")
FEATURE_NOISE = 0.03
FRAME_NOISE = 0.05
JITTER = 0.01


def prototype(word: str, dim: int) -> np.ndarray:
    """Deterministic unit feature vector for a class word."""
    seed = int.from_bytes(hashlib.md5(word.encode("utf-8")).digest()[:8], "little")
    v = np.random.default_rng(seed).standard_normal(dim)
    return v / np.linalg.norm(v)


def _grid_homes(n: int, rng: np.random.Generator) -> tuple[np.ndarray, float]:
    """n well-separated box centers and the grid cell size."""
    g = math.ceil(math.sqrt(n))
    cells = [(c, r) for r in range(g) for c in range(g)]
    picks = rng.permutation(len(cells))[:n]
    centers = np.array(
        [((cells[i][0] + 0.5) / g, (cells[i][1] + 0.5) / g) for i in picks]
    )
    return centers, 1.0 / g


def _box(center: np.ndarray, side: float, rng: np.random.Generator) -> list[float]:
    x1 = float(np.clip(center[0] - side / 2 + rng.uniform(-JITTER, JITTER),
                       0.0, 1.0 - side - 1e-6))
    y1 = float(np.clip(center[1] - side / 2 + rng.uniform(-JITTER, JITTER),
                       0.0, 1.0 - side - 1e-6))
    return [x1, y1, x1 + side, y1 + side]


def _frames(classes: list[str], centers_t: np.ndarray, sides_t: np.ndarray,
            cfg: RunConfig, rng: np.random.Generator) -> list[dict]:
    """Assemble per-frame region dicts from per-frame centers/sides arrays."""
    protos = np.stack([prototype(c, cfg.d_r) for c in classes])
    scene = protos.mean(axis=0)
    scene = scene / np.linalg.norm(scene)
    if cfg.d_i <= cfg.d_r:
        scene_feat = scene[: cfg.d_i]
    else:
        scene_feat = np.concatenate([scene, np.zeros(cfg.d_i - cfg.d_r)])
    frames = []
    for t in range(cfg.l_v):
        regions = []
        for i in range(len(classes)):
            feat = protos[i] + FEATURE_NOISE * rng.standard_normal(cfg.d_r)
            regions.append({
                "feat": [float(x) for x in feat],
                "box": _box(centers_t[t, i], float(sides_t[t, i]), rng),
                "conf": float(rng.uniform(0.5, 1.0)),
            })
        frame_feat = scene_feat + FRAME_NOISE * rng.standard_normal(cfg.d_i)
        frames.append({
            "t": t,
            "regions": regions,
            "frame_feat": [float(x) for x in frame_feat],
        })
    return frames


def _pick_classes(count: int, rng: np.random.Generator,
                  pool: tuple[str, ...] = CLASS_WORDS) -> list[str]:
    if count > len(pool):
        raise ValueError(f"scene wants {count} classes but the pool has {len(pool)}")
    idx = rng.permutation(len(pool))[:count]
    return [pool[i] for i in idx]


def _candidates(gold_word: str, present: list[str], cfg: RunConfig,
                rng: np.random.Generator,
                extra_pool: tuple[str, ...] = CLASS_WORDS) -> tuple[list[str], int]:
    """Gold word plus absent-class distractors, in shuffled order."""
    absent = [w for w in extra_pool if w not in present]
    if len(absent) < cfg.num_candidates - 1:
        raise ValueError(
            f"need {cfg.num_candidates - 1} distractors but only "
            f"{len(absent)} class words are absent from the scene")
    picks = rng.permutation(len(absent))[: cfg.num_candidates - 1]
    cands = [gold_word] + [absent[i] for i in picks]
    order = rng.permutation(len(cands))
    shuffled = [cands[i] for i in order]
    return shuffled, shuffled.index(gold_word)


def gen_attribute(cfg: RunConfig, rng: np.random.Generator) -> dict:
    classes = _pick_classes(cfg.n, rng)
    centers, cell = _grid_homes(cfg.n, rng)
    main = int(rng.integers(cfg.n))
    sides = np.full((cfg.l_v, cfg.n), 0.35 * cell)
    sides[:, main] = 0.8 * cell
    centers_t = np.broadcast_to(centers, (cfg.l_v,) + centers.shape)
    frames = _frames(classes, centers_t, sides, cfg, rng)
    cands, gold = _candidates(classes[main], classes, cfg, rng)
    return {
        "frames": frames,
        "question": "what is the big object in the video",
        "candidates": cands,
        "answer": gold,
        "description": f"the big object in the video is a {classes[main]}",
    }


def gen_transition(cfg: RunConfig, rng: np.random.Generator) -> dict:
    if cfg.n < 2:
        raise ValueError("transition videos need at least two objects")
    classes = _pick_classes(cfg.n, rng)
    centers, cell = _grid_homes(cfg.n, rng)
    side = 0.5 * cell
    dir_t, dir_c = rng.permutation(len(DIRECTIONS))[:2]
    centers_t = np.broadcast_to(centers, (cfg.l_v,) + centers.shape).copy()
    lo, hi = side / 2 + 0.01, 1.0 - side / 2 - 0.01
    for obj, d in ((0, DIRECTIONS[dir_t]), (1, DIRECTIONS[dir_c])):
        path = np.linspace(lo, hi, cfg.l_v)
        if d in ("left", "up"):
            path = path[::-1]
        axis = 0 if d in ("left", "right") else 1
        centers_t[:, obj, axis] = path
    sides = np.full((cfg.l_v, cfg.n), side)
    frames = _frames(classes, centers_t, sides, cfg, rng)
    gold_word = DIRECTIONS[dir_t]
    cands = list(DIRECTIONS) + ["still"]
    if cfg.num_candidates != len(cands):
        # pad with absent class words or trim, keeping the gold
        cands = cands[: max(cfg.num_candidates, 2)]
        while len(cands) < cfg.num_candidates:
            extra = [w for w in CLASS_WORDS if w not in classes][len(cands)]
            cands.append(extra)
        if gold_word not in cands:
            cands[0] = gold_word
    order = rng.permutation(len(cands))
    cands = [cands[i] for i in order]
    return {
        "frames": frames,
        "question": f"which way does the {classes[0]} move",
        "candidates": cands,
        "answer": cands.index(gold_word),
        "description": (
            f"the {classes[0]} moves {DIRECTIONS[dir_t]} while the "
            f"{classes[1]} moves {DIRECTIONS[dir_c]}"
        ),
    }


def gen_order(cfg: RunConfig, rng: np.random.Generator,
              reverse: bool | None = None) -> dict:
    """Two actors swap prominence at the video midpoint.

    With reverse None the orientation is drawn from rng; forcing it (the
    generator self-check) flips the gold answer while leaving the candidate
    strings and layout logic untouched.
    """
    if cfg.n < 2:
        raise ValueError("order videos need at least two objects")
    if cfg.k < 2:
        raise ValueError("order videos need at least two clips")
    # a compact class pool keeps the word-to-appearance dictionary learnable
    # from a few hundred clips, and a FIXED actor pair keeps the schedule
    # readout stationary across scenes: every circuit the task needs
    # (find the actors, read who is big early, name the winner) reuses the
    # same two prototypes in every video, so fitting the training set cannot
    # fall back on per-scene appearance keys. Which of the two is the gold
    # answer still depends only on the temporal size schedule.
    pool = CLASS_WORDS[: max(cfg.n, 6)]
    classes = list(pool[:2]) + _pick_classes(cfg.n - 2, rng, pool[2:])
    centers, cell = _grid_homes(cfg.n, rng)
    big, small = 0.85 * cell, 0.2 * cell
    if reverse is None:
        reverse = bool(rng.random() < 0.5)
    first, second = (1, 0) if reverse else (0, 1)
    half_clips = cfg.k // 2
    half = half_clips * cfg.l_c
    sides = np.full((cfg.l_v, cfg.n), small)
    sides[:half, first] = big
    sides[half:, second] = big
    # fillers flip prominence independently each clip, so a single clip's
    # appearance says nothing about which object is an actor; schedules that
    # happen to reproduce an actor's half-split are redrawn or the gold
    # answer would be ambiguous
    first_pattern = tuple(c < half_clips for c in range(cfg.k))
    second_pattern = tuple(not b for b in first_pattern)
    for obj in range(2, cfg.n):
        while True:
            bits = tuple(bool(rng.random() < 0.5) for _ in range(cfg.k))
            if bits not in (first_pattern, second_pattern):
                break
        for c, b in enumerate(bits):
            if b:
                sides[c * cfg.l_c:(c + 1) * cfg.l_c, obj] = big
    centers_t = np.broadcast_to(centers, (cfg.l_v,) + centers.shape)
    frames = _frames(classes, centers_t, sides, cfg, rng)
    gold_word = classes[first]
    # both actors always sit in the slate and fillers complete it, so
    # presence never separates candidates; absent class words only pad out
    # scenes too small to fill the count. Building the list in scene order
    # (not gold-first) keeps the strings identical when the schedule is
    # reversed: only the gold index moves.
    rest = [classes[i] for i in rng.permutation(np.arange(2, cfg.n))]
    absent = [w for w in pool if w not in classes]
    rest += [absent[i] for i in rng.permutation(len(absent))]
    if len(rest) < cfg.num_candidates - 2:
        raise ValueError(
            f"need {cfg.num_candidates - 2} distractors beyond the actors "
            f"but only {len(rest)} words are available")
    cands = [classes[0], classes[1]] + rest[: cfg.num_candidates - 2]
    order = rng.permutation(len(cands))
    cands = [cands[i] for i in order]
    return {
        "frames": frames,
        "question": "what is big at the start and small at the end",
        "candidates": cands,
        "answer": cands.index(gold_word),
        "description": (
            f"the {classes[first]} is big then small and the "
            f"{classes[second]} is small then big"
        ),
    }


GENERATORS = {
    "attribute": gen_attribute,
    "transition": gen_transition,
    "order": gen_order,
}


def generate_rows(cfg: RunConfig, num: int, families: list[str], seed: int,
                  pretrain: bool = False) -> list[dict]:
    """num rows cycling through the families, fully determined by seed."""
    if num < 0:
        raise ValueError("num must be >= 0")
    if not families:
        raise ValueError("no task families selected")
    for fam in families:
        if fam not in GENERATORS:
            raise ValueError(f"unknown task family {fam!r}; choose from {sorted(GENERATORS)}")
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(num):
        family = families[i % len(families)]
        row = GENERATORS[family](cfg, rng)
        row_out = {"id": f"{family}-{i:05d}", "frames": row["frames"]}
        if pretrain:
            row_out["description"] = row["description"]
        else:
            row_out["question"] = row["question"]
            row_out["candidates"] = row["candidates"]
            row_out["answer"] = row["answer"]
        rows.append(row_out)
    return rows


def generate_order_pairs(cfg: RunConfig, num_pairs: int, seed: int) -> list[dict]:
    """Order rows emitted as twins: each scene appears with both schedules.

    Twin rows replay the same random draws (layout, features, confidences),
    so the pair differs only in which actor is big in which half. A model
    cannot fit both twins by memorizing appearance; separating them requires
    reading the size schedule itself.
    """
    master = np.random.default_rng(seed)
    rows = []
    for i in range(num_pairs):
        scene_seed = int(master.integers(2 ** 63))
        for j, rev in enumerate((False, True)):
            row = gen_order(cfg, np.random.default_rng(scene_seed), reverse=rev)
            rows.append({"id": f"order-{2 * i + j:05d}",
                         "frames": row["frames"],
                         "question": row["question"],
                         "candidates": row["candidates"],
                         "answer": row["answer"]})
    return rows


def write_rows(path: str, rows: list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")


def generate_files(cfg: RunConfig, out_dir: str) -> list[str]:
    """Write train/val/pretrain JSONL files per the config counts.

    Each file lands at the config's matching data path, so a subsequent
    train/eval/pretrain run on the same config reads exactly what was
    generated; paths left empty in the config fall back to out_dir/<name>.
    """
    import os

    written = []
    fams = cfg.family_list()
    jobs = [(cfg.train_data or os.path.join(out_dir, "train.jsonl"),
             cfg.num_train, False, cfg.seed),
            (cfg.eval_data or os.path.join(out_dir, "val.jsonl"),
             cfg.num_val, False, cfg.seed + 1),
            (cfg.pretrain_data or os.path.join(out_dir, "pretrain.jsonl"),
             cfg.num_pretrain, True, cfg.seed + 2)]
    for path, num, pre, seed in jobs:
        if num <= 0:
            continue
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
        write_rows(path, generate_rows(cfg, num, fams, seed, pretrain=pre))
        written.append(path)
    return written
