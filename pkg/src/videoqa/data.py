"""Dataset ingestion: JSONL rows to aligned, model-ready samples.

Rows follow the detector-output schema (see synth.py). Loading validates
the schema eagerly, naming the offending line and field, and precomputes
the parameter-free track alignment so training touches only dense arrays.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .video_graph import Box, FrameDetections, align_clip, top_n_regions


@dataclass
class Sample:
    sid: str
    family: str
    feats: np.ndarray          # (k, l_c, n, d_r) aligned region features
    boxes: np.ndarray          # (k, l_c, n, 5) aligned (x1,y1,x2,y2,area)
    frame_feats: np.ndarray    # (l_v, d_i)
    question: str = ""
    candidates: list[str] | None = None
    answer: int | None = None
    description: str | None = None


def _fail(path: str, lineno: int, field: str, msg: str):
    raise ValueError(f"{path}:{lineno}: field {field!r}: {msg}")


def _num_list(row, key, length, path, lineno):
    val = row.get(key)
    if not isinstance(val, list) or len(val) != length:
        _fail(path, lineno, key, f"expected a list of {length} numbers")
    try:
        return np.array(val, dtype=np.float64)
    except (TypeError, ValueError):
        _fail(path, lineno, key, "non-numeric entry")


def load_rows(path: str) -> list[dict]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rows.append((lineno, json.loads(line)))
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON: {exc}") from None
    return rows


def row_to_sample(row: dict, cfg: RunConfig, path: str, lineno: int) -> Sample:
    if not isinstance(row.get("id"), str):
        _fail(path, lineno, "id", "missing or not a string")
    sid = row["id"]
    frames = row.get("frames")
    if not isinstance(frames, list) or len(frames) != cfg.l_v:
        _fail(path, lineno, "frames", f"expected a list of {cfg.l_v} frames")

    dets: list[FrameDetections] = []
    frame_feats = np.empty((cfg.l_v, cfg.d_i))
    for t, frame in enumerate(frames):
        if not isinstance(frame, dict):
            _fail(path, lineno, "frames", f"frame {t} is not an object")
        regions = frame.get("regions")
        if not isinstance(regions, list) or not regions:
            _fail(path, lineno, "regions", f"frame {t}: need a non-empty list")
        feats, boxes, confs = [], [], []
        for j, region in enumerate(regions):
            feats.append(_num_list(region, "feat", cfg.d_r, path, lineno))
            raw_box = _num_list(region, "box", 4, path, lineno)
            try:
                boxes.append(Box(*[float(v) for v in raw_box]))
            except ValueError as exc:
                _fail(path, lineno, "box", f"frame {t} region {j}: {exc}")
            conf = region.get("conf")
            if not isinstance(conf, (int, float)):
                _fail(path, lineno, "conf", f"frame {t} region {j}: not a number")
            confs.append(float(conf))
        frame_feats[t] = _num_list(frame, "frame_feat", cfg.d_i, path, lineno)
        dets.append(top_n_regions(np.stack(feats), boxes, np.array(confs),
                                  cfg.n, frame_index=t))

    aligned = [align_clip(dets[c * cfg.l_c:(c + 1) * cfg.l_c], c, cfg.lam)
               for c in range(cfg.k)]
    feats = np.stack([a.feats for a in aligned])
    box_vecs = np.stack([a.box_vecs for a in aligned])

    sample = Sample(sid=sid, family=sid.rsplit("-", 1)[0],
                    feats=feats, boxes=box_vecs, frame_feats=frame_feats)
    if "description" in row:
        if not isinstance(row["description"], str) or not row["description"].strip():
            _fail(path, lineno, "description", "must be a non-empty string")
        sample.description = row["description"]
        return sample

    if not isinstance(row.get("question"), str):
        _fail(path, lineno, "question", "missing or not a string")
    cands = row.get("candidates")
    if (not isinstance(cands, list) or len(cands) < 2
            or not all(isinstance(c, str) for c in cands)):
        _fail(path, lineno, "candidates", "expected a list of at least 2 strings")
    answer = row.get("answer")
    if not isinstance(answer, int) or isinstance(answer, bool) \
            or not 0 <= answer < len(cands):
        _fail(path, lineno, "answer", f"expected an int in [0, {len(cands)})")
    sample.question = row["question"]
    sample.candidates = list(cands)
    sample.answer = answer
    return sample


def load_dataset(path: str, cfg: RunConfig) -> list[Sample]:
    samples = [row_to_sample(row, cfg, path, lineno) for lineno, row in load_rows(path)]
    if not samples:
        raise ValueError(f"{path}: empty dataset")
    return samples


def corpus_texts(samples: list[Sample]) -> list[str]:
    """All text the vocabulary must cover, in deterministic order."""
    texts = []
    for s in samples:
        if s.description is not None:
            texts.append(s.description)
        if s.question:
            texts.append(s.question)
        if s.candidates:
            texts.extend(s.candidates)
    return texts


def epoch_batches(num: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Seeded shuffle, then contiguous batches."""
    order = rng.permutation(num)
    return [order[i:i + batch_size] for i in range(0, num, batch_size)]
