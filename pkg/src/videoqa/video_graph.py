"""Object graphs over detected regions.

Detections arrive per frame as (feature, box, confidence) triples. Within a
clip, regions are linked frame-to-frame by a score combining cosine feature
similarity and box IoU, greedily, so that row i of every frame's node matrix
refers to the same tracked object (the anchor object, fixed by the first
frame's detection order). Node features project [appearance; location] into
the model space; relations start as row-normalized pairwise similarities.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .params import ParamStore
from .tensor import Tensor, concat, elu, softmax_rows


@dataclass(frozen=True)
class Box:
    """Axis-aligned box, coordinates normalized to [0, 1] of the frame."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        if not (0.0 <= self.x1 < self.x2 <= 1.0 and 0.0 <= self.y1 < self.y2 <= 1.0):
            raise ValueError(f"invalid box coordinates: {self}")

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    def as_vector(self) -> np.ndarray:
        """(x1, y1, x2, y2, area), the location input to node features."""
        return np.array([self.x1, self.y1, self.x2, self.y2, self.area])


def iou(a: Box, b: Box) -> float:
    """Intersection over union of two boxes; symmetric, in [0, 1]."""
    if a.area <= 0.0 or b.area <= 0.0:
        raise ValueError("IoU of a degenerate (zero-area) box")
    ix = min(a.x2, b.x2) - max(a.x1, b.x1)
    iy = min(a.y2, b.y2) - max(a.y1, b.y1)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def linking_score(f_a: np.ndarray, f_b: np.ndarray, b_a: Box, b_b: Box,
                  lam: float) -> float:
    """cosine(f_a, f_b) + lam * IoU(b_a, b_b); range [-1, 1 + lam]."""
    na = float(np.linalg.norm(f_a))
    nb = float(np.linalg.norm(f_b))
    if na == 0.0 or nb == 0.0:
        raise ValueError("linking score of a zero-norm feature vector")
    cos = float(np.dot(f_a, f_b)) / (na * nb)
    return cos + lam * iou(b_a, b_b)


@dataclass
class FrameDetections:
    """All regions kept for one frame, already top-n filtered."""

    frame_index: int
    feats: np.ndarray          # (n, d_r)
    boxes: list[Box]
    conf: np.ndarray           # (n,)
    padded: bool = False       # True when short frames were filled by duplication


def top_n_regions(feats: np.ndarray, boxes: list[Box], conf: np.ndarray,
                  n: int, frame_index: int = 0) -> FrameDetections:
    """Keep the n most confident regions (ties by input order).

    Frames with fewer than n detections are padded by duplicating the
    lowest-confidence region and flagged.
    """
    if len(boxes) == 0:
        raise ValueError(f"frame {frame_index} has no detections")
    order = sorted(range(len(boxes)), key=lambda i: (-conf[i], i))
    padded = False
    if len(order) >= n:
        keep = order[:n]
    else:
        keep = list(order)
        while len(keep) < n:
            keep.append(order[-1])
        padded = True
    return FrameDetections(
        frame_index=frame_index,
        feats=np.array([feats[i] for i in keep]),
        boxes=[boxes[i] for i in keep],
        conf=np.array([conf[i] for i in keep]),
        padded=padded,
    )


def greedy_assign(scores: np.ndarray) -> np.ndarray:
    """Greedy bijection on an n x n score matrix.

    Repeatedly takes the global maximum, assigns that (row, column) pair,
    and removes both from play. Ties break to the lowest row index, then the
    lowest column index. Returns col_of_row as an int array.
    """
    n = scores.shape[0]
    if scores.shape != (n, n):
        raise ValueError("greedy_assign needs a square score matrix")
    work = scores.copy()
    assign = np.full(n, -1, dtype=np.int64)
    for _ in range(n):
        best = np.max(work)
        # argwhere scans row-major, so [0] is the lexicographically least tie
        r, c = np.argwhere(work == best)[0]
        assign[r] = c
        work[r, :] = -np.inf
        work[:, c] = -np.inf
    return assign


def pair_score_matrix(prev: FrameDetections, nxt: FrameDetections, lam: float) -> np.ndarray:
    n = len(prev.boxes)
    if len(nxt.boxes) != n:
        raise ValueError(
            f"region count mismatch between frames {prev.frame_index} and "
            f"{nxt.frame_index}: {n} vs {len(nxt.boxes)}"
        )
    scores = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            scores[i, j] = linking_score(prev.feats[i], nxt.feats[j],
                                         prev.boxes[i], nxt.boxes[j], lam)
    return scores


def link_tracks(frames: list[FrameDetections], lam: float) -> list[np.ndarray]:
    """Align every frame's regions onto the first frame's anchor slots.

    Consecutive frame pairs are matched by greedy assignment on the linking
    score matrix; the pairwise bijections compose so perms[t][slot] is the
    region index in frame t tracking anchor object `slot`.
    """
    if not frames:
        raise ValueError("link_tracks needs at least one frame")
    n = len(frames[0].boxes)
    perms = [np.arange(n, dtype=np.int64)]
    for t in range(len(frames) - 1):
        scores = pair_score_matrix(frames[t], frames[t + 1], lam)
        col_of_row = greedy_assign(scores)
        perms.append(col_of_row[perms[t]])
    return perms


@dataclass
class AlignedClip:
    """One clip's detections reordered onto anchor slots (raw, param-free)."""

    clip_index: int
    feats: np.ndarray        # (l_c, n, d_r), row i = anchor object i
    box_vecs: np.ndarray     # (l_c, n, 5)
    perms: list[np.ndarray]
    padded: bool = False


def align_clip(frames: list[FrameDetections], clip_index: int, lam: float) -> AlignedClip:
    perms = link_tracks(frames, lam)
    feats = np.stack([f.feats[p] for f, p in zip(frames, perms)])
    box_vecs = np.stack(
        [np.array([f.boxes[i].as_vector() for i in p]) for f, p in zip(frames, perms)]
    )
    return AlignedClip(clip_index=clip_index, feats=feats, box_vecs=box_vecs,
                       perms=perms, padded=any(f.padded for f in frames))


@dataclass
class ClipGraphs:
    """Per-clip graphs: aligned node features and row-stochastic relations."""

    clip_index: int
    nodes: Tensor             # (l_c, n, d)
    relations: Tensor         # (l_c, n, n), rows sum to 1
    perms: list[np.ndarray] = field(default_factory=list)


def init_node_params(store: ParamStore, rng: np.random.Generator, prefix: str,
                     d_r: int, d: int) -> None:
    """Weights for location embedding, node projection, and relation maps."""
    if d % 4 != 0:
        raise ValueError("model dim must be divisible by 4 (location embedding d/4)")
    if d % 2 != 0:
        raise ValueError("model dim must be even (relation maps d/2)")
    d_loc = d // 4
    store.add_linear(rng, f"{prefix}.loc", 5, d_loc)
    store.add_linear(rng, f"{prefix}.node", d_r + d_loc, d)
    # pure transformations: no biases on the relation maps
    store.add_linear(rng, f"{prefix}.rel_k", d, d // 2, bias=False)
    store.add_linear(rng, f"{prefix}.rel_v", d, d // 2, bias=False)


def node_features(feats: Tensor, box_vecs: Tensor, store: ParamStore,
                  prefix: str) -> Tensor:
    """ELU(W [appearance; location] + b) for every region.

    `feats` is (..., d_r), `box_vecs` is (..., 5); broadcasting over leading
    axes lets one call embed a whole video.
    """
    f_loc = box_vecs @ store[f"{prefix}.loc.w"] + store[f"{prefix}.loc.b"]
    combined = concat([feats, f_loc], axis=-1)
    return elu(combined @ store[f"{prefix}.node.w"] + store[f"{prefix}.node.b"])


def init_relations(f_o: Tensor, store: ParamStore, prefix: str) -> Tensor:
    """Row-stochastic pairwise similarities among a frame's nodes.

    Distinct key/value maps keep the matrix asymmetric; no scaling factor is
    applied to the logits.
    """
    keys = f_o @ store[f"{prefix}.rel_k.w"]
    vals = f_o @ store[f"{prefix}.rel_v.w"]
    return softmax_rows(keys @ vals.swap_last2())


def build_clip_graphs(aligned: AlignedClip, store: ParamStore, prefix: str) -> ClipGraphs:
    nodes = node_features(Tensor(aligned.feats), Tensor(aligned.box_vecs), store, prefix)
    relations = init_relations(nodes, store, prefix)
    return ClipGraphs(clip_index=aligned.clip_index, nodes=nodes,
                      relations=relations, perms=aligned.perms)
