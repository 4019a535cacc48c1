"""Clip-level reasoning over object graphs.

Each clip's aligned node features pass through a temporal node transformer
(one sequence per tracked object), relations are recomputed from the
transformed nodes and refined by an edge transformer over flattened
relation matrices, a U-layer graph convolution mixes nodes spatially, and
attention pooling + frame fusion + clip averaging reduce everything to one
feature per clip.

All operations broadcast over leading batch axes; shapes below are written
for a single video (k clips of l_c frames with n objects each).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attention import init_mhsa_params, mhsa_stack
from .params import ParamStore
from .tensor import Tensor, concat, elu, relu, softmax_rows
from .video_graph import ClipGraphs, init_relations


@dataclass(frozen=True)
class AblationFlags:
    """Component switches for the reasoning pipeline.

    no_graph disables the whole graph pipeline (per-frame mean of raw node
    features feeds the fusion stage directly); no_temporal drops both
    temporal transformers; the finer flags drop one each; no_frame_feat
    skips frame-context fusion.
    """

    no_graph: bool = False
    no_temporal: bool = False
    no_node_attn: bool = False
    no_edge_attn: bool = False
    no_frame_feat: bool = False

    FLAG_NAMES = ("no_graph", "no_temporal", "no_node_attn", "no_edge_attn",
                  "no_frame_feat")

    @classmethod
    def from_names(cls, names) -> "AblationFlags":
        """Build from an iterable of flag names or a comma-joined string."""
        if isinstance(names, str):
            names = [m.strip() for m in names.split(",") if m.strip()]
        names = list(names)
        bad = [m for m in names if m not in cls.FLAG_NAMES]
        if bad:
            raise ValueError(f"unknown ablation flag(s) {bad}; valid: {list(cls.FLAG_NAMES)}")
        return cls(**{m: True for m in names})

    @property
    def skip_node_attn(self) -> bool:
        return self.no_temporal or self.no_node_attn

    @property
    def skip_edge_attn(self) -> bool:
        return self.no_temporal or self.no_edge_attn


def init_dgt_params(store: ParamStore, rng: np.random.Generator, prefix: str,
                    d: int, d_i: int, n: int, heads: int, edge_heads: int,
                    layers: int, gcn_layers: int) -> None:
    if gcn_layers < 1:
        raise ValueError("need at least one graph convolution layer")
    init_mhsa_params(store, rng, f"{prefix}.ntrans", d, heads, layers)
    # edge tokens are flattened n x n matrices
    init_mhsa_params(store, rng, f"{prefix}.etrans", n * n, edge_heads, layers)
    for u in range(1, gcn_layers + 1):
        store.add_linear(rng, f"{prefix}.gcn{u}", d, d, bias=False)
    # softmax over nodes makes a bias on the pool logits inert; omit it
    store.add_linear(rng, f"{prefix}.pool", d, 1, bias=False)
    store.add_linear(rng, f"{prefix}.frame_map", d_i, d)
    store.add_linear(rng, f"{prefix}.fuse", 2 * d, d)


def node_transformer(nodes: Tensor, store: ParamStore, prefix: str, heads: int,
                     layers: int) -> Tensor:
    """Self-attention along time for each tracked object independently.

    nodes: (..., l_c, n, d). The object axis becomes a batch axis so each
    object's l_c-step sequence is its own attention instance.
    """
    nd = nodes.data.ndim
    if nd < 3:
        raise ValueError("node_transformer expects (..., l_c, n, d)")
    to_seq = tuple(range(nd - 3)) + (nd - 2, nd - 3, nd - 1)
    per_object = nodes.transpose(to_seq)                    # (..., n, l_c, d)
    out = mhsa_stack(per_object, store, f"{prefix}.ntrans", heads, layers)
    return out.transpose(to_seq)                            # involution


def recompute_relations(nodes: Tensor, store: ParamStore, rel_prefix: str) -> Tensor:
    """Fresh row-stochastic relations from transformed nodes (same maps as
    the initial relations)."""
    return init_relations(nodes, store, rel_prefix)


def edge_transformer(relations: Tensor, store: ParamStore, prefix: str,
                     edge_heads: int, layers: int) -> Tensor:
    """Self-attention along time over flattened relation matrices.

    relations: (..., l_c, n, n); each matrix becomes one n^2-dim token.
    The skip + LayerNorm breaks row normalization, deliberately: downstream
    consumes the output as-is.
    """
    shape = relations.data.shape
    l_c, n = shape[-3], shape[-1]
    flat = relations.reshape(shape[:-3] + (l_c, n * n))
    out = mhsa_stack(flat, store, f"{prefix}.etrans", edge_heads, layers)
    return out.reshape(shape)


def graph_conv(nodes: Tensor, relations: Tensor, store: ParamStore, prefix: str,
               gcn_layers: int) -> Tensor:
    """U rounds of ReLU((R + I) F W), then a skip from the input.

    One weight set serves every frame. `relations` need not be normalized.
    """
    f = nodes
    for u in range(1, gcn_layers + 1):
        mixed = relations @ f + f                           # (R + I) F
        f = relu(mixed @ store[f"{prefix}.gcn{u}.w"])
    return nodes + f


def frame_pool(nodes: Tensor, store: ParamStore, prefix: str) -> Tensor:
    """Attention-pool the n nodes of each frame into one vector.

    nodes: (..., n, d) -> (..., d); weights are a softmax over a learned
    scalar score per node, so the result stays in the nodes' convex hull.
    """
    logits = nodes @ store[f"{prefix}.pool.w"]              # (..., n, 1)
    alpha = softmax_rows(logits.swap_last2())               # (..., 1, n)
    pooled = alpha @ nodes                                  # (..., 1, d)
    shape = pooled.data.shape
    return pooled.reshape(shape[:-2] + (shape[-1],))


def fuse_frame_context(f_g: Tensor, f_i: Tensor, store: ParamStore,
                       prefix: str) -> Tensor:
    """ELU(W_m [W_f f_I ; f_G]): inject the frame-level feature."""
    mapped = f_i @ store[f"{prefix}.frame_map.w"] + store[f"{prefix}.frame_map.b"]
    both = concat([mapped, f_g], axis=-1)
    return elu(both @ store[f"{prefix}.fuse.w"] + store[f"{prefix}.fuse.b"])


def clip_pool(frame_vecs: Tensor) -> Tensor:
    """Mean over each clip's own frames: (..., k, l_c, d) -> (..., k, d)."""
    if frame_vecs.data.shape[-2] == 0:
        raise ValueError("clip_pool of an empty clip")
    return frame_vecs.mean(axis=-2)


def stack_clips(clips: list[ClipGraphs]) -> tuple[Tensor, Tensor]:
    """Join per-clip graphs into (k, l_c, n, d) nodes and (k, l_c, n, n)
    relations, preserving clip order."""
    if not clips:
        raise ValueError("no clips to stack")
    nodes = concat([c.nodes.reshape((1,) + c.nodes.data.shape) for c in clips], axis=0)
    rels = concat([c.relations.reshape((1,) + c.relations.data.shape) for c in clips], axis=0)
    return nodes, rels


def dgt_forward(nodes: Tensor, relations: Tensor | None, frame_feats: Tensor | None,
                store: ParamStore, prefix: str, rel_prefix: str, *,
                heads: int, edge_heads: int, layers: int, gcn_layers: int,
                flags: AblationFlags = AblationFlags()) -> tuple[Tensor, Tensor]:
    """Run the clip-reasoning pipeline to per-clip features.

    nodes: (..., k, l_c, n, d); relations: matching (..., k, l_c, n, n),
    unused (may be None) under no_graph; frame_feats: (..., l_v, d_I),
    required unless no_frame_feat.

    Returns (clip_vecs, frame_vecs): (..., k, d) and the fused per-frame
    matrix (..., k, l_c, d) it was pooled from. Callers that inject text at
    the frame level interact with frame_vecs and redo the (cheap) clip mean
    themselves.
    """
    shape = nodes.data.shape
    k, l_c = shape[-4], shape[-3]
    if frame_feats is not None and frame_feats.data.shape[-2] != k * l_c:
        raise ValueError(
            f"frame feature count {frame_feats.data.shape[-2]} != k*l_c = {k * l_c}"
        )
    if flags.no_frame_feat:
        frame_feats = None
    elif frame_feats is None:
        raise ValueError("frame features required unless ablated away")

    if flags.no_graph:
        frame_vecs = nodes.mean(axis=-2)                    # (..., k, l_c, d)
    else:
        if relations is None:
            raise ValueError("relations required for the graph pipeline")
        if not flags.skip_node_attn:
            nodes = node_transformer(nodes, store, prefix, heads, layers)
            # nodes changed, so the similarity structure must be refreshed
            relations = recompute_relations(nodes, store, rel_prefix)
        if not flags.skip_edge_attn:
            relations = edge_transformer(relations, store, prefix, edge_heads, layers)
        mixed = graph_conv(nodes, relations, store, prefix, gcn_layers)
        frame_vecs = frame_pool(mixed, store, prefix)       # (..., k, l_c, d)

    if frame_feats is not None:
        f_i = frame_feats.reshape(frame_feats.data.shape[:-2] + (k, l_c, frame_feats.data.shape[-1]))
        frame_vecs = fuse_frame_context(frame_vecs, f_i, store, prefix)

    return clip_pool(frame_vecs), frame_vecs
