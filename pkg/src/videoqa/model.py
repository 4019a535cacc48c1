"""End-to-end model: graphs -> clip reasoning -> text interaction -> scores.

One parameter store holds five named groups: "graph" (node/relation
construction), "dgt" (clip reasoning), "text" (the trainable language
encoder), "global" (the temporal transformer over clips), and "mlm" (the
masked-token prediction head). Forward passes are batched over samples and,
for multi-choice QA, over candidates: a video interacts with each
question+candidate text separately and each interaction is scored against
that candidate's pooled answer vector.

Text can be injected at the object, frame, or clip stage (or frame+clip);
with clip placement the video pipeline below the clip summaries is shared
across candidates.
"""

from __future__ import annotations

import numpy as np

from .clip_reasoning import AblationFlags, clip_pool, dgt_forward, init_dgt_params
from .config import RunConfig
from .params import ParamStore
from .pretrain import (batch_contrastive_loss, corrupt_tokens, init_mlm_params,
                       mlm_loss, sample_negatives)
from .qa import (batch_qa_loss, cross_modal_interact, global_transform,
                 init_global_params)
from .tensor import Tensor, concat
from .text import (Vocab, encode_text, init_text_params, pack_sequences,
                   pool_text, qa_tokens, tokenize)
from .video_graph import init_node_params, init_relations, node_features


def tile_rows(t: Tensor, reps: int) -> Tensor:
    """(B, ...) -> (B*reps, ...) by repeating each row `reps` times."""
    shape = t.data.shape
    expanded = t.reshape((shape[0], 1) + shape[1:])
    stacked = concat([expanded] * reps, axis=1)
    return stacked.reshape((shape[0] * reps,) + shape[1:])


class Model:
    def __init__(self, cfg: RunConfig, vocab: Vocab, rng: np.random.Generator):
        cfg.validate()
        self.cfg = cfg
        self.vocab = vocab
        self.flags = cfg.ablation_flags()
        store = ParamStore()
        init_node_params(store, rng, "graph", cfg.d_r, cfg.d)
        init_dgt_params(store, rng, "dgt", cfg.d, cfg.d_i, cfg.n, cfg.heads,
                        cfg.edge_heads, cfg.layers, cfg.gcn_layers)
        init_text_params(store, rng, "text", len(vocab), cfg.d_text, cfg.d,
                         cfg.text_heads, cfg.text_layers, cfg.max_text_len)
        init_global_params(store, rng, "global", cfg.d, cfg.heads, cfg.layers,
                           cfg.k)
        init_mlm_params(store, rng, "mlm", cfg.d, len(vocab))
        self.store = store

    # -- text ----------------------------------------------------------------

    def encode(self, batch) -> Tensor:
        return encode_text(batch, self.store, "text", self.cfg.text_heads,
                           self.cfg.text_layers)

    def _qa_batch(self, samples):
        seqs, spans, texts = [], [], []
        for s in samples:
            for cand in s.candidates:
                ids, span = qa_tokens(s.question, cand, self.vocab)
                seqs.append(ids)
                spans.append(span)
                texts.append(f"{s.question} | {cand}")
        return pack_sequences(seqs, texts, spans)

    # -- video ---------------------------------------------------------------

    def _video_nodes(self, samples) -> tuple[Tensor, Tensor]:
        feats = Tensor(np.stack([s.feats for s in samples]))
        boxes = Tensor(np.stack([s.boxes for s in samples]))
        nodes = node_features(feats, boxes, self.store, "graph")
        frame_feats = Tensor(np.stack([s.frame_feats for s in samples]))
        return nodes, frame_feats

    def video_question(self, samples, x_q: Tensor, mask: np.ndarray,
                       per_sample: int) -> Tensor:
        """Query-aware video vectors, one per (sample, text) pair.

        x_q/mask carry len(samples) * per_sample texts; per_sample > 1 means
        per-candidate texts, and text-independent stages run once per sample
        before tiling.
        """
        cfg = self.cfg
        placement = cfg.cm_placement if cfg.cm_enabled else "none"
        nodes, frame_feats = self._video_nodes(samples)

        def interact(x_v: Tensor) -> Tensor:
            return cross_modal_interact(x_v, x_q, mask)

        if placement == "object":
            nodes = tile_rows(nodes, per_sample)
            frame_feats = tile_rows(frame_feats, per_sample)
            shape = nodes.data.shape                      # (B*A, k, l_c, n, d)
            flat = nodes.reshape((shape[0], shape[1] * shape[2] * shape[3], shape[4]))
            nodes = interact(flat).reshape(shape)
            tiled = True
        else:
            tiled = per_sample == 1

        relations = None if self.flags.no_graph else init_relations(
            nodes, self.store, "graph")
        clip_vecs, frame_vecs = dgt_forward(
            nodes, relations, frame_feats, self.store, "dgt", "graph",
            heads=cfg.heads, edge_heads=cfg.edge_heads, layers=cfg.layers,
            gcn_layers=cfg.gcn_layers, flags=self.flags)

        if placement in ("frame", "frame+clip"):
            if not tiled:
                frame_vecs = tile_rows(frame_vecs, per_sample)
            rows = frame_vecs.data.shape[0]
            flat = frame_vecs.reshape((rows, cfg.l_v, cfg.d))
            frame_vecs = interact(flat).reshape((rows, cfg.k, cfg.l_c, cfg.d))
            clip_vecs = clip_pool(frame_vecs)
            tiled = True

        if not tiled:
            clip_vecs = tile_rows(clip_vecs, per_sample)
        if placement in ("clip", "frame+clip"):
            clip_vecs = interact(clip_vecs)

        return global_transform(clip_vecs, self.store, "global", cfg.heads,
                                cfg.layers)

    # -- task heads ------------------------------------------------------------

    def multi_choice_scores(self, samples) -> tuple[Tensor, np.ndarray]:
        """Raw candidate scores (B, |A|) and the gold index vector."""
        num_cands = {len(s.candidates) for s in samples}
        if len(num_cands) != 1:
            raise ValueError("candidate counts differ within a batch")
        a = num_cands.pop()
        batch = self._qa_batch(samples)
        x_q = self.encode(batch)
        f_a = pool_text(x_q, batch.span)
        f_qv = self.video_question(samples, x_q, batch.mask, a)
        scores = (f_qv * f_a).sum(axis=-1).reshape((len(samples), a))
        gold = np.array([s.answer for s in samples], dtype=np.int64)
        return scores, gold

    def open_ended_scores(self, samples) -> tuple[Tensor, np.ndarray]:
        """Joint-decision scores against each sample's candidate answers."""
        num_cands = {len(s.candidates) for s in samples}
        if len(num_cands) != 1:
            raise ValueError("candidate counts differ within a batch")
        a = num_cands.pop()
        b = len(samples)
        q_batch = pack_sequences([tokenize(s.question, self.vocab) for s in samples],
                                 [s.question for s in samples])
        x_q = self.encode(q_batch)
        f_q = pool_text(x_q, q_batch.mask)
        a_batch = pack_sequences(
            [tokenize(c, self.vocab) for s in samples for c in s.candidates],
            [c for s in samples for c in s.candidates])
        f_a = pool_text(self.encode(a_batch), a_batch.mask)
        f_a = f_a.reshape((b, a, self.cfg.d))
        f_qv = self.video_question(samples, x_q, q_batch.mask, 1)
        s_video = (f_a * f_qv.reshape((b, 1, self.cfg.d))).sum(axis=-1)
        if not self.cfg.joint_decision:
            scores = s_video
        else:
            scores = s_video * (f_a * f_q.reshape((b, 1, self.cfg.d))).sum(axis=-1)
        gold = np.array([s.answer for s in samples], dtype=np.int64)
        return scores, gold

    def qa_scores(self, samples) -> tuple[Tensor, np.ndarray]:
        if self.cfg.mode == "open-ended":
            return self.open_ended_scores(samples)
        return self.multi_choice_scores(samples)

    def qa_batch_loss(self, samples) -> tuple[Tensor, np.ndarray, np.ndarray]:
        scores, gold = self.qa_scores(samples)
        preds = np.argmax(scores.data, axis=-1)
        return batch_qa_loss(scores, gold), preds, gold

    def pretrain_losses(self, samples, indices: np.ndarray, all_descriptions: list[str],
                        neg_rng: np.random.Generator, mlm_rng: np.random.Generator
                        ) -> tuple[Tensor, Tensor]:
        """(contrastive, mlm) for a batch of description-paired videos."""
        cfg = self.cfg
        b = len(samples)
        pos_batch = pack_sequences(
            [tokenize(s.description, self.vocab) for s in samples],
            [s.description for s in samples])
        x_pos = self.encode(pos_batch)
        f_pos = pool_text(x_pos, pos_batch.mask)
        f_qv = self.video_question(samples, x_pos, pos_batch.mask, 1)

        neg_texts = []
        for idx in indices:
            for j in sample_negatives(len(all_descriptions), int(idx), cfg.n_neg,
                                      neg_rng):
                neg_texts.append(all_descriptions[j])
        neg_batch = pack_sequences(
            [tokenize(t, self.vocab) for t in neg_texts], neg_texts)
        f_negs = pool_text(self.encode(neg_batch), neg_batch.mask)
        f_negs = f_negs.reshape((b, cfg.n_neg, cfg.d))
        contrastive = batch_contrastive_loss(f_qv, f_pos, f_negs)

        if cfg.mlm_weight == 0.0 or cfg.mlm_prob == 0.0:
            return contrastive, Tensor(0.0)
        corrupted_seqs, flat_pos, originals = [], [], []
        width = pos_batch.width
        for i in range(b):
            ids = pos_batch.ids[i][pos_batch.mask[i]]
            target = corrupt_tokens(ids, len(self.vocab), mlm_rng, cfg.mlm_prob)
            corrupted_seqs.append(list(target.corrupted))
            flat_pos.extend(i * width + p for p in target.positions)
            originals.extend(target.originals)
        mlm_batch = pack_sequences(corrupted_seqs, [s.description for s in samples])
        mlm = mlm_loss(self.encode(mlm_batch), np.array(flat_pos, dtype=np.int64),
                       np.array(originals, dtype=np.int64), self.store, "mlm")
        return contrastive, mlm
