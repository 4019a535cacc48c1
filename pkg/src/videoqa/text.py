"""Trainable text encoder and tokenizer.

A deliberately small stand-in for a pretrained language model: whitespace +
punctuation word tokenizer, a dense vocabulary with fixed reserved ids,
token/position embeddings, a short masked transformer stack, and a linear
projection into the model dimension. Question/answer pooling is a masked
mean over token features.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .attention import add_position, init_mhsa_params, init_position_params, mhsa_stack
from .params import ParamStore
from .tensor import Tensor, take_rows

PAD_ID = 0
MASK_ID = 1
UNK_ID = 2
CLS_ID = 3
SEP_ID = 4
RESERVED = ("[PAD]", "[MASK]", "[UNK]", "[CLS]", "[SEP]")
NUM_RESERVED = len(RESERVED)

_WORD_RE = re.compile(r"[a-z0-9]+")


def split_words(text: str) -> list[str]:
    """Lowercase word stream; punctuation and whitespace are separators."""
    return _WORD_RE.findall(text.lower())


@dataclass
class Vocab:
    """Dense token-to-id map with reserved ids pinned at the front."""

    token_to_id: dict[str, int] = field(
        default_factory=lambda: {t: i for i, t in enumerate(RESERVED)}
    )

    def __post_init__(self):
        for i, tok in enumerate(RESERVED):
            if self.token_to_id.get(tok) != i:
                raise ValueError(f"reserved token {tok} must map to id {i}")
        ids = sorted(self.token_to_id.values())
        if ids != list(range(len(ids))):
            raise ValueError("vocabulary ids must be dense and unique")

    def __len__(self) -> int:
        return len(self.token_to_id)

    def add(self, token: str) -> int:
        return self.token_to_id.setdefault(token, len(self.token_to_id))

    def id_of(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_ID)

    @classmethod
    def build(cls, texts: list[str]) -> "Vocab":
        """Every word seen in the corpus enters the vocabulary, in first-seen
        order (keeps ids reproducible for a fixed corpus)."""
        vocab = cls()
        for text in texts:
            for word in split_words(text):
                vocab.add(word)
        return vocab

    def to_lines(self) -> str:
        ordered = sorted(self.token_to_id, key=self.token_to_id.get)
        return "\n".join(ordered) + "\n"

    @classmethod
    def from_lines(cls, blob: str) -> "Vocab":
        tokens = blob.splitlines()
        return cls({t: i for i, t in enumerate(tokens)})


def tokenize(text: str, vocab: Vocab) -> list[int]:
    """[CLS] followed by word ids; out-of-vocabulary words become UNK."""
    return [CLS_ID] + [vocab.id_of(w) for w in split_words(text)]


def qa_tokens(question: str, answer: str, vocab: Vocab) -> tuple[list[int], list[bool]]:
    """Joint QA-pair ids [CLS] Q [SEP] A and a per-token answer-span flag."""
    q_ids = [vocab.id_of(w) for w in split_words(question)]
    a_ids = [vocab.id_of(w) for w in split_words(answer)]
    if not a_ids:
        raise ValueError(f"answer {answer!r} has no tokens")
    ids = [CLS_ID] + q_ids + [SEP_ID] + a_ids
    span = [False] * (len(q_ids) + 2) + [True] * len(a_ids)
    return ids, span


@dataclass
class TextBatch:
    """Padded id matrix plus masks; raw strings kept for debugging."""

    ids: np.ndarray            # (batch, M) int64
    mask: np.ndarray           # (batch, M) bool, True at real tokens
    texts: list[str]
    span: np.ndarray | None = None   # (batch, M) bool, True inside answer spans

    @property
    def width(self) -> int:
        return self.ids.shape[1]


def pack_sequences(seqs: list[list[int]], texts: list[str],
                   spans: list[list[bool]] | None = None) -> TextBatch:
    """Right-pad id lists to the batch maximum with PAD."""
    if not seqs:
        raise ValueError("empty batch of sequences")
    m = max(len(s) for s in seqs)
    ids = np.full((len(seqs), m), PAD_ID, dtype=np.int64)
    mask = np.zeros((len(seqs), m), dtype=bool)
    for i, s in enumerate(seqs):
        ids[i, : len(s)] = s
        mask[i, : len(s)] = True
    span = None
    if spans is not None:
        span = np.zeros((len(seqs), m), dtype=bool)
        for i, s in enumerate(spans):
            span[i, : len(s)] = s
    return TextBatch(ids=ids, mask=mask, texts=texts, span=span)


def init_text_params(store: ParamStore, rng: np.random.Generator, prefix: str,
                     vocab_size: int, d_text: int, d: int, heads: int,
                     layers: int, max_len: int) -> None:
    store.add(f"{prefix}.emb", rng.uniform(-0.1, 0.1, size=(vocab_size, d_text)))
    init_position_params(store, f"{prefix}.pos", max_len, d_text)
    init_mhsa_params(store, rng, prefix, d_text, heads, layers)
    store.add_linear(rng, f"{prefix}.proj", d_text, d)


def attention_pad_mask(mask: np.ndarray) -> np.ndarray:
    """(batch, M) bool -> (batch, 1, M) additive logit mask, -1e9 at PAD."""
    return np.where(mask, 0.0, -1e9)[:, None, :]


def encode_text(batch: TextBatch, store: ParamStore, prefix: str, heads: int,
                layers: int) -> Tensor:
    """Contextual token features, (batch, M, d).

    PAD positions are excluded from attention; their output rows are
    unspecified and must stay out of downstream pooling.
    """
    x = take_rows(store[f"{prefix}.emb"], batch.ids)
    x = add_position(x, store, f"{prefix}.pos")
    x = mhsa_stack(x, store, prefix, heads, layers,
                   key_mask=attention_pad_mask(batch.mask))
    return x @ store[f"{prefix}.proj.w"] + store[f"{prefix}.proj.b"]


def pool_text(x: Tensor, mask: np.ndarray) -> Tensor:
    """Mean of the masked-in token vectors: (..., M, d) + (..., M) -> (..., d)."""
    counts = mask.sum(axis=-1)
    if np.any(counts == 0):
        raise ValueError("pool_text over a fully masked sequence")
    weights = mask.astype(np.float64) / counts[..., None]
    return (x * weights[..., None]).sum(axis=-2)
