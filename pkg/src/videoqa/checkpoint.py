"""Binary checkpoints: magic "VGTK", u32 version, named records.

Everything is little-endian. The file is a header followed by a record
count and that many length-prefixed records:

    magic   4 bytes  b"VGTK"
    version u32
    count   u32
    record: name_len u32 | name utf-8 | kind u8 | payload
      kind 0 (blob):   byte_len u64 | bytes
      kind 1 (tensor): ndim u8 | dims u64 * ndim | float64 data

Records carry the run config text, the vocabulary (token per line), RNG
stream states (JSON), training meta (JSON), the frozen-name list, every
parameter tensor, and the optimizer moment tensors. Loading rebuilds the
model and optimizer exactly; save -> load -> save is byte-identical.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .model import Model
from .optim import AdamState
from .rng import RngHub
from .text import Vocab

MAGIC = b"VGTK"
VERSION = 1
KIND_BLOB = 0
KIND_TENSOR = 1


def _write_record(out: io.BytesIO, name: str, kind: int, payload: bytes) -> None:
    name_b = name.encode("utf-8")
    out.write(struct.pack("<I", len(name_b)))
    out.write(name_b)
    out.write(struct.pack("<B", kind))
    out.write(payload)


def _blob(value: bytes) -> bytes:
    return struct.pack("<Q", len(value)) + value


def _tensor(arr: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    head = struct.pack("<B", arr.ndim) + b"".join(
        struct.pack("<Q", d) for d in arr.shape)
    return head + arr.astype("<f8").tobytes()


class _Reader:
    def __init__(self, data: bytes, path: str):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ValueError(f"{self.path}: truncated checkpoint")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u8(self) -> int:
        return struct.unpack("<B", self.take(1))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]


@dataclass
class Checkpoint:
    cfg: RunConfig
    model: Model
    optim: AdamState
    hub: RngHub
    meta: dict


def save_checkpoint(path: str, model: Model, optim: AdamState, hub: RngHub,
                    meta: dict) -> None:
    store = model.store
    out = io.BytesIO()
    records: list[tuple[str, int, bytes]] = [
        ("config", KIND_BLOB, _blob(model.cfg.to_text().encode("utf-8"))),
        ("vocab", KIND_BLOB, _blob(model.vocab.to_lines().encode("utf-8"))),
        ("rng", KIND_BLOB, _blob(json.dumps(hub.state(), sort_keys=True).encode("utf-8"))),
        ("meta", KIND_BLOB, _blob(json.dumps(meta, sort_keys=True).encode("utf-8"))),
        ("frozen", KIND_BLOB, _blob(json.dumps(sorted(store.frozen_names)).encode("utf-8"))),
        ("adam", KIND_BLOB, _blob(json.dumps(
            {"step_count": optim.step_count, "base_lr": optim.base_lr,
             "total_steps": optim.total_steps, "beta1": optim.beta1,
             "beta2": optim.beta2, "eps": optim.eps},
            sort_keys=True).encode("utf-8"))),
    ]
    for name, tensor in store.items():
        records.append((f"param/{name}", KIND_TENSOR, _tensor(tensor.data)))
    for name in store.names():
        records.append((f"adam.m/{name}", KIND_TENSOR, _tensor(optim.m[name])))
        records.append((f"adam.v/{name}", KIND_TENSOR, _tensor(optim.v[name])))

    out.write(MAGIC)
    out.write(struct.pack("<I", VERSION))
    out.write(struct.pack("<I", len(records)))
    for name, kind, payload in records:
        _write_record(out, name, kind, payload)
    with open(path, "wb") as fh:
        fh.write(out.getvalue())


def _read_records(path: str) -> dict[str, tuple[int, object]]:
    with open(path, "rb") as fh:
        data = fh.read()
    r = _Reader(data, path)
    if r.take(4) != MAGIC:
        raise ValueError(f"{path}: not a checkpoint (bad magic)")
    version = r.u32()
    if version != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    count = r.u32()
    records: dict[str, tuple[int, object]] = {}
    for _ in range(count):
        name = r.take(r.u32()).decode("utf-8")
        kind = r.u8()
        if kind == KIND_BLOB:
            value: object = r.take(r.u64())
        elif kind == KIND_TENSOR:
            ndim = r.u8()
            shape = tuple(r.u64() for _ in range(ndim))
            n = int(np.prod(shape, dtype=np.int64)) if shape else 1
            value = np.frombuffer(r.take(n * 8), dtype="<f8").reshape(shape).copy()
        else:
            raise ValueError(f"{path}: unknown record kind {kind} for {name!r}")
        if name in records:
            raise ValueError(f"{path}: duplicate record {name!r}")
        records[name] = (kind, value)
    if r.pos != len(data):
        raise ValueError(f"{path}: trailing bytes after last record")
    return records


def load_checkpoint(path: str) -> Checkpoint:
    records = _read_records(path)

    def blob(name: str) -> bytes:
        if name not in records or records[name][0] != KIND_BLOB:
            raise ValueError(f"{path}: missing record {name!r}")
        return records[name][1]

    cfg = RunConfig.from_text(blob("config").decode("utf-8"), source=f"{path}#config")
    vocab = Vocab.from_lines(blob("vocab").decode("utf-8"))
    model = Model(cfg, vocab, np.random.default_rng(0))
    store = model.store

    expected = {f"param/{n}" for n in store.names()}
    got = {n for n in records if n.startswith("param/")}
    if expected != got:
        missing = sorted(expected - got)[:3]
        extra = sorted(got - expected)[:3]
        raise ValueError(
            f"{path}: parameter records do not match the config architecture "
            f"(missing {missing}, unexpected {extra})"
        )
    for name, tensor in store.items():
        kind, arr = records[f"param/{name}"]
        if kind != KIND_TENSOR or arr.shape != tensor.data.shape:
            raise ValueError(f"{path}: bad tensor record for parameter {name!r}")
        tensor.data = arr

    adam_meta = json.loads(blob("adam").decode("utf-8"))
    optim = AdamState(store, adam_meta["base_lr"], adam_meta["total_steps"],
                      beta1=adam_meta["beta1"], beta2=adam_meta["beta2"],
                      eps=adam_meta["eps"])
    optim.step_count = adam_meta["step_count"]
    for name in store.names():
        for field, slot in (("adam.m/", optim.m), ("adam.v/", optim.v)):
            if field + name not in records:
                raise ValueError(f"{path}: missing optimizer record for {name!r}")
            kind, arr = records[field + name]
            if kind != KIND_TENSOR or arr.shape != slot[name].shape:
                raise ValueError(f"{path}: bad optimizer record for {name!r}")
            slot[name] = arr

    for name in json.loads(blob("frozen").decode("utf-8")):
        if name not in store:
            raise ValueError(f"{path}: frozen name {name!r} is not a parameter")
        store.freeze(name)

    hub = RngHub(cfg.seed)
    hub.set_state(json.loads(blob("rng").decode("utf-8")))
    meta = json.loads(blob("meta").decode("utf-8"))
    return Checkpoint(cfg=cfg, model=model, optim=optim, hub=hub, meta=meta)
