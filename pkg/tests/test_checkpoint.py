"""Checkpoint container: bitwise round-trips and corruption detection."""

import struct

import numpy as np
import pytest

from videoqa.checkpoint import (MAGIC, _Reader, load_checkpoint,
                                save_checkpoint)
from videoqa.config import RunConfig
from videoqa.model import Model
from videoqa.optim import AdamState
from videoqa.rng import RngHub
from videoqa.text import Vocab


def tiny_setup():
    cfg = RunConfig(l_v=2, k=1, l_c=2, n=2, d=8, d_r=4, d_i=4, heads=2,
                    edge_heads=2, layers=1, gcn_layers=1, d_text=8,
                    text_heads=2, text_layers=1, max_text_len=8,
                    num_candidates=2, seed=3).validate()
    vocab = Vocab.build(["what is red", "cube", "ball"])
    model = Model(cfg, vocab, np.random.default_rng(cfg.seed))
    optim = AdamState(model.store, 1e-3, 50)
    hub = RngHub(cfg.seed)
    return cfg, model, optim, hub


def messy_state(model, optim, hub):
    rng = np.random.default_rng(11)
    for name in model.store.names():
        optim.m[name] = rng.standard_normal(optim.m[name].shape)
        optim.v[name] = rng.random(optim.v[name].shape)
    optim.step_count = 17
    hub.get("epoch").random(5)          # advance a stream mid-sequence
    model.store.freeze("text.emb")


def test_roundtrip_restores_everything(tmp_path):
    cfg, model, optim, hub = tiny_setup()
    messy_state(model, optim, hub)
    p = str(tmp_path / "a.ckpt")
    save_checkpoint(p, model, optim, hub, {"epoch": 9, "best": 0.5})

    ck = load_checkpoint(p)
    assert ck.cfg == cfg
    assert ck.meta == {"epoch": 9, "best": 0.5}
    assert ck.model.vocab.to_lines() == model.vocab.to_lines()
    for name, tensor in model.store.items():
        assert np.array_equal(ck.model.store[name].data, tensor.data)
        assert np.array_equal(ck.optim.m[name], optim.m[name])
        assert np.array_equal(ck.optim.v[name], optim.v[name])
    assert ck.optim.step_count == 17
    assert ck.model.store.frozen_names == {"text.emb"}
    assert ck.hub.state() == hub.state()
    # the reloaded stream continues exactly where the saved one left off
    assert ck.hub.get("epoch").random() == hub.get("epoch").random()


def test_save_load_save_is_byte_identical(tmp_path):
    _, model, optim, hub = tiny_setup()
    messy_state(model, optim, hub)
    p1, p2 = str(tmp_path / "a.ckpt"), str(tmp_path / "b.ckpt")
    save_checkpoint(p1, model, optim, hub, {"epoch": 1})
    ck = load_checkpoint(p1)
    save_checkpoint(p2, ck.model, ck.optim, ck.hub, ck.meta)
    assert open(p1, "rb").read() == open(p2, "rb").read()


def saved_bytes(tmp_path):
    _, model, optim, hub = tiny_setup()
    p = str(tmp_path / "c.ckpt")
    save_checkpoint(p, model, optim, hub, {})
    return p, open(p, "rb").read()


def record_spans(data, path):
    """Byte offsets of each record, via the container's own reader."""
    r = _Reader(data, path)
    r.take(4), r.u32()
    count = r.u32()
    spans = []
    for _ in range(count):
        start = r.pos
        name = r.take(r.u32()).decode("utf-8")
        kind = r.u8()
        if kind == 0:
            r.take(r.u64())
        else:
            shape = [r.u64() for _ in range(r.u8())]
            n = int(np.prod(shape)) if shape else 1
            r.take(n * 8)
        spans.append((name, start, r.pos))
    return spans


def test_truncated_file_rejected(tmp_path):
    p, data = saved_bytes(tmp_path)
    open(p, "wb").write(data[:-10])
    with pytest.raises(ValueError, match="truncated checkpoint"):
        load_checkpoint(p)


def test_trailing_bytes_rejected(tmp_path):
    p, data = saved_bytes(tmp_path)
    open(p, "wb").write(data + b"x")
    with pytest.raises(ValueError, match="trailing bytes"):
        load_checkpoint(p)


def test_bad_magic_and_version(tmp_path):
    p, data = saved_bytes(tmp_path)
    open(p, "wb").write(b"NOPE" + data[4:])
    with pytest.raises(ValueError, match="bad magic"):
        load_checkpoint(p)
    open(p, "wb").write(MAGIC + struct.pack("<I", 9) + data[8:])
    with pytest.raises(ValueError, match="unsupported checkpoint version 9"):
        load_checkpoint(p)


def drop_record(data, path, name):
    spans = record_spans(data, path)
    (_, start, end), = [s for s in spans if s[0] == name]
    count = struct.unpack("<I", data[8:12])[0]
    return data[:8] + struct.pack("<I", count - 1) + data[12:start] + data[end:]


def test_missing_optimizer_record(tmp_path):
    p, data = saved_bytes(tmp_path)
    victim = next(n for n, _, _ in record_spans(data, p) if n.startswith("adam.m/"))
    open(p, "wb").write(drop_record(data, p, victim))
    with pytest.raises(ValueError, match="missing optimizer record"):
        load_checkpoint(p)


def test_missing_param_record(tmp_path):
    p, data = saved_bytes(tmp_path)
    victim = next(n for n, _, _ in record_spans(data, p) if n.startswith("param/"))
    open(p, "wb").write(drop_record(data, p, victim))
    with pytest.raises(ValueError, match="do not match the config architecture"):
        load_checkpoint(p)


def test_duplicate_record_rejected(tmp_path):
    p, data = saved_bytes(tmp_path)
    name, start, end = record_spans(data, p)[-1]
    count = struct.unpack("<I", data[8:12])[0]
    dup = data[:8] + struct.pack("<I", count + 1) + data[12:] + data[start:end]
    open(p, "wb").write(dup)
    with pytest.raises(ValueError, match="duplicate record"):
        load_checkpoint(p)
