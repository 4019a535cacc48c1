"""Run configuration: a flat key=value text format.

One `key=value` per line; blank lines and `#` comments allowed. Unknown keys
are an error (catches typos before a long run). Defaults describe the
desk-scale setup; configs/full.cfg in the repository carries the
full-scale dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

from .clip_reasoning import AblationFlags
from .qa import PLACEMENTS

MODES = ("multi-choice", "open-ended", "pretrain")


@dataclass
class RunConfig:
    # video / graph geometry
    l_v: int = 8               # sampled frames per video
    k: int = 4                 # clips
    l_c: int = 2               # frames per clip
    n: int = 4                 # objects kept per frame
    lam: float = 1.0           # IoU weight in the linking score
    d: int = 64                # model width
    d_r: int = 32              # raw region feature width
    d_i: int = 32              # raw frame feature width
    # transformers
    heads: int = 4
    edge_heads: int = 4
    layers: int = 1            # MHSA depth used by every visual transformer
    gcn_layers: int = 2
    d_text: int = 64
    text_heads: int = 4
    text_layers: int = 2
    max_text_len: int = 32
    # task wiring
    mode: str = "multi-choice"
    cm_placement: str = "clip"
    cm_enabled: bool = True
    joint_decision: bool = True   # open-ended only
    ablate: str = ""              # comma-joined AblationFlags names
    # optimization
    lr: float = 1e-3
    epochs: int = 100
    batch_size: int = 16
    seed: int = 0
    early_stop_acc: float = 0.0   # stop once train accuracy reaches this; 0 = off
    freeze_text: bool = False
    # pretraining
    n_neg: int = 8
    mlm_weight: float = 1.0
    mlm_prob: float = 0.15
    # data paths (train/eval/pretrain JSONL); empty = not set
    train_data: str = ""
    eval_data: str = ""
    pretrain_data: str = ""
    # synthetic generation
    num_train: int = 64
    num_val: int = 0
    num_pretrain: int = 0
    families: str = "attribute,transition,order"
    num_candidates: int = 5

    def validate(self) -> "RunConfig":
        if self.l_v != self.k * self.l_c:
            raise ValueError(f"l_v = {self.l_v} must equal k*l_c = {self.k * self.l_c}")
        for name in ("l_v", "k", "l_c", "n", "d", "d_r", "d_i", "heads",
                     "edge_heads", "layers", "gcn_layers", "d_text", "text_heads",
                     "text_layers", "max_text_len", "batch_size", "n_neg",
                     "num_candidates"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.d % 4 != 0:
            raise ValueError("d must be divisible by 4 (location embedding is d/4)")
        if self.d % self.heads != 0:
            raise ValueError(f"d = {self.d} not divisible by heads = {self.heads}")
        if (self.n * self.n) % self.edge_heads != 0:
            raise ValueError(
                f"n^2 = {self.n * self.n} not divisible by edge_heads = {self.edge_heads}"
            )
        if self.d_text % self.text_heads != 0:
            raise ValueError("d_text not divisible by text_heads")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.cm_placement not in PLACEMENTS:
            raise ValueError(f"cm_placement must be one of {PLACEMENTS}")
        if not 0.0 <= self.mlm_prob <= 1.0:
            raise ValueError("mlm_prob must lie in [0, 1]")
        if not 0.0 <= self.early_stop_acc <= 1.0:
            raise ValueError("early_stop_acc must lie in [0, 1]")
        if self.num_candidates < 2:
            raise ValueError("need at least two answer candidates")
        self.ablation_flags()   # validates flag names
        return self

    def ablation_flags(self) -> AblationFlags:
        names = [s.strip() for s in self.ablate.split(",") if s.strip()]
        return AblationFlags.from_names(names)

    def family_list(self) -> list[str]:
        return [s.strip() for s in self.families.split(",") if s.strip()]

    def to_text(self) -> str:
        lines = [f"{f.name}={getattr(self, f.name)}" for f in fields(self)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, source: str = "<config>") -> "RunConfig":
        known = {f.name: f.type for f in fields(cls)}
        cfg = cls()
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{source}:{lineno}: expected key=value, got {raw!r}")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key not in known:
                raise ValueError(f"{source}:{lineno}: unknown config key {key!r}")
            setattr(cfg, key, _parse_value(known[key], value, key, source, lineno))
        return cfg.validate()

    @classmethod
    def from_file(cls, path: str) -> "RunConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_text(fh.read(), source=path)


def _parse_value(kind: str, value: str, key: str, source: str, lineno: int):
    try:
        if kind == "int":
            return int(value)
        if kind == "float":
            return float(value)
        if kind == "bool":
            low = value.lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(value)
        return value
    except ValueError:
        raise ValueError(
            f"{source}:{lineno}: cannot parse {key}={value!r} as {kind}"
        ) from None
