"""Flat ``key = value`` run configuration.

Lines starting with ``#`` are comments; a trailing ``# ...`` is stripped as
well.  Unknown keys are rejected.  Paths starting with ``pkg:`` point into the
data shipped with this package (presets and the toy parallel corpus).
"""
import dataclasses
from dataclasses import dataclass, fields
from importlib import resources
from pathlib import Path

from .errors import ConfigError

PRESET_DIR = "presets"


@dataclass
class RunConfig:
    # encoder
    encoder: str = "birnn"
    emb_dim: int = 256
    hidden_dim: int = 512
    cnn_window: int = 5
    gcn_layers: int = 0
    max_pos: int = 50
    # decoder
    dec_emb_dim: int = 256
    dec_hidden_dim: int = 512
    attn_dim: int = 512
    # training
    epochs: int = 45
    batch_size: int = 80
    lr: float = None  # None: 0.001, or 0.0002 for CNN encoders
    l2: float = 1e-8
    dropout: float = 0.2
    edge_dropout: float = 0.2
    seed: int = 1
    eval_every_epoch: bool = True
    stop_at_bleu: float = 0.0
    # data
    train_data: str = ""
    val_data: str = ""
    train_src: str = ""
    train_tgt: str = ""
    train_conllu: str = ""
    val_src: str = ""
    val_tgt: str = ""
    val_conllu: str = ""
    train_limit: int = 0
    val_limit: int = 0
    max_len: int = 50
    src_min_freq: int = 3
    tgt_min_freq: int = 1
    src_max_vocab: int = 0
    tgt_max_vocab: int = 0
    # reporting
    run_dir: str = "runs/default"
    real_label_prefix: str = "real"
    fake_label_prefix: str = "fake"

    @property
    def learning_rate(self):
        if self.lr is not None:
            return self.lr
        return 0.0002 if self.encoder == "cnn" else 0.001

    def validate(self):
        from .encoders import ENCODER_KINDS

        if self.encoder not in ENCODER_KINDS:
            raise ConfigError(f"encoder must be one of {ENCODER_KINDS}, got {self.encoder!r}")
        if self.encoder == "cnn" and self.cnn_window % 2 == 0:
            raise ConfigError(f"cnn_window must be odd, got {self.cnn_window}")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.learning_rate < 0:
            raise ConfigError("lr must be >= 0")
        for key in ("dropout", "edge_dropout"):
            if not 0.0 <= getattr(self, key) < 1.0:
                raise ConfigError(f"{key} must be in [0, 1)")
        for key in ("emb_dim", "hidden_dim", "dec_emb_dim", "dec_hidden_dim", "attn_dim", "max_pos", "max_len"):
            if getattr(self, key) < 1:
                raise ConfigError(f"{key} must be >= 1")
        if self.gcn_layers < 0:
            raise ConfigError("gcn_layers must be >= 0")
        if not self.train_data and not self.train_src:
            raise ConfigError("set train_data (JSONL) or train_src/train_tgt")
        return self

    def encoder_config(self):
        from .encoders import EncoderConfig

        return EncoderConfig(self.encoder, self.emb_dim, self.hidden_dim, self.cnn_window, self.gcn_layers,
                             self.dropout, self.edge_dropout, self.max_pos).validate()


_FIELDS = {f.name: f for f in fields(RunConfig)}
_TYPES = {"encoder": str, "lr": float}


def _field_type(name):
    if name in _TYPES:
        return _TYPES[name]
    return type(_FIELDS[name].default)


def _coerce(name, raw, where=""):
    kind = _field_type(name)
    raw = raw.strip()
    try:
        if name == "lr" and raw.lower() in ("", "auto", "none"):
            return None
        if kind is bool:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"{where}bad value {raw!r} for {name} (expected {kind.__name__})") from None


def parse_config_text(text, source="<config>"):
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        values[key] = _coerce(key, value, f"{source}:{lineno}: ")
    return values


def apply_overrides(cfg, overrides):
    """Apply ``key=value`` strings (command-line ``--set``) on top of ``cfg``."""
    updates = {}
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, value = (s.strip() for s in item.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"unknown key {key!r}")
        updates[key] = _coerce(key, value)
    return dataclasses.replace(cfg, **updates)


def load_config(path, overrides=None):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    cfg = RunConfig(**parse_config_text(text, str(path)))
    return apply_overrides(cfg, overrides)


def dump_config(cfg):
    lines = []
    for f in fields(RunConfig):
        value = getattr(cfg, f.name)
        if value is None:
            value = "auto"
        elif isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


def preset_names():
    root = resources.files("sgcn") / PRESET_DIR
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".cfg"))


def preset_path(name):
    path = resources.files("sgcn") / PRESET_DIR / f"{name}.cfg"
    if not path.is_file():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return Path(str(path))


def load_preset(name, overrides=None):
    return load_config(preset_path(name), overrides)


def resolve_path(value):
    """Expand ``pkg:`` paths to the installed package data directory."""
    if not value:
        return None
    if value.startswith("pkg:"):
        return Path(str(resources.files("sgcn") / PRESET_DIR / value[4:]))
    return Path(value)
