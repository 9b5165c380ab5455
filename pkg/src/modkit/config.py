"""Run configuration: `key = value` files over documented defaults.

Unknown keys and out-of-range values are rejected at load time with the
offending line. The environment variable MODKIT_SEED, when set, overrides
the global seed from any source.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields


@dataclass
class Config:
    seed: int = 0
    # encoder widths
    d_txt: int = 64
    d_img: int = 48
    d_mod: int = 32
    patch: int = 4
    # backbone
    n_blocks: int = 6
    d_model: int = 64
    heads: int = 4
    d_time: int = 32
    ff_mult: int = 2
    image_size: int = 16
    timesteps: int = 100
    beta_start: float = 1e-3
    beta_end: float = 0.2
    max_prompt: int = 12
    # adapter
    adapter_blocks: int = 2
    n_experts: int = 4
    expert_hidden: int = 64
    # training budgets
    train_samples: int = 2048
    backbone_steps: int = 6000
    pretrain_steps: int = 2000
    adapter_steps: int = 5000
    batch_size: int = 8
    pretrain_batch: int = 16
    lr: float = 1e-3
    weight_decay: float = 1e-2
    concept_prob: float = 0.6
    scale: float = 1.0
    sample_steps: int = 50
    eval_samples: int = 64
    vocab_path: str = ""


_RANGES = {
    "seed": (0, 2**31 - 1),
    "d_txt": (1, 4096), "d_img": (1, 4096), "d_mod": (1, 4096), "patch": (1, 64),
    "n_blocks": (1, 256), "d_model": (1, 4096), "heads": (1, 64), "d_time": (2, 4096),
    "ff_mult": (1, 16), "image_size": (4, 32), "timesteps": (2, 10000),
    "beta_start": (1e-8, 0.999), "beta_end": (1e-8, 0.999), "max_prompt": (1, 256),
    "adapter_blocks": (1, 64), "n_experts": (1, 256), "expert_hidden": (1, 4096),
    "train_samples": (1, 10**7), "backbone_steps": (0, 10**7),
    "pretrain_steps": (0, 10**7), "adapter_steps": (0, 10**7),
    "batch_size": (1, 1024), "pretrain_batch": (1, 1024),
    "lr": (0.0, 10.0), "weight_decay": (0.0, 10.0),
    "concept_prob": (0.0, 1.0), "scale": (-100.0, 100.0),
    "sample_steps": (1, 10000), "eval_samples": (1, 10**6),
}


class ConfigError(ValueError):
    pass


def _convert(key: str, raw: str, where: str):
    ftype = {f.name: f.type for f in fields(Config)}[key]
    try:
        if ftype == "int":
            value = int(raw)
        elif ftype == "float":
            value = float(raw)
        else:
            return raw
    except ValueError:
        raise ConfigError(f"{where}: key {key!r} expects {ftype}, got {raw!r}") from None
    lo, hi = _RANGES[key]
    if not lo <= value <= hi:
        raise ConfigError(f"{where}: key {key!r} value {value} outside [{lo}, {hi}]")
    return value


def load_config(path=None, overrides: dict | None = None) -> Config:
    """Parse a config file (optional), apply overrides, honor MODKIT_SEED."""
    known = {f.name for f in fields(Config)}
    values = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                text = line.split("#", 1)[0].strip()
                if not text:
                    continue
                where = f"{path}:{lineno}"
                if "=" not in text:
                    raise ConfigError(f"{where}: malformed line {line.strip()!r}")
                key, _, raw = (part.strip() for part in text.partition("="))
                if key not in known:
                    raise ConfigError(f"{where}: unknown key {key!r}")
                values[key] = _convert(key, raw, where)
    for key, raw in (overrides or {}).items():
        if key not in known:
            raise ConfigError(f"override: unknown key {key!r}")
        values[key] = _convert(key, str(raw), "override")
    cfg = Config(**values)
    env_seed = os.environ.get("MODKIT_SEED")
    if env_seed is not None:
        cfg.seed = _convert("seed", env_seed, "MODKIT_SEED")
    if cfg.beta_start > cfg.beta_end:
        raise ConfigError("beta_start must not exceed beta_end")
    if cfg.d_model % cfg.heads:
        raise ConfigError("d_model must be divisible by heads")
    if cfg.image_size % cfg.patch:
        raise ConfigError("image_size must be divisible by patch")
    return cfg
