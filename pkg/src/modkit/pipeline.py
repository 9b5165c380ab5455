"""Assembly of the full system from a Config, plus checkpoint persistence."""

from __future__ import annotations

import numpy as np

from .adapter import AdapterConfig, ModAdapter
from .config import Config
from .dit import DiTConfig, MiniDiT
from .encoders import Encoders, Vocabulary, default_vocabulary
from .modk import decode_text, encode_text, read_modk, write_modk
from .routing import RoutingTable


def build_encoders(cfg: Config) -> Encoders:
    if cfg.vocab_path:
        vocab = Vocabulary.from_file(cfg.vocab_path)
    else:
        vocab = default_vocabulary()
    return Encoders(vocab, d_txt=cfg.d_txt, d_img=cfg.d_img, d_mod=cfg.d_mod,
                    patch=cfg.patch, seed=cfg.seed)


def dit_config(cfg: Config) -> DiTConfig:
    return DiTConfig(
        n_blocks=cfg.n_blocks, d_model=cfg.d_model, heads=cfg.heads, d_mod=cfg.d_mod,
        d_time=cfg.d_time, image_size=cfg.image_size, patch=cfg.patch,
        ff_mult=cfg.ff_mult, timesteps=cfg.timesteps, beta_start=cfg.beta_start,
        beta_end=cfg.beta_end, max_prompt=cfg.max_prompt,
    )


def adapter_config(cfg: Config) -> AdapterConfig:
    return AdapterConfig(
        n_backbone_blocks=cfg.n_blocks, adapter_blocks=cfg.adapter_blocks,
        n_experts=cfg.n_experts, d_mod=cfg.d_mod, d_img=cfg.d_img,
        expert_hidden=cfg.expert_hidden,
    )


def build_model(cfg: Config, encoders: Encoders) -> MiniDiT:
    return MiniDiT(dit_config(cfg), encoders, seed=cfg.seed)


def build_adapter(cfg: Config, encoders: Encoders, variant: str = "full") -> ModAdapter:
    return ModAdapter(adapter_config(cfg), encoders, seed=cfg.seed + 1, variant=variant)


def concept_words(samples) -> list:
    words = set()
    for sample in samples:
        for ann in sample.annotations:
            words.add(ann.concept_word)
    return sorted(words)


def save_checkpoint(path, model: MiniDiT, adapter: ModAdapter = None) -> None:
    sections = {"meta/kind": encode_text("modkit-checkpoint")}
    sections.update(model.params.state_arrays("backbone/"))
    if adapter is not None:
        sections["meta/variant"] = encode_text(adapter.variant)
        sections.update(adapter.params.state_arrays("adapter/"))
        if adapter.routing_table is not None:
            sections.update(adapter.routing_table.state_arrays("routing/"))
    write_modk(path, sections)


def load_checkpoint(path, cfg: Config, encoders: Encoders = None):
    """Rebuild (model, adapter) from a checkpoint; adapter may be absent."""
    sections = read_modk(path)
    if decode_text(sections.get("meta/kind", np.zeros(0, np.uint8))) != "modkit-checkpoint":
        raise ValueError(f"{path}: not a modkit checkpoint")
    encoders = encoders or build_encoders(cfg)
    model = build_model(cfg, encoders)
    model.params.load_state(sections, "backbone/")
    model.params.set_trainable(False)
    adapter = None
    if any(name.startswith("adapter/") for name in sections):
        variant = decode_text(sections["meta/variant"])
        adapter = build_adapter(cfg, encoders, variant=variant)
        adapter.params.load_state(sections, "adapter/")
        if any(name.startswith("routing/") for name in sections):
            adapter.routing_table = RoutingTable.from_state(sections, "routing/")
    return model, adapter
