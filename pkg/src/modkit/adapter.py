"""Concept adapter: (concept image, concept word) -> per-block modulation directions.

The concept word's neutral feature is projected into one query per backbone
block (sinusoidal position codes keep the queries distinct), cross-attention
against frozen image features extracts the concept's visual evidence, and a
hard-routed expert MLP maps it into the modulation space. The final head
emits one attribute feature per backbone block; subtracting the neutral
feature turns those into injection directions.

Ablation variants are built into the module so that every variant trains
and evaluates through identical code paths:
  full          word-derived queries, expert bank, k-means routing
  no_vl_attn    free learnable query tokens instead of word-derived queries
  no_moe        one wide MLP sized to the full expert bank's parameter count
  linear_gating trainable top-1 gate instead of the k-means table
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoders import Encoders, sinusoidal_embedding
from .params import ParamStore
from .routing import RoutingTable
from .tensor import Tensor, attention, gelu, layer_norm, softmax, tensor

VARIANTS = ("full", "no_pretrain", "no_vl_attn", "no_moe", "linear_gating")


@dataclass
class AdapterConfig:
    n_backbone_blocks: int = 6
    adapter_blocks: int = 2
    n_experts: int = 4
    d_mod: int = 32
    d_img: int = 48
    expert_hidden: int = 64

    def __post_init__(self):
        if self.n_experts < 1 or self.adapter_blocks < 1:
            raise ValueError("need n_experts >= 1 and adapter_blocks >= 1")


def sinusoidal_pe(pos: int, dim: int) -> np.ndarray:
    """Query position code; one per backbone block."""
    if pos < 0:
        raise ValueError("position must be non-negative")
    return sinusoidal_embedding(pos, dim)


def cross_attention(queries: Tensor, keys: Tensor, values: Tensor) -> Tensor:
    """softmax(Q K^T / sqrt(d)) V over a single head."""
    if keys.shape[0] == 0:
        raise ValueError("cross-attention needs a non-empty key set")
    return attention(queries, keys, values)


def matched_single_hidden(cfg: AdapterConfig) -> int:
    """Hidden width making one MLP match the expert bank's parameter count."""
    d, h, e = cfg.d_mod, cfg.expert_hidden, cfg.n_experts
    bank = e * (2 * d * h + h + d)
    return max(1, round((bank - d) / (2 * d + 1)))


class ModAdapter:
    def __init__(self, config: AdapterConfig, encoders: Encoders, seed: int = 0,
                 variant: str = "full"):
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
        self.cfg = config
        self.enc = encoders
        self.variant = variant
        self.routing_table: RoutingTable | None = None
        self.routing_events = []  # expert index per routed concept, for utilization stats
        self.params = ParamStore()
        rng = np.random.default_rng(seed)
        c = config

        def init(name, shape, std):
            return self.params.add(name, std * rng.standard_normal(shape))

        if variant == "no_vl_attn":
            init("free_queries", (c.n_backbone_blocks, c.d_mod), 1.0)
        else:
            init("query_proj", (c.d_mod, c.d_mod), c.d_mod**-0.5)
        self.query_pe = np.stack(
            [sinusoidal_pe(i, c.d_mod) for i in range(c.n_backbone_blocks)]
        )
        for i in range(c.adapter_blocks):
            init(f"block{i}/key_proj", (c.d_img, c.d_mod), c.d_img**-0.5)
            init(f"block{i}/value_proj", (c.d_img, c.d_mod), c.d_img**-0.5)
            if variant == "no_moe":
                hidden = matched_single_hidden(c)
                init(f"block{i}/mlp_w1", (c.d_mod, hidden), c.d_mod**-0.5)
                self.params.add(f"block{i}/mlp_b1", np.zeros(hidden))
                init(f"block{i}/mlp_w2", (hidden, c.d_mod), 0.02)
                self.params.add(f"block{i}/mlp_b2", np.zeros(c.d_mod))
            else:
                for e in range(c.n_experts):
                    init(f"block{i}/expert{e}_w1", (c.d_mod, c.expert_hidden), c.d_mod**-0.5)
                    self.params.add(f"block{i}/expert{e}_b1", np.zeros(c.expert_hidden))
                    # small random output layer: pretraining, not zero-init,
                    # supplies the meaningful starting point
                    init(f"block{i}/expert{e}_w2", (c.expert_hidden, c.d_mod), 0.02)
                    self.params.add(f"block{i}/expert{e}_b2", np.zeros(c.d_mod))
        if variant == "linear_gating":
            init("gate", (c.d_mod, c.n_experts), c.d_mod**-0.5)
        init("out_proj", (c.d_mod, c.d_mod), c.d_mod**-0.5)
        self.params.add("out_bias", np.zeros(c.d_mod))

    # ---- routing -------------------------------------------------------------

    def fit_routing(self, concept_words, seed: int = 0) -> RoutingTable:
        """Cluster the training concept words' neutral features, one expert each."""
        feats = {w: self.enc.neutral_feature(w) for w in set(concept_words)}
        self.routing_table = RoutingTable.fit(feats, self.cfg.n_experts, seed=seed)
        return self.routing_table

    def route(self, neutral: np.ndarray):
        """Expert index for a concept feature, plus a gate weight tensor or None."""
        if self.variant == "linear_gating":
            logits = tensor(neutral[None, :]) @ self.params["gate"]
            probs = softmax(logits, axis=-1)
            expert = int(np.argmax(probs.data[0]))
            return expert, probs.narrow(1, expert, 1)  # gate scales output: keeps it trainable
        if self.routing_table is None:
            raise RuntimeError("routing table not fitted; call fit_routing() first")
        return self.routing_table.route(neutral), None

    # ---- forward ---------------------------------------------------------------

    def build_queries(self, neutral: np.ndarray) -> Tensor:
        """One query per backbone block: projected neutral feature + position code."""
        c = self.cfg
        if neutral.shape != (c.d_mod,):
            raise ValueError(f"neutral feature width {neutral.shape} != ({c.d_mod},)")
        if self.variant == "no_vl_attn":
            return self.params["free_queries"]
        tiled = tensor(np.tile(neutral, (c.n_backbone_blocks, 1)))
        return tiled @ self.params["query_proj"] + tensor(self.query_pe)

    def vl_cross_attention(self, queries: Tensor, image_feats, block: int) -> Tensor:
        """Pre-norm residual cross-attention against projected image features."""
        feats = image_feats if isinstance(image_feats, Tensor) else tensor(image_feats)
        keys = feats @ self.params[f"block{block}/key_proj"]
        values = feats @ self.params[f"block{block}/value_proj"]
        return queries + cross_attention(layer_norm(queries), keys, values)

    def expert_mlp(self, features: Tensor, block: int, expert: int, gate=None) -> Tensor:
        """Raw two-layer MLP of one expert, applied row-wise."""
        if self.variant == "no_moe":
            h = gelu(features @ self.params[f"block{block}/mlp_w1"]
                     + self.params[f"block{block}/mlp_b1"])
            out = h @ self.params[f"block{block}/mlp_w2"] + self.params[f"block{block}/mlp_b2"]
        else:
            if not 0 <= expert < self.cfg.n_experts:
                raise IndexError(f"expert {expert} out of range [0, {self.cfg.n_experts})")
            h = gelu(features @ self.params[f"block{block}/expert{expert}_w1"]
                     + self.params[f"block{block}/expert{expert}_b1"])
            out = h @ self.params[f"block{block}/expert{expert}_w2"] \
                + self.params[f"block{block}/expert{expert}_b2"]
        if gate is not None:
            out = out * gate
        return out

    def moe_forward(self, features: Tensor, expert: int, block: int = 0,
                    residual: bool = True) -> Tensor:
        """Hard routing: the selected expert maps every per-block feature row."""
        out = self.expert_mlp(features, block, expert)
        return features + out if residual else out

    def _moe_block(self, x: Tensor, block: int, expert: int, gate) -> Tensor:
        return x + self.expert_mlp(layer_norm(x), block, expert, gate)

    def predict_features(self, concept_image: np.ndarray, concept_word: str) -> Tensor:
        """Attribute features, one row per backbone block."""
        neutral = self.enc.neutral_feature(concept_word)
        image_feats = self.enc.image.encode_image_patches(concept_image)
        expert, gate = self.route(neutral)
        self.routing_events.append(expert)
        x = self.build_queries(neutral)
        for i in range(self.cfg.adapter_blocks):
            x = self.vl_cross_attention(x, image_feats, i)
            x = self._moe_block(x, i, expert, gate)
        return x @ self.params["out_proj"] + self.params["out_bias"]

    def predict_directions(self, concept_image: np.ndarray, concept_word: str):
        """Directions = attribute features minus the word's neutral feature."""
        features = self.predict_features(concept_image, concept_word)
        neutral = self.enc.neutral_feature(concept_word)
        directions = features - tensor(neutral[None, :])
        return directions, features
