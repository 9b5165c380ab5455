"""Held-out benchmark, concept-preservation / prompt-fidelity scoring, ablations.

A bench case pairs a prompt (with the personalized attribute slots blanked)
with one concept image per personalized concept. Concept images are drawn
from tone/texture combinations excluded from training, so nothing can be
memorized. Scoring is fully analytic: a concept counts as preserved when the
probe recovers the concept image's attribute from the generated image, and
prompt fidelity is the fraction of the remaining concrete prompt elements
the probes confirm.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .adapter import ModAdapter
from .dit import MiniDiT
from .pipeline import build_adapter, concept_words
from .probes import probe_attribute, probe_object_color
from .scenes import DEFAULT_HOLDOUT, TEXTURES, TONES, caption, random_spec, render_scene
from .training import NEUTRAL_WORD, pretrain_adapter, train_adapter, train_backbone


@dataclass
class BenchCase:
    prompt: list
    concepts: list  # (concept_word, token_index, concept_image, category, expected_word)
    fidelity: list  # (probe_kind, expected_word); probe_kind in categories + "color"


@dataclass
class Metrics:
    variant: str
    seed: int
    cp: float
    pf: float
    n_samples: int
    per_concept: dict = field(default_factory=dict)

    @property
    def cp_pf(self) -> float:
        return self.cp * self.pf

    def csv_row(self):
        return [self.variant, self.seed, f"{self.cp:.6f}", f"{self.pf:.6f}",
                f"{self.cp_pf:.6f}", self.n_samples]


CSV_HEADER = ["variant", "seed", "cp", "pf", "cp_pf", "n_samples"]


def write_metrics_csv(path, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for m in rows:
            writer.writerow(m.csv_row())


def _holdout_spec(rng):
    """Scene drawn from a held-out tone/texture pair."""
    tone, texture = DEFAULT_HOLDOUT[rng.integers(len(DEFAULT_HOLDOUT))]
    spec = random_spec(rng)
    return type(spec)(shape=spec.shape, color=spec.color, texture=texture,
                      tone=tone, light=spec.light, placement=spec.placement)


def build_bench(categories, n_cases: int, seed: int, size: int = 16) -> list:
    """Bench cases personalizing the given concept categories simultaneously."""
    rng = np.random.default_rng(seed)
    cases = []
    for _ in range(n_cases):
        prompt_spec = random_spec(rng)
        words, annotations = caption(prompt_spec)
        prompt = list(words)
        concepts = []
        fidelity = []
        for ann in annotations:
            if ann.category in categories:
                concept_spec = _holdout_spec(rng)
                if ann.category == "shape":
                    # binding is by word: the concept image must show the
                    # object the prompt names
                    concept_spec = type(concept_spec)(
                        shape=prompt_spec.shape, color=concept_spec.color,
                        texture=concept_spec.texture, tone=concept_spec.tone,
                        light=concept_spec.light, placement=concept_spec.placement)
                    expected = concept_spec.color
                else:
                    expected = getattr(concept_spec, ann.category)
                for idx in ann.attribute_indices:
                    prompt[idx] = NEUTRAL_WORD
                concepts.append((ann.concept_word, ann.token_index,
                                 render_scene(concept_spec, size=size),
                                 ann.category, expected))
            else:
                if ann.category == "shape":
                    fidelity.append(("shape", prompt_spec.shape))
                    fidelity.append(("color", prompt_spec.color))
                else:
                    fidelity.append((ann.category, getattr(prompt_spec, ann.category)))
        cases.append(BenchCase(prompt, concepts, fidelity))
    return cases


def _probe(image, kind):
    if kind == "color":
        return probe_object_color(image)
    return probe_attribute(image, kind)


def evaluate(model: MiniDiT, adapter: ModAdapter, bench, seed: int,
             sample_steps: int = 50, scale: float = 1.0, chunk: int = 16,
             variant: str = "full") -> Metrics:
    """Score one pass over the bench with a fixed sampling seed."""
    prepared = []
    for case in bench:
        injections = []
        for word, token_index, image, _, _ in case.concepts:
            directions, _ = adapter.predict_directions(image, word)
            injections.append((token_index, directions.data))
        prepared.append((case.prompt, injections))
    cp_hits, pf_hits = [], []
    per_concept = {}
    for start in range(0, len(prepared), chunk):
        part = prepared[start : start + chunk]
        seeds = [seed * 1_000_003 + i for i in range(start, start + len(part))]
        images = model.sample_batch(part, steps=sample_steps, seeds=seeds, scale=scale)
        for case, image in zip(bench[start : start + len(part)], images):
            if case.concepts:
                hits = []
                for _, _, _, category, expected in case.concepts:
                    kind = "color" if category == "shape" else category
                    hit = float(_probe(image, kind) == expected)
                    hits.append(hit)
                    per_concept.setdefault(category, []).append(hit)
                cp_hits.append(float(np.mean(hits)))
            if case.fidelity:
                pf_hits.append(float(np.mean(
                    [_probe(image, kind) == word for kind, word in case.fidelity])))
    return Metrics(
        variant=variant, seed=seed,
        cp=float(np.mean(cp_hits)) if cp_hits else 0.0,
        pf=float(np.mean(pf_hits)) if pf_hits else 0.0,
        n_samples=len(bench),
        per_concept={k: float(np.mean(v)) for k, v in per_concept.items()},
    )


# ---- ablation harness ------------------------------------------------------------


def train_variant(cfg, model: MiniDiT, samples, variant: str, seed: int,
                  pretrain_steps=None, adapter_steps=None, log_every: int = 0) -> ModAdapter:
    """Train one adapter variant against a frozen backbone, identical budgets."""
    pretrain_steps = cfg.pretrain_steps if pretrain_steps is None else pretrain_steps
    adapter_steps = cfg.adapter_steps if adapter_steps is None else adapter_steps
    adapter = build_adapter(cfg, model.enc, variant=variant)
    if variant != "linear_gating":
        adapter.fit_routing(concept_words(samples), seed=cfg.seed)
    if variant == "no_pretrain":
        # same total step budget, all of it on the denoising objective
        train_adapter(model, adapter, samples, pretrain_steps + adapter_steps,
                      batch_size=cfg.batch_size, seed=seed, lr=cfg.lr,
                      weight_decay=cfg.weight_decay, scale=cfg.scale, log_every=log_every)
        return adapter
    pretrain_adapter(adapter, samples, pretrain_steps, batch_size=cfg.pretrain_batch,
                     seed=seed, lr=cfg.lr, weight_decay=cfg.weight_decay,
                     log_every=log_every)
    train_adapter(model, adapter, samples, adapter_steps, batch_size=cfg.batch_size,
                  seed=seed, lr=cfg.lr, weight_decay=cfg.weight_decay,
                  scale=cfg.scale, log_every=log_every)
    return adapter


def run_ablation(variant: str, cfg, seeds, backbones: dict, samples, bench,
                 pretrain_steps=None, adapter_steps=None, sample_steps=None,
                 log_every: int = 0) -> list:
    """Metrics rows for one variant across seeds; backbones are shared per seed."""
    from .adapter import VARIANTS

    if variant not in VARIANTS:
        raise ValueError(f"unknown ablation variant {variant!r}; expected one of {VARIANTS}")
    rows = []
    for seed in seeds:
        adapter = train_variant(cfg, backbones[seed], samples, variant, seed,
                                pretrain_steps, adapter_steps, log_every=log_every)
        rows.append(evaluate(backbones[seed], adapter, bench, seed,
                             sample_steps=sample_steps or cfg.sample_steps,
                             scale=cfg.scale, variant=variant))
    return rows


# ---- expert utilization ------------------------------------------------------------


def expert_shares(events, n_experts: int) -> np.ndarray:
    counts = np.bincount(np.asarray(events, dtype=int), minlength=n_experts)
    return counts / max(len(events), 1)


def share_entropy(shares) -> float:
    p = np.asarray(shares)
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


def kmeans_stream_shares(adapter: ModAdapter, word_stream) -> np.ndarray:
    """Exact shares the frozen routing table produces on a given word stream."""
    events = [adapter.routing_table.route_word(w) for w in word_stream]
    return expert_shares(events, adapter.cfg.n_experts)
