"""End-to-end miniature run: data, backbone, adapter, personalized sampling.

Budgets here are tiny so the demo finishes in about two minutes; the result
is a visibly working pipeline, not a converged one. Use the CLI with the
default configuration for real runs.

Run:  python3 demos/04_mini_pipeline.py
"""

import os
import time

import numpy as np

from modkit import Config, write_ppm
from modkit.evaluation import build_bench, evaluate
from modkit.pipeline import build_adapter, build_encoders, build_model, concept_words
from modkit.scenes import DEFAULT_HOLDOUT, make_sample, random_spec
from modkit.training import pretrain_adapter, train_adapter, train_backbone

out = os.path.join(os.path.dirname(__file__), "out")
os.makedirs(out, exist_ok=True)
cfg = Config(backbone_steps=1200, pretrain_steps=400, adapter_steps=400, sample_steps=50)

rng = np.random.default_rng(cfg.seed)
samples = [make_sample(random_spec(rng, exclude=DEFAULT_HOLDOUT))
           for _ in range(512)]
enc = build_encoders(cfg)
model = build_model(cfg, enc)
adapter = build_adapter(cfg, enc)
adapter.fit_routing(concept_words(samples), seed=cfg.seed)

t0 = time.time()
losses = train_backbone(model, samples, cfg.backbone_steps, batch_size=cfg.batch_size,
                        seed=cfg.seed, log_every=400)
print(f"backbone: loss {losses[0]:.3f} -> {np.mean(losses[-50:]):.3f} "
      f"({time.time()-t0:.0f}s)")

t0 = time.time()
losses = pretrain_adapter(adapter, samples, cfg.pretrain_steps,
                          batch_size=cfg.pretrain_batch, seed=cfg.seed)
print(f"adapter feature matching: {losses[0]:.2f} -> {np.mean(losses[-20:]):.3f} "
      f"({time.time()-t0:.0f}s)")

t0 = time.time()
train_adapter(model, adapter, samples, cfg.adapter_steps, batch_size=cfg.batch_size,
              seed=cfg.seed)
print(f"adapter denoising stage done ({time.time()-t0:.0f}s)")

bench = build_bench(("tone",), 16, seed=123)
metrics = evaluate(model, adapter, bench, seed=0, sample_steps=cfg.sample_steps)
chance = evaluate(model, adapter, bench, seed=0, sample_steps=cfg.sample_steps, scale=0.0)
print(f"tone personalization at this tiny budget: CP {metrics.cp:.2f} "
      f"(unconditioned {chance.cp:.2f}), PF {metrics.pf:.2f}")

case = bench[0]
word, token_index, concept_image, _, expected = case.concepts[0]
directions, _ = adapter.predict_directions(concept_image, word)
image = model.sample(case.prompt, [(token_index, directions.data)],
                     steps=cfg.sample_steps, seed=7)
write_ppm(os.path.join(out, "concept_input.ppm"), concept_image)
write_ppm(os.path.join(out, "personalized.ppm"), image)
print(f"wrote {out}/personalized.ppm for prompt: {' '.join(case.prompt)} "
      f"(concept tone: {expected})")
