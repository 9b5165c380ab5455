"""Expert utilization: frozen k-means routing vs a learnable top-1 gate.

The k-means table fixes each concept's expert before training, so usage
shares equal the cluster proportions of the training stream exactly. A
trained linear gate instead drifts toward a few experts; this demo trains
both briefly and prints the share histograms.

Run:  python3 demos/05_expert_utilization.py
"""

import numpy as np

from modkit import Config
from modkit.evaluation import expert_shares, kmeans_stream_shares, share_entropy
from modkit.pipeline import build_adapter, build_encoders, build_model, concept_words
from modkit.scenes import DEFAULT_HOLDOUT, make_sample, random_spec
from modkit.training import pretrain_adapter, train_adapter

cfg = Config()
rng = np.random.default_rng(0)
samples = [make_sample(random_spec(rng, exclude=DEFAULT_HOLDOUT)) for _ in range(512)]
enc = build_encoders(cfg)
model = build_model(cfg, enc)
model.params.set_trainable(False)  # untrained but frozen: routing stats only


def bars(shares):
    return "  ".join(f"e{i}:{s:5.1%} {'#' * int(40 * s)}" for i, s in enumerate(shares))


for variant in ("full", "linear_gating"):
    adapter = build_adapter(cfg, enc, variant=variant)
    if variant == "full":
        adapter.fit_routing(concept_words(samples), seed=cfg.seed)
    pretrain_adapter(adapter, samples, steps=300, batch_size=16, seed=0)
    adapter.routing_events.clear()
    train_adapter(model, adapter, samples, steps=256, batch_size=8, seed=0)
    shares = expert_shares(adapter.routing_events, cfg.n_experts)
    print(f"\n{variant}: entropy {share_entropy(shares):.3f}")
    for line in bars(shares).split("  "):
        print("  " + line)
    if variant == "full":
        stream = []
        rng2 = np.random.default_rng(0)
        for _ in range(2048):
            s = samples[rng2.integers(len(samples))]
            stream.append(s.annotations[rng2.integers(4)].concept_word)
        print("  (matches cluster proportions of the concept stream exactly: "
              f"{np.allclose(kmeans_stream_shares(adapter, stream), shares, atol=0.02)})")
