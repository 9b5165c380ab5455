"""Calibration: train backbone with oracle injections, measure direction response."""
import sys, time
import numpy as np
from modkit.encoders import Encoders, default_vocabulary
from modkit.dit import DiTConfig, MiniDiT
from modkit.scenes import (DEFAULT_HOLDOUT, TONES, TEXTURES, make_sample, random_spec,
                           render_scene, caption)
from modkit.probes import probe_attribute
from modkit.training import train_backbone, oracle_directions, NEUTRAL_WORD

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 4000
batch = int(sys.argv[2]) if len(sys.argv) > 2 else 8
seed = int(sys.argv[3]) if len(sys.argv) > 3 else 0

enc = Encoders(default_vocabulary(), seed=0)
model = MiniDiT(DiTConfig(), enc, seed=seed)
rng = np.random.default_rng(seed)
train = [make_sample(random_spec(rng, exclude=DEFAULT_HOLDOUT)) for _ in range(2048)]

t0 = time.time()
losses = train_backbone(model, train, steps=steps, batch_size=batch, seed=seed, log_every=max(steps//8,1))
print(f"backbone {steps} steps b{batch}: {time.time()-t0:.0f}s  loss {np.mean(losses[:50]):.4f} -> {np.mean(losses[-200:]):.4f}", flush=True)

def eval_injection(category, n=32, inject=True, steps_s=50):
    """Prompt neutral at category; inject oracle dir for a held-out target value; probe."""
    rng2 = np.random.default_rng(123 + (0 if inject else 1))
    cases, targets, pf_checks = [], [], []
    for i in range(n):
        spec = random_spec(rng2)  # free draw: target value random
        words, anns = caption(spec)
        ann = next(a for a in anns if a.category == category)
        prompt = list(words)
        for idx in ann.attribute_indices:
            prompt[idx] = NEUTRAL_WORD
        injections = []
        if inject:
            injections = [(ann.token_index, oracle_directions(enc, ann, model.cfg.n_blocks))]
        cases.append((prompt, injections))
        targets.append(ann.attribute_words[0])
        pf_checks.append(spec)
    imgs = model.sample_batch(cases, steps=steps_s, seeds=list(range(7000, 7000+n)))
    cp = np.mean([probe_attribute(img, category) == t for img, t in zip(imgs, targets)])
    # PF on the other global categories present in the prompt
    pf_vals = []
    for img, spec in zip(imgs, pf_checks):
        others = [c for c in ("texture","tone","light") if c != category]
        pf_vals.append(np.mean([probe_attribute(img, c) == getattr(spec, c) for c in others]))
    return cp, float(np.mean(pf_vals))

for cat in ("tone", "texture", "light"):
    cp1, pf1 = eval_injection(cat, inject=True)
    cp0, pf0 = eval_injection(cat, inject=False)
    print(f"{cat:8s} injected CP {cp1:.3f} PF {pf1:.3f} | baseline CP {cp0:.3f} PF {pf0:.3f}", flush=True)
