"""Diagnose injection sensitivity at the model level vs the sampler level."""
import sys, time
import numpy as np
from modkit.encoders import Encoders, default_vocabulary
from modkit.dit import DiTConfig, MiniDiT
from modkit.pipeline import save_checkpoint
from modkit.scenes import DEFAULT_HOLDOUT, TONES, make_sample, random_spec, caption
from modkit.probes import probe_attribute
from modkit.training import train_backbone, oracle_directions, NEUTRAL_WORD

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 8000
ckpt = sys.argv[2] if len(sys.argv) > 2 else "/tmp/bb_v4.modk"

enc = Encoders(default_vocabulary(), seed=0)
model = MiniDiT(DiTConfig(), enc, seed=0)
rng = np.random.default_rng(0)
train = [make_sample(random_spec(rng, exclude=DEFAULT_HOLDOUT)) for _ in range(2048)]
t0 = time.time()
losses = train_backbone(model, train, steps=steps, batch_size=8, seed=0, log_every=steps//6)
print(f"{steps} steps: {time.time()-t0:.0f}s loss -> {np.mean(losses[-200:]):.4f}", flush=True)
save_checkpoint(ckpt, model)

def sensitivity(category="tone"):
    """x0-hat shift under injection at several t, averaged over noise draws."""
    spec = random_spec(np.random.default_rng(5))
    words, anns = caption(spec)
    ann = next(a for a in anns if a.category == category)
    prompt = list(words)
    for i in ann.attribute_indices:
        prompt[i] = NEUTRAL_WORD
    x0 = make_sample(spec).image * 2 - 1
    bars = model.schedule.alpha_bars
    print(f"-- {category}: true attr {ann.attribute_words[0]}")
    for t in (10, 30, 50, 70, 90):
        shifts, agreements = [], []
        for trial in range(6):
            g = np.random.default_rng(100 + trial)
            noise = g.standard_normal(x0.shape)
            x_t = np.sqrt(bars[t]) * x0 + np.sqrt(1 - bars[t]) * noise
            outs = {}
            for val in (TONES if category == "tone" else [ann.attribute_words[0]]):
                dirs = np.tile(enc.prompt_modulation([val]), (model.cfg.n_blocks, 1))
                eps = model.predict_noise(x_t, t, prompt, concepts=[(ann.token_index, dirs)], scale=1.0)
                x0hat = (x_t - np.sqrt(1 - bars[t]) * eps) / np.sqrt(bars[t])
                outs[val] = np.clip((x0hat + 1) / 2, 0, 1)
            base_eps = model.predict_noise(x_t, t, prompt)
            base_x0 = np.clip(((x_t - np.sqrt(1 - bars[t]) * base_eps) / np.sqrt(bars[t]) + 1) / 2, 0, 1)
            first = ann.attribute_words[0]
            shifts.append(np.abs(outs[first] - base_x0).mean())
            if category == "tone":
                # does the injected value steer the probed tone of x0-hat?
                agreements.append(np.mean([probe_attribute(outs[v], "tone") == v for v in TONES]))
        print(f"  t={t:3d} |x0hat shift| {np.mean(shifts):.4f}  probe-agree {np.mean(agreements) if agreements else -1:.2f}", flush=True)

sensitivity("tone")
