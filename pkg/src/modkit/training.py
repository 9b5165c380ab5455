"""Three-stage training protocol.

Stage 1 (backbone): the denoiser is trained on captioned scenes. Half of the
samples get one concept's attribute word blanked out of the caption while the
exact attribute direction (the frozen encoders make it available in closed
form) is injected into that concept token's modulation. This bakes in the
premise everything downstream relies on: per-token modulation directions have
decodable, localized effects. The backbone is frozen afterwards.

Stage 2 (adapter pretrain): the adapter alone learns to match its attribute
features to the modulation-space embedding of the ground-truth attribute
caption. The backbone is never invoked.

Stage 3 (adapter train): adapter-predicted directions are injected into the
frozen backbone under the ordinary denoising objective, exactly one concept
per sample.
"""

from __future__ import annotations

import numpy as np

from .adapter import ModAdapter
from .dit import MiniDiT
from .optim import AdamW
from .tensor import concat, mse, tensor

STAGES = ("backbone", "adapter_pretrain", "adapter_train")
NEUTRAL_WORD = "some"


def neutralized_caption(sample, annotation):
    """Caption with the annotation's attribute slots blanked to the filler word."""
    words = list(sample.caption)
    for idx in annotation.attribute_indices:
        words[idx] = NEUTRAL_WORD
    return words


def oracle_directions(encoders, annotation, n_blocks: int) -> np.ndarray:
    """Exact modulation direction of an attribute set, tiled per block."""
    vec = encoders.prompt_modulation(list(annotation.attribute_words))
    return np.tile(vec, (n_blocks, 1))


def _noisy_batch(model, batch, rng):
    x0 = np.stack([s.image for s in batch]) * 2.0 - 1.0
    t = rng.integers(0, model.cfg.timesteps, size=len(batch))
    eps = rng.standard_normal(x0.shape)
    bars = model.schedule.alpha_bars[t][:, None, None, None]
    x_t = np.sqrt(bars) * x0 + np.sqrt(1.0 - bars) * eps
    return x_t, t, eps


def signal_weights(model: MiniDiT, t: np.ndarray, cap: float = 20.0) -> np.ndarray:
    """Per-sample loss weights emphasizing clean-image accuracy at high noise.

    In plain noise-prediction MSE the conditional information (which scene to
    draw) carries almost no gradient at high t, yet sampling commits global
    composition exactly there. Weighting by (1 - abar)/abar, capped, trains
    the high-t predictions in clean-image units; normalized to mean one.
    """
    bars = model.schedule.alpha_bars[t]
    w = np.clip((1.0 - bars) / bars, 1.0, cap)
    return w / w.mean()


def diffusion_train_step(model: MiniDiT, batch, stage: str, optimizer: AdamW,
                         rng: np.random.Generator, adapter: ModAdapter = None,
                         scale: float = 1.0, concept_prob: float = 0.6,
                         inject_prob: float = 0.8, t_weighting: bool = False) -> float:
    """One denoising step; trains whichever component the stage names."""
    if stage not in ("backbone", "adapter_train"):
        raise ValueError(f"diffusion training undefined for stage {stage!r}")
    if stage == "adapter_train" and adapter is None:
        raise ValueError("adapter_train stage needs an adapter")
    x_t, t, eps = _noisy_batch(model, batch, rng)
    cfg = model.cfg
    prompt_len = len(batch[0].caption)
    seq_len = prompt_len + cfg.n_image_tokens
    mask = np.zeros((len(batch), seq_len, 1))
    prompts = []
    adapter_dirs = []  # one direction set per sample in adapter_train
    oracle = np.zeros((len(batch), cfg.n_blocks, cfg.d_mod))
    for b, sample in enumerate(batch):
        if stage == "adapter_train":
            ann = sample.annotations[rng.integers(len(sample.annotations))]
            prompts.append(neutralized_caption(sample, ann))
            directions, _ = adapter.predict_directions(sample.image, ann.concept_word)
            adapter_dirs.append(directions.reshape(1, cfg.n_blocks, cfg.d_mod))
            mask[b, ann.token_index, 0] = 1.0
        elif rng.random() < concept_prob:
            ann = sample.annotations[rng.integers(len(sample.annotations))]
            prompts.append(neutralized_caption(sample, ann))
            if rng.random() < inject_prob:
                oracle[b] = oracle_directions(model.enc, ann, cfg.n_blocks)
                mask[b, ann.token_index, 0] = 1.0
        else:
            prompts.append(list(sample.caption))
    state = model.new_state(t, prompts)
    if mask.any():
        directions = concat(adapter_dirs, axis=0) if stage == "adapter_train" else oracle
        state.add_term(mask, directions, scale)
    predicted = model.forward(x_t, prompts, state)
    if t_weighting:
        diff = predicted - tensor(eps)
        per_sample = (diff * diff).reshape(len(batch), -1).mean(axis=1)
        loss = (per_sample * tensor(signal_weights(model, t))).mean()
    else:
        loss = mse(predicted, tensor(eps))
    optimizer.zero_grad()
    loss.backward()
    optimizer.step()
    return loss.item()


def pretrain_step(adapter: ModAdapter, batch, optimizer: AdamW,
                  rng: np.random.Generator, stage: str = "adapter_pretrain") -> float:
    """One feature-matching step; the backbone is never touched."""
    if stage != "adapter_pretrain":
        raise ValueError(f"pretraining undefined for stage {stage!r}")
    total = None
    for sample in batch:
        ann = sample.annotations[rng.integers(len(sample.annotations))]
        features = adapter.predict_features(sample.image, ann.concept_word)
        target = adapter.enc.prompt_modulation(list(ann.positive_words))
        diff = features - tensor(target[None, :])
        loss = (diff * diff).sum() * (1.0 / features.shape[0])
        total = loss if total is None else total + loss
    total = total * (1.0 / len(batch))
    optimizer.zero_grad()
    total.backward()
    optimizer.step()
    return total.item()


def pretrain_loss(adapter: ModAdapter, samples, seed: int = 0) -> float:
    """Mean per-block squared feature error over a sample set, one concept each."""
    rng = np.random.default_rng(seed)
    losses = []
    for sample in samples:
        ann = sample.annotations[rng.integers(len(sample.annotations))]
        features = adapter.predict_features(sample.image, ann.concept_word)
        target = adapter.enc.prompt_modulation(list(ann.positive_words))
        losses.append(((features.data - target) ** 2).sum() / features.shape[0])
    return float(np.mean(losses))


def _draw_batch(samples, batch_size, rng):
    idx = rng.integers(0, len(samples), size=batch_size)
    return [samples[i] for i in idx]


def _cosine_lr(base: float, step: int, total: int, floor: float = 0.1) -> float:
    span = 0.5 * (1.0 + np.cos(np.pi * step / max(total, 1)))
    return base * (floor + (1.0 - floor) * span)


def train_backbone(model: MiniDiT, samples, steps: int, batch_size: int = 16,
                   seed: int = 0, lr: float = 1e-3, weight_decay: float = 1e-2,
                   scale: float = 1.0, concept_prob: float = 0.6,
                   log_every: int = 0) -> list:
    model.params.set_trainable(True)
    optimizer = AdamW(model.params.tensors(), lr=lr, weight_decay=weight_decay)
    rng = np.random.default_rng(seed)
    losses = []
    for step in range(steps):
        optimizer.lr = _cosine_lr(lr, step, steps)
        batch = _draw_batch(samples, batch_size, rng)
        losses.append(diffusion_train_step(model, batch, "backbone", optimizer, rng,
                                           scale=scale, concept_prob=concept_prob,
                                           t_weighting=True))
        if log_every and (step + 1) % log_every == 0:
            print(f"backbone step {step + 1}/{steps} loss {np.mean(losses[-log_every:]):.4f}")
    model.params.set_trainable(False)  # frozen from here on
    return losses


def pretrain_adapter(adapter: ModAdapter, samples, steps: int, batch_size: int = 16,
                     seed: int = 0, lr: float = 1e-3, weight_decay: float = 1e-2,
                     log_every: int = 0) -> list:
    optimizer = AdamW(adapter.params.tensors(), lr=lr, weight_decay=weight_decay)
    rng = np.random.default_rng(seed)
    losses = []
    for step in range(steps):
        optimizer.lr = _cosine_lr(lr, step, steps)
        batch = _draw_batch(samples, batch_size, rng)
        losses.append(pretrain_step(adapter, batch, optimizer, rng))
        if log_every and (step + 1) % log_every == 0:
            print(f"pretrain step {step + 1}/{steps} loss {np.mean(losses[-log_every:]):.4f}")
    return losses


def train_adapter(model: MiniDiT, adapter: ModAdapter, samples, steps: int,
                  batch_size: int = 8, seed: int = 0, lr: float = 1e-3,
                  weight_decay: float = 1e-2, scale: float = 1.0,
                  log_every: int = 0) -> list:
    model.params.set_trainable(False)
    optimizer = AdamW(adapter.params.tensors(), lr=lr, weight_decay=weight_decay)
    rng = np.random.default_rng(seed)
    losses = []
    for step in range(steps):
        optimizer.lr = _cosine_lr(lr, step, steps)
        batch = _draw_batch(samples, batch_size, rng)
        losses.append(diffusion_train_step(model, batch, "adapter_train", optimizer,
                                           rng, adapter=adapter, scale=scale))
        if log_every and (step + 1) % log_every == 0:
            print(f"adapter step {step + 1}/{steps} loss {np.mean(losses[-log_every:]):.4f}")
    return losses
