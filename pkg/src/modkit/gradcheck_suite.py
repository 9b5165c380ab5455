"""Finite-difference verification across primitives and end-to-end paths.

Thresholds: 1e-6 for numeric primitives, 1e-4 end-to-end through the adapter
feature-matching loss and through a full modulated denoiser block, three
seeds each. Shrunken widths keep the whole suite under a minute.
"""

from __future__ import annotations

import numpy as np

from .adapter import AdapterConfig, ModAdapter
from .dit import DiTConfig, MiniDiT
from .encoders import Encoders, default_vocabulary
from .gradcheck import grad_check
from .scenes import SceneSpec, render_scene
from .tensor import adaln, attention, concat, gelu, layer_norm, mse, softmax, tensor

PRIMITIVE_LIMIT = 1e-6
END_TO_END_LIMIT = 1e-4
SEEDS = (0, 1, 2)


def _primitive_cases(rng):
    a = tensor(rng.standard_normal((3, 4)), requires_grad=True)
    b = tensor(rng.standard_normal((3, 4)), requires_grad=True)
    m = tensor(rng.standard_normal((4, 5)), requires_grad=True)
    w34 = tensor(rng.standard_normal((3, 4)))
    w35 = tensor(rng.standard_normal((3, 5)))
    q = tensor(rng.standard_normal((2, 3, 4)), requires_grad=True)
    kv = tensor(rng.standard_normal((2, 5, 4)), requires_grad=True)
    tb = tensor(rng.standard_normal((2, 1, 3)), requires_grad=True)
    hw = tensor(rng.standard_normal((3, 12)), requires_grad=True)
    hb = tensor(rng.standard_normal(12), requires_grad=True)
    x = tensor(rng.standard_normal((2, 3, 4)), requires_grad=True)
    mix = tensor(rng.standard_normal((2, 3, 4)))
    return {
        "add": (lambda: ((a + b) * w34).sum(), [a, b]),
        "sub": (lambda: ((a - b) * w34).sum(), [a, b]),
        "mul": (lambda: ((a * b) * w34).sum(), [a, b]),
        "matmul": (lambda: ((a @ m) * w35).sum(), [a, m]),
        "softmax": (lambda: (softmax(a, axis=-1) * w34).sum(), [a]),
        "layer_norm": (lambda: (layer_norm(a) * w34).sum(), [a]),
        "gelu": (lambda: (gelu(a) * w34).sum(), [a]),
        "sum": (lambda: ((a.sum(axis=0)) * w34.narrow(0, 0, 1).reshape(4)).sum(), [a]),
        "mean": (lambda: ((a.mean(axis=1)) * w35.narrow(1, 0, 1).reshape(3)).sum(), [a]),
        "concat": (lambda: (concat([a, b], axis=0) * concat([w34, w34], axis=0)).sum(), [a, b]),
        "narrow": (lambda: (a.narrow(1, 1, 2) * w34.narrow(1, 1, 2)).sum(), [a]),
        "transpose": (lambda: (a.transpose((1, 0)) * w34.transpose((1, 0))).sum(), [a]),
        "reshape": (lambda: (a.reshape(4, 3) * w34.reshape(4, 3)).sum(), [a]),
        "attention": (lambda: (attention(q, kv, kv) * mix).sum(), [q, kv]),
        "adaln": (lambda: (adaln(x, tb, hw, hb) * mix).sum(), [x, tb, hw, hb]),
    }


def _adapter_end_to_end(seed):
    enc = Encoders(default_vocabulary(), d_txt=16, d_img=12, d_mod=8, patch=8, seed=seed)
    adapter = ModAdapter(
        AdapterConfig(n_backbone_blocks=2, adapter_blocks=1, n_experts=2, d_mod=8,
                      d_img=12, expert_hidden=6),
        enc, seed=seed)
    adapter.fit_routing(["tone", "texture", "light", "circle"], seed=seed)
    image = render_scene(SceneSpec("circle", "red", "stripes", "warm", "left", seed))
    target = enc.prompt_modulation(["warm", "tone"])

    def loss():
        features = adapter.predict_features(image, "tone")
        diff = features - tensor(target[None, :])
        return (diff * diff).sum() * (1.0 / features.shape[0])

    return loss, adapter.params.tensors()


def _block_end_to_end(seed):
    enc = Encoders(default_vocabulary(), d_txt=16, d_img=12, d_mod=8, patch=4, seed=seed)
    model = MiniDiT(
        DiTConfig(n_blocks=1, d_model=16, heads=2, d_mod=8, d_time=8, image_size=8,
                  patch=4, timesteps=10),
        enc, seed=seed)
    model.params["out_proj"].data = 0.01 * np.random.default_rng(seed).standard_normal(
        model.params["out_proj"].shape)
    rng = np.random.default_rng(seed + 100)
    x_t = rng.standard_normal((1, 8, 8, 3))
    eps = tensor(rng.standard_normal((1, 8, 8, 3)))
    prompt = [["a", "red", "circle", "on"]]
    dirs = rng.standard_normal((1, 8))

    def loss():
        state = model.new_state(np.array([3]), prompt)
        state.apply_concept_directions(2, dirs, 1.0)
        return mse(model.forward(x_t, prompt, state), eps)

    return loss, model.params.tensors()


def run_suite(seed: int = 0, max_elements: int = 6):
    """Returns (report text, all-pass boolean)."""
    lines = []
    ok = True
    for name, builder in sorted(_primitive_cases(np.random.default_rng(seed)).items()):
        f, params = builder
        worst = max(grad_check(f, params, eps=1e-5, seed=s) for s in SEEDS)
        good = worst < PRIMITIVE_LIMIT
        ok &= good
        lines.append(f"{name:12s} max_rel_err {worst:.3e}  {'ok' if good else 'FAIL'}")
    for label, builder, limit in (
        ("adapter+loss", _adapter_end_to_end, END_TO_END_LIMIT),
        ("block+loss", _block_end_to_end, END_TO_END_LIMIT),
    ):
        worst = 0.0
        for s in SEEDS:
            f, params = builder(seed + s)
            worst = max(worst, grad_check(f, params, eps=1e-5,
                                          max_elements=max_elements, seed=s))
        good = worst < limit
        ok &= good
        lines.append(f"{label:12s} max_rel_err {worst:.3e}  {'ok' if good else 'FAIL'}")
    return "\n".join(lines), ok
