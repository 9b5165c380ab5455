"""Miniature diffusion transformer with per-token modulation.

Text tokens and noisy image tokens run jointly through N identical blocks.
Each block normalizes, scales, shifts and gates every token from a
modulation vector before its attention and feed-forward sublayers. All
tokens share one base vector built from the timestep and the pooled prompt;
individual text tokens can carry adjusted vectors, which is the injection
point for concept directions: token j in block i sees base + s * dir_i.

Pixels are treated as latents directly (identity VAE) and mapped to the
internal [-1, 1] domain; the model predicts the added noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoders import Encoders, sinusoidal_embedding
from .params import ParamStore
from .tensor import Tensor, adaln, attention, concat, gelu, layer_norm, no_grad, tensor


@dataclass
class DiTConfig:
    n_blocks: int = 6
    d_model: int = 64
    heads: int = 4
    d_mod: int = 32
    d_time: int = 32
    image_size: int = 16
    patch: int = 4
    ff_mult: int = 2
    timesteps: int = 100
    beta_start: float = 1e-3
    beta_end: float = 0.2
    max_prompt: int = 12

    def __post_init__(self):
        if self.d_model % self.heads:
            raise ValueError("d_model must be divisible by heads")
        if self.n_blocks < 1 or self.timesteps < 2:
            raise ValueError("need n_blocks >= 1 and timesteps >= 2")
        if self.image_size % self.patch:
            raise ValueError("image_size must be divisible by patch")

    @property
    def n_image_tokens(self):
        return (self.image_size // self.patch) ** 2

    @property
    def patch_dim(self):
        return self.patch * self.patch * 3


class NoiseSchedule:
    """Linear beta schedule with cumulative signal levels."""

    def __init__(self, timesteps: int, beta_start: float, beta_end: float):
        if not 0.0 < beta_start <= beta_end < 1.0:
            raise ValueError("need 0 < beta_start <= beta_end < 1")
        self.betas = np.linspace(beta_start, beta_end, timesteps)
        self.alphas = 1.0 - self.betas
        self.alpha_bars = np.cumprod(self.alphas)


class ModulationState:
    """Shared base modulation plus per-token additive direction terms.

    Tokens without an override see the base vector; an override for token j
    contributes only to row j, so adjusting one concept token leaves the
    modulation of every other token untouched.
    """

    def __init__(self, base: Tensor, n_blocks: int, prompt_len: int, seq_len: int):
        self.base = base  # (batch, d_mod)
        self.n_blocks = n_blocks
        self.prompt_len = prompt_len
        self.seq_len = seq_len
        self.terms = []  # (mask (batch, seq, 1), directions (batch|1, n_blocks, d_mod), scale)

    def add_term(self, mask: np.ndarray, directions, scale: float) -> None:
        """Batched adjustment: mask picks (sample, token) slots, directions rows add."""
        if scale == 0.0:
            return  # degenerate adjustment: state unchanged
        if not isinstance(directions, Tensor):
            directions = tensor(np.asarray(directions))
        if directions.shape[-2:] != (self.n_blocks, self.base.shape[-1]):
            raise ValueError(
                f"directions shape {directions.shape} does not end in "
                f"({self.n_blocks}, {self.base.shape[-1]})"
            )
        self.terms.append((tensor(mask), directions, float(scale)))

    def apply_concept_directions(self, token_index: int, directions, scale: float,
                                 sample: int = 0) -> "ModulationState":
        if not 0 <= token_index < self.prompt_len:
            raise IndexError(
                f"concept token index {token_index} outside prompt of length {self.prompt_len}"
            )
        if not isinstance(directions, Tensor):
            directions = np.asarray(directions)
        expected = (self.n_blocks, self.base.shape[-1])
        if directions.shape != expected:
            raise ValueError(f"directions shape {directions.shape} != {expected}")
        mask = np.zeros((self.base.shape[0], self.seq_len, 1))
        mask[sample, token_index, 0] = 1.0
        if isinstance(directions, Tensor):
            directions = directions.reshape(1, *expected)
        else:
            directions = directions[None]
        self.add_term(mask, directions, scale)
        return self

    def block_vectors(self, block: int) -> Tensor:
        """Per-token modulation table for one block; (batch, 1 or seq, d_mod)."""
        d_mod = self.base.shape[-1]
        out = self.base.reshape(self.base.shape[0], 1, d_mod)
        for mask, directions, scale in self.terms:
            row = directions.narrow(1, block, 1)  # (batch|1, 1, d_mod)
            out = out + mask * (row * scale)
        return out


def patchify(images: np.ndarray, patch: int) -> np.ndarray:
    b, h, w, c = images.shape
    g = h // patch
    return (
        images.reshape(b, g, patch, g, patch, c)
        .transpose(0, 1, 3, 2, 4, 5)
        .reshape(b, g * g, patch * patch * c)
    )


class MiniDiT:
    """Text-to-image denoiser over 16x16 synthetic scenes."""

    def __init__(self, config: DiTConfig, encoders: Encoders, seed: int = 0):
        self.cfg = config
        self.enc = encoders
        self.schedule = NoiseSchedule(config.timesteps, config.beta_start, config.beta_end)
        self.params = ParamStore()
        rng = np.random.default_rng(seed)
        c = config

        def init(name, shape, std):
            return self.params.add(name, std * rng.standard_normal(shape))

        init("text_proj", (encoders.text.d_txt, c.d_model), encoders.text.d_txt**-0.5)
        init("patch_embed", (c.patch_dim, c.d_model), c.patch_dim**-0.5)
        init("time_map", (c.d_time, c.d_mod), c.d_time**-0.5)
        for i in range(c.n_blocks):
            for head in ("attn", "ff"):
                init(f"block{i}/{head}_mod_w", (c.d_mod, 3 * c.d_model), 0.02)
                # bias layout [scale | shift | gate]: start at identity modulation
                self.params.add(
                    f"block{i}/{head}_mod_b",
                    np.concatenate([np.ones(c.d_model), np.zeros(c.d_model), np.ones(c.d_model)]),
                )
            for name in ("wq", "wk", "wv", "wo"):
                init(f"block{i}/{name}", (c.d_model, c.d_model), c.d_model**-0.5)
            hidden = c.ff_mult * c.d_model
            init(f"block{i}/ff_w1", (c.d_model, hidden), c.d_model**-0.5)
            self.params.add(f"block{i}/ff_b1", np.zeros(hidden))
            init(f"block{i}/ff_w2", (hidden, c.d_model), hidden**-0.5)
            self.params.add(f"block{i}/ff_b2", np.zeros(c.d_model))
        self.params.add("out_proj", np.zeros((c.d_model, c.patch_dim)))
        self.params.add("out_bias", np.zeros(c.patch_dim))

        g = c.image_size // c.patch
        pe = np.zeros((g * g, c.d_model))
        for gy in range(g):
            for gx in range(g):
                pe[gy * g + gx, : c.d_model // 2] = sinusoidal_embedding(gy, c.d_model // 2)
                pe[gy * g + gx, c.d_model // 2 :] = sinusoidal_embedding(gx, c.d_model // 2)
        self.image_pos = pe  # fixed, never trained

    # ---- modulation -----------------------------------------------------------

    def timestep_embedding(self, t: int) -> np.ndarray:
        """Sinusoidal features of t pushed through the trainable timestep map."""
        if not 0 <= t < self.cfg.timesteps:
            raise ValueError(f"timestep {t} outside [0, {self.cfg.timesteps})")
        return sinusoidal_embedding(t, self.cfg.d_time) @ self.params["time_map"].data

    def base_modulation(self, t_mapped: np.ndarray, prompt_mapped: np.ndarray) -> np.ndarray:
        """Shared conditioning vector: timestep term plus pooled-prompt term."""
        if t_mapped.shape != prompt_mapped.shape:
            raise ValueError("modulation term widths differ")
        return t_mapped + prompt_mapped

    def _base_batch(self, t: np.ndarray, prompts) -> Tensor:
        sin = np.stack([sinusoidal_embedding(int(ti), self.cfg.d_time) for ti in t])
        mapped_t = tensor(sin) @ self.params["time_map"]
        pooled = np.stack([self.enc.prompt_modulation(p) for p in prompts])
        return mapped_t + tensor(pooled)

    def new_state(self, t: np.ndarray, prompts) -> ModulationState:
        prompt_len = len(prompts[0])
        if prompt_len > self.cfg.max_prompt:
            raise ValueError(f"prompt length {prompt_len} > {self.cfg.max_prompt}")
        seq_len = prompt_len + self.cfg.n_image_tokens
        return ModulationState(self._base_batch(t, prompts), self.cfg.n_blocks,
                               prompt_len, seq_len)

    def adaln_modulate(self, tokens: Tensor, state: ModulationState, block: int,
                       head: str = "attn") -> Tensor:
        """gate(y) * (scale(y) * layer_norm(x) + shift(y)) per token."""
        if not 0 <= block < self.cfg.n_blocks:
            raise IndexError(f"block {block} out of range")
        return self._adaln_table(tokens, state.block_vectors(block), block, head)

    def _adaln_table(self, tokens: Tensor, table: Tensor, block: int, head: str) -> Tensor:
        return adaln(tokens, table,
                     self.params[f"block{block}/{head}_mod_w"],
                     self.params[f"block{block}/{head}_mod_b"])

    # ---- transformer -----------------------------------------------------------

    def _mha(self, x: Tensor, block: int) -> Tensor:
        c = self.cfg
        b, length = x.shape[0], x.shape[1]
        dh = c.d_model // c.heads

        def split(t):
            return t.reshape(b, length, c.heads, dh).transpose((0, 2, 1, 3))

        q = split(x @ self.params[f"block{block}/wq"])
        k = split(x @ self.params[f"block{block}/wk"])
        v = split(x @ self.params[f"block{block}/wv"])
        mixed = attention(q, k, v).transpose((0, 2, 1, 3)).reshape(b, length, c.d_model)
        return mixed @ self.params[f"block{block}/wo"]

    def joint_attention(self, tokens: Tensor, block: int) -> Tensor:
        """Self-attention over the full text+image sequence, residual added."""
        return tokens + self._mha(tokens, block)

    def _ff(self, x: Tensor, block: int) -> Tensor:
        h = gelu(x @ self.params[f"block{block}/ff_w1"] + self.params[f"block{block}/ff_b1"])
        return h @ self.params[f"block{block}/ff_w2"] + self.params[f"block{block}/ff_b2"]

    def _block(self, x: Tensor, table: Tensor, block: int) -> Tensor:
        x = x + self._mha(self._adaln_table(x, table, block, "attn"), block)
        x = x + self._ff(self._adaln_table(x, table, block, "ff"), block)
        return x

    # ---- denoising -------------------------------------------------------------

    def _embed_tokens(self, x_t: np.ndarray, prompts) -> Tensor:
        words = np.stack(
            [np.stack([self.enc.text.encode_word(w) for w in p]) for p in prompts]
        )
        text = tensor(words) @ self.params["text_proj"]
        patches = tensor(patchify(x_t, self.cfg.patch)) @ self.params["patch_embed"]
        image = patches + tensor(self.image_pos)
        return concat([text, image], axis=1)

    def forward(self, x_t: np.ndarray, prompts, state: ModulationState) -> Tensor:
        """Batched noise prediction; x_t is (batch, H, W, 3) in the [-1, 1] domain."""
        c = self.cfg
        x = self._embed_tokens(x_t, prompts)
        for i in range(c.n_blocks):
            x = self._block(x, state.block_vectors(i), i)
        image_tokens = layer_norm(x.narrow(1, state.prompt_len, c.n_image_tokens))
        out = image_tokens @ self.params["out_proj"] + self.params["out_bias"]
        g = c.image_size // c.patch
        return (
            out.reshape(x.shape[0], g, g, c.patch, c.patch, 3)
            .transpose((0, 1, 3, 2, 4, 5))
            .reshape(x.shape[0], c.image_size, c.image_size, 3)
        )

    def predict_noise(self, x_t: np.ndarray, t: int, prompt, concepts=(), scale: float = 1.0) -> np.ndarray:
        """Single-sample noise prediction with optional concept injections."""
        if not 0 <= t < self.cfg.timesteps:
            raise ValueError(f"timestep {t} outside [0, {self.cfg.timesteps})")
        ts = np.array([t])
        state = self.new_state(ts, [list(prompt)])
        for token_index, directions in concepts:
            state.apply_concept_directions(token_index, directions, scale)
        with no_grad():
            out = self.forward(x_t[None], [list(prompt)], state)
        return out.data[0]

    def sample(self, prompt, concepts=(), steps=None, seed: int = 0, scale: float = 1.0) -> np.ndarray:
        """Ancestral denoising from seeded noise; returns an image in [0, 1]."""
        return self.sample_batch([(list(prompt), list(concepts))], steps=steps,
                                 seeds=[seed], scale=scale)[0]

    def sample_batch(self, cases, steps=None, seeds=None, scale: float = 1.0) -> np.ndarray:
        """Each case is (prompt, [(token_index, directions), ...]); prompts equal length."""
        c = self.cfg
        steps = c.timesteps if steps is None else steps
        if not 1 <= steps <= c.timesteps:
            raise ValueError(f"steps must be in [1, {c.timesteps}]")
        prompts = [list(case[0]) for case in cases]
        rngs = [np.random.default_rng(s) for s in (seeds or range(len(cases)))]
        size = c.image_size
        x = np.stack([rng.standard_normal((size, size, 3)) for rng in rngs])
        timeline = np.rint(np.linspace(c.timesteps - 1, 0, steps)).astype(int)
        bars = self.schedule.alpha_bars
        for i, t in enumerate(timeline):
            ts = np.full(len(cases), t)
            state = self.new_state(ts, prompts)
            for b, (_, injections) in enumerate(cases):
                for token_index, directions in injections:
                    state.apply_concept_directions(token_index, directions, scale, sample=b)
            with no_grad():
                eps = self.forward(x, prompts, state).data
            a_t = bars[t]
            a_prev = bars[timeline[i + 1]] if i + 1 < steps else 1.0
            x0 = np.clip((x - np.sqrt(1.0 - a_t) * eps) / np.sqrt(a_t), -1.0, 1.0)
            if i + 1 < steps:
                sigma = np.sqrt((1.0 - a_prev) / (1.0 - a_t)) * np.sqrt(1.0 - a_t / a_prev)
                noise = np.stack([rng.standard_normal((size, size, 3)) for rng in rngs])
                lift = np.sqrt(max(1.0 - a_prev - sigma**2, 0.0))
                x = np.sqrt(a_prev) * x0 + lift * eps + sigma * noise
            else:
                x = x0
        return np.clip((x + 1.0) / 2.0, 0.0, 1.0)
