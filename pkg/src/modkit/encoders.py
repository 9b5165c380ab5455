"""Frozen deterministic encoders standing in for a pretrained vision-language stack.

Design constraint: prompt pooling is an unnormalized sum of per-word vectors
and the modulation-space map is linear with zero bias, so for any prompt the
identity  map(pool(base + attrs)) - map(pool(base)) == map(pool(attrs))
holds to machine precision. Direction arithmetic downstream is checked
against that exact identity.
"""

from __future__ import annotations

from importlib import resources

import numpy as np

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
MASK64 = (1 << 64) - 1


def fnv1a64(data: bytes) -> int:
    """Stable 64-bit FNV-1a; identical on every platform."""
    h = FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * FNV_PRIME) & MASK64
    return h


def word_seed(word: str, seed: int) -> int:
    return (fnv1a64(word.encode("utf-8")) ^ ((seed * 0x9E3779B97F4A7C15) & MASK64)) & MASK64


def sinusoidal_embedding(pos: float, dim: int, base: float = 10000.0) -> np.ndarray:
    """Interleaved [sin(p*w_k), cos(p*w_k)] with w_k = base^(-2k/dim)."""
    if dim % 2 != 0:
        raise ValueError(f"embedding dim must be even, got {dim}")
    freqs = base ** (-2.0 * np.arange(dim // 2) / dim)
    out = np.empty(dim)
    out[0::2] = np.sin(pos * freqs)
    out[1::2] = np.cos(pos * freqs)
    return out


class Vocabulary:
    """Ordered set of lowercase words with contiguous indices."""

    def __init__(self, words):
        self.words = list(words)
        if len(set(self.words)) != len(self.words):
            raise ValueError("vocabulary contains duplicate words")
        for w in self.words:
            if w != w.lower() or not w:
                raise ValueError(f"vocabulary words must be non-empty lowercase: {w!r}")
        self.index = {w: i for i, w in enumerate(self.words)}

    @classmethod
    def from_file(cls, path) -> "Vocabulary":
        with open(path, encoding="utf-8") as fh:
            words = [line.strip() for line in fh if line.strip()]
        return cls(words)

    def __len__(self):
        return len(self.words)

    def __contains__(self, word):
        return word in self.index

    def require(self, word: str) -> int:
        if word not in self.index:
            raise KeyError(f"word not in vocabulary: {word!r}")
        return self.index[word]


def default_vocabulary() -> Vocabulary:
    with resources.files("modkit").joinpath("vocab.txt").open(encoding="utf-8") as fh:
        return Vocabulary([line.strip() for line in fh if line.strip()])


class TextEncoder:
    """Per-word frozen vectors keyed on a stable hash of the word string."""

    def __init__(self, vocab: Vocabulary, d_txt: int = 64, seed: int = 0):
        self.vocab = vocab
        self.d_txt = d_txt
        self.seed = seed
        self.vectors = np.stack(
            [
                np.random.default_rng(word_seed(w, seed)).standard_normal(d_txt)
                for w in vocab.words
            ]
        )

    def encode_word(self, word: str) -> np.ndarray:
        return self.vectors[self.vocab.require(word)]

    def encode_prompt_pooled(self, prompt) -> np.ndarray:
        """Unnormalized sum of word vectors; [] pools to the zero vector."""
        pooled = np.zeros(self.d_txt)
        for word in prompt:
            pooled += self.encode_word(word)
        return pooled


class ImageEncoder:
    """Frozen per-patch linear projection of raw pixels, no bias."""

    def __init__(self, patch: int = 4, d_img: int = 48, seed: int = 0):
        self.patch = patch
        self.d_img = d_img
        fan_in = patch * patch * 3
        rng = np.random.default_rng(word_seed("image-encoder", seed))
        self.proj = rng.standard_normal((fan_in, d_img)) / np.sqrt(fan_in)

    def encode_image_patches(self, image: np.ndarray) -> np.ndarray:
        h, w, c = image.shape
        p = self.patch
        if c != 3 or h % p or w % p:
            raise ValueError(f"image shape {image.shape} not divisible into {p}x{p} RGB patches")
        patches = (
            image.reshape(h // p, p, w // p, p, 3)
            .transpose(0, 2, 1, 3, 4)
            .reshape(-1, p * p * 3)
        )
        return patches @ self.proj


class MappingLayer:
    """Frozen zero-bias linear map from text space into the modulation space."""

    def __init__(self, d_txt: int = 64, d_mod: int = 32, seed: int = 0):
        self.d_txt = d_txt
        self.d_mod = d_mod
        rng = np.random.default_rng(word_seed("mapping-layer", seed))
        self.weight = rng.standard_normal((d_txt, d_mod)) / np.sqrt(d_txt)

    def __call__(self, v: np.ndarray) -> np.ndarray:
        if v.shape[-1] != self.d_txt:
            raise ValueError(f"expected width {self.d_txt}, got {v.shape}")
        return v @ self.weight


class Encoders:
    """The frozen encoder bundle shared by the backbone and the adapter."""

    def __init__(self, vocab: Vocabulary, d_txt=64, d_img=48, d_mod=32, patch=4, seed=0):
        self.vocab = vocab
        self.text = TextEncoder(vocab, d_txt=d_txt, seed=seed)
        self.image = ImageEncoder(patch=patch, d_img=d_img, seed=seed)
        self.mapping = MappingLayer(d_txt=d_txt, d_mod=d_mod, seed=seed)

    def map_to_modspace(self, v: np.ndarray) -> np.ndarray:
        return self.mapping(v)

    def neutral_feature(self, concept_word: str) -> np.ndarray:
        """Modulation-space embedding of the bare concept word."""
        return self.mapping(self.text.encode_prompt_pooled([concept_word]))

    def prompt_modulation(self, prompt) -> np.ndarray:
        """Modulation-space embedding of a pooled prompt."""
        return self.mapping(self.text.encode_prompt_pooled(prompt))

    def state_bytes(self) -> bytes:
        """Canonical byte serialization of every frozen buffer, for freeze checks."""
        parts = ["\n".join(self.vocab.words).encode("utf-8")]
        for arr in (self.text.vectors, self.image.proj, self.mapping.weight):
            parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        return b"".join(parts)
