"""Procedural synthetic concept scenes with exact ground-truth annotations.

A scene composes four independently controllable factors: a solid-color
object shape, a periodic background texture, a global color tone, and a
directional light gradient. Every factor is analytically recoverable from
the rendered pixels, which is what grounds concept-preservation scoring.
The caption templater doubles as the ground-truth stand-in for an image
captioner: it knows the attributes exactly, so attribute captions are
noise-free.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .modk import decode_text, encode_text, read_modk, write_modk

SHAPES = ("circle", "square", "triangle", "cross")
COLORS = ("red", "blue", "yellow", "white")
TEXTURES = ("stripes", "checker", "dots", "plain")
TONES = ("warm", "cool", "green", "neutral")
LIGHTS = ("left", "right", "top", "bottom")

CATEGORIES = ("shape", "texture", "tone", "light")
CATEGORY_VALUES = {"shape": SHAPES, "texture": TEXTURES, "tone": TONES, "light": LIGHTS}

COLOR_RGB = {
    "red": (0.90, 0.10, 0.10),
    "blue": (0.10, 0.20, 0.90),
    "yellow": (0.90, 0.85, 0.10),
    "white": (0.95, 0.95, 0.95),
}
TONE_MULT = {
    "warm": (1.25, 1.00, 0.75),
    "cool": (0.75, 1.00, 1.25),
    "green": (0.80, 1.25, 0.80),
    "neutral": (1.00, 1.00, 1.00),
}
LIGHT_LO, LIGHT_HI = 0.55, 1.0

# default held-out tone/texture combinations: never generated for training,
# used to build evaluation scenes the model cannot have memorized
DEFAULT_HOLDOUT = (("warm", "dots"), ("cool", "plain"), ("green", "stripes"), ("neutral", "checker"))


@dataclass(frozen=True)
class SceneSpec:
    shape: str
    color: str
    texture: str
    tone: str
    light: str
    placement: int = 0

    def validate(self):
        for value, allowed in ((self.shape, SHAPES), (self.color, COLORS),
                               (self.texture, TEXTURES), (self.tone, TONES),
                               (self.light, LIGHTS)):
            if value not in allowed:
                raise ValueError(f"{value!r} not in {allowed}")
        return self


@dataclass(frozen=True)
class ConceptAnnotation:
    category: str
    concept_word: str
    token_index: int
    attribute_words: tuple
    attribute_indices: tuple = ()

    @property
    def positive_words(self) -> tuple:
        """Attribute words followed by the concept word."""
        return self.attribute_words + (self.concept_word,)


@dataclass
class ToySample:
    image: np.ndarray
    caption: list
    annotations: list
    spec: SceneSpec


def texture_field(texture: str, size: int) -> np.ndarray:
    """Background luminance before lighting and tint, values around 0.5."""
    y, x = np.mgrid[0:size, 0:size].astype(np.float64)
    if texture == "stripes":
        return 0.5 + 0.26 * np.cos(2 * np.pi * x / 8.0)
    if texture == "checker":
        return 0.5 + 0.26 * np.cos(2 * np.pi * x / 8.0) * np.cos(2 * np.pi * y / 8.0)
    if texture == "dots":
        dx = np.minimum(x % 4, 4 - x % 4)
        dy = np.minimum(y % 4, 4 - y % 4)
        return 0.38 + 0.37 * np.exp(-(dx * dx + dy * dy) / 1.2)
    if texture == "plain":
        return np.full((size, size), 0.5)
    raise ValueError(f"unknown texture {texture!r}")


def light_field(light: str, size: int) -> np.ndarray:
    """Multiplicative brightness ramp toward the named side."""
    ramp = np.linspace(LIGHT_HI, LIGHT_LO, size)
    if light == "left":
        return np.tile(ramp, (size, 1))
    if light == "right":
        return np.tile(ramp[::-1], (size, 1))
    if light == "top":
        return np.tile(ramp[:, None], (1, size))
    if light == "bottom":
        return np.tile(ramp[::-1][:, None], (1, size))
    raise ValueError(f"unknown light {light!r}")


def shape_mask(shape: str, size: int, jitter=(0, 0)) -> np.ndarray:
    cy, cx = size // 2 + jitter[0], size // 2 + jitter[1]
    y, x = np.mgrid[0:size, 0:size]
    dy, dx = y - cy, x - cx
    if shape == "circle":
        return dy * dy + dx * dx <= 16
    if shape == "square":
        return (np.abs(dy) <= 3) & (np.abs(dx) <= 3)
    if shape == "triangle":
        return (dy >= -4) & (dy <= 3) & (np.abs(dx) <= (dy + 4) * 0.75)
    if shape == "cross":
        return ((np.abs(dx) <= 1) & (np.abs(dy) <= 4)) | ((np.abs(dy) <= 1) & (np.abs(dx) <= 4))
    raise ValueError(f"unknown shape {shape!r}")


NOISE_STD = 0.005  # grain floor: makes renders unique without moving any probe


def placement_jitter(placement: int):
    rng = np.random.default_rng(np.uint64(placement))
    return tuple(int(v) for v in rng.integers(-2, 3, size=2))


def render_scene(spec: SceneSpec, seed=None, size: int = 16) -> np.ndarray:
    """Deterministic raster of a scene; identical bytes for identical inputs."""
    spec.validate()
    placement = spec.placement if seed is None else seed
    lum = texture_field(spec.texture, size)
    rgb = np.repeat(lum[:, :, None], 3, axis=2)
    mask = shape_mask(spec.shape, size, placement_jitter(placement))
    rgb[mask] = COLOR_RGB[spec.color]
    rgb *= light_field(spec.light, size)[:, :, None]
    rgb *= np.asarray(TONE_MULT[spec.tone])
    grain = np.random.default_rng(np.uint64(placement) ^ np.uint64(0xA5A5A5A5))
    rgb += NOISE_STD * grain.standard_normal(rgb.shape)
    return np.clip(rgb, 0.0, 1.0)


def caption(spec: SceneSpec):
    """Fixed 12-word template plus the four concept token positions."""
    words = ["a", spec.color, spec.shape, "on", spec.texture, "texture",
             "with", spec.tone, "tone", "and", spec.light, "light"]
    annotations = [
        ConceptAnnotation("shape", spec.shape, 2, (spec.color,), (1,)),
        ConceptAnnotation("texture", "texture", 5, (spec.texture,), (4,)),
        ConceptAnnotation("tone", "tone", 8, (spec.tone,), (7,)),
        ConceptAnnotation("light", "light", 11, (spec.light,), (10,)),
    ]
    return words, annotations


def attribute_caption(spec: SceneSpec, concept_word: str):
    """Ground-truth attribute description of one concept: attributes + word."""
    for ann in caption(spec)[1]:
        if ann.concept_word == concept_word:
            return list(ann.positive_words)
    raise ValueError(f"concept word {concept_word!r} not present in spec {spec}")


def make_sample(spec: SceneSpec, size: int = 16) -> ToySample:
    words, annotations = caption(spec)
    return ToySample(render_scene(spec, size=size), words, annotations, spec)


def random_spec(rng: np.random.Generator, exclude=()) -> SceneSpec:
    excluded = set(exclude)
    while True:
        spec = SceneSpec(
            shape=SHAPES[rng.integers(4)],
            color=COLORS[rng.integers(4)],
            texture=TEXTURES[rng.integers(4)],
            tone=TONES[rng.integers(4)],
            light=LIGHTS[rng.integers(4)],
            placement=int(rng.integers(0, 2**31)),
        )
        if (spec.tone, spec.texture) not in excluded:
            return spec


def _spec_to_json(spec: SceneSpec) -> str:
    return json.dumps({
        "shape": spec.shape, "color": spec.color, "texture": spec.texture,
        "tone": spec.tone, "light": spec.light, "placement": spec.placement,
    }, sort_keys=True)


def _spec_from_json(text: str) -> SceneSpec:
    return SceneSpec(**json.loads(text))


def gen_dataset(n: int, seed: int, path, size: int = 16, exclude=()) -> None:
    """Write n independently seeded samples to a MODK container."""
    if n < 1:
        raise ValueError(f"dataset size must be >= 1, got {n}")
    sections = {
        "meta/count": np.array([n], dtype=np.int64),
        "meta/seed": np.array([seed], dtype=np.int64),
        "meta/size": np.array([size], dtype=np.int64),
    }
    for i in range(n):
        rng = np.random.default_rng([seed, i])
        spec = random_spec(rng, exclude=exclude)
        sample = make_sample(spec, size=size)
        sections[f"sample_{i:05d}/image"] = sample.image
        sections[f"sample_{i:05d}/caption"] = encode_text(" ".join(sample.caption))
        sections[f"sample_{i:05d}/spec"] = encode_text(_spec_to_json(spec))
    write_modk(path, sections)


def load_dataset(path):
    sections = read_modk(path)
    n = int(sections["meta/count"][0])
    samples = []
    for i in range(n):
        spec = _spec_from_json(decode_text(sections[f"sample_{i:05d}/spec"]))
        image = sections[f"sample_{i:05d}/image"]
        words, annotations = caption(spec)
        stored = decode_text(sections[f"sample_{i:05d}/caption"]).split(" ")
        if stored != words:
            raise ValueError(f"sample {i}: caption/spec mismatch in container")
        samples.append(ToySample(image, words, annotations, spec))
    return samples
