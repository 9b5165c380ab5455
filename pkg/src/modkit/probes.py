"""Analytic attribute probes for synthetic scenes.

Each probe inverts one rendering factor: color tone from channel-mean
ratios, light from a least-squares brightness plane, texture from
normalized correlation against the pattern templates, and the object by
template match over shapes and positions. Object pixels are excluded from
the global-factor probes, so a red object does not read as a warm tone.
"""

from __future__ import annotations

import numpy as np

from .scenes import (
    COLOR_RGB,
    COLORS,
    LIGHTS,
    SHAPES,
    TEXTURES,
    TONE_MULT,
    TONES,
    light_field,
    shape_mask,
    texture_field,
)

PLAIN_SCORE = 0.30  # a patterned texture must beat this correlation to win
JITTER_RANGE = 3    # object search radius in pixels, wider than render jitter


def _luminance(image):
    return image.mean(axis=2)


def _tone_scores(image, keep):
    mean = image[keep].mean(axis=0)
    mean = np.maximum(mean, 1e-9)
    logm = np.log(mean) - np.log(mean).mean()
    scores = []
    for tone in TONES:
        ref = np.log(np.asarray(TONE_MULT[tone]))
        ref = ref - ref.mean()
        scores.append(-float(np.sum((logm - ref) ** 2)))
    return scores


def _plane_fit(lum, keep):
    """Least-squares a*x + b*y + c over the kept pixels; returns (a, b)."""
    size = lum.shape[0]
    y, x = np.mgrid[0:size, 0:size].astype(np.float64)
    design = np.stack([x[keep], y[keep], np.ones(keep.sum())], axis=1)
    coef, *_ = np.linalg.lstsq(design, lum[keep], rcond=None)
    return coef[0], coef[1], coef


def _light_scores(lum, keep):
    a, b, _ = _plane_fit(lum, keep)
    return [-a, a, -b, b]  # brighter left / right / top / bottom


def _texture_scores(lum, keep):
    size = lum.shape[0]
    a, b, coef = _plane_fit(lum, keep)
    y, x = np.mgrid[0:size, 0:size].astype(np.float64)
    resid = lum - (coef[0] * x + coef[1] * y + coef[2])
    resid = resid[keep] - resid[keep].mean()
    rnorm = np.sqrt(np.sum(resid**2)) + 1e-12
    scores = []
    for texture in TEXTURES:
        if texture == "plain":
            scores.append(PLAIN_SCORE)
            continue
        tpl = texture_field(texture, size)[keep]
        tpl = tpl - tpl.mean()
        tnorm = np.sqrt(np.sum(tpl**2)) + 1e-12
        scores.append(float(np.sum(resid * tpl)) / (rnorm * tnorm))
    return scores


def _argmax(scores, values):
    return values[int(np.argmax(scores))]  # np.argmax keeps enumeration order on ties


def _background_estimate(image):
    """First-pass tone/light/texture from all pixels (object still included)."""
    keep = np.ones(image.shape[:2], dtype=bool)
    lum = _luminance(image)
    tone = _argmax(_tone_scores(image, keep), TONES)
    light = _argmax(_light_scores(lum, keep), LIGHTS)
    texture = _argmax(_texture_scores(lum, keep), TEXTURES)
    return tone, light, texture


def detect_object(image):
    """Template match over shapes and positions; returns (shape, color, mask)."""
    size = image.shape[0]
    tone, light, texture = _background_estimate(image)
    background = np.repeat(texture_field(texture, size)[:, :, None], 3, axis=2)
    background *= light_field(light, size)[:, :, None]
    background *= np.asarray(TONE_MULT[tone])
    resid = np.sqrt(((image - np.clip(background, 0, 1)) ** 2).sum(axis=2))

    best, best_score = None, -np.inf
    for shape in SHAPES:
        for jy in range(-JITTER_RANGE, JITTER_RANGE + 1):
            for jx in range(-JITTER_RANGE, JITTER_RANGE + 1):
                mask = shape_mask(shape, size, (jy, jx))
                score = resid[mask].mean() - resid[~mask].mean()
                if score > best_score:
                    best, best_score = (shape, mask), score
    shape, mask = best

    # undo lighting and tint inside the mask, then match hue direction
    correction = light_field(light, size)[:, :, None] * np.asarray(TONE_MULT[tone])
    flat = (image / np.maximum(correction, 1e-9))[mask].mean(axis=0)
    flat = flat / (np.linalg.norm(flat) + 1e-12)
    color_scores = [
        float(flat @ (np.asarray(COLOR_RGB[c]) / np.linalg.norm(COLOR_RGB[c])))
        for c in COLORS
    ]
    return shape, _argmax(color_scores, COLORS), mask


def probe_attribute(image, category: str) -> str:
    """Recover the named factor's value from pixels alone."""
    if category not in ("shape", "texture", "tone", "light"):
        raise ValueError(f"unknown probe category {category!r}")
    shape, _, mask = detect_object(image)
    if category == "shape":
        return shape
    keep = ~mask
    if category == "tone":
        return _argmax(_tone_scores(image, keep), TONES)
    if category == "light":
        return _argmax(_light_scores(_luminance(image), keep), LIGHTS)
    return _argmax(_texture_scores(_luminance(image), keep), TEXTURES)


def probe_object_color(image) -> str:
    """Color of the detected object; the concept-preservation check for objects."""
    return detect_object(image)[1]


def probe_concept(image, category: str) -> str:
    """Attribute word the given concept category realizes in the image."""
    if category == "shape":
        return probe_object_color(image)
    return probe_attribute(image, category)
