"""Parameter-free expert routing by k-means over concept-word features.

The cluster table is fitted once over the training vocabulary's neutral
features and is immutable afterwards: training never moves a concept to a
different expert, and unseen concept words route to the nearest centroid
at inference with no tuning.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .modk import decode_text, encode_text


def _nearest(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    d2 = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    return d2.argmin(axis=1)  # argmin breaks ties toward the lowest index


def kmeans_fit(points: np.ndarray, k: int, seed: int = 0, max_iter: int = 100):
    """Seeded k-means++ then Lloyd iteration to an assignment fixpoint.

    Returns (centroids, labels). Requires at least k points.
    """
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if n < k:
        raise ValueError(f"need at least {k} points, got {n}")
    rng = np.random.default_rng(seed)

    centroids = np.empty((k, points.shape[1]))
    centroids[0] = points[rng.integers(n)]
    for j in range(1, k):
        d2 = ((points[:, None, :] - centroids[None, :j, :]) ** 2).sum(axis=2).min(axis=1)
        total = d2.sum()
        if total <= 0.0:  # all remaining points coincide with chosen centroids
            centroids[j] = points[rng.integers(n)]
            continue
        centroids[j] = points[rng.choice(n, p=d2 / total)]

    labels = _nearest(points, centroids)
    for _ in range(max_iter):
        for j in range(k):
            member = labels == j
            if member.any():
                centroids[j] = points[member].mean(axis=0)
            else:
                # deterministic re-seed: farthest point from its centroid
                far = ((points - centroids[labels]) ** 2).sum(axis=1).argmax()
                centroids[j] = points[far]
        new_labels = _nearest(points, centroids)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return centroids, labels


class RoutingTable:
    """Frozen centroids plus the concept-word -> expert assignment."""

    def __init__(self, centroids: np.ndarray, word_to_expert: dict):
        self.centroids = np.asarray(centroids, dtype=np.float64)
        self.word_to_expert = dict(word_to_expert)
        owned = set(self.word_to_expert.values())
        if owned != set(range(len(self.centroids))):
            raise ValueError(
                f"every expert needs at least one training cluster; owned: {sorted(owned)}"
            )

    @classmethod
    def fit(cls, neutral_features: dict, k: int, seed: int = 0) -> "RoutingTable":
        """Cluster the neutral features of all training concept words."""
        words = sorted(neutral_features)
        points = np.stack([neutral_features[w] for w in words])
        centroids, labels = kmeans_fit(points, k, seed=seed)
        return cls(centroids, {w: int(l) for w, l in zip(words, labels)})

    @property
    def n_experts(self) -> int:
        return len(self.centroids)

    def route(self, neutral: np.ndarray) -> int:
        """Nearest centroid in squared Euclidean distance; ties to lowest index."""
        return int(_nearest(np.asarray(neutral)[None, :], self.centroids)[0])

    def route_word(self, word: str) -> int:
        """Training words use the stored map; it equals nearest-centroid by construction."""
        if word in self.word_to_expert:
            return self.word_to_expert[word]
        raise KeyError(f"word {word!r} was not in the routing fit; route its feature instead")

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.centroids, dtype="<f8").tobytes())
        for word in sorted(self.word_to_expert):
            h.update(f"{word}={self.word_to_expert[word]};".encode("utf-8"))
        return h.hexdigest()

    # ---- persistence ----------------------------------------------------------

    def state_arrays(self, prefix: str = "routing/") -> dict:
        words = sorted(self.word_to_expert)
        return {
            prefix + "centroids": self.centroids.copy(),
            prefix + "words": encode_text("\n".join(words)),
            prefix + "experts": np.array([self.word_to_expert[w] for w in words], dtype=np.int64),
        }

    @classmethod
    def from_state(cls, sections: dict, prefix: str = "routing/") -> "RoutingTable":
        words = decode_text(sections[prefix + "words"]).split("\n")
        experts = sections[prefix + "experts"]
        return cls(sections[prefix + "centroids"], dict(zip(words, (int(e) for e in experts))))
