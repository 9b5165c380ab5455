"""Direction arithmetic in the modulation space, and k-means concept routing.

The frozen encoders make attribute directions exactly contrastive:
map(pool(attribute + word)) - map(pool(word)) equals map(pool(attribute)).
That identity is what the adapter's outputs are measured against.

Run:  python3 demos/03_direction_algebra.py
"""

import numpy as np

from modkit import Encoders, RoutingTable, default_vocabulary

enc = Encoders(default_vocabulary(), seed=0)

positive = enc.prompt_modulation(["warm", "tone"])
neutral = enc.prompt_modulation(["tone"])
direction = enc.prompt_modulation(["warm"])
print("contrastive identity residual:",
      float(np.abs((positive - neutral) - direction).max()))

words = ["circle", "square", "triangle", "cross", "texture", "tone", "light"]
features = {w: enc.neutral_feature(w) for w in words}
table = RoutingTable.fit(features, k=4, seed=0)
print("\nconcept word -> expert")
for w in words:
    print(f"  {w:10s} -> {table.word_to_expert[w]}")

print("\nunseen word 'surface' routes to expert",
      table.route(enc.neutral_feature("surface")))

norms = {w: float(np.linalg.norm(features[w])) for w in words}
print("\nneutral feature norms:", {w: round(n, 2) for w, n in norms.items()})
