"""
Matching sound classes to visual signatures
===========================================

Half of the class list cannot be matched to an image-classifier label by
keyword alone, so labels are embedded as word vectors and matched by cosine
affinity. Each sound class keeps its top-k most similar visual labels as its
"visual signature"; an override file pins exact keyword matches first.
"""
import numpy as np

from avcurator.signature_matcher import (
    EmbeddingTable,
    affinity_matrix,
    embed_labels,
    propose_keyword_overrides,
    top_k_signature,
)

# A toy embedding space: a handful of concepts with hand-placed vectors.
# Real runs load a word2vec text file with thousands of tokens.
rng = np.random.default_rng(0)
concepts = ["violin", "guitar", "cello", "hail", "snow", "storm", "rain",
            "lightning", "dog", "cat"]
vectors = {}
for i, token in enumerate(concepts):
    base = np.zeros(12)
    base[i] = 1.0
    vectors[token] = base
# related words share direction components
vectors["snow"] += 0.8 * vectors["hail"]
vectors["storm"] += 0.6 * vectors["hail"]
vectors["rain"] += 0.5 * vectors["hail"]
vectors["lightning"] += 0.4 * vectors["hail"]
vectors["cello"] += 0.6 * vectors["violin"]
vectors["guitar"] += 0.5 * vectors["violin"]
table = EmbeddingTable(dimension=12, vectors=vectors)

sound_labels = ["playing violin", "hail"]
visual_labels = ["violin", "guitar", "cello", "snow", "storm", "rain", "lightning",
                 "dog", "cat"]

S, embedded_sound = embed_labels(sound_labels, table)
O, embedded_visual = embed_labels(visual_labels, table)
affinity = affinity_matrix(S, O, embedded_sound, embedded_visual)
print(f"affinity matrix: {affinity.values.shape[0]} sound x "
      f"{affinity.values.shape[1]} visual labels")

# Keyword overrides are proposed automatically, then reviewed by hand.
overrides = propose_keyword_overrides(sound_labels, visual_labels)
print("auto-proposed overrides:", overrides)

for label in sound_labels:
    signature = top_k_signature(affinity, label, k=4, keyword_overrides=overrides)
    print(f"signature[{label!r}] = {signature}")

# "playing violin" pins "violin" first through the override; "hail" has no
# direct match and relies purely on embedding affinity.
assert top_k_signature(affinity, "playing violin", k=4, keyword_overrides=overrides)[0] == "violin"
weather = top_k_signature(affinity, "hail", k=4)
assert set(weather) <= {"snow", "storm", "rain", "lightning"}
print("signatures behave as expected: OK")
