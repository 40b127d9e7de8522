"""
A tour of the neighborhood generators
=====================================

Every generator answers the same question: give me points near x* that
still look like the data the black box was trained on. This script draws
from each one and prints what makes it different.
"""

import numpy as np
from scipy.spatial import cKDTree

from melime.core import Dataset, Instance, TokenInstance
from melime.experiments import load_toy_embeddings
from melime.generators import (
    KdeGenerator,
    KdePcaGenerator,
    VaeGenerator,
    Word2VecGenerator,
    identity_codec,
)

rng = np.random.default_rng(0)

# training data living on a curved strip, not a box
t = rng.uniform(-2.0, 2.0, 800)
strip = np.column_stack([t, t**2 + rng.normal(0.0, 0.05, 800)])
train = Dataset(strip, ("a", "b"))
x_star = Instance((1.0, 1.0), ("a", "b"))

# the rule-of-thumb bandwidth is wider than this curved strip wants
kde = KdeGenerator(train, h=0.1)
samples, _ = kde.sample_batch(x_star, r=0.5, n=2000, rng=np.random.default_rng(1))
xs = np.stack([s.values for s in samples])
nearest = cKDTree(train.x)
box = np.random.default_rng(1).uniform(-0.5, 0.5, (2000, 2)) + x_star.values
print("kde: mean distance to the nearest training point =",
      round(float(nearest.query(xs)[0].mean()), 3))
print("box: same radius, ignoring the data              =",
      round(float(nearest.query(box)[0].mean()), 3))
print()

# three recorded features, but the third is a copy of the first
redundant = np.column_stack([strip[:, 0], strip[:, 1], strip[:, 0]])
kdepca = KdePcaGenerator(Dataset(redundant, ("a", "b", "a2")), m=2)
samples, _ = kdepca.sample_batch(Instance((1.0, 1.0, 1.0)), r=0.5, n=2000,
                                 rng=np.random.default_rng(2))
xs = np.stack([s.values for s in samples])
print("kdepca: kept", kdepca.pca.m, "of 3 directions")
print("kdepca: max |a2 - a| over decoded samples =",
      round(float(np.max(np.abs(xs[:, 2] - xs[:, 0]))), 12))
print()

# a codec generator perturbs the latent code, here the identity
vae = VaeGenerator(identity_codec(2))
samples, _ = vae.sample_batch(x_star, r=0.3, n=2000, rng=np.random.default_rng(3))
offsets = np.stack([s.values for s in samples]) - x_star.values
print("vae: offsets fill the cube, max |offset| =",
      round(float(np.max(np.abs(offsets))), 4), "(r = 0.3)")
print()

# token data: swap one word for an embedding neighbor
table = load_toy_embeddings()
w2v = Word2VecGenerator(table)
sentence = TokenInstance(("the", "food", "was", "superb"))
samples, positions = w2v.sample_batch(sentence, r=1.2, n=8, rng=np.random.default_rng(4))
print("word2vec: neighbors of 'superb' within 1.2:",
      sorted(table.neighbors("superb", 1.2)))
for s, j in zip(samples, positions):
    print("word2vec: position", j, "->", " ".join(s.tokens))
