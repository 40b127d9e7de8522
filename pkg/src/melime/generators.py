"""Neighborhood generators that sample around x* without leaving the data manifold.

Four strategies, all fitted on the black box's training features:

* kernel-density sampling restricted to training points within radius r;
* the same in a PCA latent space, decoded back through the retained
  components;
* latent-cube perturbation through a pluggable encode/decode codec (the
  in-repo codec is a linear autoencoder on the principal subspace);
* token substitution from an embedding table's r-neighborhoods for text.

Every sampler takes an explicit ``numpy.random.Generator`` so identical
seeds reproduce identical samples. Fitted models are immutable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import (
    Dataset,
    DimensionMismatch,
    Instance,
    NeighborhoodEmpty,
    OutOfVocabulary,
    TokenInstance,
)

__all__ = [
    "KdeModel",
    "kde_fit",
    "kde_sample",
    "kde_sample_batch",
    "PcaModel",
    "pca_fit",
    "pca_encode",
    "pca_inverse",
    "kdepca_sample",
    "LatentCodec",
    "identity_codec",
    "linear_autoencoder_codec",
    "vae_sample",
    "EmbeddingTable",
    "load_embeddings",
    "save_embeddings",
    "word2vec_sample",
    "KdeGenerator",
    "KdePcaGenerator",
    "VaeGenerator",
    "Word2VecGenerator",
    "kde_model_to_json",
    "kde_model_from_json",
    "pca_model_to_json",
    "pca_model_from_json",
]


# ---------------------------------------------------------------------------
# kernel density generator


@dataclass(frozen=True)
class KdeModel:
    """Gaussian kernel density estimate with a single isotropic bandwidth."""

    train: Dataset
    h: float

    def __post_init__(self):
        if self.h <= 0:
            raise ValueError(f"bandwidth must be positive, got {self.h}")


def scott_bandwidth(x: np.ndarray) -> float:
    """Scott's rule with a pooled scale: n^(-1/(d+4)) times the root-mean
    per-feature sample standard deviation."""
    n, d = x.shape
    if n < 2:
        return 1.0
    pooled = float(np.sqrt(np.mean(np.var(x, axis=0, ddof=1))))
    if pooled == 0.0:
        pooled = 1.0
    return n ** (-1.0 / (d + 4)) * pooled


def kde_fit(train: Dataset, h: float | None = None) -> KdeModel:
    """Fit the density model; when h is omitted it is set by Scott's rule."""
    if h is None:
        h = scott_bandwidth(train.x)
    elif h <= 0:
        raise ValueError(f"bandwidth must be positive, got {h}")
    return KdeModel(train=train, h=float(h))


def _neighborhood(train_x: np.ndarray, center: np.ndarray, r: float) -> np.ndarray:
    """Indices of training points within Euclidean distance r of the center."""
    dists = np.linalg.norm(train_x - center, axis=1)
    idx = np.flatnonzero(dists <= r)
    if idx.size == 0:
        raise NeighborhoodEmpty(dists.min())
    return idx


def kde_sample(model: KdeModel, x_star: Instance, r: float, rng: np.random.Generator) -> Instance:
    """Draw one sample: pick a training point within r of x* uniformly, then
    perturb it with the Gaussian kernel."""
    if r < 0:
        raise ValueError("radius must be non-negative")
    if x_star.d != model.train.d:
        raise DimensionMismatch(
            f"x_star has {x_star.d} features, training data has {model.train.d}"
        )
    idx = _neighborhood(model.train.x, x_star.values, r)
    anchor = model.train.x[idx[rng.integers(idx.size)]]
    values = anchor + model.h * rng.standard_normal(model.train.d)
    return Instance(values, model.train.feature_names)


def kde_sample_batch(
    model: KdeModel, x_star: Instance, r: float, n: int, rng: np.random.Generator
) -> np.ndarray:
    """Vectorized n-sample version of :func:`kde_sample`; returns an (n, d) array."""
    if r < 0:
        raise ValueError("radius must be non-negative")
    idx = _neighborhood(model.train.x, x_star.values, r)
    anchors = model.train.x[idx[rng.integers(idx.size, size=n)]]
    return anchors + model.h * rng.standard_normal((n, model.train.d))


# ---------------------------------------------------------------------------
# PCA and latent-space generator


@dataclass(frozen=True)
class PcaModel:
    """Mean vector plus the top-m orthonormal principal directions."""

    mean: np.ndarray
    components: np.ndarray  # (m, d), orthonormal rows
    eigenvalues: np.ndarray  # (m,), non-increasing

    def __post_init__(self):
        gram = self.components @ self.components.T
        if not np.allclose(gram, np.eye(self.m), atol=1e-8):
            raise ValueError("principal directions must be orthonormal")
        if np.any(np.diff(self.eigenvalues) > 1e-12):
            raise ValueError("eigenvalues must be sorted non-increasing")

    @property
    def m(self) -> int:
        return int(self.components.shape[0])

    @property
    def d(self) -> int:
        return int(self.components.shape[1])


def pca_fit(
    train: Dataset,
    m: int | None = None,
    variance_threshold: float | None = None,
) -> PcaModel:
    """Principal directions of the mean-centered training data.

    Exactly one of ``m`` (latent dimension) and ``variance_threshold``
    (smallest dimension whose cumulative explained-variance ratio reaches the
    threshold) must be given.
    """
    if (m is None) == (variance_threshold is None):
        raise ValueError("give exactly one of m and variance_threshold")
    if train.n < 2:
        raise ValueError("PCA needs at least 2 samples")

    mean = train.x.mean(axis=0)
    centered = train.x - mean
    # SVD of the centered data: rows of vt are the principal directions
    _, svals, vt = np.linalg.svd(centered, full_matrices=False)
    variances = svals**2 / (train.n - 1)

    if m is not None:
        if not 1 <= m <= train.d:
            raise ValueError(f"latent dimension must be in [1, {train.d}], got {m}")
        keep = m
    else:
        if not 0 < variance_threshold <= 1:
            raise ValueError(f"variance threshold must be in (0, 1], got {variance_threshold}")
        total = variances.sum()
        if total == 0:
            keep = 1
        else:
            ratios = np.cumsum(variances) / total
            keep = int(np.searchsorted(ratios, variance_threshold - 1e-12) + 1)
            keep = min(keep, len(variances))

    components = vt[:keep].copy()
    # canonical sign: the largest-magnitude entry of each direction is positive
    for row in components:
        pivot = np.argmax(np.abs(row))
        if row[pivot] < 0:
            row *= -1.0
    return PcaModel(mean=mean, components=components, eigenvalues=variances[:keep].copy())


def pca_encode(model: PcaModel, x: Instance | np.ndarray) -> np.ndarray:
    values = x.values if isinstance(x, Instance) else np.asarray(x, dtype=float)
    if values.shape[-1] != model.d:
        raise DimensionMismatch(f"expected {model.d} features, got {values.shape[-1]}")
    return (values - model.mean) @ model.components.T


def pca_inverse(model: PcaModel, z: np.ndarray, feature_names=None) -> Instance:
    """Decode a latent vector; directions beyond the retained ones stay zeroed."""
    z = np.asarray(z, dtype=float)
    if z.shape != (model.m,):
        raise DimensionMismatch(f"expected latent dimension {model.m}, got {z.shape}")
    return Instance(model.mean + z @ model.components, feature_names)


def kdepca_sample(
    pca: PcaModel,
    kde_latent: KdeModel,
    x_star: Instance,
    r: float,
    rng: np.random.Generator,
) -> Instance:
    """Sample in the latent density around the encoded x*, then decode.

    The radius r is measured in the latent space, where the density sampling
    happens.
    """
    z_star = Instance(pca_encode(pca, x_star))
    z_new = kde_sample(kde_latent, z_star, r, rng)
    return pca_inverse(pca, z_new.values, x_star.feature_names)


# ---------------------------------------------------------------------------
# latent codec generator


@dataclass(frozen=True)
class LatentCodec:
    """A pluggable encode/decode pair into an m-dimensional latent space."""

    encode: Callable[[np.ndarray], np.ndarray]
    decode: Callable[[np.ndarray], np.ndarray]
    m: int
    codec_id: str = "codec"


def identity_codec(d: int) -> LatentCodec:
    """The trivial codec whose latent space is the feature space itself."""
    return LatentCodec(encode=lambda x: x, decode=lambda z: z, m=d, codec_id="identity")


def linear_autoencoder_codec(train: Dataset, m: int) -> LatentCodec:
    """Linear autoencoder stand-in for a learned codec.

    The optimum of a linear autoencoder spans the principal subspace, so the
    codec projects onto the top-m principal directions; round-trips are exact
    on data of rank at most m.
    """
    pca = pca_fit(train, m=m)
    return LatentCodec(
        encode=lambda x: (np.asarray(x, dtype=float) - pca.mean) @ pca.components.T,
        decode=lambda z: pca.mean + np.asarray(z, dtype=float) @ pca.components,
        m=m,
        codec_id="linear_autoencoder",
    )


def vae_sample(
    codec: LatentCodec, x_star: Instance, r: float, rng: np.random.Generator
) -> Instance:
    """Perturb the latent code of x* uniformly on the cube of half-width r."""
    if r < 0:
        raise ValueError("radius must be non-negative")
    z_star = np.asarray(codec.encode(x_star.values), dtype=float)
    if z_star.shape != (codec.m,):
        raise DimensionMismatch(
            f"codec produced latent shape {z_star.shape}, declared m={codec.m}"
        )
    eps = rng.uniform(-r, r, size=codec.m)
    values = np.asarray(codec.decode(z_star + eps), dtype=float)
    return Instance(values, x_star.feature_names)


# ---------------------------------------------------------------------------
# embedding-table generator for token data


@dataclass(frozen=True)
class EmbeddingTable:
    """Token vocabulary with one embedding vector per token."""

    vocabulary: tuple[str, ...]
    vectors: np.ndarray  # (|T|, m)
    use_cosine: bool = False

    def __post_init__(self):
        vectors = np.asarray(self.vectors, dtype=float)
        if vectors.ndim != 2 or vectors.shape[0] != len(self.vocabulary):
            raise ValueError("one embedding vector per vocabulary token required")
        if not np.all(np.isfinite(vectors)):
            raise ValueError("embedding vectors must be finite")
        if len(set(self.vocabulary)) != len(self.vocabulary):
            raise ValueError("vocabulary tokens must be unique")
        object.__setattr__(self, "vocabulary", tuple(self.vocabulary))
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(
            self, "_index", {tok: i for i, tok in enumerate(self.vocabulary)}
        )

    @property
    def m(self) -> int:
        return int(self.vectors.shape[1])

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def vector(self, token: str) -> np.ndarray:
        try:
            return self.vectors[self._index[token]]
        except KeyError:
            raise OutOfVocabulary(token) from None

    def distances_from(self, token: str) -> np.ndarray:
        v = self.vector(token)
        if self.use_cosine:
            norms = np.linalg.norm(self.vectors, axis=1) * np.linalg.norm(v)
            norms = np.where(norms == 0, 1.0, norms)
            return 1.0 - (self.vectors @ v) / norms
        return np.linalg.norm(self.vectors - v, axis=1)

    def neighbors(self, token: str, r: float) -> tuple[str, ...]:
        """Tokens within distance r, always including the token itself."""
        dists = self.distances_from(token)
        idx = np.flatnonzero(dists <= r)
        found = [self.vocabulary[i] for i in idx]
        if token not in found:
            found.append(token)
        return tuple(found)


def save_embeddings(table: EmbeddingTable, path) -> None:
    """Text layout: a "count dim" header, then one token and its floats per line."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(table.vocabulary)} {table.m}\n")
        for tok, vec in zip(table.vocabulary, table.vectors):
            floats = " ".join(format(v, ".17g") for v in vec)
            fh.write(f"{tok} {floats}\n")


def load_embeddings(path, use_cosine: bool = False) -> EmbeddingTable:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError("embedding file must start with an 'n m' header")
        n, m = int(header[0]), int(header[1])
        tokens, rows = [], []
        for line in fh:
            parts = line.rstrip("\n").split(" ")
            if len(parts) != m + 1:
                raise ValueError(f"embedding line has {len(parts) - 1} floats, expected {m}")
            tokens.append(parts[0])
            rows.append([float(v) for v in parts[1:]])
    if len(tokens) != n:
        raise ValueError(f"embedding file declares {n} tokens but contains {len(tokens)}")
    return EmbeddingTable(tuple(tokens), np.array(rows), use_cosine=use_cosine)


def word2vec_sample(
    emb: EmbeddingTable, x_star: TokenInstance, r: float, rng: np.random.Generator
) -> tuple[TokenInstance, int]:
    """Replace one uniformly chosen token with a uniform draw from its
    embedding r-neighborhood (which always contains the token itself).

    Returns the new sentence and the chosen position, so statistics
    surrogates know which feature was targeted.
    """
    if r < 0:
        raise ValueError("radius must be non-negative")
    j = int(rng.integers(x_star.length))
    token = x_star.tokens[j]
    if token not in emb:
        raise OutOfVocabulary(token)
    candidates = emb.neighbors(token, r)
    replacement = candidates[rng.integers(len(candidates))]
    tokens = list(x_star.tokens)
    tokens[j] = replacement
    return TokenInstance(tuple(tokens)), j


# ---------------------------------------------------------------------------
# engine-facing adapters


class KdeGenerator:
    """Density sampling in the original feature space."""

    generator_id = "kde"

    def __init__(self, train: Dataset, h: float | None = None):
        self.model = kde_fit(train, h)

    @property
    def h(self) -> float:
        return self.model.h

    def sample_batch(self, x_star: Instance, r: float, n: int, rng: np.random.Generator):
        rows = kde_sample_batch(self.model, x_star, r, n, rng)
        names = self.model.train.feature_names
        return [Instance(row, names) for row in rows], None


class KdePcaGenerator:
    """Density sampling in a PCA latent space, decoded back to features.

    The radius applies in the latent space.
    """

    generator_id = "kdepca"

    def __init__(
        self,
        train: Dataset,
        m: int | None = None,
        variance_threshold: float | None = None,
        h: float | None = None,
    ):
        if m is None and variance_threshold is None:
            variance_threshold = 0.99
        self.pca = pca_fit(train, m=m, variance_threshold=variance_threshold)
        latent = Dataset(pca_encode(self.pca, train.x))
        self.kde_latent = kde_fit(latent, h)
        self._feature_names = train.feature_names

    @property
    def h(self) -> float:
        return self.kde_latent.h

    def sample_batch(self, x_star: Instance, r: float, n: int, rng: np.random.Generator):
        z_star = Instance(pca_encode(self.pca, x_star))
        zs = kde_sample_batch(self.kde_latent, z_star, r, n, rng)
        decoded = self.pca.mean + zs @ self.pca.components
        return [Instance(row, self._feature_names) for row in decoded], None


class VaeGenerator:
    """Latent-cube perturbation through an encode/decode codec."""

    generator_id = "vae"

    def __init__(self, codec: LatentCodec):
        self.codec = codec

    def sample_batch(self, x_star: Instance, r: float, n: int, rng: np.random.Generator):
        return [vae_sample(self.codec, x_star, r, rng) for _ in range(n)], None


class Word2VecGenerator:
    """Single-token substitution from embedding neighborhoods."""

    generator_id = "word2vec"

    def __init__(self, table: EmbeddingTable):
        self.table = table

    def sample_batch(self, x_star: TokenInstance, r: float, n: int, rng: np.random.Generator):
        samples, positions = [], []
        for _ in range(n):
            sentence, j = word2vec_sample(self.table, x_star, r, rng)
            samples.append(sentence)
            positions.append(j)
        return samples, positions


# ---------------------------------------------------------------------------
# model serialization (versioned JSON; floats survive the text round-trip
# exactly because Python prints shortest-round-trip decimal representations)


def _floats(arr) -> list:
    return np.asarray(arr, dtype=float).tolist()


def kde_model_to_json(model: KdeModel) -> str:
    doc = {
        "format": "melime-kde",
        "version": 1,
        "h": model.h,
        "feature_names": list(model.train.names()),
        "train": _floats(model.train.x),
    }
    return json.dumps(doc)


def kde_model_from_json(text: str) -> KdeModel:
    doc = json.loads(text)
    if doc.get("format") != "melime-kde" or doc.get("version") != 1:
        raise ValueError("not a version-1 kde model document")
    train = Dataset(np.array(doc["train"]), tuple(doc["feature_names"]))
    return KdeModel(train=train, h=float(doc["h"]))


def pca_model_to_json(model: PcaModel) -> str:
    doc = {
        "format": "melime-pca",
        "version": 1,
        "mean": _floats(model.mean),
        "components": _floats(model.components),
        "eigenvalues": _floats(model.eigenvalues),
    }
    return json.dumps(doc)


def pca_model_from_json(text: str) -> PcaModel:
    doc = json.loads(text)
    if doc.get("format") != "melime-pca" or doc.get("version") != 1:
        raise ValueError("not a version-1 pca model document")
    return PcaModel(
        mean=np.array(doc["mean"]),
        components=np.array(doc["components"]),
        eigenvalues=np.array(doc["eigenvalues"]),
    )
