"""
melime - local explanations that respect the data
==================================================

Explain one prediction of a black-box model by fitting a simple
surrogate on a neighborhood drawn from where the data actually lives:
a density estimate, a latent space, or embedding substitutions.

The pieces plug together through :func:`melime.engine.explain`::

    from melime import Dataset, EngineConfig, Instance, KdeGenerator
    from melime import LinearFamily, explain

    result = explain(f, x_star, KdeGenerator(train), LinearFamily(),
                     EngineConfig(r=0.5, b=200, seed=0))

See README.md for the full tour; module docstrings carry the details.
"""

from .core import CounterfactualSet, Dataset, Explanation, Instance, TokenInstance
from .engine import EngineConfig, explain
from .generators import (
    KdeGenerator,
    KdePcaGenerator,
    VaeGenerator,
    Word2VecGenerator,
    identity_codec,
    linear_autoencoder_codec,
    load_embeddings,
)
from .local_models import LinearFamily, StatsFamily, TreeFamily, family_by_name

__version__ = "0.1.0"

__all__ = [
    "CounterfactualSet",
    "Dataset",
    "EngineConfig",
    "Explanation",
    "Instance",
    "KdeGenerator",
    "KdePcaGenerator",
    "LinearFamily",
    "StatsFamily",
    "TokenInstance",
    "TreeFamily",
    "VaeGenerator",
    "Word2VecGenerator",
    "explain",
    "family_by_name",
    "identity_codec",
    "linear_autoencoder_codec",
    "load_embeddings",
    "__version__",
]
