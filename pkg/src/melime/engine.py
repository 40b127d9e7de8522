"""The mini-batch explanation loop.

Each round draws a batch from the neighborhood generator, queries the
black box once for the whole batch, refits the surrogate on everything
accumulated so far, and measures how much the surrogate's summary vector
moved. Sampling stops once that movement and the change in surrogate
training error both fall below their thresholds; a hard batch cap guards
against criteria that never settle, and explanations produced that way
are marked truncated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    BlackBoxFailure,
    CounterfactualSet,
    DimensionMismatch,
    Explanation,
    IdentityTransform,
    TokenInstance,
    TokenPositionIndicator,
    apply_transform,
)
from .local_models import (
    LocalData,
    summary_statistics,
    surrogate_predict,
    training_error,
)

__all__ = ["EngineConfig", "delta", "explain", "harvest_counterfactuals"]


@dataclass(frozen=True)
class EngineConfig:
    """Knobs of the sampling loop.

    r is the generator's neighborhood radius, b the batch size, sigma the
    ceiling on the mean absolute movement of the summary vector, epsilon_c
    the ceiling on the change in surrogate training error.
    """

    r: float
    b: int = 200
    sigma: float = 1e-3
    epsilon_c: float = 1e-3
    max_batches: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.r < 0:
            raise ValueError(f"radius must be non-negative, got {self.r}")
        if self.b < 1:
            raise ValueError(f"batch size must be at least 1, got {self.b}")
        if self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.epsilon_c <= 0:
            raise ValueError(f"epsilon_c must be positive, got {self.epsilon_c}")
        if self.max_batches < 1:
            raise ValueError(f"max_batches must be at least 1, got {self.max_batches}")


def delta(alpha_new, alpha_old) -> float:
    """Mean absolute movement between consecutive summary vectors."""
    a = np.asarray(alpha_new, dtype=float)
    b = np.asarray(alpha_old, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatch(f"summary vectors differ in shape: {a.shape} vs {b.shape}")
    return float(np.mean(np.abs(a - b)))


def harvest_counterfactuals(samples, ys, k: int = 5) -> CounterfactualSet:
    """Most favorable (highest prediction, descending) and most unfavorable
    (lowest, ascending) samples seen during the loop; ties keep generation
    order."""
    ys = np.asarray(ys, dtype=float)
    ascending = np.argsort(ys, kind="stable")
    descending = np.argsort(-ys, kind="stable")
    favorable = tuple((samples[i], float(ys[i])) for i in descending[:k])
    unfavorable = tuple((samples[i], float(ys[i])) for i in ascending[:k])
    return CounterfactualSet(favorable=favorable, unfavorable=unfavorable)


def _query(f, samples, batch_index: int) -> np.ndarray:
    try:
        ys = np.asarray(f(samples), dtype=float)
    except Exception as exc:
        raise BlackBoxFailure(batch_index, exc) from exc
    if ys.shape != (len(samples),):
        raise BlackBoxFailure(
            batch_index,
            ValueError(f"expected {len(samples)} predictions, got shape {ys.shape}"),
        )
    if not np.all(np.isfinite(ys)):
        raise BlackBoxFailure(batch_index, ValueError("black box returned NaN or Inf"))
    return ys


def explain(f, x_star, generator, family, config: EngineConfig) -> Explanation:
    """Run the loop around x_star and package the result.

    f maps a list of samples to one float per sample in a single call; the
    loop issues exactly one such call per batch plus one up front for the
    explained instance itself.
    """
    if isinstance(x_star, TokenInstance):
        transform = TokenPositionIndicator(x_star)
        feature_names = transform.position_names()
    else:
        transform = IdentityTransform()
        feature_names = x_star.names()
    x_star_t = apply_transform(transform, x_star).values

    rng = np.random.default_rng(config.seed)
    prediction = float(_query(f, [x_star], 0)[0])

    all_samples: list = []
    xs_rows: list = []
    ys_parts: list = []
    perturbed_parts: list = []
    have_annotations = True

    trace = []
    alpha_prev = None
    eps_prev = None
    converged = False
    surrogate = None

    for t in range(1, config.max_batches + 1):
        samples, annotations = generator.sample_batch(x_star, config.r, config.b, rng)
        ys = _query(f, samples, t)

        all_samples.extend(samples)
        xs_rows.extend(apply_transform(transform, s).values for s in samples)
        ys_parts.append(ys)
        if annotations is None:
            have_annotations = False
        else:
            perturbed_parts.extend(annotations)

        data = LocalData(
            np.array(xs_rows),
            np.concatenate(ys_parts),
            x_star_t,
            perturbed=np.array(perturbed_parts) if have_annotations else None,
            baseline=prediction,
        )
        surrogate = family.fit(data)
        alpha = np.asarray(surrogate.alpha, dtype=float)
        eps = training_error(surrogate, data)

        d = None if alpha_prev is None else delta(alpha, alpha_prev)
        trace.append((t, d, eps))
        if d is not None and d <= config.sigma and abs(eps - eps_prev) <= config.epsilon_c:
            converged = True
            break
        alpha_prev, eps_prev = alpha, eps

    gap = abs(surrogate_predict(surrogate, x_star_t) - prediction)
    return Explanation(
        importances=summary_statistics(surrogate, feature_names),
        prediction_at_x_star=prediction,
        local_fidelity_gap=gap,
        convergence_trace=tuple(trace),
        counterfactuals=harvest_counterfactuals(all_samples, np.concatenate(ys_parts)),
        generator_id=generator.generator_id,
        surrogate_id=family.surrogate_id,
        r=config.r,
        b=config.b,
        sigma=config.sigma,
        epsilon_c=config.epsilon_c,
        max_batches=config.max_batches,
        seed=config.seed,
        converged=converged,
        truncated=not converged,
        surrogate_detail=surrogate.detail(),
    )
