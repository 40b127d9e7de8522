"""Interpretable local surrogates: ridge linear, CART regression tree, per-feature statistics.

All three families share one contract: ``fit`` on accumulated local data,
expose ``alpha`` (the per-feature summary statistics used as the
explanation), ``predict`` over interpretable-space rows, and a JSON-ready
``detail()``. Fitting is deterministic, so refitting identical data
reproduces identical surrogates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import DimensionMismatch, IncompatiblePerturbation, SummaryStatistics

__all__ = [
    "LocalData",
    "LinearSurrogate",
    "TreeSurrogate",
    "StatsSurrogate",
    "linear_fit",
    "tree_fit",
    "stats_fit",
    "surrogate_predict",
    "training_error",
    "LinearFamily",
    "TreeFamily",
    "StatsFamily",
    "family_by_name",
]

# Gram-matrix condition number beyond which an unpenalized solve is refused
_DEGENERATE_COND = 1e12
_FALLBACK_LAMBDA = 1e-6


@dataclass(frozen=True)
class LocalData:
    """Accumulated interpretable-space samples with black-box targets.

    ``perturbed`` (optional) annotates, per sample, which single feature was
    targeted by the generator; required by the statistics surrogate.
    ``baseline`` is the black-box prediction at the explained instance.
    """

    xs: np.ndarray
    ys: np.ndarray
    x_star_transformed: np.ndarray
    perturbed: np.ndarray | None = None
    baseline: float | None = None

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=float)
        ys = np.asarray(self.ys, dtype=float)
        x_star = np.asarray(self.x_star_transformed, dtype=float)
        if xs.ndim != 2:
            raise ValueError(f"xs must be 2-D, got shape {xs.shape}")
        if ys.shape != (xs.shape[0],):
            raise DimensionMismatch(f"{xs.shape[0]} samples but {ys.shape} targets")
        if xs.shape[0] < 1:
            raise ValueError("local data must contain at least one sample")
        if x_star.shape != (xs.shape[1],):
            raise DimensionMismatch(
                f"x_star has dimension {x_star.shape}, samples have {xs.shape[1]}"
            )
        if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys)) and np.all(np.isfinite(x_star))):
            raise ValueError("local data contains NaN or Inf")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)
        object.__setattr__(self, "x_star_transformed", x_star)
        if self.perturbed is not None:
            pert = np.asarray(self.perturbed, dtype=int)
            if pert.shape != (xs.shape[0],):
                raise DimensionMismatch("one perturbed-feature annotation per sample required")
            object.__setattr__(self, "perturbed", pert)

    @property
    def n(self) -> int:
        return int(self.xs.shape[0])

    @property
    def d(self) -> int:
        return int(self.xs.shape[1])


# ---------------------------------------------------------------------------
# linear surrogate


@dataclass(frozen=True)
class LinearSurrogate:
    coefficients: np.ndarray
    intercept: float
    ridge_lambda: float
    degenerate: bool = False

    surrogate_id = "linear"

    @property
    def alpha(self) -> np.ndarray:
        return self.coefficients

    def predict(self, xs: np.ndarray) -> np.ndarray:
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        if xs.shape[1] != self.coefficients.shape[0]:
            raise DimensionMismatch(
                f"expected {self.coefficients.shape[0]} features, got {xs.shape[1]}"
            )
        return xs @ self.coefficients + self.intercept

    def detail(self) -> dict:
        return {
            "coefficients": [float(c) for c in self.coefficients],
            "intercept": float(self.intercept),
            "ridge_lambda": float(self.ridge_lambda),
            "degenerate_design": bool(self.degenerate),
        }


def linear_fit(data: LocalData, ridge_lambda: float = 0.0) -> LinearSurrogate:
    """Least squares with an L2 penalty on the slope coefficients only.

    A singular or near-singular design with ``ridge_lambda == 0`` falls back
    to a small penalty (1e-6) and is flagged on the returned surrogate.
    """
    if data.n < 2:
        raise ValueError("linear surrogate needs at least 2 samples")
    if ridge_lambda < 0:
        raise ValueError("ridge penalty must be non-negative")

    # accumulate in a canonical sample order so the fit is exactly
    # permutation-invariant, not just up to floating-point reordering
    order = np.lexsort((data.ys, *data.xs.T[::-1]))
    xs = data.xs[order]
    ys = data.ys[order]
    design = np.column_stack([xs, np.ones(data.n)])
    gram = design.T @ design
    rhs = design.T @ ys

    def solve(lam):
        penalty = np.full(design.shape[1], lam)
        penalty[-1] = 0.0  # intercept is never penalized
        return np.linalg.solve(gram + np.diag(penalty), rhs)

    degenerate = False
    lam = ridge_lambda
    if lam == 0.0:
        if np.linalg.cond(gram) > _DEGENERATE_COND:
            degenerate = True
            lam = _FALLBACK_LAMBDA
    try:
        beta = solve(lam)
    except np.linalg.LinAlgError:
        degenerate = True
        lam = max(lam, _FALLBACK_LAMBDA)
        beta = solve(lam)

    return LinearSurrogate(
        coefficients=beta[:-1].copy(),
        intercept=float(beta[-1]),
        ridge_lambda=lam,
        degenerate=degenerate,
    )


# ---------------------------------------------------------------------------
# regression tree surrogate


@dataclass(frozen=True)
class _Node:
    feature: int = -1
    threshold: float = 0.0
    left: "_Node | None" = None
    right: "_Node | None" = None
    value: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.left is None


def _best_split(xs, ys, min_samples_leaf):
    """Exhaustive variance-reduction split search.

    Returns (feature, threshold, gain) or None. Gain is the absolute
    reduction n*var(parent) - n_l*var(left) - n_r*var(right); ties keep the
    lowest feature index, then the lowest threshold.
    """
    n = len(ys)
    parent_sse = np.sum((ys - ys.mean()) ** 2)
    best = None
    for f in range(xs.shape[1]):
        order = np.argsort(xs[:, f], kind="stable")
        xf = xs[order, f]
        yf = ys[order]
        csum = np.cumsum(yf)
        csq = np.cumsum(yf**2)
        total_sum = csum[-1]
        total_sq = csq[-1]
        # split after position i puts i+1 samples left
        for i in range(min_samples_leaf - 1, n - min_samples_leaf):
            if xf[i] == xf[i + 1]:
                continue
            nl = i + 1
            nr = n - nl
            left_sse = csq[i] - csum[i] ** 2 / nl
            right_sum = total_sum - csum[i]
            right_sse = (total_sq - csq[i]) - right_sum**2 / nr
            gain = parent_sse - left_sse - right_sse
            if best is None or gain > best[2] + 1e-15:
                threshold = (xf[i] + xf[i + 1]) / 2.0
                best = (f, threshold, gain)
    return best


def _grow(xs, ys, depth, max_depth, min_samples_leaf, importances):
    value = float(ys.mean())
    if depth >= max_depth or len(ys) < 2 * min_samples_leaf or np.all(ys == ys[0]):
        return _Node(value=value)
    split = _best_split(xs, ys, min_samples_leaf)
    if split is None or split[2] <= 0:
        return _Node(value=value)
    f, threshold, gain = split
    importances[f] += gain
    mask = xs[:, f] <= threshold
    left = _grow(xs[mask], ys[mask], depth + 1, max_depth, min_samples_leaf, importances)
    right = _grow(xs[~mask], ys[~mask], depth + 1, max_depth, min_samples_leaf, importances)
    return _Node(feature=f, threshold=threshold, left=left, right=right, value=value)


@dataclass(frozen=True)
class TreeSurrogate:
    root: _Node
    importances: np.ndarray
    max_depth: int
    min_samples_leaf: int
    is_stump: bool

    surrogate_id = "tree"

    @property
    def alpha(self) -> np.ndarray:
        return self.importances

    def predict(self, xs: np.ndarray) -> np.ndarray:
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        if xs.shape[1] != self.importances.shape[0]:
            raise DimensionMismatch(
                f"expected {self.importances.shape[0]} features, got {xs.shape[1]}"
            )
        out = np.empty(xs.shape[0])
        for i, row in enumerate(xs):
            node = self.root
            while not node.is_leaf:
                node = node.left if row[node.feature] <= node.threshold else node.right
            out[i] = node.value
        return out

    def decision_path(self, x: np.ndarray, feature_names=None) -> list[str]:
        """Human-readable rules along the path taken by ``x``."""
        x = np.asarray(x, dtype=float)
        names = feature_names or tuple(f"f{i}" for i in range(self.importances.shape[0]))
        rules = []
        node = self.root
        while not node.is_leaf:
            name = names[node.feature]
            if x[node.feature] <= node.threshold:
                rules.append(f"{name} <= {node.threshold:.6g}")
                node = node.left
            else:
                rules.append(f"{name} > {node.threshold:.6g}")
                node = node.right
        rules.append(f"value = {node.value:.6g}")
        return rules

    def detail(self) -> dict:
        return {
            "importances": [float(v) for v in self.importances],
            "max_depth": self.max_depth,
            "min_samples_leaf": self.min_samples_leaf,
            "single_leaf": bool(self.is_stump),
        }


def tree_fit(data: LocalData, max_depth: int = 4, min_samples_leaf: int = 5) -> TreeSurrogate:
    """Greedy variance-reduction CART for regression targets.

    ``alpha`` is the impurity-based importance vector, normalized to sum to 1
    when any split exists; a tree with no valid split stays a single leaf
    with an all-zero importance vector and is flagged.
    """
    if max_depth < 1 or min_samples_leaf < 1:
        raise ValueError("max_depth and min_samples_leaf must be positive")
    if data.n < 2 * min_samples_leaf:
        raise ValueError(
            f"tree surrogate needs at least {2 * min_samples_leaf} samples, got {data.n}"
        )
    importances = np.zeros(data.d)
    root = _grow(data.xs, data.ys, 0, max_depth, min_samples_leaf, importances)
    total = importances.sum()
    if total > 0:
        importances = importances / total
    return TreeSurrogate(
        root=root,
        importances=importances,
        max_depth=max_depth,
        min_samples_leaf=min_samples_leaf,
        is_stump=root.is_leaf,
    )


# ---------------------------------------------------------------------------
# statistics surrogate


@dataclass(frozen=True)
class StatsSurrogate:
    """Summary statistics of predictions grouped by the perturbed feature.

    ``alpha[j]`` is the mean prediction among samples perturbed in feature j
    minus the baseline prediction at the explained instance, so a negative
    value means touching that feature pushes the prediction down. Features
    never perturbed keep alpha 0 and carry no record.
    """

    alpha: np.ndarray
    records: dict  # feature index -> {"mean","median","std","count"}
    baseline: float
    x_star_transformed: np.ndarray

    surrogate_id = "stats"

    def predict(self, xs: np.ndarray) -> np.ndarray:
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        if xs.shape[1] != self.alpha.shape[0]:
            raise DimensionMismatch(
                f"expected {self.alpha.shape[0]} features, got {xs.shape[1]}"
            )
        differs = xs != self.x_star_transformed
        return self.baseline + differs @ self.alpha

    def detail(self) -> dict:
        return {
            "baseline": float(self.baseline),
            "per_feature": {
                str(j): {k: float(v) for k, v in rec.items()} for j, rec in self.records.items()
            },
        }


def stats_fit(
    data: LocalData,
    perturbed: np.ndarray | None = None,
    baseline: float | None = None,
) -> StatsSurrogate:
    """Per-feature mean/median/std of predictions under one-feature perturbations.

    Every sample must be annotated with the single feature the generator
    targeted and must agree with x* everywhere else; a sample that differs at
    any other position raises :class:`IncompatiblePerturbation`. A sample that
    equals x* (the generator redrew the original value) is a legal
    perturbation of its annotated feature.
    """
    if perturbed is None:
        perturbed = data.perturbed
    if baseline is None:
        baseline = data.baseline
    if perturbed is None:
        raise IncompatiblePerturbation(
            "statistics surrogate requires per-sample perturbed-feature annotations"
        )
    if baseline is None:
        raise ValueError("statistics surrogate requires the baseline prediction at x*")
    perturbed = np.asarray(perturbed, dtype=int)
    if perturbed.shape != (data.n,):
        raise DimensionMismatch("one perturbed-feature annotation per sample required")
    if np.any(perturbed < 0) or np.any(perturbed >= data.d):
        raise IncompatiblePerturbation("perturbed-feature index out of range")

    differs = data.xs != data.x_star_transformed
    for i in range(data.n):
        extra = np.flatnonzero(differs[i])
        if any(j != perturbed[i] for j in extra):
            raise IncompatiblePerturbation(
                f"sample {i} differs from x* outside its annotated feature {perturbed[i]}"
            )

    alpha = np.zeros(data.d)
    records = {}
    for j in range(data.d):
        ys_j = data.ys[perturbed == j]
        if ys_j.size == 0:
            continue
        mean = float(np.mean(ys_j))
        records[j] = {
            "mean": mean,
            "median": float(np.median(ys_j)),
            "std": float(np.std(ys_j)),
            "count": int(ys_j.size),
        }
        alpha[j] = mean - baseline
    return StatsSurrogate(
        alpha=alpha,
        records=records,
        baseline=float(baseline),
        x_star_transformed=data.x_star_transformed,
    )


# ---------------------------------------------------------------------------
# uniform contract


def surrogate_predict(surrogate, x) -> float:
    """Evaluate any fitted surrogate at a single interpretable-space vector."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("surrogate_predict expects a single vector")
    return float(surrogate.predict(x[None, :])[0])


def training_error(surrogate, data: LocalData) -> float:
    """Mean squared error of the surrogate over the accumulated local data."""
    residual = surrogate.predict(data.xs) - data.ys
    return float(np.mean(residual**2))


@dataclass(frozen=True)
class LinearFamily:
    ridge_lambda: float = _FALLBACK_LAMBDA

    surrogate_id = "linear"

    def fit(self, data: LocalData) -> LinearSurrogate:
        return linear_fit(data, self.ridge_lambda)


@dataclass(frozen=True)
class TreeFamily:
    max_depth: int = 4
    min_samples_leaf: int = 5

    surrogate_id = "tree"

    def fit(self, data: LocalData) -> TreeSurrogate:
        return tree_fit(data, self.max_depth, self.min_samples_leaf)


@dataclass(frozen=True)
class StatsFamily:
    surrogate_id = "stats"

    def fit(self, data: LocalData) -> StatsSurrogate:
        return stats_fit(data)


def family_by_name(name: str, **kwargs):
    """Build a surrogate family from its CLI name."""
    families = {"linear": LinearFamily, "tree": TreeFamily, "stats": StatsFamily}
    if name not in families:
        raise ValueError(f"unknown surrogate family {name!r}; choose from {sorted(families)}")
    return families[name](**kwargs)


def summary_statistics(surrogate, feature_names=None) -> SummaryStatistics:
    """Wrap a surrogate's alpha vector with its feature names."""
    return SummaryStatistics(surrogate.alpha, feature_names)
