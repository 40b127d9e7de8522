"""Domain types and contracts shared by every part of the library.

Everything here is an immutable value object: instances, datasets,
interpretable-space transforms, summary statistics, and the explanation
record itself. Sampling generators, local surrogates, and black boxes all
consume or produce these types and never mutate them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "MelimeError",
    "DimensionMismatch",
    "TransformError",
    "NeighborhoodEmpty",
    "OutOfVocabulary",
    "IncompatiblePerturbation",
    "BlackBoxFailure",
    "BridgeError",
    "HandshakeError",
    "PeerError",
    "BridgeTimeout",
    "ProtocolError",
    "Instance",
    "TokenInstance",
    "Dataset",
    "IdentityTransform",
    "TokenPositionIndicator",
    "apply_transform",
    "SummaryStatistics",
    "CounterfactualSet",
    "Explanation",
    "default_feature_names",
    "stack_instances",
]


class MelimeError(Exception):
    """Base class for all library-specific errors."""


class DimensionMismatch(MelimeError):
    """Vector dimensions do not agree where they must."""


class TransformError(MelimeError):
    """Transform applied to an incompatible input kind."""


class NeighborhoodEmpty(MelimeError):
    """No training point lies within radius r of the query.

    Carries ``min_distance``, the distance from the query to the closest
    training point, so callers can enlarge r sensibly.
    """

    def __init__(self, min_distance: float):
        self.min_distance = float(min_distance)
        super().__init__(
            f"no training sample within the requested radius; "
            f"nearest is at distance {self.min_distance:.6g}"
        )


class OutOfVocabulary(MelimeError):
    """A sentence token has no embedding vector."""

    def __init__(self, token: str):
        self.token = token
        super().__init__(f"token {token!r} is not in the embedding vocabulary")


class IncompatiblePerturbation(MelimeError):
    """A sample differs from x* at positions other than its annotated one."""


class BlackBoxFailure(MelimeError):
    """The black box raised while answering a batch."""

    def __init__(self, batch_index: int, cause: Exception):
        self.batch_index = batch_index
        super().__init__(f"black box failed on batch {batch_index}: {cause}")


class BridgeError(MelimeError):
    """Base class for wire-protocol failures."""


class HandshakeError(BridgeError):
    """Peer announced an unsupported protocol version or a bad handshake."""


class PeerError(BridgeError):
    """Peer answered a request with an error message."""

    def __init__(self, message: str, request_id: int | None = None):
        self.peer_message = message
        self.request_id = request_id
        super().__init__(f"peer error for request {request_id}: {message}")


class BridgeTimeout(BridgeError):
    """Peer did not answer within the per-batch timeout."""


class ProtocolError(BridgeError):
    """Peer sent a line that does not parse as a protocol message."""


def default_feature_names(d: int) -> tuple[str, ...]:
    """Fallback names f0..f{d-1} used when a dataset carries none."""
    return tuple(f"f{i}" for i in range(d))


def _as_float_vector(values, what: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{what} must be one-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} contains NaN or Inf")
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Instance:
    """A dense feature vector, optionally with named features."""

    values: np.ndarray
    feature_names: tuple[str, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "values", _as_float_vector(self.values, "values"))
        if self.feature_names is not None:
            names = tuple(self.feature_names)
            if len(names) != self.values.shape[0]:
                raise DimensionMismatch(
                    f"{len(names)} feature names for {self.values.shape[0]} values"
                )
            object.__setattr__(self, "feature_names", names)

    @property
    def d(self) -> int:
        return int(self.values.shape[0])

    def names(self) -> tuple[str, ...]:
        return self.feature_names or default_feature_names(self.d)

    def __eq__(self, other):
        if not isinstance(other, Instance):
            return NotImplemented
        return (
            np.array_equal(self.values, other.values)
            and self.names() == other.names()
        )

    def __hash__(self):
        return hash((self.values.tobytes(), self.names()))


@dataclass(frozen=True)
class TokenInstance:
    """An ordered token sequence (one sentence)."""

    tokens: tuple[str, ...]

    def __post_init__(self):
        tokens = tuple(self.tokens)
        if not tokens:
            raise ValueError("token sequence must be non-empty")
        if any(not isinstance(t, str) or not t for t in tokens):
            raise ValueError("tokens must be non-empty strings")
        object.__setattr__(self, "tokens", tokens)

    @property
    def length(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class Dataset:
    """A feature matrix with shared per-column names.

    Stored densely as an (n, d) float array; ``rows`` materializes
    :class:`Instance` views on demand.
    """

    x: np.ndarray
    feature_names: tuple[str, ...] | None = None

    def __post_init__(self):
        arr = np.asarray(self.x, dtype=float)
        if arr.ndim != 2:
            raise ValueError(f"dataset must be two-dimensional, got shape {arr.shape}")
        if arr.shape[0] < 1:
            raise ValueError("dataset must contain at least one row")
        if not np.all(np.isfinite(arr)):
            raise ValueError("dataset contains NaN or Inf")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "x", arr)
        if self.feature_names is not None:
            names = tuple(self.feature_names)
            if len(names) != arr.shape[1]:
                raise DimensionMismatch(
                    f"{len(names)} feature names for {arr.shape[1]} columns"
                )
            object.__setattr__(self, "feature_names", names)

    @property
    def n(self) -> int:
        return int(self.x.shape[0])

    @property
    def d(self) -> int:
        return int(self.x.shape[1])

    def names(self) -> tuple[str, ...]:
        return self.feature_names or default_feature_names(self.d)

    @property
    def rows(self) -> tuple[Instance, ...]:
        return tuple(Instance(row, self.feature_names) for row in self.x)

    @classmethod
    def from_rows(cls, rows) -> "Dataset":
        rows = list(rows)
        if not rows:
            raise ValueError("dataset must contain at least one row")
        names = rows[0].feature_names
        return cls(np.stack([r.values for r in rows]), names)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return np.array_equal(self.x, other.x) and self.names() == other.names()

    def __hash__(self):
        return hash((self.x.tobytes(), self.names()))


def stack_instances(instances) -> np.ndarray:
    """Stack a batch of Instances into an (n, d) matrix."""
    return np.stack([inst.values for inst in instances])


@dataclass(frozen=True)
class IdentityTransform:
    """Maps an Instance to itself; the interpretable space is the original one."""

    kind = "identity"


@dataclass(frozen=True)
class TokenPositionIndicator:
    """Maps a sentence to a 0/1 vector marking which positions were replaced.

    Entry j is 1 iff token j differs from token j of the reference sentence.
    The interpretable feature space is therefore the token positions of the
    explained sentence, with dimension equal to its length.
    """

    original: TokenInstance

    kind = "token_position_indicator"

    def position_names(self) -> tuple[str, ...]:
        return tuple(
            f"{tok}@{i}" for i, tok in enumerate(self.original.tokens)
        )


def apply_transform(transform, x):
    """Map a raw sample into the interpretable feature space.

    Identity returns the instance unchanged (the same object). The token
    position indicator turns a sentence into a binary replaced-position
    vector relative to the transform's reference sentence.
    """
    if isinstance(transform, IdentityTransform):
        if not isinstance(x, Instance):
            raise TransformError(f"identity transform expects an Instance, got {type(x).__name__}")
        return x
    if isinstance(transform, TokenPositionIndicator):
        if not isinstance(x, TokenInstance):
            raise TransformError(
                f"token position indicator expects a TokenInstance, got {type(x).__name__}"
            )
        ref = transform.original.tokens
        if len(x.tokens) != len(ref):
            raise DimensionMismatch(
                f"sentence has {len(x.tokens)} tokens, reference has {len(ref)}"
            )
        flags = np.array(
            [0.0 if tok == ref_tok else 1.0 for tok, ref_tok in zip(x.tokens, ref)]
        )
        return Instance(flags, transform.position_names())
    raise TransformError(f"unknown transform {transform!r}")


@dataclass(frozen=True)
class SummaryStatistics:
    """Per-feature importance numbers extracted from a fitted surrogate."""

    alpha: np.ndarray
    feature_names: tuple[str, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "alpha", _as_float_vector(self.alpha, "alpha"))
        if self.feature_names is not None:
            names = tuple(self.feature_names)
            if len(names) != self.alpha.shape[0]:
                raise DimensionMismatch(
                    f"{len(names)} feature names for {self.alpha.shape[0]} importances"
                )
            object.__setattr__(self, "feature_names", names)

    @property
    def dim(self) -> int:
        return int(self.alpha.shape[0])

    def names(self) -> tuple[str, ...]:
        return self.feature_names or default_feature_names(self.dim)

    def __eq__(self, other):
        if not isinstance(other, SummaryStatistics):
            return NotImplemented
        return np.array_equal(self.alpha, other.alpha) and self.names() == other.names()

    def __hash__(self):
        return hash((self.alpha.tobytes(), self.names()))

    def as_dict(self) -> dict[str, float]:
        return {name: float(v) for name, v in zip(self.names(), self.alpha)}


@dataclass(frozen=True)
class CounterfactualSet:
    """Best and worst generated neighbors by black-box prediction.

    ``favorable`` holds up to five (instance, prediction) pairs sorted by
    descending prediction, ``unfavorable`` up to five sorted ascending.
    Ties keep generation order.
    """

    favorable: tuple = ()
    unfavorable: tuple = ()


@dataclass(frozen=True)
class Explanation:
    """Everything produced for one explained instance."""

    importances: SummaryStatistics
    prediction_at_x_star: float
    local_fidelity_gap: float
    convergence_trace: tuple  # (batch_index, delta or None, epsilon) per batch
    counterfactuals: CounterfactualSet
    generator_id: str
    surrogate_id: str
    r: float
    b: int
    sigma: float
    epsilon_c: float
    max_batches: int
    seed: int
    converged: bool
    truncated: bool
    surrogate_detail: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.convergence_trace:
            raise ValueError("convergence trace must be non-empty")
        if self.local_fidelity_gap < 0:
            raise ValueError("fidelity gap must be non-negative")
        if not self.truncated:
            _, final_delta, _ = self.convergence_trace[-1]
            if final_delta is None or final_delta > self.sigma:
                raise ValueError("non-truncated explanation must end with delta <= sigma")

    def to_dict(self) -> dict:
        """Stable JSON-ready form of the explanation."""
        def encode_x(sample):
            if isinstance(sample, TokenInstance):
                return list(sample.tokens)
            return [float(v) for v in sample.values]

        return {
            "importances": self.importances.as_dict(),
            "prediction": float(self.prediction_at_x_star),
            "fidelity_gap": float(self.local_fidelity_gap),
            "converged": bool(self.converged),
            "truncated": bool(self.truncated),
            "trace": [
                {
                    "batch": int(batch),
                    "delta": (None if delta is None else float(delta)),
                    "epsilon": float(eps),
                }
                for batch, delta, eps in self.convergence_trace
            ],
            "counterfactuals": {
                "favorable": [
                    {"x": encode_x(s), "y": float(p)} for s, p in self.counterfactuals.favorable
                ],
                "unfavorable": [
                    {"x": encode_x(s), "y": float(p)} for s, p in self.counterfactuals.unfavorable
                ],
            },
            "config": {
                "generator": self.generator_id,
                "surrogate": self.surrogate_id,
                "r": float(self.r),
                "b": int(self.b),
                "sigma": float(self.sigma),
                "epsilon_c": float(self.epsilon_c),
                "max_batches": int(self.max_batches),
            },
            "seed": int(self.seed),
            "surrogate_detail": self.surrogate_detail,
        }

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, allow_nan=False)
