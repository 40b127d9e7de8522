"""Black boxes to explain, plus the bridge for models living elsewhere.

The engine only ever sees a callable mapping a batch of samples to one
float per sample. This module provides three model families and the
adapters that turn them into such callables:

* k-nearest-neighbor regression and classification (inverse-distance
  weighted, KD-tree backed);
* a multinomial naive Bayes text classifier with add-one smoothing;
* a line-delimited JSON bridge to an external process, over a child
  process's stdio or a TCP socket.
"""

from __future__ import annotations

import json
import os
import select
import socket
import subprocess
import time

import numpy as np
from scipy.spatial import cKDTree

from .core import (
    BridgeError,
    BridgeTimeout,
    Dataset,
    DimensionMismatch,
    HandshakeError,
    PeerError,
    ProtocolError,
    stack_instances,
)

__all__ = [
    "KnnRegressor",
    "KnnClassifier",
    "NaiveBayesText",
    "BridgeClient",
    "bridge_connect",
    "tabular_regression_fn",
    "tabular_class_probability_fn",
    "text_class_probability_fn",
    "bridge_regression_fn",
    "bridge_class_probability_fn",
    "knn_regressor_to_json",
    "knn_regressor_from_json",
    "naive_bayes_to_json",
    "naive_bayes_from_json",
]

# weights are 1/distance with distances floored here, so an exact hit
# dominates its neighbors instead of dividing by zero
DISTANCE_FLOOR = 1e-12


class KnnRegressor:
    """Inverse-distance weighted k-nearest-neighbor regression."""

    def __init__(self, train: Dataset, y, k: int = 5):
        y = np.asarray(y, dtype=float)
        if y.shape != (train.n,):
            raise ValueError(f"need one target per training row, got shape {y.shape}")
        if not 1 <= k <= train.n:
            raise ValueError(f"k must be in [1, {train.n}], got {k}")
        self.train = train
        self.y = y
        self.k = int(k)
        self._tree = cKDTree(train.x)

    def _weights(self, xs: np.ndarray):
        xs = np.asarray(xs, dtype=float)
        if xs.ndim != 2 or xs.shape[1] != self.train.d:
            raise DimensionMismatch(f"expected (n, {self.train.d}) queries, got {xs.shape}")
        dist, idx = self._tree.query(xs, k=self.k)
        dist = dist.reshape(len(xs), self.k)
        idx = idx.reshape(len(xs), self.k)
        return 1.0 / np.maximum(dist, DISTANCE_FLOOR), idx

    def predict(self, xs) -> np.ndarray:
        w, idx = self._weights(xs)
        return (w * self.y[idx]).sum(axis=1) / w.sum(axis=1)

    def r2(self, xs, y) -> float:
        y = np.asarray(y, dtype=float)
        resid = y - self.predict(xs)
        total = y - y.mean()
        return float(1.0 - (resid @ resid) / (total @ total))


class KnnClassifier:
    """k-nearest-neighbor classification; probabilities are normalized
    inverse-distance weight mass per class."""

    def __init__(self, train: Dataset, labels, k: int = 5):
        labels = list(labels)
        if len(labels) != train.n:
            raise ValueError("need one label per training row")
        if not 1 <= k <= train.n:
            raise ValueError(f"k must be in [1, {train.n}], got {k}")
        self.train = train
        self.classes = tuple(sorted(set(labels)))
        self.k = int(k)
        self._codes = np.array([self.classes.index(c) for c in labels])
        self._tree = cKDTree(train.x)

    def predict_proba(self, xs) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        if xs.ndim != 2 or xs.shape[1] != self.train.d:
            raise DimensionMismatch(f"expected (n, {self.train.d}) queries, got {xs.shape}")
        dist, idx = self._tree.query(xs, k=self.k)
        dist = dist.reshape(len(xs), self.k)
        idx = idx.reshape(len(xs), self.k)
        w = 1.0 / np.maximum(dist, DISTANCE_FLOOR)
        probs = np.zeros((len(xs), len(self.classes)))
        for c in range(len(self.classes)):
            probs[:, c] = np.where(self._codes[idx] == c, w, 0.0).sum(axis=1)
        return probs / probs.sum(axis=1, keepdims=True)

    def predict(self, xs) -> list:
        codes = self.predict_proba(xs).argmax(axis=1)
        return [self.classes[c] for c in codes]

    def accuracy(self, xs, labels) -> float:
        pred = self.predict(xs)
        return float(np.mean([p == t for p, t in zip(pred, labels)]))


class NaiveBayesText:
    """Multinomial naive Bayes over token counts, add-one smoothed.

    Tokens outside the training vocabulary contribute nothing, so a query
    made only of unseen tokens comes back with the class priors.
    """

    def __init__(self, sentences, labels):
        sentences = [tuple(getattr(s, "tokens", s)) for s in sentences]
        labels = list(labels)
        if len(sentences) != len(labels) or not sentences:
            raise ValueError("need one label per sentence and at least one sentence")
        classes = tuple(sorted(set(labels)))
        vocabulary = tuple(sorted({tok for s in sentences for tok in s}))
        class_counts = [0] * len(classes)
        token_counts = [[0] * len(vocabulary) for _ in classes]
        tok_index = {t: i for i, t in enumerate(vocabulary)}
        for s, lab in zip(sentences, labels):
            c = classes.index(lab)
            class_counts[c] += 1
            for tok in s:
                token_counts[c][tok_index[tok]] += 1
        self._init_from_counts(classes, vocabulary, class_counts, token_counts)

    @classmethod
    def from_counts(cls, classes, vocabulary, class_counts, token_counts):
        self = cls.__new__(cls)
        self._init_from_counts(
            tuple(classes), tuple(vocabulary), list(class_counts), list(map(list, token_counts))
        )
        return self

    def _init_from_counts(self, classes, vocabulary, class_counts, token_counts):
        self.classes = classes
        self.vocabulary = vocabulary
        self.class_counts = class_counts
        self.token_counts = token_counts
        self._tok_index = {t: i for i, t in enumerate(vocabulary)}
        counts = np.asarray(token_counts, dtype=float)
        totals = counts.sum(axis=1, keepdims=True)
        self._log_priors = np.log(np.asarray(class_counts, dtype=float) / sum(class_counts))
        self._log_lik = np.log((counts + 1.0) / (totals + len(vocabulary)))

    def predict_proba(self, sentences) -> np.ndarray:
        out = np.empty((len(sentences), len(self.classes)))
        for i, s in enumerate(sentences):
            tokens = getattr(s, "tokens", s)
            logp = self._log_priors.copy()
            for tok in tokens:
                j = self._tok_index.get(tok)
                if j is not None:
                    logp += self._log_lik[:, j]
            logp -= logp.max()
            p = np.exp(logp)
            out[i] = p / p.sum()
        return out

    def predict(self, sentences) -> list:
        codes = self.predict_proba(sentences).argmax(axis=1)
        return [self.classes[c] for c in codes]

    def accuracy(self, sentences, labels) -> float:
        pred = self.predict(sentences)
        return float(np.mean([p == t for p, t in zip(pred, labels)]))


# ---------------------------------------------------------------------------
# engine-facing adapters


def tabular_regression_fn(model):
    """Batch callable over instances for an array-in, array-out regressor."""
    return lambda instances: np.asarray(model.predict(stack_instances(instances)), dtype=float)


def tabular_class_probability_fn(model, label):
    idx = model.classes.index(label)
    return lambda instances: model.predict_proba(stack_instances(instances))[:, idx]


def text_class_probability_fn(model, label):
    idx = model.classes.index(label)
    return lambda instances: model.predict_proba(instances)[:, idx]


def bridge_regression_fn(client):
    return lambda instances: client.predict_batch(stack_instances(instances))[:, 0]


def bridge_class_probability_fn(client, label):
    idx = client.classes.index(label)
    return lambda instances: client.predict_batch(stack_instances(instances))[:, idx]


# ---------------------------------------------------------------------------
# bridge wire protocol client

DEFAULT_BRIDGE_TIMEOUT = 30.0


class _LineChannel:
    """Timed line reader plus line writer over a raw file descriptor pair."""

    def __init__(self, read_fd: int, write_fn, close_fn):
        self._read_fd = read_fd
        self._write_fn = write_fn
        self._close_fn = close_fn
        self._buf = b""

    def read_line(self, timeout: float) -> str:
        deadline = time.monotonic() + timeout
        while b"\n" not in self._buf:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise BridgeTimeout(f"no reply from peer within {timeout:g}s")
            ready, _, _ = select.select([self._read_fd], [], [], remaining)
            if not ready:
                continue
            chunk = os.read(self._read_fd, 65536)
            if not chunk:
                raise ProtocolError("peer closed the connection")
            self._buf += chunk
        line, _, self._buf = self._buf.partition(b"\n")
        return line.decode("utf-8")

    def write_line(self, text: str) -> None:
        self._write_fn(text.encode("utf-8") + b"\n")

    def close(self) -> None:
        self._close_fn()


class BridgeClient:
    """Client half of the line-delimited JSON prediction protocol.

    The peer speaks first with a handshake line declaring the task, the
    feature count, and (for classification) the class labels. After that
    each request {"id": k, "x": [[...]]} is answered by exactly one line,
    either {"id": k, "y": [[...]]} or {"id": k, "error": "..."}. Floats
    cross the wire as shortest round-trip decimal text, so values survive
    the trip bit for bit.
    """

    def __init__(self, channel: _LineChannel, timeout: float = DEFAULT_BRIDGE_TIMEOUT):
        self._channel = channel
        self.timeout = float(timeout)
        self._next_id = 1
        self._closed = False
        self._handshake()

    def _handshake(self) -> None:
        try:
            line = self._channel.read_line(self.timeout)
            doc = json.loads(line)
        except BridgeTimeout:
            raise HandshakeError(f"peer sent no handshake within {self.timeout:g}s") from None
        except (json.JSONDecodeError, ProtocolError) as exc:
            raise HandshakeError(f"unreadable handshake: {exc}") from None
        if not isinstance(doc, dict) or doc.get("melime_bridge") != 1:
            raise HandshakeError(f"unrecognized handshake: {line!r}")
        task = doc.get("task")
        if task not in ("regression", "classification"):
            raise HandshakeError(f"unknown task {task!r}")
        n_features = doc.get("n_features")
        if not isinstance(n_features, int) or n_features < 1:
            raise HandshakeError(f"invalid n_features {n_features!r}")
        classes = doc.get("classes")
        if task == "classification":
            if not isinstance(classes, list) or len(classes) < 2:
                raise HandshakeError("classification handshake must list 2 or more classes")
            self.classes = tuple(str(c) for c in classes)
        else:
            self.classes = None
        self.task = task
        self.n_features = n_features

    @property
    def n_outputs(self) -> int:
        return 1 if self.task == "regression" else len(self.classes)

    def predict_batch(self, x) -> np.ndarray:
        if self._closed:
            raise BridgeError("client is closed")
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.n_features:
            raise DimensionMismatch(
                f"peer expects (n, {self.n_features}) queries, got {x.shape}"
            )
        rid = self._next_id
        self._next_id += 1
        self._channel.write_line(json.dumps({"id": rid, "x": x.tolist()}))
        doc = self._read_response()
        if doc.get("id") != rid:
            raise ProtocolError(f"reply id {doc.get('id')!r} does not match request {rid}")
        if "error" in doc:
            raise PeerError(str(doc["error"]), request_id=rid)
        return self._validate_y(doc, len(x))

    def _read_response(self) -> dict:
        line = self._channel.read_line(self.timeout)
        try:
            doc = json.loads(line)
        except json.JSONDecodeError:
            raise ProtocolError(f"peer sent a non-JSON line: {line[:200]!r}") from None
        if not isinstance(doc, dict):
            raise ProtocolError(f"peer reply is not an object: {line[:200]!r}")
        return doc

    def _validate_y(self, doc: dict, n: int) -> np.ndarray:
        y = doc.get("y")
        if not isinstance(y, list) or len(y) != n:
            raise ProtocolError(f"reply must carry {n} output rows")
        width = self.n_outputs
        for row in y:
            if not isinstance(row, list) or len(row) != width:
                raise ProtocolError(f"each output row must hold {width} values")
        out = np.asarray(y, dtype=float)
        if not np.all(np.isfinite(out)):
            raise ProtocolError("peer returned non-finite outputs")
        if self.task == "classification":
            sums = out.sum(axis=1)
            if np.any(np.abs(sums - 1.0) > 1e-6):
                raise ProtocolError("class probabilities must sum to 1 within 1e-6")
        return out

    def close(self) -> None:
        if not self._closed:
            self._closed = True
            self._channel.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


def _subprocess_channel(command) -> _LineChannel:
    proc = subprocess.Popen(
        command,
        stdin=subprocess.PIPE,
        stdout=subprocess.PIPE,
    )

    def write(data: bytes):
        try:
            proc.stdin.write(data)
            proc.stdin.flush()
        except (BrokenPipeError, ValueError) as exc:
            raise ProtocolError(f"peer process is gone: {exc}") from None

    def close():
        for stream in (proc.stdin, proc.stdout):
            try:
                stream.close()
            except OSError:
                pass
        proc.terminate()
        try:
            proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.wait()

    return _LineChannel(proc.stdout.fileno(), write, close)


def _tcp_channel(host: str, port: int, timeout: float) -> _LineChannel:
    try:
        sock = socket.create_connection((host, port), timeout=timeout)
    except OSError as exc:
        raise BridgeError(f"cannot connect to {host}:{port}: {exc}") from None
    sock.setblocking(True)

    def write(data: bytes):
        try:
            sock.sendall(data)
        except OSError as exc:
            raise ProtocolError(f"connection lost: {exc}") from None

    return _LineChannel(sock.fileno(), write, sock.close)


def bridge_connect(
    command=None,
    host: str | None = None,
    port: int | None = None,
    timeout: float = DEFAULT_BRIDGE_TIMEOUT,
) -> BridgeClient:
    """Open a bridge either to a child process (give ``command``) or to a
    TCP endpoint (give ``host`` and ``port``)."""
    if (command is None) == (host is None):
        raise ValueError("give either command or host/port, not both")
    if command is not None:
        channel = _subprocess_channel(command)
    else:
        if port is None:
            raise ValueError("host requires port")
        channel = _tcp_channel(host, int(port), timeout)
    try:
        return BridgeClient(channel, timeout=timeout)
    except Exception:
        channel.close()
        raise


# ---------------------------------------------------------------------------
# model serialization


def knn_regressor_to_json(model: KnnRegressor) -> str:
    doc = {
        "format": "melime-knn-regressor",
        "version": 1,
        "k": model.k,
        "feature_names": list(model.train.names()),
        "x": model.train.x.tolist(),
        "y": model.y.tolist(),
    }
    return json.dumps(doc)


def knn_regressor_from_json(text: str) -> KnnRegressor:
    doc = json.loads(text)
    if doc.get("format") != "melime-knn-regressor" or doc.get("version") != 1:
        raise ValueError("not a version-1 knn regressor document")
    train = Dataset(np.array(doc["x"]), tuple(doc["feature_names"]))
    return KnnRegressor(train, np.array(doc["y"]), k=doc["k"])


def naive_bayes_to_json(model: NaiveBayesText) -> str:
    doc = {
        "format": "melime-naive-bayes",
        "version": 1,
        "classes": list(model.classes),
        "vocabulary": list(model.vocabulary),
        "class_counts": list(model.class_counts),
        "token_counts": [list(row) for row in model.token_counts],
    }
    return json.dumps(doc)


def naive_bayes_from_json(text: str) -> NaiveBayesText:
    doc = json.loads(text)
    if doc.get("format") != "melime-naive-bayes" or doc.get("version") != 1:
        raise ValueError("not a version-1 naive bayes document")
    return NaiveBayesText.from_counts(
        doc["classes"], doc["vocabulary"], doc["class_counts"], doc["token_counts"]
    )
