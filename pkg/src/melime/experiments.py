"""Reference experiment pipelines and a globally-sampled baseline.

Three small studies exercise the explanation stack end to end: a
two-feature spiral regression, the iris species table, and a toy
sentiment corpus. Each study trains its own black box, explains one
fixed instance, and emits a JSON-ready report; the tabular studies also
run the same instance through a conventional baseline that samples each
feature independently from its global distribution, ignoring the data
manifold. Reports are deterministic functions of their seed.

Every experiment exposes a companion ``*_checks`` function that grades a
finished report against that study's expected findings, so the same
criteria drive both the test suite and the command-line demos.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .blackbox import (
    KnnClassifier,
    KnnRegressor,
    NaiveBayesText,
    tabular_class_probability_fn,
    tabular_regression_fn,
    text_class_probability_fn,
)
from .core import Dataset, Instance, SummaryStatistics, TokenInstance
from .engine import EngineConfig, explain
from .generators import (
    EmbeddingTable,
    KdeGenerator,
    KdePcaGenerator,
    Word2VecGenerator,
    load_embeddings,
)
from .local_models import LinearFamily, StatsFamily, TreeFamily

__all__ = [
    "BaselineExplanation",
    "EXPERIMENTS",
    "IRIS_FEATURES",
    "IRIS_SHA256",
    "IRIS_SPECIES",
    "IRIS_X_STAR",
    "SPIRAL_X_STAR",
    "SpiralData",
    "TEXT_X_STAR",
    "iris_checks",
    "iris_experiment",
    "iris_load",
    "lime_baseline_explain",
    "load_toy_corpus",
    "load_toy_embeddings",
    "relative_importance",
    "report_importance_charts",
    "run_experiment",
    "spiral_arc_length",
    "spiral_checks",
    "spiral_experiment",
    "spiral_generate",
    "stratified_split",
    "text_checks",
    "text_experiment",
    "train_feature_stats",
    "write_importance_svg",
]

_DATA_DIR = Path(__file__).parent / "data"


# ---------------------------------------------------------------------------
# spiral study


def spiral_arc_length(theta):
    """Arc length of the spiral (t cos t, t sin t) from t = 0 to theta.

    Closed form of the integral of sqrt(1 + t^2):
    L(theta) = [theta * sqrt(1 + theta^2) + asinh(theta)] / 2.
    """
    th = np.asarray(theta, dtype=float)
    return 0.5 * (th * np.sqrt(1.0 + th * th) + np.arcsinh(th))


@dataclass(frozen=True)
class SpiralData:
    """A noisy spiral sample: angles, features (x1, x2), arc-length targets."""

    theta: np.ndarray
    dataset: Dataset
    y: np.ndarray
    noise_std: float


def spiral_generate(
    n: int,
    theta_range: tuple[float, float] = (0.0, 4.0 * np.pi),
    noise_std: float = 0.1,
    seed: int = 0,
) -> SpiralData:
    """Draw n spiral points with Gaussian feature noise.

    Angles are uniform on theta_range; the target is the exact arc
    length, so only the features carry noise.
    """
    if n < 1:
        raise ValueError(f"need at least one sample, got {n}")
    lo, hi = float(theta_range[0]), float(theta_range[1])
    if lo < 0.0:
        raise ValueError(f"theta range must stay non-negative, got {lo}")
    if not hi > lo:
        raise ValueError(f"empty theta range [{lo}, {hi}]")
    if noise_std < 0.0:
        raise ValueError(f"noise std must be non-negative, got {noise_std}")
    rng = np.random.default_rng(seed)
    theta = rng.uniform(lo, hi, n)
    eps = rng.normal(0.0, noise_std, (n, 2))
    x1 = theta * np.cos(theta) + eps[:, 0]
    x2 = theta * np.sin(theta) + eps[:, 1]
    dataset = Dataset(np.column_stack([x1, x2]), ("x1", "x2"))
    return SpiralData(theta, dataset, spiral_arc_length(theta), noise_std)


SPIRAL_X_STAR = (0.0, 8.0)


def spiral_experiment(
    seed: int = 0,
    n: int = 10_000,
    k: int = 5,
    h: float = 0.25,
    r: float = 1.0,
    b: int = 200,
    lime_samples: int = 2000,
) -> dict:
    """Spiral regression: local arc-length response at x* = (0, 8).

    A kNN regressor learns the arc length from noisy coordinates; the
    density-anchored generator with a deliberately narrow bandwidth keeps
    perturbations on the spiral arm, where the response is dominated by
    x1 and decreasing in it. The baseline samples the bounding box of
    the whole cloud and spreads importance across both features.
    """
    data = spiral_generate(n, noise_std=0.1, seed=seed)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    cut = int(0.8 * n)
    tr, te = perm[:cut], perm[cut:]
    train = Dataset(data.dataset.x[tr], data.dataset.names())
    model = KnnRegressor(train, data.y[tr], k=k)
    r2 = model.r2(data.dataset.x[te], data.y[te])

    f = tabular_regression_fn(model)
    x_star = Instance(SPIRAL_X_STAR, train.names())
    generator = KdeGenerator(train, h=h)
    melime = explain(f, x_star, generator, LinearFamily(), EngineConfig(r=r, b=b, seed=seed))
    baseline = lime_baseline_explain(
        f, x_star, train_feature_stats(train), n_samples=lime_samples, seed=seed
    )
    return {
        "experiment": "spiral",
        "seed": int(seed),
        "blackbox_metrics": {
            "model": "knn-regressor",
            "k": int(k),
            "n_train": int(tr.shape[0]),
            "n_test": int(te.shape[0]),
            "r2": float(r2),
        },
        "melime": melime.to_dict(),
        "lime_baseline": baseline.to_dict(),
    }


def relative_importance(importances: dict, name: str) -> float:
    """Share of total absolute importance carried by one feature."""
    total = sum(abs(v) for v in importances.values())
    if total == 0.0:
        return 0.0
    return abs(importances[name]) / total


def spiral_checks(report: dict) -> dict[str, bool]:
    """Expected findings for a spiral report."""
    mel = report["melime"]["importances"]
    base = report["lime_baseline"]["importances"]
    return {
        "blackbox_r2": report["blackbox_metrics"]["r2"] >= 0.99,
        "x1_dominates": abs(mel["x1"]) >= 2.0 * abs(mel["x2"]),
        "x1_negative": mel["x1"] < 0.0,
        "baseline_overweights_x2": relative_importance(base, "x2")
        >= 2.0 * relative_importance(mel, "x2"),
    }


# ---------------------------------------------------------------------------
# iris study

IRIS_SHA256 = "9cc1c345c71bcc9b486b74cbf6063fa66f4bb5e0f603a4b3c3471ec2e5e8e355"
IRIS_FEATURES = ("sepal_length", "sepal_width", "petal_length", "petal_width")
IRIS_SPECIES = ("setosa", "versicolor", "virginica")
IRIS_X_STAR = (6.0, 3.0, 5.0, 1.5)


def iris_load(path=None) -> tuple[Dataset, tuple[str, ...]]:
    """Load the shipped iris table, verifying its checksum and shape."""
    p = Path(path) if path is not None else _DATA_DIR / "iris.csv"
    raw = p.read_bytes()
    digest = hashlib.sha256(raw).hexdigest()
    if digest != IRIS_SHA256:
        raise ValueError(f"iris table at {p} has checksum {digest}, expected {IRIS_SHA256}")
    lines = raw.decode("utf-8").strip().split("\n")
    header = tuple(lines[0].split(","))
    if header != IRIS_FEATURES + ("species",):
        raise ValueError(f"unexpected iris header {header}")
    values, labels = [], []
    for line in lines[1:]:
        cells = line.split(",")
        values.append([float(c) for c in cells[:4]])
        labels.append(cells[4])
    x = np.array(values)
    if x.shape != (150, 4):
        raise ValueError(f"iris table must be 150x4, got {x.shape}")
    if not np.all(x > 0.0):
        raise ValueError("iris features must all be positive")
    for species in IRIS_SPECIES:
        if labels.count(species) != 50:
            raise ValueError(f"expected 50 rows of {species}")
    return Dataset(x, IRIS_FEATURES), tuple(labels)


def stratified_split(labels, per_class_train: int, seed: int = 0):
    """Per-class permutation split; returns (train_idx, test_idx)."""
    arr = np.array(labels)
    rng = np.random.default_rng(seed)
    tr, te = [], []
    for label in sorted(set(labels)):
        idx = rng.permutation(np.flatnonzero(arr == label))
        tr.extend(idx[:per_class_train])
        te.extend(idx[per_class_train:])
    return np.array(tr), np.array(te)


def iris_experiment(
    seed: int = 0,
    k: int = 28,
    latent_dim: int = 3,
    h: float = 0.15,
    r: float = 0.45,
    b: int = 200,
    lime_samples: int = 2000,
) -> dict:
    """Iris classification: why is x* scored as versicolor?

    Explains p(versicolor) at a point on the versicolor/virginica border
    with the PCA-latent generator under both interpretable families. The
    petal measurements carry the class signal; sepal noise is damped by
    sampling inside the three-component principal subspace.
    """
    table, labels = iris_load()
    tr, te = stratified_split(labels, per_class_train=40, seed=seed)
    train = Dataset(table.x[tr], IRIS_FEATURES)
    clf = KnnClassifier(train, [labels[i] for i in tr], k=k)
    accuracy = clf.accuracy(table.x[te], [labels[i] for i in te])

    f = tabular_class_probability_fn(clf, "versicolor")
    x_star = Instance(IRIS_X_STAR, IRIS_FEATURES)
    generator = KdePcaGenerator(train, m=latent_dim, h=h)
    config = EngineConfig(r=r, b=b, seed=seed)
    linear = explain(f, x_star, generator, LinearFamily(), config)
    tree = explain(f, x_star, generator, TreeFamily(), config)
    baseline = lime_baseline_explain(
        f, x_star, train_feature_stats(train), n_samples=lime_samples, seed=seed
    )
    return {
        "experiment": "iris",
        "seed": int(seed),
        "blackbox_metrics": {
            "model": "knn-classifier",
            "k": int(k),
            "test_accuracy": float(accuracy),
            "target_class": "versicolor",
        },
        "melime": {"linear": linear.to_dict(), "tree": tree.to_dict()},
        "lime_baseline": baseline.to_dict(),
    }


def _top2(importances: dict) -> set:
    ranked = sorted(importances.items(), key=lambda kv: (-abs(kv[1]), kv[0]))
    return {name for name, _ in ranked[:2]}


def iris_checks(report: dict) -> dict[str, bool]:
    """Expected findings for an iris report.

    The fidelity-gap comparison is like for like: the linear surrogate's
    gap against the baseline's own linear fit.
    """
    petal = {"petal_length", "petal_width"}
    linear = report["melime"]["linear"]
    tree = report["melime"]["tree"]
    gap = linear["fidelity_gap"]
    return {
        "blackbox_accuracy": report["blackbox_metrics"]["test_accuracy"] >= 0.93,
        "linear_top2_petal": _top2(linear["importances"]) == petal,
        "tree_top2_petal": _top2(tree["importances"]) == petal,
        "fidelity_gap_small": gap <= 0.05,
        "beats_baseline_gap": gap < report["lime_baseline"]["fidelity_gap"],
    }


# ---------------------------------------------------------------------------
# toy text study

TEXT_X_STAR = ("the", "food", "was", "superb")


def load_toy_corpus(path=None) -> tuple[list[TokenInstance], list[str]]:
    """Read the shipped sentiment corpus: one "label<TAB>sentence" per line."""
    p = Path(path) if path is not None else _DATA_DIR / "toy_corpus.txt"
    sentences, labels = [], []
    for line in p.read_text("utf-8").strip().split("\n"):
        label, text = line.split("\t")
        labels.append(label)
        sentences.append(TokenInstance(tuple(text.split())))
    return sentences, labels


def load_toy_embeddings(path=None) -> EmbeddingTable:
    p = Path(path) if path is not None else _DATA_DIR / "toy_embeddings.txt"
    return load_embeddings(p)


def text_experiment(seed: int = 0, r: float = 1.2, b: int = 200) -> dict:
    """Toy sentiment: which word makes "the food was superb" positive?

    A naive Bayes classifier trains on the 40-sentence corpus (two
    deliberately mislabeled sentences keep the neutral-word counts
    balanced between classes). The embedding generator swaps single
    tokens for neighbors, and the perturbation-statistics surrogate
    attributes the positive score to the planted sentiment word. There
    is no global-sampling baseline here: independent per-feature
    Gaussians have no token-sequence analogue.
    """
    sentences, labels = load_toy_corpus()
    nb = NaiveBayesText(sentences, labels)
    accuracy = nb.accuracy(sentences, labels)
    f = text_class_probability_fn(nb, "pos")
    generator = Word2VecGenerator(load_toy_embeddings())
    melime = explain(
        f, TokenInstance(TEXT_X_STAR), generator, StatsFamily(), EngineConfig(r=r, b=b, seed=seed)
    )
    return {
        "experiment": "text",
        "seed": int(seed),
        "blackbox_metrics": {
            "model": "naive-bayes",
            "train_accuracy": float(accuracy),
            "target_class": "pos",
        },
        "melime": melime.to_dict(),
        "lime_baseline": None,
    }


def text_checks(report: dict) -> dict[str, bool]:
    """Expected findings for a text report."""
    mel = report["melime"]
    imp = mel["importances"]
    decisive = f"superb@{len(TEXT_X_STAR) - 1}"
    others = max(abs(v) for name, v in imp.items() if name != decisive)
    favorable = mel["counterfactuals"]["favorable"]
    unfavorable = mel["counterfactuals"]["unfavorable"]
    original = list(TEXT_X_STAR)
    return {
        "decisive_token_dominates": abs(imp[decisive]) > others,
        "decisive_token_negative": imp[decisive] < 0.0,
        "favorable_beats_original": favorable[0]["y"] > mel["prediction"],
        "counterfactuals_differ": all(
            cf["x"] != original for cf in favorable + unfavorable
        ),
    }


# ---------------------------------------------------------------------------
# globally-sampled baseline


@dataclass(frozen=True)
class BaselineExplanation:
    """Weighted-ridge fit over manifold-ignorant global samples."""

    importances: SummaryStatistics
    intercept: float
    fidelity_gap: float
    kernel_width: float
    n_samples: int
    seed: int

    def to_dict(self) -> dict:
        return {
            "importances": self.importances.as_dict(),
            "intercept": float(self.intercept),
            "fidelity_gap": float(self.fidelity_gap),
            "kernel_width": float(self.kernel_width),
            "n_samples": int(self.n_samples),
            "seed": int(self.seed),
        }


def train_feature_stats(train: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Per-feature (mean, std) of a training table."""
    return train.x.mean(axis=0), train.x.std(axis=0)


def lime_baseline_explain(
    f,
    x_star: Instance,
    train_stats: tuple[np.ndarray, np.ndarray],
    kernel_width: float | None = None,
    n_samples: int = 2000,
    seed: int = 0,
    ridge_lambda: float = 1e-6,
) -> BaselineExplanation:
    """Explain x* by sampling each feature from its global Gaussian.

    Samples x_j ~ N(mu_j, sigma_j) independently (constant features are
    held at x*), weights by exp(-|x - x*|^2 / w^2), and fits a ridge
    model with an unpenalized intercept. The default kernel width is
    0.75 * sqrt(d) * mean(sigma).
    """
    mu = np.asarray(train_stats[0], dtype=float)
    sd = np.asarray(train_stats[1], dtype=float)
    d = x_star.d
    if mu.shape != (d,) or sd.shape != (d,):
        raise ValueError(f"train stats must both have shape ({d},)")
    if n_samples < 1:
        raise ValueError(f"need at least one sample, got {n_samples}")
    width = 0.75 * np.sqrt(d) * sd.mean() if kernel_width is None else float(kernel_width)
    if not width > 0.0:
        raise ValueError(f"kernel width must be positive, got {width}")

    rng = np.random.default_rng(seed)
    xs = rng.normal(mu, sd, size=(n_samples, d))
    frozen = sd == 0.0
    xs[:, frozen] = x_star.values[frozen]
    names = x_star.names()
    ys = np.asarray(f([Instance(row, names) for row in xs]), dtype=float)
    if ys.shape != (n_samples,):
        raise ValueError(f"black box returned shape {ys.shape}, expected ({n_samples},)")

    # dividing before squaring keeps huge widths finite
    scaled = np.sqrt(np.sum((xs - x_star.values) ** 2, axis=1)) / width
    weights = np.exp(-(scaled**2))
    sw = np.sqrt(weights)
    design = np.hstack([xs * sw[:, None], sw[:, None]])
    penalty = np.diag([ridge_lambda] * d + [0.0])
    beta = np.linalg.solve(design.T @ design + penalty, design.T @ (ys * sw))
    prediction = float(beta[:d] @ x_star.values + beta[d])
    f_star = float(np.asarray(f([x_star]), dtype=float)[0])
    return BaselineExplanation(
        importances=SummaryStatistics(beta[:d], names),
        intercept=float(beta[d]),
        fidelity_gap=abs(prediction - f_star),
        kernel_width=float(width),
        n_samples=int(n_samples),
        seed=int(seed),
    )


# ---------------------------------------------------------------------------
# report plumbing

EXPERIMENTS = {
    "spiral": (spiral_experiment, spiral_checks),
    "iris": (iris_experiment, iris_checks),
    "text": (text_experiment, text_checks),
}


def run_experiment(name: str, seed: int = 0) -> tuple[dict, dict]:
    """Run one named experiment; returns (report, checks)."""
    if name not in EXPERIMENTS:
        raise KeyError(f"unknown experiment {name!r}, have {sorted(EXPERIMENTS)}")
    runner, grade = EXPERIMENTS[name]
    report = runner(seed=seed)
    return report, grade(report)


def report_importance_charts(report: dict) -> list[tuple[str, dict]]:
    """Labeled importance dicts for every explanation inside a report."""
    charts = []
    mel = report["melime"]
    if "importances" in mel:
        charts.append(("melime", mel["importances"]))
    else:
        for key, sub in mel.items():
            charts.append((f"melime-{key}", sub["importances"]))
    base = report.get("lime_baseline")
    if base is not None:
        charts.append(("lime", base["importances"]))
    return charts


def write_importance_svg(importances: dict, path, title: str, seed=None) -> None:
    """Render one horizontal bar chart of importances to an SVG file.

    Bars are sorted by decreasing magnitude; negative values extend left
    of the axis. Output is a plain, deterministic string: same inputs,
    same bytes.
    """
    items = sorted(importances.items(), key=lambda kv: (-abs(kv[1]), kv[0]))
    label_w, plot_w, bar_h, gap, top = 190, 460, 22, 8, 46
    width = label_w + plot_w + 30
    height = top + len(items) * (bar_h + gap) + 14
    center = label_w + plot_w / 2
    peak = max((abs(v) for _, v in items), default=0.0) or 1.0
    scale = (plot_w / 2 - 8) / peak

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif">',
        f"<desc>seed: {seed}</desc>" if seed is not None else "<desc>importances</desc>",
        f'<text x="{label_w}" y="24" font-size="15" font-weight="bold">{escape(title)}</text>',
        f'<line x1="{center}" y1="{top - 8}" x2="{center}" y2="{height - 10}" '
        'stroke="#999" stroke-width="1"/>',
    ]
    for i, (name, value) in enumerate(items):
        y = top + i * (bar_h + gap)
        w = abs(value) * scale
        x = center - w if value < 0 else center
        color = "#b5543b" if value < 0 else "#4878a8"
        tx = center - w - 6 if value < 0 else center + w + 6
        anchor = "end" if value < 0 else "start"
        parts.append(
            f'<text x="{label_w - 8}" y="{y + bar_h - 6}" font-size="12" '
            f'text-anchor="end">{escape(name)}</text>'
        )
        parts.append(
            f'<rect x="{x:.2f}" y="{y}" width="{w:.2f}" height="{bar_h}" fill="{color}"/>'
        )
        parts.append(
            f'<text x="{tx:.2f}" y="{y + bar_h - 6}" font-size="11" '
            f'text-anchor="{anchor}">{value:.4g}</text>'
        )
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n", "utf-8")
