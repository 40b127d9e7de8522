import json

import numpy as np
import pytest

from melime.core import (
    BlackBoxFailure,
    DimensionMismatch,
    Instance,
    TokenInstance,
)
from melime.engine import EngineConfig, delta, explain, harvest_counterfactuals
from melime.generators import (
    EmbeddingTable,
    KdeGenerator,
    KdePcaGenerator,
    VaeGenerator,
    Word2VecGenerator,
    identity_codec,
)
from melime.local_models import LinearFamily, StatsFamily, TreeFamily
from melime.core import Dataset


def linear_f(instances):
    xs = np.array([s.values for s in instances])
    return 3.0 * xs[:, 0] - 2.0 * xs[:, 1] + 1.0


class Recorder:
    """Wraps a batch callable, remembering every sample and call size."""

    def __init__(self, fn):
        self.fn = fn
        self.call_sizes = []
        self.samples = []

    def __call__(self, samples):
        self.call_sizes.append(len(samples))
        self.samples.extend(samples)
        return self.fn(samples)


def tabular_setup(seed=0):
    rng = np.random.default_rng(seed)
    train = Dataset(rng.normal(size=(300, 2)), ("x1", "x2"))
    return train, Instance([0.1, -0.2], ("x1", "x2"))


# ---------------------------------------------------------------------------
# delta


def test_delta_hand_values():
    assert delta([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert delta([2.0], [1.0]) == 1.0
    assert delta([1.0, 1.0, 1.0, 1.0], [0.0, 0.0, 0.0, 0.0]) == 1.0
    assert delta([1.0, 0.0], [0.0, 0.0]) == 0.5
    with pytest.raises(DimensionMismatch):
        delta([1.0], [1.0, 2.0])


# ---------------------------------------------------------------------------
# counterfactual harvesting


def test_harvest_orders_by_prediction():
    samples = [Instance([float(i)]) for i in range(8)]
    ys = [3.0, 7.0, 1.0, 9.0, 5.0, 2.0, 8.0, 4.0]
    cf = harvest_counterfactuals(samples, ys, k=3)
    assert [y for _, y in cf.favorable] == [9.0, 8.0, 7.0]
    assert [y for _, y in cf.unfavorable] == [1.0, 2.0, 3.0]
    assert cf.favorable[0][0].values[0] == 3.0


def test_harvest_ties_keep_generation_order():
    samples = [Instance([float(i)]) for i in range(6)]
    cf = harvest_counterfactuals(samples, [1.0] * 6, k=5)
    assert [s.values[0] for s, _ in cf.favorable] == [0.0, 1.0, 2.0, 3.0, 4.0]
    assert [s.values[0] for s, _ in cf.unfavorable] == [0.0, 1.0, 2.0, 3.0, 4.0]


def test_harvest_with_fewer_samples_than_k():
    samples = [Instance([0.0]), Instance([1.0])]
    cf = harvest_counterfactuals(samples, [1.0, 2.0], k=5)
    assert len(cf.favorable) == 2 and len(cf.unfavorable) == 2


# ---------------------------------------------------------------------------
# the loop on an exactly linear black box


@pytest.mark.parametrize("make_gen", [
    lambda train: KdeGenerator(train),
    lambda train: KdePcaGenerator(train, m=2),
    lambda train: VaeGenerator(identity_codec(2)),
])
def test_linear_black_box_recovered_by_every_tabular_generator(make_gen):
    train, x_star = tabular_setup()
    gen = make_gen(train)
    config = EngineConfig(r=1.0, b=100, seed=5)
    exp = explain(linear_f, x_star, gen, LinearFamily(), config)
    imp = exp.importances.as_dict()
    assert imp["x1"] == pytest.approx(3.0, abs=0.05)
    assert imp["x2"] == pytest.approx(-2.0, abs=0.05)
    assert exp.converged and not exp.truncated
    assert exp.local_fidelity_gap < 1e-6
    assert exp.prediction_at_x_star == pytest.approx(3.0 * 0.1 - 2.0 * (-0.2) + 1.0)


def test_engine_queries_one_batched_call_per_round_plus_probe():
    train, x_star = tabular_setup()
    f = Recorder(linear_f)
    config = EngineConfig(r=1.0, b=37, seed=1)
    exp = explain(f, x_star, KdeGenerator(train), LinearFamily(), config)
    t = len(exp.convergence_trace)
    assert f.call_sizes == [1] + [37] * t
    assert len(f.samples) == t * 37 + 1


def test_first_batch_never_stops_the_loop():
    train, x_star = tabular_setup()
    # thresholds so loose any second batch satisfies them
    config = EngineConfig(r=1.0, b=20, sigma=1e6, epsilon_c=1e6, seed=2)
    exp = explain(linear_f, x_star, KdeGenerator(train), LinearFamily(), config)
    assert len(exp.convergence_trace) == 2
    assert exp.convergence_trace[0][1] is None
    assert exp.convergence_trace[1][1] is not None
    assert exp.converged


def test_single_batch_budget_truncates():
    train, x_star = tabular_setup()
    config = EngineConfig(r=1.0, b=20, max_batches=1, seed=3)
    exp = explain(linear_f, x_star, KdeGenerator(train), LinearFamily(), config)
    assert exp.truncated and not exp.converged
    assert len(exp.convergence_trace) == 1


def test_noise_black_box_hits_the_batch_cap():
    train, x_star = tabular_setup()
    noise = np.random.default_rng(123)

    def noisy(instances):
        return noise.normal(size=len(instances))

    config = EngineConfig(r=1.0, b=20, sigma=1e-12, epsilon_c=1e-12, max_batches=4, seed=4)
    exp = explain(noisy, x_star, KdeGenerator(train), LinearFamily(), config)
    assert exp.truncated and not exp.converged
    assert len(exp.convergence_trace) == 4


def test_counterfactuals_match_brute_force_over_recorded_samples():
    train, x_star = tabular_setup()
    f = Recorder(linear_f)
    config = EngineConfig(r=1.5, b=50, seed=6)
    exp = explain(f, x_star, KdeGenerator(train), LinearFamily(), config)
    generated = f.samples[1:]  # drop the probe at x_star
    ys = linear_f(generated)
    best = np.argsort(-ys, kind="stable")[:5]
    worst = np.argsort(ys, kind="stable")[:5]
    for (s, y), i in zip(exp.counterfactuals.favorable, best):
        assert np.array_equal(s.values, generated[i].values)
        assert y == ys[i]
    for (s, y), i in zip(exp.counterfactuals.unfavorable, worst):
        assert np.array_equal(s.values, generated[i].values)
        assert y == ys[i]


def test_tree_family_runs_in_the_loop():
    train, x_star = tabular_setup()

    def step(instances):
        xs = np.array([s.values for s in instances])
        return np.where(xs[:, 0] > 0.1, 2.0, -1.0)

    config = EngineConfig(r=1.0, b=100, seed=7)
    exp = explain(step, x_star, KdeGenerator(train), TreeFamily(), config)
    imp = exp.importances.as_dict()
    assert exp.surrogate_id == "tree"
    assert imp["x1"] > 0.95 and imp["x2"] < 0.05
    assert "rules" in exp.surrogate_detail or exp.surrogate_detail


# ---------------------------------------------------------------------------
# failures


def test_black_box_exception_is_wrapped_with_batch_index():
    train, x_star = tabular_setup()

    def explodes(instances):
        raise RuntimeError("remote model fell over")

    with pytest.raises(BlackBoxFailure) as err:
        explain(explodes, x_star, KdeGenerator(train), LinearFamily(), EngineConfig(r=1.0))
    assert err.value.batch_index == 0
    assert "fell over" in str(err.value)

    calls = {"n": 0}

    def explodes_later(instances):
        calls["n"] += 1
        if calls["n"] > 1:
            raise RuntimeError("second call dies")
        return linear_f(instances)

    with pytest.raises(BlackBoxFailure) as err:
        explain(explodes_later, x_star, KdeGenerator(train), LinearFamily(), EngineConfig(r=1.0))
    assert err.value.batch_index == 1


def test_black_box_bad_shape_and_nan_are_failures():
    train, x_star = tabular_setup()
    with pytest.raises(BlackBoxFailure):
        explain(
            lambda instances: np.zeros(len(instances) + 1),
            x_star, KdeGenerator(train), LinearFamily(), EngineConfig(r=1.0),
        )
    with pytest.raises(BlackBoxFailure):
        explain(
            lambda instances: np.full(len(instances), np.nan),
            x_star, KdeGenerator(train), LinearFamily(), EngineConfig(r=1.0),
        )


def test_config_validation():
    for bad in (
        dict(r=-1.0), dict(r=1.0, b=0), dict(r=1.0, sigma=0.0),
        dict(r=1.0, epsilon_c=-1.0), dict(r=1.0, max_batches=0),
    ):
        with pytest.raises(ValueError):
            EngineConfig(**bad)


# ---------------------------------------------------------------------------
# reproducibility


def test_same_seed_same_json_different_seed_different_samples():
    train, x_star = tabular_setup()
    config = EngineConfig(r=1.0, b=30, seed=11)
    a = explain(linear_f, x_star, KdeGenerator(train), LinearFamily(), config)
    b = explain(linear_f, x_star, KdeGenerator(train), LinearFamily(), config)
    assert a.to_json() == b.to_json()
    c = explain(
        linear_f, x_star, KdeGenerator(train), LinearFamily(),
        EngineConfig(r=1.0, b=30, seed=12),
    )
    assert a.to_json() != c.to_json()
    doc = json.loads(a.to_json())
    assert doc["seed"] == 11
    assert doc["config"]["generator"] == "kde"


# ---------------------------------------------------------------------------
# token pipeline with the statistics surrogate


def test_word2vec_stats_pipeline_end_to_end():
    emb = EmbeddingTable(
        ("good", "fine", "bad"),
        np.array([[0.0, 0.0], [0.2, 0.0], [3.0, 3.0]]),
    )
    x_star = TokenInstance(("good", "bad"))

    def text_f(instances):
        out = []
        for s in instances:
            y = 0.8
            if s.tokens[0] != "good":
                y -= 0.3
            out.append(y)
        return np.array(out)

    config = EngineConfig(r=1.0, b=50, sigma=5e-3, epsilon_c=5e-3, seed=8)
    exp = explain(text_f, x_star, Word2VecGenerator(emb), StatsFamily(), config)
    imp = exp.importances.as_dict()
    assert set(imp) == {"good@0", "bad@1"}
    # replacing "good" can only hurt; "bad" has no in-radius replacement
    assert imp["good@0"] < -0.05
    assert abs(imp["bad@1"]) < 1e-12
    assert exp.local_fidelity_gap == 0.0
    assert exp.counterfactuals.favorable[0][1] == pytest.approx(0.8)
    assert exp.counterfactuals.unfavorable[0][1] == pytest.approx(0.5)
    # token counterfactuals serialize as token lists
    doc = json.loads(exp.to_json())
    assert isinstance(doc["counterfactuals"]["favorable"][0]["x"][0], str)
