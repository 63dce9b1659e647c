import json
import math

import numpy as np
import pytest

import gradharmony.trainer as trainer_mod
from gradharmony.harmonizer import GradientPair, HarmonizeMethod, Kind, gh_aggregate, harmonize
from gradharmony.scenario import Dataset, make_blobs
from gradharmony.toynet import Dims, Scope, ToyNetwork, init
from gradharmony.trainer import TrainConfig, TrainingAborted, evaluate, stream_seed, train

GH = HarmonizeMethod(Kind.GH)
NONE = HarmonizeMethod(Kind.NONE)


@pytest.fixture(scope="module")
def data():
    return make_blobs(stream_seed(0, "data"), per_class=100)


def small(method, **kw):
    kw.setdefault("iterations", 120)
    kw.setdefault("eval_every", 40)
    return TrainConfig(method=method, **kw)


def test_none_keeps_unit_weights(data):
    rep = train(small(NONE), data)
    assert all(r.tau1 == r.tau2 == 1.0 for r in rep.records)
    assert rep.obtuse_fraction == sum(r.conflict for r in rep.records) / len(rep.records)
    assert 0.0 <= rep.final_accuracy <= 1.0


def test_determinism(data, tmp_path):
    a = train(small(GH, seed=3), data)
    b = train(small(GH, seed=3), data)
    assert [r.to_dict() for r in a.records] == [r.to_dict() for r in b.records]
    a.write_jsonl(tmp_path / "a.jsonl")
    b.write_jsonl(tmp_path / "b.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    c = train(small(GH, seed=4), data)
    assert [r.loss_cls for r in a.records] != [r.loss_cls for r in c.records]


def test_eval_cadence_and_jsonl_keys(data, tmp_path):
    rep = train(small(GH, iterations=100, eval_every=40), data)
    evals = [r.iter for r in rep.records if r.target_accuracy is not None]
    assert evals == [39, 79, 99]
    rep.write_jsonl(tmp_path / "r.jsonl")
    lines = (tmp_path / "r.jsonl").read_text().splitlines()
    assert len(lines) == 100
    first, at_eval = json.loads(lines[0]), json.loads(lines[39])
    assert set(first) == {"iter", "loss_dom", "loss_cls", "inner_product", "tau1", "tau2", "conflict", "angle_before"}
    assert {"target_accuracy", "mmd", "jw"} <= set(at_eval)


@pytest.mark.parametrize("scope", [Scope.FULL, Scope.SHARED])
def test_replay_oracle_matches_logged_weights(data, scope):
    rep = train(small(GH, scope=scope, keep_gradients=True), data)
    assert any(r.conflict for r in rep.records)
    for rec, (g1, g2) in zip(rep.records, rep.gradients):
        again = harmonize(GH, GradientPair(g1, g2))
        assert again.tau1 == rec.tau1 and again.tau2 == rec.tau2
        assert rec.conflict == (float(g1 @ g2) < 0)
        if rec.conflict:
            assert again.tilde_g1 @ again.tilde_g2 >= -1e-9 * np.linalg.norm(g1) * np.linalg.norm(g2)


def test_update_equals_theorem1_aggregate(data):
    seen = []

    def hook(i, net, result, g_dom, g_cls, update):
        seen.append((net.theta.copy(), g_dom, g_cls, update.copy()))

    cfg = small(GH, eta=0.05)
    rep = train(cfg, data, on_step=hook)
    dims = rep.net.dims
    thetas = [s[0] for s in seen] + [rep.net.theta]
    for k, (theta, g_dom, g_cls, update) in enumerate(seen):
        agg = gh_aggregate(GradientPair(g_dom, g_cls))
        np.testing.assert_allclose(update, agg, rtol=1e-9, atol=1e-9 * np.abs(agg).max())
        applied = thetas[k + 1] - theta
        expected = -cfg.eta * agg
        expected[dims.d_slice] *= -1
        np.testing.assert_allclose(applied, expected, rtol=1e-9, atol=1e-12)


@pytest.mark.parametrize("kind", [Kind.GH, Kind.GHPP_WEIGHTED])
def test_non_conflicting_steps_match_plain_update(data, kind):
    checked = 0

    def hook(i, net, result, g_dom, g_cls, update):
        nonlocal checked
        if result.inner_product >= 0:
            np.testing.assert_array_equal(update, g_dom + g_cls)
            checked += 1

    train(small(HarmonizeMethod(kind)), data, on_step=hook)
    assert checked > 0


def test_discriminator_weighting_flag(data):
    def hook_for(weighted):
        def hook(i, net, result, g_dom, g_cls, update):
            d = net.dims.d_slice
            w = result.tau1 if weighted else 1.0
            np.testing.assert_array_equal(update[d], w * g_dom[d])
        return hook

    train(small(GH, iterations=40), data, on_step=hook_for(True))
    train(small(GH, iterations=40, discriminator_weighted=False), data, on_step=hook_for(False))


def test_sign_flip_leaves_discriminator_unweighted(data):
    def hook(i, net, result, g_dom, g_cls, update):
        d = net.dims.d_slice
        assert result.tau1 == -1.0
        np.testing.assert_array_equal(update[d], g_dom[d])
        np.testing.assert_array_equal(update[: net.dims.n_g], (-g_dom + g_cls)[: net.dims.n_g])

    train(small(HarmonizeMethod(Kind.FLIP_G1), iterations=20), data, on_step=hook)


def test_all_methods_run(data):
    for kind in Kind:
        rep = train(small(HarmonizeMethod(kind), iterations=60), data)
        assert len(rep.records) == 60


def test_nan_aborts_with_index(data, monkeypatch):
    real = trainer_mod.losses_and_grads
    calls = {"n": 0}

    def flaky(net, batch):
        calls["n"] += 1
        l_dom, l_cls, g1, g2 = real(net, batch)
        return (math.nan if calls["n"] == 4 else l_dom), l_cls, g1, g2

    monkeypatch.setattr(trainer_mod, "losses_and_grads", flaky)
    with pytest.raises(TrainingAborted) as exc:
        train(small(GH), data)
    assert exc.value.step == 3 and len(exc.value.records) == 3


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(eta=0)
    with pytest.raises(ValueError):
        TrainConfig(iterations=0)


def test_evaluate_chance_level_for_untrained_nets(data):
    accs = [evaluate(init(s, Dims(2, 8, 2, 2)), data) for s in range(40)]
    assert abs(np.mean(accs) - 0.5) <= 0.1


def test_evaluate_constant_classifier_majority():
    d = make_blobs(0, per_class=30)
    # unbalance the target: keep 30 of class 0 and 12 of class 1
    keep = np.concatenate([np.arange(30), np.arange(30, 42)])
    d = Dataset(d.source_x, d.source_y, d.target_x[keep], d.target_y[keep], d.meta)
    net = init(0, Dims(2, 8, 2, 2))
    theta = net.theta.copy()
    dims = net.dims
    c0 = dims.n_g + dims.n_d
    theta[c0:] = 0.0
    theta[-2] = 1.0  # bias of class 0
    const = ToyNetwork(dims, theta)
    assert evaluate(const, d) == 30 / 42


def test_evaluate_needs_labels():
    d = make_blobs(0, per_class=10)
    d = Dataset(d.source_x, d.source_y, d.target_x, np.full_like(d.target_y, -1), d.meta)
    with pytest.raises(ValueError):
        evaluate(init(0, Dims()), d)


def test_trained_on_unshifted_data_generalises():
    for seed in range(5):
        d = make_blobs(stream_seed(seed, "data"), per_class=200, rotation=0.0, translation=None)
        rep = train(TrainConfig(method=NONE, seed=seed, iterations=300), d)
        assert rep.final_accuracy > 0.95
