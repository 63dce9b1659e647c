"""Acceptance criteria 1-11, each checked at its stated tolerance.

Each test records one PASS/FAIL line (shown in the "acceptance criteria"
section of the pytest summary) before asserting.
"""
import math
import time

import numpy as np
import pytest

from gradharmony.analysis import GradientTrace, histogram, post_harmonization_trace
from gradharmony.cli import cmd_train
from gradharmony.harmonizer import (
    GradientPair,
    HarmonizeMethod,
    Kind,
    gh_weights,
    ghpp_weights,
    harmonize,
    verify_lemma1_qp,
)
from gradharmony.scenario import make_blobs
from gradharmony.toynet import Batch, Dims, init, loss_cls, loss_dom, losses_and_grads
from gradharmony.trainer import TrainConfig, stream_seed, train

from conftest import random_conflicting_pair

GH = HarmonizeMethod(Kind.GH)
ROTATE = HarmonizeMethod(Kind.GHPP_ROTATE, 0.5)
SEEDS = range(5)


def pairs_1000(seed=7):
    rng = np.random.default_rng(seed)
    dims = [2] * 334 + [10] * 333 + [100] * 333
    return [random_conflicting_pair(rng, d) for d in dims]


@pytest.fixture(scope="module")
def pairs():
    return pairs_1000()


def test_c1_gh_geometry(pairs, acceptance):
    t0 = time.perf_counter()
    worst = dict(orth=0.0, ip=0.0, angle=0.0)
    for g1, g2 in pairs:
        r = harmonize(GH, GradientPair(g1, g2))
        scale = np.linalg.norm(g1) * np.linalg.norm(g2)
        worst["orth"] = max(worst["orth"], abs(r.tilde_g1 @ g2) / scale, abs(r.tilde_g2 @ g1) / scale)
        ip = g1 @ g2
        cos = ip / scale
        expected = -ip * (1.0 - cos * cos)
        worst["ip"] = max(worst["ip"], abs(r.tilde_g1 @ r.tilde_g2 - expected) / abs(expected))
        worst["angle"] = max(worst["angle"], abs(r.angle_after - (math.pi - r.angle_before)))
    elapsed = time.perf_counter() - t0
    ok = worst["orth"] <= 1e-9 and worst["ip"] <= 1e-9 and worst["angle"] <= 1e-9 and elapsed < 5.0
    detail = (f"max orth {worst['orth']:.1e}, max ip rel {worst['ip']:.1e}, "
              f"max angle err {worst['angle']:.1e} (tol 1e-9), {elapsed:.2f}s (< 5s)")
    assert acceptance(1, "GH geometry", ok, detail)


def test_c2_theorem1_equivalence(pairs, acceptance):
    worst = 0.0
    for g1, g2 in pairs:
        ip, n1, n2 = g1 @ g2, g1 @ g1, g2 @ g2
        projected = (g1 - ip / n2 * g2) + (g2 - ip / n1 * g1)
        tau1, tau2 = gh_weights(GradientPair(g1, g2))
        worst = max(worst, np.linalg.norm(tau1 * g1 + tau2 * g2 - projected) / np.linalg.norm(projected))
    assert acceptance(2, "tau-weighted loss gradient == GH aggregate", worst <= 1e-12,
                      f"max rel err {worst:.1e} (tol 1e-12)")


def test_c3_ghpp_weighted(acceptance):
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(500):
        g1, g2 = random_conflicting_pair(rng, int(rng.integers(2, 20)))
        p = GradientPair(g1, g2)
        worst = max(worst, abs(ghpp_weights(p, 0.0)[0] - 1.0), abs(ghpp_weights(p, 1.0)[1] - 1.0),
                    abs(sum(ghpp_weights(p, 0.5)) - 2.0))
    tau1, tau2 = ghpp_weights(GradientPair([1.0, 0.0], [-2.0, 0.0]), 0.5)
    # at theta = pi: 1 +/- 2 sin(pi/8)
    worst_anti = max(abs(tau1 - 1.765367), abs(tau2 - 0.234633))
    exact = max(abs(tau1 - (1 + 2 * math.sin(math.pi / 8))), abs(tau2 - (1 - 2 * math.sin(math.pi / 8))))
    ok = worst <= 1e-9 and exact <= 1e-9 and worst_anti <= 5e-7
    assert acceptance(3, "GH++ weighted identities", ok,
                      f"identities {worst:.1e}, antiparallel closed form {exact:.1e} (tol 1e-9), "
                      f"vs 6-digit values {worst_anti:.1e}")


def test_c4_ghpp_rotate(pairs, acceptance):
    worst = dict(angle=0.0, norm=0.0, dev=0.0)
    for g1, g2 in pairs:
        p = GradientPair(g1, g2)
        r = harmonize(ROTATE, p)
        worst["angle"] = max(worst["angle"], abs(r.angle_after - math.pi / 2))
        worst["norm"] = max(worst["norm"],
                            abs(np.linalg.norm(r.tilde_g1) / np.linalg.norm(g1) - 1.0),
                            abs(np.linalg.norm(r.tilde_g2) / np.linalg.norm(g2) - 1.0))
        worst["dev"] = max(worst["dev"], abs(harmonize(GH, p).deviation_sum - 2.0 * r.deviation_sum))
    ok = worst["angle"] <= 1e-9 and worst["norm"] <= 1e-12 and worst["dev"] <= 1e-9
    assert acceptance(4, "GH++ rotate", ok,
                      f"angle err {worst['angle']:.1e} (1e-9), norm rel err {worst['norm']:.1e} (1e-12), "
                      f"deviation ratio err {worst['dev']:.1e} (1e-9)")


def test_c5_lemma1_qp(acceptance):
    rng = np.random.default_rng(5)
    t0 = time.perf_counter()
    failures = 0
    for dim in (2, 3, 10):
        for k in range(100):
            g1, g2 = random_conflicting_pair(rng, dim)
            failures += not verify_lemma1_qp(g1, g2, 1000, seed=k, tol=1e-9)
    elapsed = time.perf_counter() - t0
    ok = failures == 0 and elapsed < 30.0
    assert acceptance(5, "Lemma 1 QP oracle", ok,
                      f"{failures} failing pairs of 300 (x1000 samples), {elapsed:.2f}s (< 30s)")


def test_c6_gradient_check(acceptance):
    dims = Dims(2, 8, 2, 2)
    eps = 1e-5
    worst = 0.0
    for seed in SEEDS:
        rng = np.random.default_rng(100 + seed)
        net = init(seed, dims)
        batch = Batch(rng.normal(size=(16, 2)) * 2, rng.integers(0, 2, 16), rng.normal(size=(16, 2)) * 2 + 1)
        _, _, g_dom, g_cls = losses_and_grads(net, batch)
        for j in rng.choice(dims.n_total, 20, replace=False):
            e = np.zeros(dims.n_total)
            e[j] = eps
            plus, minus = type(net)(dims, net.theta + e), type(net)(dims, net.theta - e)
            for fn, g in ((loss_dom, g_dom), (loss_cls, g_cls)):
                fd = (fn(plus, batch) - fn(minus, batch)) / (2 * eps)
                worst = max(worst, abs(fd - g[j]) / max(abs(fd), abs(g[j]), 1e-8))
    assert acceptance(6, "analytic vs finite-difference gradients", worst < 1e-4,
                      f"max rel err {worst:.1e} (< 1e-4) over 20 coords x 5 seeds x 2 losses")


@pytest.fixture(scope="module")
def desk_runs():
    """5 seeds x {none, gh, ghpp-weighted, flip-g1, flip-g2} on the default shifted blobs."""
    t0 = time.perf_counter()
    runs = {}
    for name in ("none", "gh", "ghpp-weighted", "flip-g1", "flip-g2"):
        method = HarmonizeMethod.parse(name, 0.5)
        reports = []
        for seed in SEEDS:
            data = make_blobs(stream_seed(seed, "data"), num_classes=2, per_class=200,
                              rotation=math.pi / 4, translation=(1.0, 1.0))
            cfg = TrainConfig(method=method, eta=0.05, iterations=500, seed=seed, keep_gradients=name == "none")
            reports.append(train(cfg, data))
        runs[name] = reports
    return runs, time.perf_counter() - t0


def test_c7_conflict_exists(desk_runs, acceptance):
    fracs = [r.obtuse_fraction for r in desk_runs[0]["none"]]
    assert acceptance(7, "gradient conflict occurs without harmonization", all(f > 0 for f in fracs),
                      "obtuse fractions " + ", ".join(f"{f:.3f}" for f in fracs) + " (all > 0)")


def test_c8_gh_removes_conflict(desk_runs, acceptance):
    after = []
    for r in desk_runs[0]["none"]:
        replay = post_harmonization_trace(GradientTrace.from_pairs(r.gradients), GH)
        after.append(histogram(replay, 20).obtuse_fraction)
    assert acceptance(8, "GH replay eliminates obtuse pairs", all(f == 0.0 for f in after),
                      "post-harmonization obtuse fractions " + ", ".join(f"{f:g}" for f in after) + " (== 0)")


def _mean_acc(reports):
    return float(np.mean([r.final_accuracy for r in reports]))


def test_c9_desk_trend(desk_runs, acceptance):
    runs, elapsed = desk_runs
    base, gh, ghpp = (_mean_acc(runs[k]) for k in ("none", "gh", "ghpp-weighted"))
    ok = gh >= base - 0.005 and ghpp >= base - 0.005 and max(gh, ghpp) > base and elapsed < 60.0
    assert acceptance(9, "harmonized accuracy vs baseline", ok,
                      f"none {base:.4f}, gh {gh:.4f}, ghpp-weighted {ghpp:.4f} "
                      f"(>= none - 0.005, one > none), {elapsed:.1f}s for 25 runs (< 60s)")


def test_c10_sign_flip_degrades(desk_runs, acceptance):
    runs = desk_runs[0]
    gh, f1, f2 = (_mean_acc(runs[k]) for k in ("gh", "flip-g1", "flip-g2"))
    assert acceptance(10, "sign-flip ablation below GH", f1 < gh and f2 < gh,
                      f"gh {gh:.4f}, flip-g1 {f1:.4f}, flip-g2 {f2:.4f} (both < gh)")


def test_c11_cli_determinism(tmp_path, acceptance):
    import json

    cfg = {"seed": 3, "output_dir": "out", "methods": ["none", "gh", "ghpp-rotate"],
           "train": {"iterations": 100}, "save_gradients": True}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    snapshots = []
    for _ in range(2):
        assert cmd_train(path) == 0
        snapshots.append({p.name: p.read_bytes() for p in sorted((tmp_path / "out").iterdir())})
        for p in (tmp_path / "out").iterdir():
            p.unlink()
    same = snapshots[0] == snapshots[1]
    assert acceptance(11, "cmd_train determinism", same,
                      f"{len(snapshots[0])} files, byte-identical: {same}")
