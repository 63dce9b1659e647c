"""Balanced adversarial domain-adaptation training with harmonized loss weights.

Each step computes ``L_dom`` and ``L_cls`` with their gradients ``g1`` and
``g2``, turns the pair into weights ``(tau1, tau2)`` with the configured
harmonizer, and takes one SGD step on ``tau1 * L_dom + tau2 * L_cls``: the
generator and classifier descend, the discriminator ascends. The weights are
constants within a step.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .harmonizer import GradientPair, HarmonizeMethod, HarmonizeResult, Kind, harmonize
from .metrics import discriminability_jw, mmd_rbf
from .scenario import Dataset
from .toynet import Batch, Dims, Scope, ToyNetwork, init, losses_and_grads, restrict, sgd_step

# stable ids for the named random streams derived from one seed
STREAMS = {"data": 0, "init": 1, "batch_source": 2, "batch_target": 3}


def stream(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(STREAMS[name],)))


def stream_seed(seed: int, name: str) -> int:
    return int(np.random.SeedSequence(entropy=seed, spawn_key=(STREAMS[name],)).generate_state(1)[0])


class TrainingAborted(RuntimeError):
    def __init__(self, step: int, reason: str, records: list["StepRecord"]):
        super().__init__(f"training aborted at step {step}: {reason}")
        self.step = step
        self.records = records


@dataclass(frozen=True)
class TrainConfig:
    method: HarmonizeMethod = field(default_factory=HarmonizeMethod)
    eta: float = 0.05
    iterations: int = 500
    batch_size: int = 32
    seed: int = 0
    scope: Scope = Scope.FULL
    eval_every: int = 50
    discriminator_weighted: bool = True
    hidden_dim: int = 8
    feature_dim: int = 2
    keep_gradients: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "scope", Scope(self.scope))
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        for name in ("iterations", "batch_size", "eval_every"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass
class StepRecord:
    iter: int
    loss_dom: float
    loss_cls: float
    inner_product: float
    tau1: float
    tau2: float
    conflict: bool
    angle_before: float
    target_accuracy: float | None = None
    mmd: float | None = None
    jw: float | None = None

    def to_dict(self) -> dict:
        out = {}
        for k, v in asdict(self).items():
            if v is None and k in ("target_accuracy", "mmd", "jw"):
                continue
            out[k] = None if isinstance(v, float) and math.isnan(v) else v
        return out


@dataclass
class TrainReport:
    method: HarmonizeMethod
    records: list[StepRecord]
    final_accuracy: float | None
    obtuse_fraction: float
    net: ToyNetwork = field(repr=False)
    # (g1, g2) per step over the harmonization scope, when keep_gradients is set
    gradients: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list, repr=False)

    def summary(self) -> dict:
        taus = [(r.tau1, r.tau2) for r in self.records]
        return {
            "method": self.method.kind.value,
            "lambda": self.method.lam,
            "iterations": len(self.records),
            "final_accuracy": self.final_accuracy,
            "obtuse_fraction": self.obtuse_fraction,
            "final_loss_dom": self.records[-1].loss_dom,
            "final_loss_cls": self.records[-1].loss_cls,
            "mean_tau1": float(np.mean([t[0] for t in taus])),
            "mean_tau2": float(np.mean([t[1] for t in taus])),
        }

    def write_jsonl(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
            for r in self.records:
                fh.write(json.dumps(r.to_dict(), allow_nan=False) + "\n")


def evaluate(net: ToyNetwork, data: Dataset) -> float:
    """Accuracy of the network on the labeled target rows."""
    mask = data.labeled_target
    if data.target_y.size == 0 or not mask.any():
        raise ValueError("dataset has no target labels to evaluate against")
    pred = net.predict(data.target_x[mask])
    return float(np.mean(pred == data.target_y[mask]))


def _eval_metrics(net: ToyNetwork, data: Dataset) -> tuple[float | None, float, float | None]:
    fs = net.features(data.source_x)
    ft = net.features(data.target_x)
    mmd = mmd_rbf(fs, ft)
    mask = data.labeled_target
    acc = evaluate(net, data) if mask.any() else None
    feats = np.concatenate([fs, ft[mask]])
    labels = np.concatenate([data.source_y, data.target_y[mask]])
    try:
        jw = discriminability_jw(feats, labels)
    except ValueError:
        jw = None
    return acc, mmd, jw


def _sample(rng: np.random.Generator, n: int, k: int) -> np.ndarray:
    return rng.choice(n, size=min(k, n), replace=False)


StepHook = Callable[[int, ToyNetwork, HarmonizeResult, np.ndarray, np.ndarray, np.ndarray], None]


def train(cfg: TrainConfig, data: Dataset, *, on_step: StepHook | None = None) -> TrainReport:
    """Run the training loop.

    ``on_step(i, net_before, result, g_dom, g_cls, update)`` is called after
    each update is formed; ``g_dom``/``g_cls`` are full-length gradients and
    ``update`` is the vector handed to :func:`sgd_step`.
    """
    dims = Dims(data.input_dim, cfg.hidden_dim, cfg.feature_dim, data.num_classes)
    if data.source_y.size and data.source_y.max() >= dims.num_classes:
        raise ValueError("source labels exceed num_classes")
    net = init(stream_seed(cfg.seed, "init"), dims)
    rng_s = stream(cfg.seed, "batch_source")
    rng_t = stream(cfg.seed, "batch_target")
    ns, nt = data.source_x.shape[0], data.target_x.shape[0]
    weight_disc = cfg.discriminator_weighted and cfg.method.kind not in (Kind.FLIP_G1, Kind.FLIP_G2)
    dsl = dims.d_slice

    records: list[StepRecord] = []
    gradients: list[tuple[np.ndarray, np.ndarray]] = []
    for it in range(cfg.iterations):
        si = _sample(rng_s, ns, cfg.batch_size)
        ti = _sample(rng_t, nt, cfg.batch_size)
        batch = Batch(data.source_x[si], data.source_y[si], data.target_x[ti])
        l_dom, l_cls, g_dom, g_cls = losses_and_grads(net, batch)
        if not (math.isfinite(l_dom) and math.isfinite(l_cls) and np.all(np.isfinite(g_dom)) and np.all(np.isfinite(g_cls))):
            raise TrainingAborted(it, f"non-finite loss or gradient (L_dom={l_dom}, L_cls={l_cls})", records)

        g1 = restrict(g_dom, dims, cfg.scope)
        g2 = restrict(g_cls, dims, cfg.scope)
        result = harmonize(cfg.method, GradientPair(g1, g2))
        if cfg.keep_gradients:
            gradients.append((g1.copy(), g2.copy()))

        update = result.tau1 * g_dom + result.tau2 * g_cls
        update[dsl] = (result.tau1 if weight_disc else 1.0) * g_dom[dsl]
        if on_step is not None:
            on_step(it, net, result, g_dom, g_cls, update)
        net = _step(net, update, cfg.eta, it, records)

        rec = StepRecord(it, l_dom, l_cls, result.inner_product, result.tau1, result.tau2,
                         result.conflict, result.angle_before)
        if (it + 1) % cfg.eval_every == 0 or it == cfg.iterations - 1:
            rec.target_accuracy, rec.mmd, rec.jw = _eval_metrics(net, data)
        records.append(rec)

    final = evaluate(net, data) if data.labeled_target.any() else None
    obtuse = sum(r.conflict for r in records) / len(records)
    return TrainReport(cfg.method, records, final, obtuse, net, gradients)


def _step(net: ToyNetwork, update: np.ndarray, eta: float, it: int, records: list[StepRecord]) -> ToyNetwork:
    try:
        return sgd_step(net, update, eta)
    except ValueError as exc:
        raise TrainingAborted(it, str(exc), records) from None
