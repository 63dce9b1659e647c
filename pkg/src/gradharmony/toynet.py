"""Small adversarial domain-adaptation network with hand-written backprop.

Three blocks share one flat parameter vector ``theta = [theta_g | theta_d | theta_c]``:

* generator G: ``x -> tanh(W1 x + b1) -> W2 h + b2`` (the feature),
* discriminator D: ``feature -> sigmoid(w_d . f + b_d)`` (probability of "source"),
* classifier C: ``feature -> softmax(W_c f + b_c)``.

Within a block the order is weights (row-major) then bias, layer by layer.

The domain loss is ``mean_s log D(G(x_s)) + mean_t log(1 - D(G(x_t)))``; the
discriminator ascends it, the generator descends it. ``g1`` is the plain
gradient of this loss over the chosen scope and ``g2`` the plain gradient of
the source cross-entropy.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import expit, log_softmax

from .harmonizer import GradientPair
from .vecmath import ParamVector

PROB_CLAMP = 1e-7


class Scope(str, Enum):
    FULL = "full"
    SHARED = "shared"


@dataclass(frozen=True)
class Dims:
    input_dim: int = 2
    hidden_dim: int = 8
    feature_dim: int = 2
    num_classes: int = 2

    def __post_init__(self) -> None:
        for name in ("input_dim", "hidden_dim", "feature_dim", "num_classes"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")

    @property
    def n_g(self) -> int:
        return self.hidden_dim * self.input_dim + self.hidden_dim + self.feature_dim * self.hidden_dim + self.feature_dim

    @property
    def n_d(self) -> int:
        return self.feature_dim + 1

    @property
    def n_c(self) -> int:
        return self.num_classes * self.feature_dim + self.num_classes

    @property
    def n_total(self) -> int:
        return self.n_g + self.n_d + self.n_c

    @property
    def d_slice(self) -> slice:
        return slice(self.n_g, self.n_g + self.n_d)


@dataclass(frozen=True)
class Batch:
    source_x: np.ndarray
    source_y: np.ndarray
    target_x: np.ndarray

    def __post_init__(self) -> None:
        sx = np.ascontiguousarray(self.source_x, dtype=np.float64)
        tx = np.ascontiguousarray(self.target_x, dtype=np.float64)
        sy = np.asarray(self.source_y)
        if sx.ndim != 2 or tx.ndim != 2 or sx.shape[1] != tx.shape[1]:
            raise ValueError("source_x and target_x must be 2-D with the same number of columns")
        if sx.shape[0] < 1 or tx.shape[0] < 1:
            raise ValueError("a batch needs at least one source and one target sample")
        if sy.shape != (sx.shape[0],):
            raise ValueError("source_y must hold one label per source row")
        object.__setattr__(self, "source_x", sx)
        object.__setattr__(self, "target_x", tx)
        object.__setattr__(self, "source_y", sy.astype(np.int64))


@dataclass(frozen=True)
class ToyNetwork:
    dims: Dims
    theta: ParamVector

    def __post_init__(self) -> None:
        theta = np.array(self.theta, dtype=np.float64)
        if theta.shape != (self.dims.n_total,):
            raise ValueError(f"theta must have length {self.dims.n_total}, got {theta.shape}")
        if not np.all(np.isfinite(theta)):
            raise ValueError("theta contains NaN or Inf")
        theta.flags.writeable = False
        object.__setattr__(self, "theta", theta)

    @property
    def theta_g(self) -> ParamVector:
        return self.theta[: self.dims.n_g]

    @property
    def theta_d(self) -> ParamVector:
        return self.theta[self.dims.d_slice]

    @property
    def theta_c(self) -> ParamVector:
        return self.theta[self.dims.n_g + self.dims.n_d:]

    def unpack(self) -> dict[str, np.ndarray]:
        d = self.dims
        t = self.theta
        out = {}
        i = 0
        for name, shape in (
            ("W1", (d.hidden_dim, d.input_dim)),
            ("b1", (d.hidden_dim,)),
            ("W2", (d.feature_dim, d.hidden_dim)),
            ("b2", (d.feature_dim,)),
            ("wd", (d.feature_dim,)),
            ("bd", (1,)),
            ("Wc", (d.num_classes, d.feature_dim)),
            ("bc", (d.num_classes,)),
        ):
            n = int(np.prod(shape))
            out[name] = t[i:i + n].reshape(shape)
            i += n
        return out

    def features(self, x: np.ndarray) -> np.ndarray:
        p = self.unpack()
        h = np.tanh(x @ p["W1"].T + p["b1"])
        return h @ p["W2"].T + p["b2"]

    def predict(self, x: np.ndarray) -> np.ndarray:
        p = self.unpack()
        return np.argmax(self.features(x) @ p["Wc"].T + p["bc"], axis=1)


def init(seed: int, dims: Dims | None = None) -> ToyNetwork:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialisation, deterministic in ``seed``."""
    dims = dims or Dims()
    rng = np.random.default_rng(seed)
    parts = []
    for fan_in, n in (
        (dims.input_dim, dims.hidden_dim * dims.input_dim + dims.hidden_dim),
        (dims.hidden_dim, dims.feature_dim * dims.hidden_dim + dims.feature_dim),
        (dims.feature_dim, dims.feature_dim + 1),
        (dims.feature_dim, dims.num_classes * dims.feature_dim + dims.num_classes),
    ):
        bound = 1.0 / np.sqrt(fan_in)
        parts.append(rng.uniform(-bound, bound, size=n))
    return ToyNetwork(dims, np.concatenate(parts))


def _check_labels(net: ToyNetwork, y: np.ndarray) -> None:
    if y.size and (y.min() < 0 or y.max() >= net.dims.num_classes):
        raise ValueError(f"labels must lie in [0, {net.dims.num_classes})")


def loss_cls(net: ToyNetwork, batch: Batch) -> float:
    _check_labels(net, batch.source_y)
    p = net.unpack()
    logits = net.features(batch.source_x) @ p["Wc"].T + p["bc"]
    logp = log_softmax(logits, axis=1)
    return float(-np.mean(logp[np.arange(len(batch.source_y)), batch.source_y]))


def _disc_prob(f: np.ndarray, wd: np.ndarray, bd: np.ndarray) -> np.ndarray:
    return expit(f @ wd + bd[0])


def loss_dom(net: ToyNetwork, batch: Batch) -> float:
    p = net.unpack()
    ps = np.clip(_disc_prob(net.features(batch.source_x), p["wd"], p["bd"]), PROB_CLAMP, 1 - PROB_CLAMP)
    pt = np.clip(_disc_prob(net.features(batch.target_x), p["wd"], p["bd"]), PROB_CLAMP, 1 - PROB_CLAMP)
    return float(np.mean(np.log(ps)) + np.mean(np.log(1.0 - pt)))


def losses_and_grads(net: ToyNetwork, batch: Batch) -> tuple[float, float, np.ndarray, np.ndarray]:
    """Return ``(L_dom, L_cls, dL_dom/dtheta, dL_cls/dtheta)`` over the full parameter vector."""
    _check_labels(net, batch.source_y)
    d = net.dims
    p = net.unpack()
    ns, nt = batch.source_x.shape[0], batch.target_x.shape[0]
    x = np.concatenate([batch.source_x, batch.target_x])
    h = np.tanh(x @ p["W1"].T + p["b1"])
    f = h @ p["W2"].T + p["b2"]
    fs = f[:ns]

    # classification on source rows
    logits = fs @ p["Wc"].T + p["bc"]
    logp = log_softmax(logits, axis=1)
    rows = np.arange(ns)
    l_cls = float(-np.mean(logp[rows, batch.source_y]))
    dlogits = np.exp(logp)
    dlogits[rows, batch.source_y] -= 1.0
    dlogits /= ns
    dWc = dlogits.T @ fs
    dbc = dlogits.sum(axis=0)
    df_cls = np.zeros_like(f)
    df_cls[:ns] = dlogits @ p["Wc"]

    # domain loss on all rows; clamped probabilities carry no gradient
    z = f @ p["wd"] + p["bd"][0]
    prob = expit(z)
    ps = np.clip(prob[:ns], PROB_CLAMP, 1 - PROB_CLAMP)
    pt = np.clip(prob[ns:], PROB_CLAMP, 1 - PROB_CLAMP)
    l_dom = float(np.mean(np.log(ps)) + np.mean(np.log(1.0 - pt)))
    dz = np.empty(ns + nt)
    dz[:ns] = (1.0 - prob[:ns]) / ns
    dz[ns:] = -prob[ns:] / nt
    dz[:ns][(prob[:ns] < PROB_CLAMP) | (prob[:ns] > 1 - PROB_CLAMP)] = 0.0
    dz[ns:][(prob[ns:] < PROB_CLAMP) | (prob[ns:] > 1 - PROB_CLAMP)] = 0.0
    dwd = dz @ f
    dbd = np.array([dz.sum()])
    df_dom = np.outer(dz, p["wd"])

    def generator_grad(df: np.ndarray) -> np.ndarray:
        dW2 = df.T @ h
        db2 = df.sum(axis=0)
        dpre = (df @ p["W2"]) * (1.0 - h * h)
        dW1 = dpre.T @ x
        db1 = dpre.sum(axis=0)
        return np.concatenate([dW1.ravel(), db1, dW2.ravel(), db2])

    g_dom = np.zeros(d.n_total)
    g_dom[: d.n_g] = generator_grad(df_dom)
    g_dom[d.d_slice] = np.concatenate([dwd, dbd])
    g_cls = np.zeros(d.n_total)
    g_cls[: d.n_g] = generator_grad(df_cls)
    g_cls[d.n_g + d.n_d:] = np.concatenate([dWc.ravel(), dbc])
    return l_dom, l_cls, g_dom, g_cls


def restrict(full: np.ndarray, dims: Dims, scope: Scope) -> np.ndarray:
    scope = Scope(scope)
    return full if scope is Scope.FULL else full[: dims.n_g]


def grad_pair(net: ToyNetwork, batch: Batch, scope: Scope = Scope.FULL) -> GradientPair:
    """``GradientPair(g1=dL_dom, g2=dL_cls)`` over the requested parameter scope.

    Under ``Scope.FULL`` g1 is zero on the classifier block and g2 on the
    discriminator block. The discriminator block of g1 is the plain gradient;
    :func:`sgd_step` applies it as an ascent step.
    """
    _, _, g_dom, g_cls = losses_and_grads(net, batch)
    return GradientPair(restrict(g_dom, net.dims, scope), restrict(g_cls, net.dims, scope))


def sgd_step(net: ToyNetwork, update: np.ndarray, eta: float) -> ToyNetwork:
    """Descend on generator/classifier entries and ascend on discriminator entries.

    ``update`` is either a full-length vector or a generator-only vector
    (shared scope), in which case the other blocks are left untouched.
    """
    if not eta > 0:
        raise ValueError("eta must be positive")
    d = net.dims
    update = np.asarray(update, dtype=np.float64)
    if update.shape == (d.n_total,):
        step = update.copy()
        step[d.d_slice] *= -1.0
    elif update.shape == (d.n_g,):
        step = np.zeros(d.n_total)
        step[: d.n_g] = update
    else:
        raise ValueError(f"update length {update.shape} matches neither the full ({d.n_total}) nor the shared ({d.n_g}) layout")
    return ToyNetwork(d, net.theta - eta * step)
