"""Minimal dense-network numerics: forward, hand-derived backprop, two losses,
SGD with momentum, and checkpoint io.

Everything trains through explicit chains of nets, some trainable and some
frozen; gradients flow through frozen members without updating them. All
randomness goes through numpy Generators seeded from the config, so training
is bit-reproducible per seed (on a fixed backend).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import backend


class DimensionError(ValueError):
    pass


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class DenseNet:
    """Fully-connected net; relu on hidden layers, identity on the output
    (losses apply their own link)."""
    sizes: tuple[int, ...]
    Ws: list[np.ndarray]
    bs: list[np.ndarray]

    @property
    def n_in(self) -> int:
        return self.sizes[0]

    @property
    def n_out(self) -> int:
        return self.sizes[-1]

    @property
    def n_params(self) -> int:
        return sum(W.size + b.size for W, b in zip(self.Ws, self.bs))

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Single-vector forward through the active kernel."""
        if x.shape != (self.n_in,):
            raise DimensionError(f"expected input of length {self.n_in}, got {x.shape}")
        return backend.forward(self.Ws, self.bs, x)

    def forward_batch(self, X: np.ndarray) -> np.ndarray:
        H = X
        last = len(self.Ws) - 1
        for i, (W, b) in enumerate(zip(self.Ws, self.bs)):
            H = H @ W + b
            if i != last:
                np.maximum(H, 0.0, out=H)
        return H

    def copy(self) -> "DenseNet":
        return DenseNet(self.sizes, [W.copy() for W in self.Ws], [b.copy() for b in self.bs])

    def params_equal(self, other: "DenseNet") -> bool:
        return self.sizes == other.sizes and all(
            np.array_equal(a, b) for a, b in zip(self.Ws + self.bs, other.Ws + other.bs)
        )


def init_dense(sizes: Sequence[int], rng: np.random.Generator) -> DenseNet:
    """Uniform init in +-sqrt(6 / (fan_in + fan_out)); zero biases."""
    sizes = tuple(int(s) for s in sizes)
    if len(sizes) < 2 or any(s < 1 for s in sizes):
        raise DimensionError(f"bad layer sizes {sizes}")
    Ws, bs = [], []
    for n_in, n_out in zip(sizes, sizes[1:]):
        limit = np.sqrt(6.0 / (n_in + n_out))
        Ws.append(rng.uniform(-limit, limit, size=(n_in, n_out)))
        bs.append(np.zeros(n_out, dtype=np.float64))
    return DenseNet(sizes, Ws, bs)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    batch_size: int = 32
    epochs: int = 200
    seed: int = 0
    loss_kind: str = "segmented-nll"  # or "mse"
    momentum: float = 0.9
    segments: Optional[tuple[int, ...]] = None  # required by segmented-nll

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or self.epochs < 1:
            raise ValueError("learning_rate, batch_size, epochs must be positive")
        if self.loss_kind not in ("segmented-nll", "mse"):
            raise ValueError(f"unknown loss {self.loss_kind!r}")


# ---------------------------------------------------------------- losses

def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def segmented_nll_batch(G: np.ndarray, T: np.ndarray, segments: Sequence[int]):
    """Softmax cross-entropy summed over the one-hot segments of each row.

    Returns (total loss over rows, dL/dG). Gradient per segment is
    softmax(g) - t, the usual cancellation.
    """
    if G.shape != T.shape:
        raise DimensionError(f"logits {G.shape} vs targets {T.shape}")
    if sum(segments) != G.shape[-1]:
        raise DimensionError(f"segments {segments} do not tile width {G.shape[-1]}")
    loss = 0.0
    grad = np.empty_like(G)
    start = 0
    for seg in segments:
        sl = slice(start, start + seg)
        p = _softmax(G[..., sl])
        t = T[..., sl]
        loss += -np.sum(t * np.log(np.maximum(p, 1e-300)))
        grad[..., sl] = p - t
        start += seg
    return loss, grad


def segmented_nll_loss(g: np.ndarray, t: np.ndarray, segments: Sequence[int]):
    """Single-vector form of segmented_nll_batch."""
    loss, grad = segmented_nll_batch(g[None, :], t[None, :], segments)
    return loss, grad[0]


def mse_batch(G: np.ndarray, T: np.ndarray):
    """Half squared error summed over components; gradient G - T."""
    if G.shape != T.shape:
        raise DimensionError(f"predictions {G.shape} vs targets {T.shape}")
    diff = G - T
    return 0.5 * float(np.sum(diff * diff)), diff


def mse_loss(g: np.ndarray, t: np.ndarray):
    loss, grad = mse_batch(g, t)
    return loss, grad


def batch_loss(kind: str, G, T, segments=None):
    if kind == "segmented-nll":
        return segmented_nll_batch(G, T, segments)
    return mse_batch(G, T)


# ------------------------------------------------- chain forward/backward

def chain_forward(nets: Sequence[DenseNet], X: np.ndarray):
    """Forward a batch through consecutive nets, keeping what backprop needs.

    Returns (output, caches); caches[i] holds the layer inputs and
    pre-activations of net i.
    """
    caches = []
    H = X
    for net in nets:
        inputs, zs = [], []
        last = len(net.Ws) - 1
        for i, (W, b) in enumerate(zip(net.Ws, net.bs)):
            inputs.append(H)
            Z = H @ W + b
            zs.append(Z)
            H = np.maximum(Z, 0.0) if i != last else Z
        caches.append((inputs, zs))
    return H, caches


def chain_backward(nets: Sequence[DenseNet], caches, dY: np.ndarray,
                   trainable: Sequence[bool]):
    """Backprop dY through the chain.

    Returns (grads, dX): grads[i] is (dWs, dbs) for trainable nets and None
    for frozen ones; dX is the loss gradient at the chain input (used to
    train conditioning vectors fed in as inputs).
    """
    d = dY
    grads: list = [None] * len(nets)
    for i in range(len(nets) - 1, -1, -1):
        net = nets[i]
        inputs, zs = caches[i]
        want = trainable[i]
        dWs = [None] * len(net.Ws) if want else None
        dbs = [None] * len(net.bs) if want else None
        last = len(net.Ws) - 1
        for l in range(last, -1, -1):
            if l != last:
                d = d * (zs[l] > 0.0)
            if want:
                dWs[l] = inputs[l].T @ d
                dbs[l] = d.sum(axis=0)
            d = d @ net.Ws[l].T
        if want:
            grads[i] = (dWs, dbs)
    return grads, d


class SgdState:
    """Momentum buffers for one net (or any list of arrays)."""

    def __init__(self, arrays: Sequence[np.ndarray]):
        self.vel = [np.zeros_like(a) for a in arrays]

    def step(self, arrays, grads, lr: float, momentum: float, scale: float = 1.0):
        for a, g, v in zip(arrays, grads, self.vel):
            v *= momentum
            v -= lr * scale * g
            a += v


def train_chain(nets: Sequence[DenseNet], trainable: Sequence[bool],
                X: np.ndarray, T: np.ndarray, cfg: TrainConfig) -> list[float]:
    """Minibatch SGD over the trainable members of a chain, in place.

    Loss curve returned is the mean per-example loss per epoch. Gradients are
    averaged over the minibatch.
    """
    if len(nets) != len(trainable):
        raise DimensionError("one flag per net")
    for a, b in zip(nets, nets[1:]):
        if a.n_out != b.n_in:
            raise DimensionError(f"chain mismatch: {a.sizes} then {b.sizes}")
    rng = np.random.default_rng(cfg.seed)
    states = [SgdState(net.Ws + net.bs) if t else None for net, t in zip(nets, trainable)]
    n = X.shape[0]
    curve = []
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start: start + cfg.batch_size]
            Xb, Tb = X[idx], T[idx]
            Y, caches = chain_forward(nets, Xb)
            loss, dY = batch_loss(cfg.loss_kind, Y, Tb, cfg.segments)
            total += loss
            grads, _ = chain_backward(nets, caches, dY, trainable)
            for net, g, st in zip(nets, grads, states):
                if g is None:
                    continue
                dWs, dbs = g
                st.step(net.Ws + net.bs, dWs + dbs, cfg.learning_rate,
                        cfg.momentum, scale=1.0 / len(idx))
        mean = total / n
        if not np.isfinite(mean):
            raise TrainingDiverged(f"non-finite loss {mean} (lr too high?)")
        curve.append(mean)
    return curve


def train(net: DenseNet, data: Sequence[tuple[np.ndarray, np.ndarray]], cfg: TrainConfig,
          frozen_prefix: DenseNet | None = None, frozen_suffix: DenseNet | None = None):
    """Train one net, optionally sandwiched between frozen nets.

    Returns (trained copy, loss curve); the input net and the frozen nets are
    never mutated.
    """
    trained = net.copy()
    chain = [trained]
    flags = [True]
    if frozen_prefix is not None:
        chain.insert(0, frozen_prefix)
        flags.insert(0, False)
    if frozen_suffix is not None:
        chain.append(frozen_suffix)
        flags.append(False)
    X = np.asarray([x for x, _ in data], dtype=np.float64)
    T = np.asarray([t for _, t in data], dtype=np.float64)
    curve = train_chain(chain, flags, X, T, cfg)
    return trained, curve


# ------------------------------------------------------------ checkpoints

def save_net(path, net: DenseNet, meta: dict | None = None) -> None:
    """JSON header line + little-endian float64 parameter stream."""
    header = {"sizes": list(net.sizes)}
    if meta:
        header.update(meta)
    blob = b"".join(a.astype("<f8").tobytes() for a in net.Ws + net.bs)
    with open(path, "wb") as f:
        f.write(json.dumps(header).encode("utf-8") + b"\n")
        f.write(blob)


def load_net(path) -> tuple[DenseNet, dict]:
    with open(path, "rb") as f:
        header = json.loads(f.readline().decode("utf-8"))
        raw = np.frombuffer(f.read(), dtype="<f8")
    sizes = tuple(header["sizes"])
    Ws, bs, pos = [], [], 0
    for n_in, n_out in zip(sizes, sizes[1:]):
        Ws.append(raw[pos: pos + n_in * n_out].reshape(n_in, n_out).copy())
        pos += n_in * n_out
    for _, n_out in zip(sizes, sizes[1:]):
        bs.append(raw[pos: pos + n_out].copy())
        pos += n_out
    if pos != raw.size:
        raise DimensionError("checkpoint size does not match header sizes")
    return DenseNet(sizes, Ws, bs), header
