"""Multilayer perceptron readout with hand-written backpropagation.

Parameters live in one flat vector, laid out layer by layer with the
weight matrix (row-major, shape ``(fan_in, fan_out)``) followed by the bias.
Batches are row-major: ``X`` has shape ``(T, fan_in)``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

logger = logging.getLogger(__name__)

ACTIVATIONS = ("tanh", "relu")


class TrainingDiverged(RuntimeError):
    """Raised when a loss or objective becomes NaN/inf during optimisation."""


@dataclass(frozen=True)
class MlpSpec:
    """Layer widths ``(in, hidden..., out)`` and hidden activations.

    ``activation`` is either one name used for every hidden layer or a
    sequence with one entry per hidden layer. The output layer is linear.
    """

    widths: Tuple[int, ...]
    activation: Union[str, Tuple[str, ...]] = "tanh"
    bias: bool = True

    def __post_init__(self):
        widths = tuple(int(w) for w in self.widths)
        if len(widths) < 2:
            raise ValueError("an MLP needs at least an input and an output width")
        if any(w < 1 for w in widths):
            raise ValueError(f"widths must be positive, got {widths}")
        acts = self.activation
        if isinstance(acts, str):
            acts = (acts,) * (len(widths) - 2)
        acts = tuple(a.lower() for a in acts)
        if len(acts) != len(widths) - 2:
            raise ValueError(f"need {len(widths) - 2} hidden activations, got {len(acts)}")
        for a in acts:
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}; expected one of {ACTIVATIONS}")
        object.__setattr__(self, "widths", widths)
        object.__setattr__(self, "activation", acts)

    @classmethod
    def build(cls, n_in: int, hidden: Sequence[int], n_out: int = 1, activation="tanh", bias=True) -> "MlpSpec":
        return cls((n_in, *hidden, n_out), activation, bias)

    @property
    def n_layers(self) -> int:
        return len(self.widths) - 1

    @property
    def n_params(self) -> int:
        b = 1 if self.bias else 0
        return sum((i + b) * o for i, o in zip(self.widths[:-1], self.widths[1:]))

    @property
    def mask_widths(self) -> Tuple[int, ...]:
        """Widths of the activations that dropout masks act on (input and hidden)."""
        return self.widths[:-1]

    def to_dict(self) -> dict:
        return {"widths": list(self.widths), "activation": list(self.activation), "bias": self.bias}

    @classmethod
    def from_dict(cls, d: dict) -> "MlpSpec":
        return cls(tuple(d["widths"]), tuple(d["activation"]), bool(d.get("bias", True)))


def unflatten(spec: MlpSpec, params: np.ndarray) -> List[Tuple[np.ndarray, Optional[np.ndarray]]]:
    """Views ``(W, b)`` into ``params`` for each layer (``b`` is None without bias)."""
    params = np.asarray(params)
    if params.shape != (spec.n_params,):
        raise ValueError(f"expected {spec.n_params} parameters, got shape {params.shape}")
    layers = []
    k = 0
    for i, o in zip(spec.widths[:-1], spec.widths[1:]):
        W = params[k : k + i * o].reshape(i, o)
        k += i * o
        b = None
        if spec.bias:
            b = params[k : k + o]
            k += o
        layers.append((W, b))
    return layers


def flatten(spec: MlpSpec, layers: Sequence[Tuple[np.ndarray, Optional[np.ndarray]]]) -> np.ndarray:
    parts = []
    for (W, b), i, o in zip(layers, spec.widths[:-1], spec.widths[1:]):
        parts.append(np.asarray(W, dtype=float).reshape(i * o))
        if spec.bias:
            parts.append(np.asarray(b, dtype=float).reshape(o))
    out = np.concatenate(parts)
    if out.size != spec.n_params:
        raise ValueError("layer shapes do not match spec")
    return out


def init_params(spec: MlpSpec, rng: np.random.Generator) -> np.ndarray:
    """Glorot-uniform weights, zero biases."""
    layers = []
    for i, o in zip(spec.widths[:-1], spec.widths[1:]):
        lim = np.sqrt(6.0 / (i + o))
        layers.append((rng.uniform(-lim, lim, size=(i, o)), np.zeros(o) if spec.bias else None))
    return flatten(spec, layers)


@dataclass(frozen=True)
class DropoutMasks:
    """0/1 masks for the input and each hidden activation.

    Each mask is either ``(width,)`` (shared across the batch) or
    ``(T, width)`` (one per row). ``keep_prob`` is the Bernoulli parameter.
    """

    masks: Tuple[np.ndarray, ...]
    keep_prob: float


def sample_masks(spec: MlpSpec, keep_prob: float, rng: np.random.Generator, n_rows: Optional[int] = None) -> DropoutMasks:
    if not 0 < keep_prob <= 1:
        raise ValueError(f"keep probability must lie in (0, 1], got {keep_prob}")
    masks = []
    for w in spec.mask_widths:
        shape = (w,) if n_rows is None else (n_rows, w)
        masks.append((rng.random(shape) < keep_prob).astype(float))
    return DropoutMasks(tuple(masks), float(keep_prob))


def _act(name: str, z: np.ndarray) -> np.ndarray:
    return np.tanh(z) if name == "tanh" else np.maximum(z, 0.0)


def _dact(name: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    return 1.0 - a * a if name == "tanh" else (z > 0).astype(float)


def _forward(spec: MlpSpec, params: np.ndarray, X: np.ndarray, masks: Optional[DropoutMasks]):
    layers = unflatten(spec, params)
    if masks is not None and len(masks.masks) != spec.n_layers:
        raise ValueError(f"expected {spec.n_layers} masks, got {len(masks.masks)}")
    cache = []
    h = X
    for li, (W, b) in enumerate(layers):
        scale = None
        if masks is not None:
            m = masks.masks[li]
            if m.shape[-1] != h.shape[1] or (m.ndim == 2 and m.shape[0] != h.shape[0]):
                raise ValueError(f"mask {li} has shape {m.shape}, activation has {h.shape}")
            scale = m / masks.keep_prob
            h = h * scale
        z = h @ W
        if b is not None:
            z = z + b
        if li < spec.n_layers - 1:
            a = _act(spec.activation[li], z)
        else:
            a = z
        cache.append((h, z, a, scale))
        h = a
    return h, cache


def _as_batch(spec: MlpSpec, x) -> Tuple[np.ndarray, bool]:
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != spec.widths[0]:
        raise ValueError(f"input width {X.shape[-1]} does not match MLP input width {spec.widths[0]}")
    return X, single


def forward(spec: MlpSpec, params: np.ndarray, x, masks: Optional[DropoutMasks] = None) -> np.ndarray:
    """Evaluate the network on one state vector or a (T, in) batch.

    With masks, each masked activation is multiplied by ``mask / keep_prob``
    before the next affine map.
    """
    X, single = _as_batch(spec, x)
    out, _ = _forward(spec, params, X, masks)
    return out[0] if single else out


def vjp(spec: MlpSpec, params: np.ndarray, X: np.ndarray, dout: np.ndarray, masks: Optional[DropoutMasks] = None,
        cache=None) -> np.ndarray:
    """Flat gradient of ``sum(dout * forward(X))`` with respect to the parameters."""
    if cache is None:
        X, _ = _as_batch(spec, X)
        _, cache = _forward(spec, params, X, masks)
    layers = unflatten(spec, params)
    grads = [None] * spec.n_layers
    delta = np.asarray(dout, dtype=float)
    for li in range(spec.n_layers - 1, -1, -1):
        h, z, a, scale = cache[li]
        W, b = layers[li]
        if li < spec.n_layers - 1:
            delta = delta * _dact(spec.activation[li], z, a)
        gW = h.T @ delta
        gb = delta.sum(axis=0) if b is not None else None
        grads[li] = (gW, gb)
        if li > 0:
            delta = delta @ W.T
            if scale is not None:
                delta = delta * scale
    return flatten(spec, grads)


# ---------------------------------------------------------------------------
# losses


def pinball(residual, tau) -> np.ndarray:
    """Check loss ``tau * max(r, 0) + (1 - tau) * max(-r, 0)``."""
    tau = np.asarray(tau, dtype=float)
    if np.any((tau <= 0) | (tau >= 1)):
        raise ValueError("quantile levels must lie strictly inside (0, 1)")
    r = np.asarray(residual, dtype=float)
    return tau * np.maximum(r, 0.0) + (1.0 - tau) * np.maximum(-r, 0.0)


def _targets_2d(y, n_out: int) -> np.ndarray:
    Y = np.asarray(y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    return Y


def loss_and_dout(pred: np.ndarray, y, loss: str = "mse", levels=None) -> Tuple[float, np.ndarray]:
    """Mean loss over the batch (and over output heads) and its gradient
    with respect to the network output."""
    Y = _targets_2d(y, pred.shape[1])
    if loss == "mse":
        r = pred - Y
        n = r.size
        return float(np.sum(r * r) / n), 2.0 * r / n
    if loss == "pinball":
        if levels is None:
            raise ValueError("pinball loss needs quantile levels")
        tau = np.asarray(levels, dtype=float)
        if tau.size != pred.shape[1]:
            raise ValueError(f"{tau.size} levels for {pred.shape[1]} output heads")
        r = Y - pred
        n = r.size
        val = float(np.sum(pinball(r, tau)) / n)
        d = np.where(r > 0, -tau, 0.0) + np.where(r < 0, 1.0 - tau, 0.0)
        return val, d / n
    raise ValueError(f"unknown loss {loss!r}")


def loss_value(spec: MlpSpec, params, X, y, loss="mse", levels=None, masks=None) -> float:
    X, _ = _as_batch(spec, X)
    pred, _ = _forward(spec, params, X, masks)
    return loss_and_dout(pred, y, loss, levels)[0]


def gradient(spec: MlpSpec, params, X, y, loss: str = "mse", levels=None, masks=None,
             return_loss: bool = False):
    """Gradient of the mean batch loss with respect to the flat parameters."""
    X, _ = _as_batch(spec, X)
    if X.shape[0] == 0:
        raise ValueError("empty batch")
    pred, cache = _forward(spec, params, X, masks)
    val, dout = loss_and_dout(pred, y, loss, levels)
    g = vjp(spec, params, X, dout, cache=cache)
    return (g, val) if return_loss else g


# ---------------------------------------------------------------------------
# optimisation


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = "adam"
    lr: float = 1e-3
    steps: int = 2000
    batch_size: Optional[int] = None  # None = full batch
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.kind!r}")
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = self.v = None
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray, lr: Optional[float] = None) -> np.ndarray:
        if self.m is None:
            self.m = np.zeros_like(params)
            self.v = np.zeros_like(params)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        mhat = self.m / (1 - self.beta1**self.t)
        vhat = self.v / (1 - self.beta2**self.t)
        return params - (self.lr if lr is None else lr) * mhat / (np.sqrt(vhat) + self.eps)


class SGD:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params, grad, lr=None):
        return params - (self.lr if lr is None else lr) * grad


def make_optimizer(cfg: OptimizerConfig):
    return Adam(cfg.lr) if cfg.kind == "adam" else SGD(cfg.lr)


@dataclass(frozen=True)
class Mlp:
    spec: MlpSpec
    params: np.ndarray

    def __post_init__(self):
        p = np.array(self.params, dtype=float)
        if p.shape != (self.spec.n_params,):
            raise ValueError(f"expected {self.spec.n_params} parameters, got {p.shape}")
        p.setflags(write=False)
        object.__setattr__(self, "params", p)

    @classmethod
    def init(cls, spec: MlpSpec, seed: int = 0) -> "Mlp":
        return cls(spec, init_params(spec, np.random.default_rng(seed)))

    def __call__(self, x, masks: Optional[DropoutMasks] = None) -> np.ndarray:
        return forward(self.spec, self.params, x, masks)

    def layers(self):
        return unflatten(self.spec, self.params)

    def save(self, path, extra: Optional[dict] = None) -> None:
        path = Path(path)
        self.params.astype("<f8").tofile(path.with_suffix(".bin"))
        meta = {"spec": self.spec.to_dict(), "n_params": self.spec.n_params, "dtype": "<f8"}
        meta.update(extra or {})
        path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True))

    @classmethod
    def load(cls, path) -> "Mlp":
        path = Path(path)
        meta = json.loads(path.with_suffix(".json").read_text())
        params = np.fromfile(path.with_suffix(".bin"), dtype=meta.get("dtype", "<f8"))
        return cls(MlpSpec.from_dict(meta["spec"]), params)


@dataclass
class TrainResult:
    mlp: Mlp
    loss_trace: np.ndarray = field(repr=False)


def train_deterministic(
    mlp: Mlp,
    X,
    y,
    loss: str = "mse",
    opt: OptimizerConfig = OptimizerConfig(),
    levels=None,
    keep_prob: Optional[float] = None,
) -> TrainResult:
    """Fixed-budget gradient training of a private copy of ``mlp``.

    With ``keep_prob`` set, fresh per-row dropout masks are drawn at every
    step. The recorded loss is the (masked) training-batch loss of each step.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    if n == 0:
        raise ValueError("empty training set")
    spec = mlp.spec
    rng = np.random.default_rng(opt.seed)
    optimizer = make_optimizer(opt)
    params = mlp.params.copy()
    trace = np.empty(opt.steps)
    bs = n if opt.batch_size is None else min(opt.batch_size, n)
    order = np.arange(n)
    pos = n
    for step in range(opt.steps):
        if bs == n:
            Xb, yb = X, y
        else:
            if pos + bs > n:
                order = rng.permutation(n)
                pos = 0
            idx = order[pos : pos + bs]
            pos += bs
            Xb, yb = X[idx], y[idx]
        masks = None
        if keep_prob is not None:
            masks = sample_masks(spec, keep_prob, rng, n_rows=Xb.shape[0])
        with np.errstate(over="ignore", invalid="ignore"):
            g, val = gradient(spec, params, Xb, yb, loss, levels, masks, return_loss=True)
        if not np.isfinite(val) or not np.all(np.isfinite(g)):
            raise TrainingDiverged(f"non-finite loss at step {step} (lr={opt.lr}); lower the learning rate")
        trace[step] = val
        params = optimizer.step(params, g)
    return TrainResult(replace(mlp, params=params), trace)
