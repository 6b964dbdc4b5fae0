"""Small fully connected networks with exact backprop, SGD and soft target updates.

Everything is float64 numpy. Inputs may be a single vector or a batch of row
vectors; for a batch, ``mlp_backward`` returns gradients summed over rows.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

RELU = "relu"
IDENTITY = "identity"
_MAGIC = "MLPPARAMS 1"


@dataclass(frozen=True)
class Layer:
    weight: np.ndarray  # fan_in x fan_out
    bias: np.ndarray  # fan_out
    activation: str = RELU


@dataclass(frozen=True)
class MlpParams:
    layers: tuple[Layer, ...]

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise ValueError("network needs at least one layer")
        for i, layer in enumerate(layers):
            w, b = layer.weight, layer.bias
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError(f"layer {i}: weight {w.shape} and bias {b.shape} disagree")
            if layer.activation not in (RELU, IDENTITY):
                raise ValueError(f"layer {i}: unknown activation {layer.activation!r}")
            if i and layers[i - 1].weight.shape[1] != w.shape[0]:
                raise ValueError(f"layer {i} fan_in does not chain with layer {i - 1}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {i} has non-finite parameters")
        object.__setattr__(self, "layers", layers)

    @property
    def sizes(self) -> tuple[int, ...]:
        return (self.layers[0].weight.shape[0],) + tuple(l.weight.shape[1] for l in self.layers)

    @property
    def input_size(self) -> int:
        return self.layers[0].weight.shape[0]

    @property
    def output_size(self) -> int:
        return self.layers[-1].weight.shape[1]

    def arrays(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out += [layer.weight, layer.bias]
        return out

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])


@dataclass(frozen=True)
class Gradients:
    """Per-layer (d weight, d bias), shape-congruent with the network."""

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for pair in zip(self.weights, self.biases) for a in pair])

    def norm(self) -> float:
        return float(np.sqrt(sum(np.sum(w * w) + np.sum(b * b) for w, b in zip(self.weights, self.biases))))

    def __add__(self, other: "Gradients") -> "Gradients":
        return Gradients(
            tuple(a + b for a, b in zip(self.weights, other.weights)),
            tuple(a + b for a, b in zip(self.biases, other.biases)),
        )


def init_mlp(sizes: Sequence[int], rng: np.random.Generator) -> MlpParams:
    """Uniform(+-1/sqrt(fan_in)) weights, zero biases, ReLU hidden layers, linear output."""
    if len(sizes) < 2:
        raise ValueError("need at least input and output sizes")
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        bound = 1.0 / np.sqrt(fan_in)
        w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        act = IDENTITY if i == len(sizes) - 2 else RELU
        layers.append(Layer(w, np.zeros(fan_out), act))
    return MlpParams(tuple(layers))


def _check_input(params: MlpParams, x: np.ndarray):
    if x.shape[-1] != params.input_size:
        raise ValueError(f"input has length {x.shape[-1]}, network expects {params.input_size}")


def forward_trace(params: MlpParams, x) -> list[np.ndarray]:
    """Inputs to every layer followed by the network output."""
    a = np.asarray(x, dtype=float)
    _check_input(params, a)
    trace = [a]
    for layer in params.layers:
        z = a @ layer.weight + layer.bias
        a = np.maximum(z, 0.0) if layer.activation == RELU else z
        trace.append(a)
    return trace


def mlp_forward(params: MlpParams, x) -> np.ndarray:
    return forward_trace(params, x)[-1]


def backward_trace(params: MlpParams, trace: list[np.ndarray], upstream) -> Gradients:
    """Reverse pass given a trace from :func:`forward_trace`."""
    g = np.asarray(upstream, dtype=float)
    if g.shape != trace[-1].shape:
        raise ValueError(f"upstream shape {g.shape} does not match output {trace[-1].shape}")
    n = len(params.layers)
    dws: list[np.ndarray] = [None] * n  # type: ignore[list-item]
    dbs: list[np.ndarray] = [None] * n  # type: ignore[list-item]
    for i in range(n - 1, -1, -1):
        layer = params.layers[i]
        if layer.activation == RELU:
            # ReLU output is positive exactly where the pre-activation was
            g = g * (trace[i + 1] > 0.0)
        a_in = trace[i]
        if a_in.ndim == 1:
            dws[i] = np.outer(a_in, g)
            dbs[i] = g
        else:
            dws[i] = a_in.T @ g
            dbs[i] = g.sum(axis=0)
        if i:
            g = g @ layer.weight.T
    return Gradients(tuple(dws), tuple(dbs))


def mlp_backward(params: MlpParams, x, upstream) -> Gradients:
    """Gradient of ``sum(upstream * mlp_forward(params, x))`` w.r.t. every parameter."""
    return backward_trace(params, forward_trace(params, x), upstream)


def zero_gradients(params: MlpParams) -> Gradients:
    return Gradients(
        tuple(np.zeros_like(l.weight) for l in params.layers),
        tuple(np.zeros_like(l.bias) for l in params.layers),
    )


def _check_congruent(params: MlpParams, other_shapes: list[tuple]):
    if [a.shape for a in params.arrays()] != other_shapes:
        raise ValueError("parameter shapes are not congruent")


def sgd_step(params: MlpParams, grads: Gradients, lr: float) -> MlpParams:
    if lr < 0:
        raise ValueError(f"learning rate must be non-negative, got {lr}")
    _check_congruent(params, [a.shape for pair in zip(grads.weights, grads.biases) for a in pair])
    return MlpParams(
        tuple(
            Layer(l.weight - lr * dw, l.bias - lr * db, l.activation)
            for l, dw, db in zip(params.layers, grads.weights, grads.biases)
        )
    )


def soft_update(target: MlpParams, online: MlpParams, tau: float) -> MlpParams:
    """``tau * target + (1 - tau) * online``; tau = 1 keeps the target frozen."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0, 1], got {tau}")
    _check_congruent(target, [a.shape for a in online.arrays()])
    mix = 1.0 - tau
    return MlpParams(
        tuple(
            Layer(tau * t.weight + mix * o.weight, tau * t.bias + mix * o.bias, t.activation)
            for t, o in zip(target.layers, online.layers)
        )
    )


def masked_softmax(logits, mask) -> np.ndarray:
    """Softmax over entries where ``mask`` is 1; masked entries get exactly 0.

    Works row-wise on 2-D input.
    """
    z = np.asarray(logits, dtype=float)
    keep = np.asarray(mask).astype(bool)
    if not np.all(keep.any(axis=-1)):
        raise ValueError("mask must leave at least one entry")
    z = np.where(keep, z, -np.inf)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.where(keep, np.exp(z), 0.0)
    return e / e.sum(axis=-1, keepdims=True)


def save_params(params: MlpParams, path) -> None:
    """Text checkpoint: magic line, layer sizes and activations, then row-major values."""
    buf = io.StringIO()
    buf.write(_MAGIC + "\n")
    buf.write(" ".join(str(s) for s in params.sizes) + "\n")
    buf.write(" ".join(l.activation for l in params.layers) + "\n")
    for a in params.arrays():
        buf.write(" ".join(repr(float(v)) for v in a.ravel()) + "\n")
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def load_params(path) -> MlpParams:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != _MAGIC:
        raise ValueError(f"{path}: not an MLP checkpoint (bad header)")
    sizes = [int(s) for s in lines[1].split()]
    acts = lines[2].split()
    if len(acts) != len(sizes) - 1 or len(lines) != 3 + 2 * len(acts):
        raise ValueError(f"{path}: truncated or inconsistent checkpoint")
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        w = np.array(lines[3 + 2 * i].split(), dtype=float).reshape(fan_in, fan_out)
        b = np.array(lines[4 + 2 * i].split(), dtype=float).reshape(fan_out)
        layers.append(Layer(w, b, acts[i]))
    return MlpParams(tuple(layers))


def flatten(params: MlpParams) -> tuple[np.ndarray, np.ndarray]:
    """Flat parameter vector (per layer: weight row-major, then bias) and layer sizes.

    Only standard networks (ReLU hidden layers, linear output) are accepted.
    """
    acts = [l.activation for l in params.layers]
    if acts != [RELU] * (len(acts) - 1) + [IDENTITY]:
        raise ValueError("flat layout requires ReLU hidden layers and a linear output")
    return params.flat().copy(), np.array(params.sizes, dtype=np.int64)


def unflatten(theta: np.ndarray, sizes) -> MlpParams:
    """Network whose layers are views into ``theta`` (no copy)."""
    sizes = [int(s) for s in sizes]
    expected = sum(i * o + o for i, o in zip(sizes[:-1], sizes[1:]))
    if theta.shape != (expected,):
        raise ValueError(f"flat vector has {theta.size} entries, sizes imply {expected}")
    layers = []
    off = 0
    n = len(sizes) - 1
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        w = theta[off : off + fan_in * fan_out].reshape(fan_in, fan_out)
        off += fan_in * fan_out
        b = theta[off : off + fan_out]
        off += fan_out
        layers.append(Layer(w, b, IDENTITY if i == n - 1 else RELU))
    return MlpParams(tuple(layers))
