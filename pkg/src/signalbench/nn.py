"""Small dense networks in float64 numpy: forward, backprop, optimizers, replay.

Only what the DQN and actor-critic agents need. Inputs may be a single vector
of shape ``(n_in,)`` or a batch of shape ``(batch, n_in)``; gradients returned
by :meth:`Mlp.backward` are those of a scalar loss whose derivative with
respect to the network output is ``output_gradient`` (summed over the batch).
"""

from __future__ import annotations

import io
import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

ACTIVATIONS = ("relu", "linear", "softmax")


@dataclass
class Dense:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str = "linear"

    @property
    def shape(self) -> tuple[int, int]:
        return self.weight.shape


@dataclass
class ForwardCache:
    net_id: int
    version: int
    inputs: list[np.ndarray]
    outputs: list[np.ndarray]
    batched: bool


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "linear":
        return z
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


class Mlp:
    """Chain of dense layers. Parameters change only through :func:`apply_update`."""

    def __init__(self, layers: Sequence[Dense]):
        if not layers:
            raise ValueError("an Mlp needs at least one layer")
        for prev, nxt in zip(layers, layers[1:]):
            if prev.weight.shape[0] != nxt.weight.shape[1]:
                raise ValueError(f"layer dims do not chain: {prev.shape} -> {nxt.shape}")
        for layer in layers:
            if layer.activation not in ACTIVATIONS:
                raise ValueError(f"unknown activation {layer.activation!r}")
            if layer.bias.shape != (layer.weight.shape[0],):
                raise ValueError("bias length must equal layer output size")
        if any(layer.activation == "softmax" for layer in layers[:-1]):
            raise ValueError("softmax is only supported on the output layer")
        self.layers = list(layers)
        self.version = 0

    @property
    def sizes(self) -> list[int]:
        return [self.layers[0].weight.shape[1]] + [layer.weight.shape[0] for layer in self.layers]

    @property
    def activations(self) -> list[str]:
        return [layer.activation for layer in self.layers]

    def params(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out += [layer.weight, layer.bias]
        return out

    def n_params(self) -> int:
        return sum(p.size for p in self.params())

    def copy(self) -> "Mlp":
        return Mlp([Dense(l.weight.copy(), l.bias.copy(), l.activation) for l in self.layers])

    def same_architecture(self, other: "Mlp") -> bool:
        return self.sizes == other.sizes and self.activations == other.activations

    def load_params(self, params: Sequence[np.ndarray]) -> None:
        own = self.params()
        if len(params) != len(own) or any(p.shape != q.shape for p, q in zip(params, own)):
            raise ValueError("parameter shapes do not match the network")
        for dst, src in zip(own, params):
            dst[...] = src
        self.version += 1

    def __call__(self, x) -> np.ndarray:
        return self.forward(x)[0]

    def forward(self, x) -> tuple[np.ndarray, ForwardCache]:
        x = np.asarray(x, dtype=np.float64)
        batched = x.ndim == 2
        if x.ndim not in (1, 2) or x.shape[-1] != self.sizes[0]:
            raise ValueError(f"expected input of width {self.sizes[0]}, got shape {x.shape}")
        a = x if batched else x[None, :]
        inputs, outputs = [], []
        for layer in self.layers:
            inputs.append(a)
            a = _activate(a @ layer.weight.T + layer.bias, layer.activation)
            outputs.append(a)
        cache = ForwardCache(id(self), self.version, inputs, outputs, batched)
        return (a if batched else a[0]), cache

    def backward(self, cache: ForwardCache, output_gradient) -> tuple[list[np.ndarray], np.ndarray]:
        """Return ``(parameter gradients in params() order, input gradient)``."""
        if cache.net_id != id(self) or cache.version != self.version:
            raise ValueError("forward cache does not belong to this network state")
        g = np.asarray(output_gradient, dtype=np.float64)
        if not cache.batched:
            g = g[None, :]
        if g.shape != cache.outputs[-1].shape:
            raise ValueError(f"output gradient shape {g.shape} != {cache.outputs[-1].shape}")
        grads: list[np.ndarray] = [None] * (2 * len(self.layers))  # type: ignore[list-item]
        for i in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[i]
            y = cache.outputs[i]
            if layer.activation == "relu":
                dz = g * (y > 0.0)
            elif layer.activation == "softmax":
                dz = y * (g - (g * y).sum(axis=-1, keepdims=True))
            else:
                dz = g
            grads[2 * i] = dz.T @ cache.inputs[i]
            grads[2 * i + 1] = dz.sum(axis=0)
            g = dz @ layer.weight
        return grads, (g if cache.batched else g[0])


def mlp_new(layer_sizes: Sequence[int], seed: int = 0, hidden: str = "relu",
            output: str = "linear") -> Mlp:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases."""
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2 or any(s < 1 for s in sizes):
        raise ValueError(f"need at least two layer sizes, all >= 1; got {list(layer_sizes)}")
    rng = np.random.default_rng(seed)
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(sizes, sizes[1:])):
        bound = 1.0 / np.sqrt(fan_in)
        w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        act = output if i == len(sizes) - 2 else hidden
        layers.append(Dense(w, np.zeros(fan_out), act))
    return Mlp(layers)


# -- optimizers -------------------------------------------------------------


@dataclass
class Sgd:
    learning_rate: float = 0.001

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")

    def steps(self, grads: Sequence[np.ndarray]) -> list[np.ndarray]:
        return [self.learning_rate * g for g in grads]


@dataclass
class Adam:
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")

    def steps(self, grads: Sequence[np.ndarray]) -> list[np.ndarray]:
        if not self.m:
            self.m = [np.zeros_like(g) for g in grads]
            self.v = [np.zeros_like(g) for g in grads]
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        out = []
        for g, m, v in zip(grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            out.append(self.learning_rate * (m / c1) / (np.sqrt(v / c2) + self.eps))
        return out


Optimizer = Sgd | Adam


def apply_update(net: Mlp, grads: Sequence[np.ndarray], opt: Optimizer) -> Mlp:
    """Step ``net`` in place against ``grads``; raises on non-finite values."""
    params = net.params()
    if len(grads) != len(params) or any(g.shape != p.shape for g, p in zip(grads, params)):
        raise ValueError("gradient shapes do not match the network")
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite gradient; aborting update")
    for p, d in zip(params, opt.steps(grads)):
        p -= d
    for p in params:
        if not np.all(np.isfinite(p)):
            raise FloatingPointError("update produced non-finite parameters")
    net.version += 1
    return net


def average_weights(nets: Sequence[Mlp]) -> Mlp:
    """Element-wise mean of parameters; nets are summed in the given order."""
    if not nets:
        raise ValueError("need at least one network")
    first = nets[0]
    for other in nets[1:]:
        if not first.same_architecture(other):
            raise ValueError("cannot average networks with different architectures")
    out = first.copy()
    for i, p in enumerate(out.params()):
        total = np.zeros_like(p)
        for net in nets:
            total += net.params()[i]
        p[...] = total / len(nets)
    return out


# -- replay -----------------------------------------------------------------


class ReplayBuffer:
    """Bounded FIFO; sampling is uniform with replacement."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._items: deque = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self):
        return iter(self._items)

    def push(self, item) -> None:
        self._items.append(item)

    def sample(self, k: int, rng: np.random.Generator) -> list:
        if not self._items:
            raise IndexError("cannot sample from an empty replay buffer")
        idx = rng.integers(0, len(self._items), size=k)
        return [self._items[i] for i in idx]


# -- serialization ----------------------------------------------------------
#
# File layout (version 1):
#   line 1: b"signalbench-model v1\n"
#   line 2: JSON header, newline-terminated:
#           {"nets": [{"name": str, "sizes": [int...], "activations": [str...]}, ...],
#            "meta": {...}}
#   rest:   little-endian float64 parameters; nets in header order, within a net
#           layer by layer as weight (out x in, row-major) then bias.

MAGIC = b"signalbench-model v1\n"


def save_model(path, nets: dict[str, Mlp], meta: dict | None = None) -> None:
    header = {
        "nets": [{"name": name, "sizes": net.sizes, "activations": net.activations}
                 for name, net in nets.items()],
        "meta": meta or {},
    }
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
    for net in nets.values():
        for p in net.params():
            buf.write(np.ascontiguousarray(p, dtype="<f8").tobytes())
    path = Path(path)
    try:
        path.write_bytes(buf.getvalue())
    except OSError as exc:
        raise OSError(f"cannot write model to {path}: {exc}") from exc


def load_model(path) -> tuple[dict[str, Mlp], dict]:
    data = Path(path).read_bytes()
    if not data.startswith(MAGIC):
        raise ValueError(f"{path}: not a signalbench model file (bad magic/version)")
    end = data.index(b"\n", len(MAGIC))
    header = json.loads(data[len(MAGIC):end])
    body = memoryview(data)[end + 1:]
    offset = 0
    nets: dict[str, Mlp] = {}
    for entry in header["nets"]:
        sizes, acts = entry["sizes"], entry["activations"]
        layers = []
        for (fan_in, fan_out), act in zip(zip(sizes, sizes[1:]), acts):
            n_w = fan_in * fan_out
            w = np.frombuffer(body, dtype="<f8", count=n_w, offset=offset).reshape(fan_out, fan_in)
            offset += 8 * n_w
            b = np.frombuffer(body, dtype="<f8", count=fan_out, offset=offset)
            offset += 8 * fan_out
            layers.append(Dense(w.astype(np.float64), b.astype(np.float64), act))
        nets[entry["name"]] = Mlp(layers)
    if offset != len(body):
        raise ValueError(f"{path}: {len(body) - offset} trailing bytes after parameters")
    return nets, header.get("meta", {})


def flatten(params: Iterable[np.ndarray]) -> np.ndarray:
    return np.concatenate([p.ravel() for p in params])
