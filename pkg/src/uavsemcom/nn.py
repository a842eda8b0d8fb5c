"""Multi-head MLP with hand-written reverse-mode gradients and Adam.

Parameters live in one flat float64 vector.  The layout is fixed by the
:class:`NetworkSpec`: for every trunk layer ``W (in, out)`` then ``b (out,)``,
followed by the same pair for every head in declaration order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

ACTIVATIONS = ("linear", "softmax", "softplus")


@dataclass(frozen=True)
class Head:
    name: str
    dim: int
    activation: str = "linear"

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"head {self.name!r} needs dim >= 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass(frozen=True)
class NetworkSpec:
    input_dim: int
    hidden_dims: tuple[int, ...]
    heads: tuple[Head, ...]

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        object.__setattr__(self, "heads", tuple(
            h if isinstance(h, Head) else Head(*h) for h in self.heads))
        if self.input_dim < 1 or any(h < 1 for h in self.hidden_dims):
            raise ValueError("layer sizes must be >= 1")
        if not self.heads:
            raise ValueError("a network needs at least one output head")
        if len({h.name for h in self.heads}) != len(self.heads):
            raise ValueError("head names must be unique")

    @property
    def trunk_dim(self) -> int:
        return self.hidden_dims[-1] if self.hidden_dims else self.input_dim

    def layer_shapes(self) -> list[tuple[int, int]]:
        dims = (self.input_dim,) + self.hidden_dims
        shapes = list(zip(dims[:-1], dims[1:]))
        shapes += [(self.trunk_dim, h.dim) for h in self.heads]
        return shapes

    @property
    def num_params(self) -> int:
        return sum(i * o + o for i, o in self.layer_shapes())

    def to_dict(self) -> dict:
        return {"input_dim": self.input_dim, "hidden_dims": list(self.hidden_dims),
                "heads": [[h.name, h.dim, h.activation] for h in self.heads]}

    @classmethod
    def from_dict(cls, d: Mapping) -> "NetworkSpec":
        return cls(int(d["input_dim"]), tuple(d["hidden_dims"]),
                   tuple(Head(str(n), int(k), str(a)) for n, k, a in d["heads"]))


def unpack(spec: NetworkSpec, params: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Split the flat vector into ``(W, b)`` views, trunk layers first."""
    if params.shape != (spec.num_params,):
        raise ValueError(f"expected {spec.num_params} parameters, got {params.shape}")
    out, i = [], 0
    for n_in, n_out in spec.layer_shapes():
        w = params[i:i + n_in * n_out].reshape(n_in, n_out)
        i += n_in * n_out
        out.append((w, params[i:i + n_out]))
        i += n_out
    return out


def _orthogonal(rng: np.random.Generator, n_in: int, n_out: int, gain: float) -> np.ndarray:
    a = rng.standard_normal((max(n_in, n_out), min(n_in, n_out)))
    q, r = np.linalg.qr(a)
    q *= np.sign(np.diag(r))
    if n_in < n_out:
        q = q.T
    return gain * q[:n_in, :n_out]


def init_params(spec: NetworkSpec, rng: np.random.Generator,
                hidden_gain: float = np.sqrt(2.0),
                head_gains: Optional[Mapping[str, float]] = None) -> np.ndarray:
    """Orthogonal init with zero biases; heads default to gain 0.01."""
    head_gains = head_gains or {}
    params = np.zeros(spec.num_params)
    layers = unpack(spec, params)
    n_trunk = len(spec.hidden_dims)
    for k, (w, _) in enumerate(layers):
        if k < n_trunk:
            gain = hidden_gain
        else:
            gain = head_gains.get(spec.heads[k - n_trunk].name, 0.01)
        w[...] = _orthogonal(rng, *w.shape, gain)
    return params


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "softmax":
        return _softmax(z)
    if kind == "softplus":
        return np.logaddexp(0.0, z)
    return z


def _forward(spec: NetworkSpec, params: np.ndarray, x: np.ndarray):
    layers = unpack(spec, params)
    n_trunk = len(spec.hidden_dims)
    acts = [x]
    h = x
    for w, b in layers[:n_trunk]:
        h = np.tanh(h @ w + b)
        acts.append(h)
    pre, outs = {}, {}
    for head, (w, b) in zip(spec.heads, layers[n_trunk:]):
        z = h @ w + b
        pre[head.name] = z
        outs[head.name] = _activate(z, head.activation)
    return outs, pre, acts


def _as_batch(spec: NetworkSpec, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x2 = x[None, :] if single else x
    if x2.ndim != 2 or x2.shape[1] != spec.input_dim:
        raise ValueError(f"input has shape {x.shape}, network expects {spec.input_dim} features")
    return x2, single


def forward(spec: NetworkSpec, params: np.ndarray, x) -> dict[str, np.ndarray]:
    """Evaluate every head.  ``x`` is one feature vector or a (batch, features) array."""
    x2, single = _as_batch(spec, x)
    outs, _, _ = _forward(spec, params, x2)
    return {k: v[0] for k, v in outs.items()} if single else outs


def backward(spec: NetworkSpec, params: np.ndarray, x,
             upstream: Mapping[str, np.ndarray]) -> np.ndarray:
    """Gradient of ``sum(upstream[h] * output[h])`` w.r.t. the flat parameters.

    Upstream gradients are taken w.r.t. the post-activation head outputs and
    summed over the batch.  Heads missing from ``upstream`` contribute nothing.
    """
    x2, single = _as_batch(spec, x)
    outs, pre, acts = _forward(spec, params, x2)
    layers = unpack(spec, params)
    grad = np.zeros_like(params)
    glayers = unpack(spec, grad)
    n_trunk = len(spec.hidden_dims)
    h = acts[-1]
    dh = np.zeros_like(h)
    for k, head in enumerate(spec.heads):
        if head.name not in upstream:
            continue
        g = np.asarray(upstream[head.name], dtype=float)
        g = g[None, :] if single else g
        if g.shape != outs[head.name].shape:
            raise ValueError(f"upstream gradient for {head.name!r} has shape {g.shape}")
        if head.activation == "softmax":
            p = outs[head.name]
            dz = p * (g - np.sum(g * p, axis=-1, keepdims=True))
        elif head.activation == "softplus":
            dz = g / (1.0 + np.exp(-pre[head.name]))
        else:
            dz = g
        w, _ = layers[n_trunk + k]
        gw, gb = glayers[n_trunk + k]
        gw += h.T @ dz
        gb += dz.sum(axis=0)
        dh += dz @ w.T
    for i in range(n_trunk - 1, -1, -1):
        dz = dh * (1.0 - acts[i + 1] ** 2)
        w, _ = layers[i]
        gw, gb = glayers[i]
        gw += acts[i].T @ dz
        gb += dz.sum(axis=0)
        dh = dz @ w.T
    return grad


def clip_grad_norm(grad: np.ndarray, max_norm: float) -> tuple[np.ndarray, float]:
    norm = float(np.linalg.norm(grad))
    if norm > max_norm > 0:
        grad = grad * (max_norm / (norm + 1e-12))
    return grad, norm


@dataclass
class Adam:
    size: int
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: np.ndarray = field(default=None, repr=False)
    v: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.m is None:
            self.m = np.zeros(self.size)
        if self.v is None:
            self.v = np.zeros(self.size)

    def step(self, params: np.ndarray, grads: np.ndarray) -> np.ndarray:
        """Return updated parameters; moments and step count update in place."""
        if grads.shape != params.shape or params.shape != (self.size,):
            raise ValueError("parameter and gradient sizes differ from optimizer state")
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grads
        self.v = self.beta2 * self.v + (1 - self.beta2) * grads ** 2
        m_hat = self.m / (1 - self.beta1 ** self.t)
        v_hat = self.v / (1 - self.beta2 ** self.t)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def to_dict(self) -> dict:
        return {"lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps,
                "t": self.t, "m": self.m.tolist(), "v": self.v.tolist()}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Adam":
        m = np.asarray(d["m"], dtype=float)
        return cls(size=m.size, lr=d["lr"], beta1=d["beta1"], beta2=d["beta2"], eps=d["eps"],
                   t=int(d["t"]), m=m, v=np.asarray(d["v"], dtype=float))


class Network:
    """A spec, its parameters and its optimizer, bundled for training code."""

    def __init__(self, spec: NetworkSpec, params: np.ndarray, optimizer: Optional[Adam] = None):
        self.spec = spec
        self.params = np.asarray(params, dtype=float)
        self.optimizer = optimizer or Adam(spec.num_params)

    @classmethod
    def create(cls, spec: NetworkSpec, rng: np.random.Generator, lr: float = 3e-4,
               head_gains: Optional[Mapping[str, float]] = None) -> "Network":
        return cls(spec, init_params(spec, rng, head_gains=head_gains),
                   Adam(spec.num_params, lr=lr))

    def __call__(self, x) -> dict[str, np.ndarray]:
        return forward(self.spec, self.params, x)

    def gradient(self, x, upstream: Mapping[str, np.ndarray]) -> np.ndarray:
        return backward(self.spec, self.params, x, upstream)

    def apply_gradient(self, grad: np.ndarray, max_norm: float = np.inf) -> float:
        grad, norm = clip_grad_norm(grad, max_norm)
        self.params = self.optimizer.step(self.params, grad)
        return norm

    def to_dict(self) -> dict:
        return {"spec": self.spec.to_dict(), "params": self.params.tolist(),
                "optimizer": self.optimizer.to_dict()}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Network":
        spec = NetworkSpec.from_dict(d["spec"])
        params = np.asarray(d["params"], dtype=float)
        if params.shape != (spec.num_params,):
            raise ValueError("checkpoint parameter count does not match its network spec")
        return cls(spec, params, Adam.from_dict(d["optimizer"]))


def save_checkpoint(path, networks: Mapping[str, Network]) -> None:
    """Write named networks to one JSON document.  Floats round-trip exactly."""
    doc = {"format": "uavsemcom-mlp", "version": 1,
           "networks": {k: v.to_dict() for k, v in networks.items()}}
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_checkpoint(path) -> dict[str, Network]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != "uavsemcom-mlp":
        raise ValueError(f"{path}: not a network checkpoint")
    return {k: Network.from_dict(v) for k, v in doc["networks"].items()}


def mlp_spec(input_dim: int, heads: Sequence[Head],
             hidden_dims: Sequence[int] = (64, 64)) -> NetworkSpec:
    return NetworkSpec(input_dim, tuple(hidden_dims), tuple(heads))
