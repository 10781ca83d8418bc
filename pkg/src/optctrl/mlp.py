"""Minimal dense multilayer perceptron with explicit backpropagation.

The network maps a stacked time input to raw control signals. Layers are
plain (weight, bias, activation) triples; the forward pass caches every
pre-activation so an arbitrary output-side error can be propagated back
to parameter gradients. Inputs and errors may be single columns or
matrices whose columns are independent evaluation points (gradients are
summed over columns).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .errors import DimensionError

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


def gelu(x):
    """Exact Gaussian error linear unit, x * Phi(x) with the erf form."""
    x = np.asarray(x, dtype=float)
    return x * 0.5 * (1.0 + erf(x * _INV_SQRT2))


def gelu_prime(x):
    """Derivative of the exact GELU: Phi(x) + x * pdf(x)."""
    x = np.asarray(x, dtype=float)
    phi = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    return phi + x * _INV_SQRT2PI * np.exp(-0.5 * x * x)


def _tanh_prime(x):
    t = np.tanh(x)
    return 1.0 - t * t


ACTIVATIONS = {
    "gelu": (gelu, gelu_prime),
    "tanh": (np.tanh, _tanh_prime),
    "linear": (lambda x: np.asarray(x, dtype=float), lambda x: np.ones_like(x)),
}


@dataclass(frozen=True)
class Layer:
    """One dense layer: out = activation(W @ in + b)."""

    W: np.ndarray
    b: np.ndarray
    activation: str = "linear"

    def __post_init__(self):
        W = np.asarray(self.W, dtype=float)
        b = np.asarray(self.b, dtype=float)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "b", b)
        if W.ndim != 2 or b.ndim != 1 or W.shape[0] != b.shape[0]:
            raise DimensionError(f"layer shapes {W.shape} / {b.shape} do not match")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if not (np.isfinite(W).all() and np.isfinite(b).all()):
            raise ValueError("layer parameters must be finite")


@dataclass(frozen=True)
class MlpParams:
    """Immutable stack of layers forming the network."""

    layers: tuple

    def __post_init__(self):
        layers = tuple(self.layers)
        object.__setattr__(self, "layers", layers)
        if not layers:
            raise DimensionError("network needs at least one layer")
        for prev, cur in zip(layers, layers[1:]):
            if cur.W.shape[1] != prev.W.shape[0]:
                raise DimensionError(
                    f"layer dimension chain broken: {prev.W.shape} -> {cur.W.shape}")

    @property
    def n_in(self):
        return self.layers[0].W.shape[1]

    @property
    def n_out(self):
        return self.layers[-1].W.shape[0]

    @property
    def n_params(self):
        return sum(l.W.size + l.b.size for l in self.layers)


@dataclass(frozen=True)
class ForwardCache:
    """Per-layer pre-activations and activations from one forward pass."""

    x: np.ndarray          # network input, shape (n_in,) or (n_in, K)
    zs: tuple              # pre-activation per layer
    activations: tuple     # activation output per layer


@dataclass(frozen=True)
class MlpGradient:
    """Parameter gradient with the same layout as MlpParams."""

    dWs: tuple
    dbs: tuple
    deltas: tuple          # backpropagated error per layer

    def norm(self):
        return float(np.sqrt(sum(float(np.sum(dW * dW)) for dW in self.dWs)
                             + sum(float(np.sum(db * db)) for db in self.dbs)))


def default_architecture(n_controls: int) -> MlpParams:
    """Untrained control network: n_controls -> 10 -> 10 -> n_controls.

    Hidden layers use GELU, the output layer tanh so raw outputs stay in
    (-1, 1) for the affine bound transform.
    """
    return init_params([n_controls, 10, 10, n_controls],
                       ["gelu", "gelu", "tanh"], seed=0)


def init_params(dims, activations, seed=0, rng=None) -> MlpParams:
    """Seeded scaled-uniform initialization, zero biases.

    Weights are drawn from U(-sqrt(6/(n_in+n_out)), +sqrt(6/(n_in+n_out)))
    per matrix; biases start at zero.
    """
    if len(activations) != len(dims) - 1:
        raise DimensionError("need one activation per weight layer")
    if rng is None:
        rng = np.random.default_rng(seed)
    layers = []
    for n_in, n_out, act in zip(dims, dims[1:], activations):
        limit = np.sqrt(6.0 / (n_in + n_out))
        W = rng.uniform(-limit, limit, size=(n_out, n_in))
        layers.append(Layer(W, np.zeros(n_out), act))
    return MlpParams(tuple(layers))


def forward(params: MlpParams, x) -> tuple:
    """Forward pass. Returns (output, cache).

    x may be a vector of length n_in or a matrix (n_in, K) whose columns
    are independent inputs.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[0] != params.n_in:
        raise DimensionError(
            f"input dimension {x.shape[0]} != network input {params.n_in}")
    a = x
    zs, acts = [], []
    for layer in params.layers:
        z = layer.W @ a
        z = z + (layer.b if z.ndim == 1 else layer.b[:, None])
        a = ACTIVATIONS[layer.activation][0](z)
        zs.append(z)
        acts.append(a)
    return a, ForwardCache(x=x, zs=tuple(zs), activations=tuple(acts))


def backward(params: MlpParams, cache: ForwardCache, output_error) -> MlpGradient:
    """Backpropagate an output-side error to parameter gradients.

    output_error is dJ/d(output) with the same shape as the forward
    output; for matrix inputs the gradients are summed over columns.
    """
    err = np.asarray(output_error, dtype=float)
    if err.shape != cache.activations[-1].shape:
        raise DimensionError(
            f"error shape {err.shape} != output shape {cache.activations[-1].shape}")
    if len(cache.zs) != len(params.layers):
        raise DimensionError("cache does not match the network depth")

    n_layers = len(params.layers)
    dWs = [None] * n_layers
    dbs = [None] * n_layers
    deltas = [None] * n_layers

    delta = err * ACTIVATIONS[params.layers[-1].activation][1](cache.zs[-1])
    for l in range(n_layers - 1, -1, -1):
        a_prev = cache.x if l == 0 else cache.activations[l - 1]
        if delta.ndim == 1:
            dWs[l] = np.outer(delta, a_prev)
            dbs[l] = delta.copy()
        else:
            dWs[l] = delta @ a_prev.T
            dbs[l] = delta.sum(axis=1)
        deltas[l] = delta
        if l > 0:
            back = params.layers[l].W.T @ delta
            delta = back * ACTIVATIONS[params.layers[l - 1].activation][1](cache.zs[l - 1])
    return MlpGradient(dWs=tuple(dWs), dbs=tuple(dbs), deltas=tuple(deltas))


def flatten_params(params: MlpParams) -> np.ndarray:
    """Pack all weights (row-major) and biases into one vector."""
    parts = []
    for layer in params.layers:
        parts.append(layer.W.ravel())
        parts.append(layer.b)
    return np.concatenate(parts)


def unflatten_params(vec, like: MlpParams) -> MlpParams:
    """Inverse of flatten_params for a network with `like`'s layout."""
    vec = np.asarray(vec, dtype=float)
    if vec.shape != (like.n_params,):
        raise DimensionError(f"expected {like.n_params} parameters, got {vec.shape}")
    layers = []
    k = 0
    for layer in like.layers:
        nw = layer.W.size
        W = vec[k:k + nw].reshape(layer.W.shape)
        k += nw
        nb = layer.b.size
        b = vec[k:k + nb]
        k += nb
        layers.append(Layer(W, b, layer.activation))
    return MlpParams(tuple(layers))


def flatten_gradient(grad: MlpGradient) -> np.ndarray:
    parts = []
    for dW, db in zip(grad.dWs, grad.dbs):
        parts.append(np.asarray(dW).ravel())
        parts.append(np.asarray(db))
    return np.concatenate(parts)


def save_params_csv(params: MlpParams, path):
    """Snapshot as rows (layer, "W"|"b", row, col, value); weight layers 1-based."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["layer", "kind", "row", "col", "value"])
        for li, layer in enumerate(params.layers, start=1):
            for r in range(layer.W.shape[0]):
                for c in range(layer.W.shape[1]):
                    writer.writerow([li, "W", r, c, f"{layer.W[r, c]:.17g}"])
            for r in range(layer.b.shape[0]):
                writer.writerow([li, "b", r, 0, f"{layer.b[r]:.17g}"])


def load_params_csv(path, like: MlpParams) -> MlpParams:
    """Load a snapshot written by save_params_csv into `like`'s layout."""
    Ws = [np.array(l.W, copy=True) for l in like.layers]
    bs = [np.array(l.b, copy=True) for l in like.layers]
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:5] != ["layer", "kind", "row", "col", "value"]:
            raise ValueError(f"unexpected snapshot header: {header}")
        for li, kind, r, c, value in reader:
            i = int(li) - 1
            if kind == "W":
                Ws[i][int(r), int(c)] = float(value)
            elif kind == "b":
                bs[i][int(r)] = float(value)
            else:
                raise ValueError(f"unknown parameter kind {kind!r}")
    layers = [Layer(W, b, l.activation) for W, b, l in zip(Ws, bs, like.layers)]
    return MlpParams(tuple(layers))
