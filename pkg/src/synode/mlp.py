"""Small dense tanh networks with hand-written reverse-mode derivatives.

The vector fields trained here are tiny (a few tens of units wide), and the
optimizer needs vector-Jacobian products of the network at every stage of an
ODE solve.  Explicit numpy forward/backward passes keep that path transparent
and fast at these sizes.

Parameters live in one flat float64 vector, packed layer by layer, weights
before bias (weights row-major, shaped ``(fan_out, fan_in)``).  Hidden layers
apply ``tanh``; the output layer is affine.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class MlpSpec:
    """Layer widths of a fully connected network: (input, hidden..., output)."""

    layer_sizes: tuple[int, ...]

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 3:
            raise ConfigError(
                f"layer_sizes needs input, at least one hidden, and output widths; got {sizes}"
            )
        if any(s < 1 for s in sizes):
            raise ConfigError(f"layer sizes must be positive integers, got {sizes}")

    @property
    def in_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def out_dim(self) -> int:
        return self.layer_sizes[-1]

    @property
    def n_params(self) -> int:
        return sum(
            (fan_in + 1) * fan_out
            for fan_in, fan_out in zip(self.layer_sizes, self.layer_sizes[1:])
        )


def _param_views(spec: MlpSpec, flat: np.ndarray):
    """Slice a flat parameter vector into per-layer (W, b) views (no copies)."""
    views = []
    offset = 0
    for fan_in, fan_out in zip(spec.layer_sizes, spec.layer_sizes[1:]):
        w = flat[offset : offset + fan_in * fan_out].reshape(fan_out, fan_in)
        offset += fan_in * fan_out
        b = flat[offset : offset + fan_out]
        offset += fan_out
        views.append((w, b))
    return views


def unpack_params(spec: MlpSpec, params: np.ndarray):
    """Validate a flat parameter vector and return per-layer (W, b) views."""
    params = np.asarray(params, dtype=float)
    if params.shape != (spec.n_params,):
        raise ValueError(
            f"parameter vector has shape {params.shape}, spec {spec.layer_sizes} "
            f"needs ({spec.n_params},)"
        )
    return _param_views(spec, params)


def init_from_rng(spec: MlpSpec, rng: np.random.Generator) -> np.ndarray:
    """Glorot-uniform weights, zero biases, drawn layer by layer from ``rng``."""
    chunks = []
    for fan_in, fan_out in zip(spec.layer_sizes, spec.layer_sizes[1:]):
        a = np.sqrt(6.0 / (fan_in + fan_out))
        chunks.append(rng.uniform(-a, a, size=fan_in * fan_out))
        chunks.append(np.zeros(fan_out))
    return np.concatenate(chunks)


def mlp_init(spec: MlpSpec, seed: int) -> np.ndarray:
    """Deterministic initial parameter vector for ``spec``."""
    return init_from_rng(spec, np.random.default_rng(seed))


def forward_layers(layers, x: np.ndarray) -> np.ndarray:
    """Forward pass through pre-unpacked (W, b) layers."""
    a = x
    for w, b in layers[:-1]:
        a = np.tanh(w.dot(a) + b)
    w, b = layers[-1]
    return w.dot(a) + b


def forward_tape(layers, x: np.ndarray):
    """Forward pass that also returns the input activation of every layer."""
    acts = [x]
    a = x
    for w, b in layers[:-1]:
        a = np.tanh(w.dot(a) + b)
        acts.append(a)
    w, b = layers[-1]
    return w.dot(a) + b, acts


def backward_tape(layers, acts, cotangent: np.ndarray, grad_views) -> np.ndarray:
    """Reverse pass: accumulate wᵀ∂out/∂params into ``grad_views``, return wᵀ∂out/∂x.

    ``acts`` is the tape from :func:`forward_tape`; ``grad_views`` must be laid
    out like :func:`_param_views` over the gradient buffer (accumulated with
    ``+=`` so repeated calls sum contributions).
    """
    delta = cotangent
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        gw, gb = grad_views[i]
        gw += np.multiply.outer(delta, acts[i])
        gb += delta
        delta = w.T.dot(delta)
        if i > 0:
            # acts[i] is the tanh output feeding layer i; tanh' = 1 - tanh^2.
            delta = delta * (1.0 - acts[i] * acts[i])
    return delta


def mlp_forward(spec: MlpSpec, params: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Evaluate the network at ``x``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (spec.in_dim,):
        raise ValueError(f"input has shape {x.shape}, expected ({spec.in_dim},)")
    return forward_layers(unpack_params(spec, params), x)


def mlp_vjp(spec: MlpSpec, params: np.ndarray, x: np.ndarray, cotangent: np.ndarray):
    """Exact reverse-mode products (wᵀ∂out/∂params, wᵀ∂out/∂x)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (spec.in_dim,):
        raise ValueError(f"input has shape {x.shape}, expected ({spec.in_dim},)")
    w = np.asarray(cotangent, dtype=float)
    if w.shape != (spec.out_dim,):
        raise ValueError(f"cotangent has shape {w.shape}, expected ({spec.out_dim},)")
    layers = unpack_params(spec, params)
    grad = np.zeros(spec.n_params)
    views = _param_views(spec, grad)
    _, acts = forward_tape(layers, x)
    input_grad = backward_tape(layers, acts, w, views)
    return grad, input_grad


def save_checkpoint(spec: MlpSpec, params: np.ndarray, path) -> None:
    """Write a single-network checkpoint: layer sizes plus the flat parameters."""
    params = np.asarray(params, dtype=float)
    if params.shape != (spec.n_params,):
        raise ValueError("parameter vector does not match spec")
    payload = {"layer_sizes": list(spec.layer_sizes), "values": params.tolist()}
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_checkpoint(path):
    """Read a checkpoint written by :func:`save_checkpoint`."""
    with open(path) as fh:
        payload = json.load(fh)
    spec = MlpSpec(tuple(payload["layer_sizes"]))
    params = np.asarray(payload["values"], dtype=float)
    if params.shape != (spec.n_params,):
        raise ValueError(f"checkpoint {path} has {params.size} values, spec needs {spec.n_params}")
    return spec, params
