"""Trainable right-hand sides for neural ODEs.

A model maps a flat parameter vector to a vector field ``du/dt = f(t, u)`` and
provides exact vector-Jacobian products of the field with respect to both the
parameters and the state.  Two models are implemented:

* :class:`BlackBoxMlp` -- the field is a single network from state to state.
* :class:`HybridLotkaVolterra` -- known linear growth/decay terms plus two
  scalar-output networks for the unknown interaction terms:
  ``dx/dt = alpha*x + net1(x, y)``, ``dy/dt = -gamma*y + net2(x, y)``.

``bind(params)`` returns a lightweight evaluator with the layer views resolved
once; the integration/backprop engine calls it in its inner loop.
"""

from __future__ import annotations

import json

import numpy as np

from . import mlp
from .errors import ConfigError
from .mlp import MlpSpec


class _BoundBlackBox:
    __slots__ = ("layers", "_grad_views")

    def __init__(self, layers):
        self.layers = layers
        self._grad_views = None

    def rhs(self, t, u):
        return mlp.forward_layers(self.layers, u)

    def attach_grad(self, grad_flat, spec):
        self._grad_views = mlp._param_views(spec, grad_flat)

    def vjp(self, t, u, w):
        _, acts = mlp.forward_tape(self.layers, u)
        return mlp.backward_tape(self.layers, acts, w, self._grad_views)


class BlackBoxMlp:
    """du/dt = net(u) with the network mapping the state to its derivative."""

    def __init__(self, layer_sizes):
        spec = MlpSpec(tuple(layer_sizes))
        if spec.in_dim != spec.out_dim:
            raise ConfigError(
                f"black-box field needs equal input/output widths, got {spec.layer_sizes}"
            )
        self.spec = spec

    @property
    def dim(self) -> int:
        return self.spec.in_dim

    @property
    def n_params(self) -> int:
        return self.spec.n_params

    def init_params(self, seed: int) -> np.ndarray:
        return mlp.mlp_init(self.spec, seed)

    def bind(self, params) -> _BoundBlackBox:
        return _BoundBlackBox(mlp.unpack_params(self.spec, params))

    def attach_grad(self, bound, grad_flat):
        bound.attach_grad(grad_flat, self.spec)

    def rhs(self, params, t, u) -> np.ndarray:
        return mlp.mlp_forward(self.spec, params, u)

    def rhs_vjp(self, params, t, u, w):
        return mlp.mlp_vjp(self.spec, params, u, w)

    def field(self, params):
        bound = self.bind(params)
        return lambda t, u: bound.rhs(t, u)

    def to_config(self) -> dict:
        return {"kind": "blackbox", "layer_sizes": list(self.spec.layer_sizes)}


class _BoundHybrid:
    __slots__ = ("alpha", "gamma", "layers1", "layers2", "_views1", "_views2")

    def __init__(self, alpha, gamma, layers1, layers2):
        self.alpha = alpha
        self.gamma = gamma
        self.layers1 = layers1
        self.layers2 = layers2
        self._views1 = None
        self._views2 = None

    def rhs(self, t, u):
        f1 = mlp.forward_layers(self.layers1, u)[0]
        f2 = mlp.forward_layers(self.layers2, u)[0]
        return np.array([self.alpha * u[0] + f1, -self.gamma * u[1] + f2])

    def vjp(self, t, u, w):
        _, acts1 = mlp.forward_tape(self.layers1, u)
        gu = mlp.backward_tape(self.layers1, acts1, w[:1], self._views1)
        _, acts2 = mlp.forward_tape(self.layers2, u)
        gu = gu + mlp.backward_tape(self.layers2, acts2, w[1:], self._views2)
        gu[0] += self.alpha * w[0]
        gu[1] -= self.gamma * w[1]
        return gu


class HybridLotkaVolterra:
    """Grey-box predator-prey field: known linear terms, learned interactions."""

    dim = 2

    def __init__(self, alpha, gamma, net1=(2, 5, 5, 1), net2=(2, 5, 5, 1)):
        self.alpha = float(alpha)
        self.gamma = float(gamma)
        self.spec1 = MlpSpec(tuple(net1))
        self.spec2 = MlpSpec(tuple(net2))
        for spec in (self.spec1, self.spec2):
            if spec.in_dim != 2 or spec.out_dim != 1:
                raise ConfigError(
                    f"hybrid networks must map 2 inputs to 1 output, got {spec.layer_sizes}"
                )

    @property
    def n_params(self) -> int:
        return self.spec1.n_params + self.spec2.n_params

    def init_params(self, seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        return np.concatenate(
            [mlp.init_from_rng(self.spec1, rng), mlp.init_from_rng(self.spec2, rng)]
        )

    def split_params(self, params):
        params = np.asarray(params, dtype=float)
        if params.shape != (self.n_params,):
            raise ValueError(
                f"parameter vector has shape {params.shape}, expected ({self.n_params},)"
            )
        return params[: self.spec1.n_params], params[self.spec1.n_params :]

    def bind(self, params) -> _BoundHybrid:
        p1, p2 = self.split_params(params)
        return _BoundHybrid(
            self.alpha,
            self.gamma,
            mlp.unpack_params(self.spec1, p1),
            mlp.unpack_params(self.spec2, p2),
        )

    def attach_grad(self, bound, grad_flat):
        bound._views1 = mlp._param_views(self.spec1, grad_flat[: self.spec1.n_params])
        bound._views2 = mlp._param_views(self.spec2, grad_flat[self.spec1.n_params :])

    def rhs(self, params, t, u) -> np.ndarray:
        return self.bind(params).rhs(t, np.asarray(u, dtype=float))

    def rhs_vjp(self, params, t, u, w):
        grad = np.zeros(self.n_params)
        bound = self.bind(params)
        self.attach_grad(bound, grad)
        gu = bound.vjp(t, np.asarray(u, dtype=float), np.asarray(w, dtype=float))
        return grad, gu

    def field(self, params):
        bound = self.bind(params)
        return lambda t, u: bound.rhs(t, u)

    def to_config(self) -> dict:
        return {
            "kind": "hybrid_lotka_volterra",
            "alpha": self.alpha,
            "gamma": self.gamma,
            "net1": list(self.spec1.layer_sizes),
            "net2": list(self.spec2.layer_sizes),
        }


def hybrid_lv_field(alpha, gamma, net1, net2):
    """Vector field for fixed hybrid parameters; ``netX`` is (spec|sizes, params)."""
    spec1, p1 = net1
    spec2, p2 = net2
    if not isinstance(spec1, MlpSpec):
        spec1 = MlpSpec(tuple(spec1))
    if not isinstance(spec2, MlpSpec):
        spec2 = MlpSpec(tuple(spec2))
    model = HybridLotkaVolterra(alpha, gamma, spec1.layer_sizes, spec2.layer_sizes)
    return model.field(np.concatenate([np.asarray(p1, float), np.asarray(p2, float)]))


def model_from_config(config: dict):
    """Rebuild a model from the dict produced by ``to_config``."""
    kind = config.get("kind")
    if kind == "blackbox":
        return BlackBoxMlp(config["layer_sizes"])
    if kind == "hybrid_lotka_volterra":
        return HybridLotkaVolterra(
            config["alpha"], config["gamma"], config["net1"], config["net2"]
        )
    raise ConfigError(f"unknown model kind {kind!r}")


def save_model_checkpoint(model, params, path) -> None:
    """Checkpoint = model config + flat parameter values (JSON).

    For a single-network model the file also carries the plain
    ``layer_sizes``/``values`` fields, so it doubles as an MLP checkpoint.
    """
    params = np.asarray(params, dtype=float)
    payload = {"model": model.to_config(), "values": params.tolist()}
    if isinstance(model, BlackBoxMlp):
        payload["layer_sizes"] = list(model.spec.layer_sizes)
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_model_checkpoint(path):
    """Read a checkpoint written by :func:`save_model_checkpoint`."""
    with open(path) as fh:
        payload = json.load(fh)
    if "model" in payload:
        model = model_from_config(payload["model"])
    elif "layer_sizes" in payload:
        model = BlackBoxMlp(payload["layer_sizes"])
    else:
        raise ConfigError(f"checkpoint {path} carries no model description")
    params = np.asarray(payload["values"], dtype=float)
    if params.shape != (model.n_params,):
        raise ValueError(
            f"checkpoint {path} has {params.size} values, model needs {model.n_params}"
        )
    return model, params
