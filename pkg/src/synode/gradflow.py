"""Trajectory loss and its exact gradient through the fixed-step solver.

The loss is the mean over measurement times of ``||u(t_i) - y_i||^2 / n``,
where the trajectory solves the model field, optionally augmented with a
proportional feedback term ``-lam*k*(u - ref(t))`` pulling the state toward a
smooth reference built from the data.  Gradients are discretize-then-optimize:
the RK4 stages of the forward solve are stored and swept in reverse, so the
gradient is exact for the discrete trajectory the loss actually saw.

With ``lam*k == 0`` the coupled code path degenerates to the plain field
bit-exactly (the feedback term is skipped, not multiplied by zero).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DivergenceError
from .solvers import VectorField, integrate_fixed


@dataclass(frozen=True)
class Coupling:
    """Feedback strength ``k`` (K = k*I) and homotopy weight ``lam`` in [0, 1]."""

    k: float = 0.0
    lam: float = 0.0

    def __post_init__(self):
        if self.k < 0:
            raise ConfigError(f"coupling strength k must be >= 0, got {self.k}")
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError(f"homotopy parameter must lie in [0, 1], got {self.lam}")

    @property
    def strength(self) -> float:
        return self.lam * self.k


UNCOUPLED = Coupling(0.0, 0.0)


@dataclass
class LossReport:
    loss: float
    per_time_residuals: np.ndarray
    diverged: bool = False
    diverged_at: int | None = field(default=None, repr=False)


def coupled_field(model_field: VectorField, ref, coupling: Coupling) -> VectorField:
    """Field with proportional feedback toward ``ref``; unchanged if strength is 0."""
    s = coupling.strength
    if s == 0.0:
        return model_field

    def coupled(t, u):
        return model_field(t, u) - s * (u - ref.at(t))

    return coupled


def _residuals(states, measurements, diverged_at=None):
    n = measurements.shape[1]
    res = np.einsum("ij,ij->i", states - measurements, states - measurements) / n
    if diverged_at is not None:
        res[diverged_at:] = np.inf
    return res


def field_loss(f: VectorField, data, substeps: int = 10) -> LossReport:
    """Loss of a plain (non-parametric) field against ``data``; inf on divergence.

    Integration starts from the first measurement, matching the trained models.
    """
    times = data.times
    meas = data.measurements
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            traj = integrate_fixed(f, meas[0], times, substeps)
    except DivergenceError as err:
        states = np.zeros_like(meas)
        last = err.last_valid_index if err.last_valid_index is not None else 0
        if err.partial is not None:
            states[: last + 1] = err.partial.states
        res = _residuals(states, meas, diverged_at=last + 1)
        return LossReport(np.inf, res, diverged=True, diverged_at=last + 1)
    with np.errstate(over="ignore", invalid="ignore"):
        res = _residuals(traj.states, meas)
        total = float(res.mean())
    if not np.isfinite(total):
        return LossReport(np.inf, res, diverged=True)
    return LossReport(total, res)


class TrajectoryProblem:
    """Loss/gradient evaluator over one dataset's fixed integration grid.

    Precomputes the substep grid and, when a reference spline is supplied, its
    values at every RK4 stage time (the grid never changes between epochs, so
    the spline is sampled once).
    """

    def __init__(self, model, data, substeps: int = 10, ref=None):
        if substeps < 1:
            raise ValueError(f"substeps must be >= 1, got {substeps}")
        times = np.asarray(data.times, dtype=float)
        meas = np.asarray(data.measurements, dtype=float)
        if meas.ndim != 2 or meas.shape[0] != len(times):
            raise ValueError("measurements must be (len(times), dim)")
        if meas.shape[1] != model.dim:
            raise ValueError(
                f"data dimension {meas.shape[1]} does not match model dimension {model.dim}"
            )
        if ref is not None and ref.dim != model.dim:
            raise ValueError("reference spline dimension does not match model")
        self.model = model
        self.times = times
        self.measurements = meas
        self.substeps = substeps
        self.ref = ref
        n_int = len(times) - 1
        self.n_steps = n_int * substeps
        h_interval = np.diff(times) / substeps
        self.step_h = np.repeat(h_interval, substeps)
        offsets = np.tile(np.arange(substeps), n_int) * self.step_h
        self.step_t0 = np.repeat(times[:-1], substeps) + offsets
        if ref is not None:
            self.ref_start = ref.sample(self.step_t0)
            self.ref_mid = ref.sample(self.step_t0 + 0.5 * self.step_h)
            self.ref_end = ref.sample(self.step_t0 + self.step_h)
        else:
            self.ref_start = self.ref_mid = self.ref_end = None

    def _require_ref(self, coupling: Coupling):
        if coupling.strength != 0.0 and self.ref is None:
            raise ValueError("coupled loss requested but no reference spline was given")

    def _forward(self, bound, strength: float, stages):
        """Integrate; fill ``stages`` (stage input states) when given.

        Returns (states, diverged_at) where ``diverged_at`` is the first
        measurement index with a non-finite state, or None.
        """
        times = self.times
        meas = self.measurements
        sub = self.substeps
        states = np.zeros_like(meas)
        u = meas[0].copy()
        states[0] = u
        j = 0
        for i in range(len(times) - 1):
            for _ in range(sub):
                t = self.step_t0[j]
                h = self.step_h[j]
                k1 = bound.rhs(t, u)
                if strength:
                    k1 -= strength * (u - self.ref_start[j])
                x2 = u + (0.5 * h) * k1
                k2 = bound.rhs(t + 0.5 * h, x2)
                if strength:
                    k2 -= strength * (x2 - self.ref_mid[j])
                x3 = u + (0.5 * h) * k2
                k3 = bound.rhs(t + 0.5 * h, x3)
                if strength:
                    k3 -= strength * (x3 - self.ref_mid[j])
                x4 = u + h * k3
                k4 = bound.rhs(t + h, x4)
                if strength:
                    k4 -= strength * (x4 - self.ref_end[j])
                if stages is not None:
                    stages[j, 0] = u
                    stages[j, 1] = x2
                    stages[j, 2] = x3
                    stages[j, 3] = x4
                u = u + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
                j += 1
            if not np.all(np.isfinite(u)):
                return states, i + 1
            states[i + 1] = u
        return states, None

    def loss(self, params, coupling: Coupling = UNCOUPLED) -> LossReport:
        self._require_ref(coupling)
        bound = self.model.bind(params)
        with np.errstate(over="ignore", invalid="ignore"):
            states, diverged_at = self._forward(bound, coupling.strength, None)
            res = _residuals(states, self.measurements, diverged_at)
            total = float(res.mean())
        if diverged_at is not None or not np.isfinite(total):
            return LossReport(np.inf, res, diverged=True, diverged_at=diverged_at)
        return LossReport(total, res)

    def loss_grad(self, params, coupling: Coupling = UNCOUPLED):
        """Loss plus its exact gradient; gradient is None when the solve diverged."""
        self._require_ref(coupling)
        strength = coupling.strength
        bound = self.model.bind(params)
        dim = self.measurements.shape[1]
        stages = np.empty((self.n_steps, 4, dim))
        with np.errstate(over="ignore", invalid="ignore"):
            states, diverged_at = self._forward(bound, strength, stages)
            res = _residuals(states, self.measurements, diverged_at)
            total = float(res.mean())
        if diverged_at is not None or not np.isfinite(total):
            return LossReport(np.inf, res, diverged=True, diverged_at=diverged_at), None

        meas = self.measurements
        n_points = meas.shape[0]
        scale = 2.0 / (n_points * dim)
        grad = np.zeros(self.model.n_params)
        self.model.attach_grad(bound, grad)
        adj = scale * (states[-1] - meas[-1])
        j = self.n_steps - 1
        for i in range(n_points - 2, -1, -1):
            for _ in range(self.substeps):
                t = self.step_t0[j]
                h = self.step_h[j]
                u_n = stages[j, 0]
                b4 = (h / 6.0) * adj
                gu4 = bound.vjp(t + h, stages[j, 3], b4)
                if strength:
                    gu4 -= strength * b4
                c3 = (h / 3.0) * adj + h * gu4
                gu3 = bound.vjp(t + 0.5 * h, stages[j, 2], c3)
                if strength:
                    gu3 -= strength * c3
                c2 = (h / 3.0) * adj + (0.5 * h) * gu3
                gu2 = bound.vjp(t + 0.5 * h, stages[j, 1], c2)
                if strength:
                    gu2 -= strength * c2
                c1 = (h / 6.0) * adj + (0.5 * h) * gu2
                gu1 = bound.vjp(t, u_n, c1)
                if strength:
                    gu1 -= strength * c1
                adj = adj + gu1 + gu2 + gu3 + gu4
                j -= 1
            if i > 0:
                adj = adj + scale * (states[i] - meas[i])
            # i == 0: the initial state is pinned to the first measurement,
            # so the remaining adjoint carries no parameter information.
        return LossReport(float(res.mean()), res), grad


def trajectory_loss(model, params, data, coupling: Coupling = UNCOUPLED, ref=None, substeps: int = 10) -> LossReport:
    """One-shot coupled/uncoupled loss of ``model`` at ``params`` on ``data``."""
    return TrajectoryProblem(model, data, substeps, ref).loss(params, coupling)


def loss_gradient(model, params, data, coupling: Coupling = UNCOUPLED, ref=None, substeps: int = 10):
    """One-shot loss and exact parameter gradient."""
    return TrajectoryProblem(model, data, substeps, ref).loss_grad(params, coupling)
