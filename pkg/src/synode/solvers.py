"""Explicit Runge-Kutta integrators.

Two integrators cover the two jobs in this package.  ``integrate_fixed`` is a
classical RK4 with a fixed number of substeps per output interval; the training
loss is differentiated exactly through its stages, so it must be deterministic
in structure.  ``integrate_adaptive`` is a Dormand-Prince 4(5) pair with PI
step-size control, used to generate and evaluate reference data.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DivergenceError

VectorField = Callable[[float, np.ndarray], np.ndarray]


@dataclass
class Trajectory:
    """States sampled at the requested times; ``times`` echo the request exactly."""

    times: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        if len(self.times) != len(self.states):
            raise ValueError("times and states lengths differ")

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def to_csv(self, path) -> None:
        write_states_csv(path, self.times, self.states)


def write_states_csv(path, times, states, header_names=None, extra=None) -> None:
    """Write ``t,u0,u1,...`` rows with 17 significant digits (lossless for float64)."""
    states = np.asarray(states)
    names = header_names or [f"u{j}" for j in range(states.shape[1])]
    columns = [np.asarray(times)] + [states[:, j] for j in range(states.shape[1])]
    header = ["t"] + list(names)
    if extra:
        for name, col in extra:
            header.append(name)
            columns.append(np.asarray(col))
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in zip(*columns):
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def _check_times(times) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or len(times) < 1:
        raise ValueError("times must be a non-empty 1-D array")
    if len(times) > 1 and not np.all(np.diff(times) > 0):
        raise ValueError("times must be strictly increasing")
    return times


def rk4_step(f: VectorField, t: float, u: np.ndarray, h: float) -> np.ndarray:
    """One classical fourth-order Runge-Kutta step of size ``h > 0``."""
    if h <= 0:
        raise ValueError(f"step size must be positive, got {h}")
    k1 = np.asarray(f(t, u))
    k2 = np.asarray(f(t + 0.5 * h, u + (0.5 * h) * k1))
    k3 = np.asarray(f(t + 0.5 * h, u + (0.5 * h) * k2))
    k4 = np.asarray(f(t + h, u + h * k3))
    u_new = u + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
    if not np.all(np.isfinite(u_new)):
        raise DivergenceError(f"non-finite state in RK4 step at t={t}", t=t)
    return u_new


def integrate_fixed(f: VectorField, u0, times, substeps: int) -> Trajectory:
    """RK4 over ``times`` with each interval cut into ``substeps`` equal steps."""
    times = _check_times(times)
    if substeps < 1:
        raise ValueError(f"substeps must be >= 1, got {substeps}")
    u = np.array(u0, dtype=float)
    states = np.empty((len(times), len(u)))
    states[0] = u
    for i in range(len(times) - 1):
        h = (times[i + 1] - times[i]) / substeps
        try:
            for j in range(substeps):
                u = rk4_step(f, times[i] + j * h, u, h)
        except DivergenceError as err:
            partial = Trajectory(times[: i + 1].copy(), states[: i + 1].copy())
            raise DivergenceError(
                f"integration diverged in interval {i} (t={err.t}); "
                f"last valid output index {i}",
                t=err.t,
                last_valid_index=i,
                partial=partial,
            ) from None
        states[i + 1] = u
    return Trajectory(times.copy(), states)


# Dormand-Prince 5(4) tableau.  The propagated solution is the fifth-order one;
# _DP_E gives the embedded error estimate coefficients (b5 - b4).
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_DP_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_E = np.array(
    [71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40]
)

# PI controller constants (Hairer, Norsett & Wanner, DOPRI5 defaults).
_SAFETY = 0.9
_BETA = 0.04
_EXPO1 = 0.2 - _BETA * 0.75
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0
_MAX_STEPS = 1_000_000


def _initial_step(f, t0, u0, f0, rtol, atol):
    """Hairer's starting step size heuristic for a fifth-order method."""
    scale = atol + rtol * np.abs(u0)
    d0 = np.sqrt(np.mean((u0 / scale) ** 2))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2))
    h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    u1 = u0 + h0 * f0
    f1 = np.asarray(f(t0 + h0, u1))
    d2 = np.sqrt(np.mean(((f1 - f0) / scale) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100.0 * h0, h1)


def integrate_adaptive(
    f: VectorField, u0, times, rtol: float = 1e-7, atol: float = 1e-9
) -> Trajectory:
    """Dormand-Prince 4(5) with PI step control, landing exactly on ``times``.

    Steps never overshoot the next requested output time; the step is clamped
    to it instead of interpolating, which is cheap at the output densities used
    here.  Raises :class:`DivergenceError` on non-finite states or step-size
    underflow (stiffness).
    """
    times = _check_times(times)
    if rtol <= 0 or atol <= 0:
        raise ValueError("rtol and atol must be positive")
    u = np.array(u0, dtype=float)
    n = len(u)
    states = np.empty((len(times), n))
    states[0] = u
    if len(times) == 1:
        return Trajectory(times.copy(), states)

    span = times[-1] - times[0]
    t = times[0]
    k = np.empty((7, n))
    k[0] = np.asarray(f(t, u))
    h = min(_initial_step(f, t, u, k[0], rtol, atol), span)
    facold = 1e-4
    next_out = 1

    def _fail(i, t, message):
        partial = Trajectory(times[:i].copy(), states[:i].copy())
        return DivergenceError(message, t=t, last_valid_index=i - 1, partial=partial)

    for _ in range(_MAX_STEPS):
        if h < 1e-14 * span:
            raise _fail(next_out, t, f"step size underflow at t={t} (stiff or diverging)")
        gap = times[next_out] - t
        clamped = h >= gap
        if clamped:
            h = gap
        for i in range(1, 7):
            ui = u + h * _DP_A[i - 1].dot(k[:i])
            k[i] = f(t + _DP_C[i] * h, ui)
        u_new = u + h * _DP_B.dot(k)
        err_vec = h * _DP_E.dot(k)
        scale = atol + rtol * np.maximum(np.abs(u), np.abs(u_new))
        err = np.sqrt(np.mean((err_vec / scale) ** 2))
        if not np.isfinite(err):
            err = np.inf
        fac11 = err**_EXPO1 if np.isfinite(err) else np.inf

        if err <= 1.0:
            if not np.all(np.isfinite(u_new)):
                raise _fail(next_out, t, f"non-finite state at t={t + h}")
            facold = max(err, 1e-4)
            fac = fac11 / facold**_BETA
            h_next = h / max(1.0 / _MAX_FACTOR, min(1.0 / _MIN_FACTOR, fac / _SAFETY))
            u = u_new
            k[0] = k[6]  # FSAL: last stage is the derivative at the new point
            if clamped:
                t = times[next_out]
                states[next_out] = u
                next_out += 1
                if next_out == len(times):
                    return Trajectory(times.copy(), states)
            else:
                t = t + h
            h = h_next
        else:
            h = h / min(1.0 / _MIN_FACTOR, fac11 / _SAFETY)

    raise _fail(next_out, t, f"step budget exhausted after {_MAX_STEPS} steps")
