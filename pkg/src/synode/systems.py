"""Reference dynamical systems, synthetic datasets, and dataset file I/O.

Synthetic data is produced with the adaptive solver at tight tolerances
(rtol 1e-7, atol 1e-9), then Gaussian noise is added: either an absolute
standard deviation, or per dimension a fraction of that dimension's mean over
the clean trajectory.  Datasets keep the clean states (when synthetic) so the
noise floor -- the trajectory MSE between measurements and truth -- is
available as the honest lower bound on training loss.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataFormatError
from .solvers import VectorField, integrate_adaptive, write_states_csv

DATA_RTOL = 1e-7
DATA_ATOL = 1e-9


# -- ground-truth fields ------------------------------------------------------

@dataclass(frozen=True)
class LotkaVolterraParams:
    alpha: float = 1.3
    beta: float = 0.9
    gamma: float = 0.8
    delta: float = 1.8


LV_INITIAL_STATE = (0.44249296, 4.6280594)


def lotka_volterra_field(p: LotkaVolterraParams = LotkaVolterraParams()) -> VectorField:
    """Predator-prey dynamics: x' = ax - bxy, y' = -gy + dxy."""

    def f(t, u):
        x, y = u
        return np.array([p.alpha * x - p.beta * x * y, -p.gamma * y + p.delta * x * y])

    return f


def lotka_volterra_invariant(p: LotkaVolterraParams, states) -> np.ndarray:
    """First integral d*x - g*ln(x) + b*y - a*ln(y), conserved on clean orbits."""
    x, y = states[:, 0], states[:, 1]
    return p.delta * x - p.gamma * np.log(x) + p.beta * y - p.alpha * np.log(y)


@dataclass(frozen=True)
class LorenzParams:
    sigma: float = 10.0
    rho: float = 28.0
    beta: float = 8.0 / 3.0


LORENZ_INITIAL_STATE = (1.2, 2.1, 1.7)


def lorenz_field(p: LorenzParams = LorenzParams()) -> VectorField:
    """x' = s(y-x), y' = x(r-z) - y, z' = xy - bz."""

    def f(t, u):
        x, y, z = u
        return np.array([p.sigma * (y - x), x * (p.rho - z) - y, x * y - p.beta * z])

    return f


def double_pendulum_field(l1=1.0, l2=1.0, m1=1.0, m2=1.0, g=9.81) -> VectorField:
    """Frictionless double pendulum on (theta1, theta2, omega1, omega2)."""
    if min(l1, l2, m1, m2) <= 0:
        raise ConfigError("pendulum lengths and masses must be positive")

    def f(t, u):
        th1, th2, w1, w2 = u
        delta = th1 - th2
        cos_d = math.cos(delta)
        sin_d = math.sin(delta)
        den = 2.0 * m1 + m2 - m2 * math.cos(2.0 * delta)
        a1 = (
            -g * (2.0 * m1 + m2) * math.sin(th1)
            - m2 * g * math.sin(th1 - 2.0 * th2)
            - 2.0 * sin_d * m2 * (w2 * w2 * l2 + w1 * w1 * l1 * cos_d)
        ) / (l1 * den)
        a2 = (
            2.0
            * sin_d
            * (w1 * w1 * l1 * (m1 + m2) + g * (m1 + m2) * math.cos(th1) + w2 * w2 * l2 * m2 * cos_d)
        ) / (l2 * den)
        return np.array([w1, w2, a1, a2])

    return f


def double_pendulum_energy(states, l1=1.0, l2=1.0, m1=1.0, m2=1.0, g=9.81) -> np.ndarray:
    """Total mechanical energy along a trajectory (kinetic + potential)."""
    th1, th2, w1, w2 = states.T
    kinetic = (
        0.5 * (m1 + m2) * (l1 * w1) ** 2
        + 0.5 * m2 * (l2 * w2) ** 2
        + m2 * l1 * l2 * w1 * w2 * np.cos(th1 - th2)
    )
    potential = -(m1 + m2) * g * l1 * np.cos(th1) - m2 * g * l2 * np.cos(th2)
    return kinetic + potential


# -- datasets ------------------------------------------------------------------

@dataclass(frozen=True)
class NoiseSpec:
    """``relative``: sigma = scale * |mean of each clean dimension|; ``absolute``:
    sigma = scale for every dimension; ``none``: measurements equal the truth."""

    kind: str = "none"
    scale: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "relative", "absolute"):
            raise ConfigError(f"noise kind must be none/relative/absolute, got {self.kind!r}")
        if self.scale < 0:
            raise ConfigError(f"noise scale must be >= 0, got {self.scale}")


@dataclass
class Dataset:
    times: np.ndarray
    measurements: np.ndarray
    clean: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.measurements = np.asarray(self.measurements, dtype=float)
        if self.measurements.ndim != 2 or self.measurements.shape[0] != len(self.times):
            raise ValueError("measurements must have one row per time point")
        if len(self.times) > 1 and not np.all(np.diff(self.times) > 0):
            raise ValueError("dataset times must be strictly increasing")
        if self.clean is not None:
            self.clean = np.asarray(self.clean, dtype=float)
            if self.clean.shape != self.measurements.shape:
                raise ValueError("clean states must match measurements in shape")

    @property
    def dim(self) -> int:
        return self.measurements.shape[1]

    def head(self, n_points: int) -> "Dataset":
        """First ``n_points`` rows as a dataset (training window of a longer run)."""
        if not 1 <= n_points <= len(self.times):
            raise ValueError(f"cannot take {n_points} of {len(self.times)} points")
        clean = None if self.clean is None else self.clean[:n_points].copy()
        meta = dict(self.meta, sliced_points=n_points)
        return Dataset(self.times[:n_points].copy(), self.measurements[:n_points].copy(), clean, meta)


_SYSTEM_DEFAULTS = {
    "lotka_volterra": (lambda: lotka_volterra_field(), LV_INITIAL_STATE),
    "lorenz": (lambda: lorenz_field(), LORENZ_INITIAL_STATE),
    "double_pendulum": (lambda: double_pendulum_field(), (1.0, -0.8, 0.0, 0.0)),
}


def system_field(name: str, params=None) -> VectorField:
    if name == "lotka_volterra":
        return lotka_volterra_field(params or LotkaVolterraParams())
    if name == "lorenz":
        return lorenz_field(params or LorenzParams())
    if name == "double_pendulum":
        return double_pendulum_field(**(params or {}))
    raise ConfigError(f"unknown system {name!r}")


def make_dataset(
    system: str,
    span,
    dt: float,
    noise: NoiseSpec = NoiseSpec(),
    seed: int = 0,
    u0=None,
    params=None,
    extra_points: int = 0,
) -> Dataset:
    """Simulate ``system`` over ``span`` at spacing ``dt`` and add noise.

    ``extra_points`` appends that many additional measurement times past the
    span at the same spacing (held-out continuation for extrapolation tests);
    relative noise levels are computed from the base-span clean states only, so
    the training window's statistics do not depend on the continuation length.
    """
    t0, t1 = float(span[0]), float(span[1])
    if dt <= 0 or t1 <= t0:
        raise ConfigError(f"bad span/dt: span={span}, dt={dt}")
    n_span = (t1 - t0) / dt
    if abs(n_span - round(n_span)) > 1e-9:
        raise ConfigError(f"span {span} is not a whole number of dt={dt} intervals")
    n_base = int(round(n_span)) + 1
    n_total = n_base + int(extra_points)
    times = np.linspace(t0, t0 + dt * (n_total - 1), n_total)

    if system not in _SYSTEM_DEFAULTS:
        raise ConfigError(f"unknown system {system!r}")
    default_u0 = _SYSTEM_DEFAULTS[system][1]
    u0 = np.asarray(default_u0 if u0 is None else u0, dtype=float)
    f = system_field(system, params)
    clean = integrate_adaptive(f, u0, times, rtol=DATA_RTOL, atol=DATA_ATOL).states

    if noise.kind == "none" or noise.scale == 0.0:
        sigma = np.zeros(clean.shape[1])
        measurements = clean.copy()
    else:
        if noise.kind == "relative":
            sigma = noise.scale * np.abs(clean[:n_base].mean(axis=0))
        else:
            sigma = np.full(clean.shape[1], noise.scale)
        rng = np.random.default_rng(seed)
        measurements = clean + rng.standard_normal(clean.shape) * sigma

    meta = {
        "system": system,
        "span": [t0, t1],
        "dt": dt,
        "extra_points": int(extra_points),
        "noise": {"kind": noise.kind, "scale": noise.scale, "sigma": sigma.tolist()},
        "seed": seed,
        "u0": u0.tolist(),
    }
    if params is not None:
        meta["params"] = params if isinstance(params, dict) else vars(params).copy()
    return Dataset(times, measurements, clean, meta)


def noise_floor(data: Dataset) -> float:
    """Trajectory MSE between measurements and the clean truth."""
    if data.clean is None:
        raise ValueError("noise floor needs the clean trajectory (synthetic data only)")
    diff = data.measurements - data.clean
    return float(np.mean(np.einsum("ij,ij->i", diff, diff) / data.dim))


# -- file formats ----------------------------------------------------------------

def save_dataset_csv(data: Dataset, path) -> None:
    """CSV with header ``t,u0,...`` plus ``clean_*`` columns; meta JSON sidecar."""
    extra = None
    if data.clean is not None:
        extra = [(f"clean_u{j}", data.clean[:, j]) for j in range(data.dim)]
    write_states_csv(path, data.times, data.measurements, extra=extra)
    if data.meta:
        with open(str(path) + ".meta.json", "w") as fh:
            json.dump(data.meta, fh, indent=2)


def load_csv_dataset(path) -> Dataset:
    """Parse a dataset CSV (header ``t,name1,...``, optional ``clean_*`` columns)."""
    with open(path) as fh:
        lines = [line.strip() for line in fh if line.strip()]
    if not lines:
        raise DataFormatError(f"{path}: empty dataset file")
    header = [c.strip() for c in lines[0].split(",")]
    if len(header) < 2 or header[0] != "t":
        raise DataFormatError(f"{path}: header must be 't,<name>,...', got {lines[0]!r}")
    value_cols = [i for i, name in enumerate(header) if i > 0 and not name.startswith("clean_")]
    clean_cols = [i for i, name in enumerate(header) if name.startswith("clean_")]
    if clean_cols and len(clean_cols) != len(value_cols):
        raise DataFormatError(f"{path}: clean_* column count does not match value columns")

    times, meas, clean = [], [], []
    for row_no, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != len(header):
            raise DataFormatError(f"{path}: expected {len(header)} columns", row=row_no)
        try:
            values = [float(c) for c in cells]
        except ValueError:
            raise DataFormatError(f"{path}: non-numeric cell", row=row_no) from None
        if times and values[0] <= times[-1]:
            raise DataFormatError(f"{path}: time values must be strictly increasing", row=row_no)
        times.append(values[0])
        meas.append([values[i] for i in value_cols])
        if clean_cols:
            clean.append([values[i] for i in clean_cols])
    if not times:
        raise DataFormatError(f"{path}: no data rows")
    meta = {"source": str(path), "columns": [header[i] for i in value_cols]}
    meta_path = str(path) + ".meta.json"
    try:
        with open(meta_path) as fh:
            meta.update(json.load(fh))
    except FileNotFoundError:
        pass
    return Dataset(
        np.asarray(times),
        np.asarray(meas),
        np.asarray(clean) if clean_cols else None,
        meta,
    )
