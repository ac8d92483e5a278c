"""Config-driven experiment runner: training runs, evaluation, landscape sweeps.

A JSON config names the experiment, the model, the dataset, the training
hyperparameters, and the seeds.  Each (mode, seed) run writes its own
directory with ``history.csv``, ``best.ckpt.json`` and ``metrics.json``; the
experiment directory gets the dataset CSV and a ``summary.json`` aggregating
the per-seed metrics (mean and standard error).
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, DivergenceError, TrainingAbort
from .gradflow import Coupling, coupled_field, field_loss
from .models import load_model_checkpoint, model_from_config, save_model_checkpoint
from .smoothing import fit_smoothing_spline
from .solvers import integrate_fixed
from .systems import (
    Dataset,
    LorenzParams,
    LotkaVolterraParams,
    NoiseSpec,
    load_csv_dataset,
    make_dataset,
    noise_floor,
    save_dataset_csv,
    system_field,
)
from .training import TrainConfig, train_homotopy, train_vanilla

OUTPUT_ROOT_ENV = "SYNODE_OUT"

TRAINING_EXPERIMENTS = (
    "lotka_volterra_hybrid",
    "lorenz_blackbox",
    "double_pendulum_blackbox",
    "length_ablation",
)
EXPERIMENTS = TRAINING_EXPERIMENTS + ("landscape_sweep",)
MODES = ("homotopy", "vanilla", "both")


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as err:
        raise ConfigError(f"config {path} is not valid JSON: {err}") from None


def _require(cfg: dict, field: str, kind=None):
    if field not in cfg:
        raise ConfigError(f"config field '{field}' is missing")
    value = cfg[field]
    if kind is not None and not isinstance(value, kind):
        raise ConfigError(f"config field '{field}' has the wrong type: {value!r}")
    return value


def _enum(cfg: dict, field: str, allowed) -> str:
    value = _require(cfg, field, str)
    if value not in allowed:
        raise ConfigError(f"config field '{field}' must be one of {sorted(allowed)}, got {value!r}")
    return value


def resolve_output_dir(cfg: dict, output_root=None) -> Path:
    out = Path(_require(cfg, "output_dir", str))
    if out.is_absolute():
        return out
    root = Path(output_root) if output_root else Path(os.environ.get(OUTPUT_ROOT_ENV, "."))
    return root / out


def train_config_from(cfg: dict, seed: int) -> TrainConfig:
    train = dict(_require(cfg, "train", dict))
    train.pop("seed", None)
    known = {f for f in TrainConfig.__dataclass_fields__}
    unknown = set(train) - known
    if unknown:
        raise ConfigError(f"config field 'train' has unknown entries: {sorted(unknown)}")
    if "betas" in train:
        train["betas"] = tuple(train["betas"])
    try:
        return TrainConfig(seed=seed, **train)
    except TypeError as err:
        raise ConfigError(f"config field 'train' is invalid: {err}") from None


def build_dataset(ds_cfg: dict, extra_points: int = 0) -> Dataset:
    if "csv" in ds_cfg:
        return load_csv_dataset(ds_cfg["csv"])
    system = _enum(ds_cfg, "system", ("lotka_volterra", "lorenz", "double_pendulum"))
    span = _require(ds_cfg, "span", list)
    dt = _require(ds_cfg, "dt", (int, float))
    noise_cfg = ds_cfg.get("noise", {"kind": "none", "scale": 0.0})
    noise = NoiseSpec(noise_cfg.get("kind", "none"), noise_cfg.get("scale", 0.0))
    return make_dataset(
        system,
        span,
        dt,
        noise,
        seed=ds_cfg.get("seed", 0),
        u0=ds_cfg.get("u0"),
        params=ds_cfg.get("params"),
        extra_points=extra_points,
    )


def evaluate_model(model, params, data: Dataset, horizon: int, substeps: int = 10) -> dict:
    """Interpolation/extrapolation MSE of the uncoupled model along ``data``.

    The last ``horizon`` points of ``data`` are the held-out continuation; the
    remaining prefix is the training window.  Divergence shows up as +inf in
    whichever window it hits, with a flag.
    """
    n_total = len(data.times)
    if not 0 <= horizon < n_total:
        raise ConfigError(f"horizon {horizon} does not fit a {n_total}-point dataset")
    n_train = n_total - horizon
    field = model.field(params)
    diverged = False
    with np.errstate(over="ignore", invalid="ignore"):
        try:
            states = integrate_fixed(field, data.measurements[0], data.times, substeps).states
        except DivergenceError as err:
            diverged = True
            states = np.zeros_like(data.measurements)
            valid = 0 if err.partial is None else len(err.partial.states)
            if valid:
                states[:valid] = err.partial.states
            states[valid:] = np.nan
    diff = states - data.measurements
    res = np.einsum("ij,ij->i", diff, diff) / data.dim
    res[~np.isfinite(res)] = np.inf
    interp = float(np.mean(res[:n_train]))
    out = {
        "interpolation_mse": interp if math.isfinite(interp) else float("inf"),
        "diverged": diverged,
        "horizon": horizon,
    }
    if horizon > 0:
        extrap = float(np.mean(res[n_train:]))
        out["extrapolation_mse"] = extrap if math.isfinite(extrap) else float("inf")
    return out


def evaluate_checkpoint(checkpoint_path, dataset_path, horizon: int, substeps: int = 10) -> dict:
    model, params = load_model_checkpoint(checkpoint_path)
    data = load_csv_dataset(dataset_path)
    return evaluate_model(model, params, data, horizon, substeps)


def write_history_csv(history, path) -> None:
    with open(path, "w") as fh:
        fh.write("epoch,lambda,coupled_loss,uncoupled_mse\n")
        for rec in history:
            fh.write(
                f"{rec.epoch},{rec.lam:.17g},{rec.coupled_loss:.17g},{rec.uncoupled_mse:.17g}\n"
            )


def run_single(model, train_cfg: TrainConfig, full_data: Dataset, horizon: int, mode: str, out_dir: Path) -> dict:
    """One (mode, seed) training run; writes history/checkpoint/metrics files."""
    out_dir.mkdir(parents=True, exist_ok=True)
    train_data = full_data.head(len(full_data.times) - horizon)
    trainer = train_homotopy if mode == "homotopy" else train_vanilla
    try:
        result = trainer(train_cfg, train_data, model)
    except TrainingAbort as err:
        metrics = {"aborted": str(err), "mode": mode, "seed": train_cfg.seed}
        with open(out_dir / "metrics.json", "w") as fh:
            json.dump(metrics, fh, indent=2)
        return metrics

    write_history_csv(result.history, out_dir / "history.csv")
    save_model_checkpoint(model, result.best_params, out_dir / "best.ckpt.json")
    metrics = {
        "mode": mode,
        "seed": train_cfg.seed,
        "best_epoch": result.best_epoch,
        "best_mse": result.best_mse,
        "rejected_epochs": result.rejected_epochs,
    }
    metrics.update(evaluate_model(model, result.best_params, full_data, horizon, train_cfg.substeps))
    if full_data.clean is not None:
        metrics["noise_floor"] = noise_floor(train_data)
    with open(out_dir / "metrics.json", "w") as fh:
        json.dump(metrics, fh, indent=2)
    return metrics


def _aggregate(per_seed: list[dict]) -> dict:
    """Mean and standard error over completed runs for the numeric metrics."""
    completed = [m for m in per_seed if "aborted" not in m]
    agg = {"runs": per_seed, "n_completed": len(completed)}
    if not completed:
        return agg
    for key in ("best_mse", "interpolation_mse", "extrapolation_mse"):
        values = [m[key] for m in completed if key in m]
        if not values:
            continue
        arr = np.asarray(values, dtype=float)
        mean = float(arr.mean())
        stderr = float(arr.std(ddof=1) / np.sqrt(len(arr))) if len(arr) > 1 else 0.0
        agg[key] = {"mean": mean, "stderr": stderr, "values": values}
    return agg


def _run_training_suite(cfg, model_cfg, out_dir: Path) -> dict:
    mode = _enum(cfg, "mode", MODES)
    modes = ["homotopy", "vanilla"] if mode == "both" else [mode]
    seeds = cfg.get("seeds", [0, 1, 2])
    if not isinstance(seeds, list) or not seeds:
        raise ConfigError("config field 'seeds' must be a non-empty list")
    horizon = int(cfg.get("extrapolation_points", 0))
    data = build_dataset(_require(cfg, "dataset", dict), extra_points=horizon)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_dataset_csv(data, out_dir / "dataset.csv")

    summary = {"modes": {}}
    if data.clean is not None:
        summary["noise_floor"] = noise_floor(data.head(len(data.times) - horizon))
    for run_mode in modes:
        per_seed = []
        for seed in seeds:
            model = model_from_config(model_cfg)
            train_cfg = train_config_from(cfg, seed)
            run_dir = out_dir / f"{run_mode}_seed{seed}"
            per_seed.append(run_single(model, train_cfg, data, horizon, run_mode, run_dir))
        summary["modes"][run_mode] = _aggregate(per_seed)
    return summary


def run_experiment(config, output_root=None) -> dict:
    """Run the experiment described by ``config`` (dict or path); return summary."""
    cfg = load_config(config) if not isinstance(config, dict) else config
    experiment = _enum(cfg, "experiment", EXPERIMENTS)
    out_dir = resolve_output_dir(cfg, output_root)

    if experiment == "landscape_sweep":
        rows = landscape_sweep(cfg, output_root)
        summary = {"experiment": experiment, "rows": len(rows), "output_dir": str(out_dir)}
    elif experiment == "length_ablation":
        spans = _require(cfg, "spans", list)
        summary = {"experiment": experiment, "spans": {}, "output_dir": str(out_dir)}
        for span in spans:
            sub_cfg = dict(cfg)
            sub_cfg["dataset"] = dict(cfg["dataset"], span=list(span))
            span_key = f"{span[0]:g}-{span[1]:g}"
            span_summary = _run_training_suite(
                sub_cfg, _require(cfg, "model", dict), out_dir / f"span_{span_key}"
            )
            summary["spans"][span_key] = span_summary
    else:
        summary = _run_training_suite(cfg, _require(cfg, "model", dict), out_dir)
        summary["experiment"] = experiment
        summary["output_dir"] = str(out_dir)

    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
    return summary


_SWEEP_PARAMS = {
    "lotka_volterra": LotkaVolterraParams,
    "lorenz": LorenzParams,
}


def landscape_sweep(cfg, output_root=None) -> list[dict]:
    """Loss of a known-form system against its own data along one coefficient.

    For every grid value of the swept coefficient and every feedback gain k,
    the (possibly coupled) field is integrated over the dataset times and the
    trajectory MSE recorded; non-finite solves are recorded as +inf rows.
    """
    sweep = _require(cfg, "sweep", dict)
    system = _enum(sweep, "system", tuple(_SWEEP_PARAMS))
    cls = _SWEEP_PARAMS[system]
    parameter = _require(sweep, "parameter", str)
    if parameter not in cls.__dataclass_fields__:
        raise ConfigError(
            f"config field 'sweep.parameter': {system} has no coefficient {parameter!r}"
        )
    grid_points = int(sweep.get("grid_points", 101))
    k_values = sweep.get("k_values", [0.0, 1.0])
    lam = float(sweep.get("lambda", 1.0))
    substeps = int(sweep.get("substeps", 10))
    true_params = cls(**sweep.get("params", {}))
    true_value = getattr(true_params, parameter)
    if "range" in sweep:
        lo, hi = sweep["range"]
    else:
        rel = float(sweep.get("rel_range", 0.5))
        lo, hi = true_value * (1 - rel), true_value * (1 + rel)
    grid = np.linspace(lo, hi, grid_points)

    data = build_dataset(dict(_require(cfg, "dataset", dict), system=system))
    ref = fit_smoothing_spline(data.times, data.measurements, cfg.get("spline_mu", 0.0))

    rows = []
    for k in k_values:
        for value in grid:
            params = replace(true_params, **{parameter: float(value)})
            f = system_field(system, params)
            if k > 0:
                f = coupled_field(f, ref, Coupling(float(k), lam))
            loss = field_loss(f, data, substeps).loss
            rows.append(
                {"parameter": parameter, "value": float(value), "k": float(k), "lambda": lam, "loss": loss}
            )

    out_dir = resolve_output_dir(cfg, output_root)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "sweep.csv", "w") as fh:
        fh.write("parameter,value,k,lambda,loss\n")
        for row in rows:
            fh.write(
                f"{row['parameter']},{row['value']:.17g},{row['k']:.17g},"
                f"{row['lambda']:.17g},{row['loss']:.17g}\n"
            )
    save_dataset_csv(data, out_dir / "dataset.csv")
    return rows
