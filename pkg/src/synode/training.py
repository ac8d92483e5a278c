"""Homotopy training loop, its schedule, and the AdamW optimizer.

Training minimizes the coupled trajectory loss while the homotopy weight
``lam`` walks down a geometric-decrement schedule from 1 to 0, warm-starting
every stage from the previous one.  After each epoch the plain (uncoupled)
trajectory MSE is evaluated and the running best checkpoint is kept; that
metric is comparable across stages and against the vanilla baseline, which
runs the identical loop with the feedback disabled for an equal epoch budget.

Optimizer state across lam decrements is governed by ``optimizer_reset``:
``never`` carries the Adam moments through, ``each-decrement`` drops them at
every decrement, and ``large-decrements`` (default) drops them only when the
decrement exceeds ``reset_lambda_threshold``.  Early decrements move the
objective a lot and stale moments then mislead the warm start; late decrements
barely move it and carried moments keep the steps small and stable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, TrainingAbort
from .gradflow import UNCOUPLED, Coupling, TrajectoryProblem
from .smoothing import fit_smoothing_spline


@dataclass(frozen=True)
class HomotopySchedule:
    """lam values for stages 0..s: lam[0]=1, lam[s]=0, geometric decrements."""

    steps: int
    kappa: float
    lambdas: np.ndarray
    decrements: np.ndarray


def lambda_schedule(s: int, kappa: float) -> HomotopySchedule:
    """Decrements shrink by ``kappa`` each stage and sum to one.

    ``kappa = 1`` gives equal decrements 1/s; the final lam is forced to
    exactly zero so the last stage optimizes the true objective.
    """
    if s < 1:
        raise ConfigError(f"number of homotopy steps must be >= 1, got {s}")
    if not 0.0 < kappa <= 1.0:
        raise ConfigError(f"decrement ratio must lie in (0, 1], got {kappa}")
    if kappa == 1.0:
        first = 1.0 / s
    else:
        first = (1.0 - kappa) / (1.0 - kappa**s)
    decrements = first * kappa ** np.arange(s)
    lambdas = np.empty(s + 1)
    lambdas[0] = 1.0
    lambdas[1:] = 1.0 - np.cumsum(decrements)
    lambdas[s] = 0.0
    return HomotopySchedule(s, kappa, lambdas, decrements)


class AdamW:
    """Adam with decoupled weight decay and bias-corrected moments."""

    def __init__(self, n_params, eta, betas=(0.9, 0.999), eps=1e-8, weight_decay=1e-4):
        if eta <= 0:
            raise ConfigError(f"learning rate must be positive, got {eta}")
        self.eta = eta
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.n_params = n_params
        self.reset()

    def reset(self) -> None:
        self.t = 0
        self.m = np.zeros(self.n_params)
        self.v = np.zeros(self.n_params)

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        """Return updated parameters; a non-finite gradient is rejected (no-op)."""
        if not np.all(np.isfinite(grad)):
            return params
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        return params - self.eta * (m_hat / (np.sqrt(v_hat) + self.eps) + self.weight_decay * params)


def adamw_step(state: AdamW, params, grad, eta=None):
    """Functional flavor of :meth:`AdamW.step`; mutates and returns the state."""
    if eta is not None:
        state.eta = eta
    return state, state.step(np.asarray(params, float), np.asarray(grad, float))


OPTIMIZER_RESET_POLICIES = ("never", "each-decrement", "large-decrements")


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 6                 # homotopy stages after the initial lam=1 stage
    n_epoch: int = 100             # optimizer epochs per stage
    kappa: float = 0.55            # decrement decay ratio
    coupling_k: float = 1.0        # feedback gain (ignored by the vanilla loop)
    eta: float = 0.05
    substeps: int = 10
    seed: int = 0
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 1e-4
    optimizer_reset: str = "large-decrements"
    reset_lambda_threshold: float = 0.1
    spline_mu: object = "gcv"      # float, per-dimension sequence, or "gcv"
    max_reject_fraction: float = 0.5

    def __post_init__(self):
        if self.steps < 1:
            raise ConfigError(f"steps must be >= 1, got {self.steps}")
        if self.n_epoch < 1:
            raise ConfigError(f"n_epoch must be >= 1, got {self.n_epoch}")
        if self.coupling_k < 0:
            raise ConfigError(f"coupling_k must be >= 0, got {self.coupling_k}")
        if self.substeps < 1:
            raise ConfigError(f"substeps must be >= 1, got {self.substeps}")
        if not 0.0 < self.kappa <= 1.0:
            raise ConfigError(f"kappa must lie in (0, 1], got {self.kappa}")
        if self.optimizer_reset not in OPTIMIZER_RESET_POLICIES:
            raise ConfigError(
                f"optimizer_reset must be one of {OPTIMIZER_RESET_POLICIES}, "
                f"got {self.optimizer_reset!r}"
            )

    @property
    def total_epochs(self) -> int:
        return (self.steps + 1) * self.n_epoch


@dataclass
class EpochRecord:
    epoch: int
    lam: float
    coupled_loss: float
    uncoupled_mse: float


@dataclass
class TrainResult:
    best_params: np.ndarray
    best_epoch: int
    best_mse: float
    history: list[EpochRecord]
    rejected_epochs: int = 0
    lambdas: np.ndarray = field(default=None, repr=False)


def train_homotopy(config: TrainConfig, data, model, callback=None) -> TrainResult:
    """Homotopy-coupled training; see the module docstring for the loop shape."""
    return _train(config, data, model, coupled=True, callback=callback)


def train_vanilla(config: TrainConfig, data, model, callback=None) -> TrainResult:
    """Plain gradient training of the uncoupled loss at the same epoch budget."""
    return _train(config, data, model, coupled=False, callback=callback)


def _reset_at_decrement(config, schedule, stage) -> bool:
    """Whether the optimizer state is dropped at this stage's lam decrement.

    Applies only when the coupled objective actually changes (k > 0), so a
    k = 0 homotopy run stays bit-identical to the vanilla loop under any
    policy.
    """
    if config.optimizer_reset == "never":
        return False
    if config.optimizer_reset == "each-decrement":
        return True
    decrement = float(schedule.lambdas[stage - 1] - schedule.lambdas[stage])
    return decrement > config.reset_lambda_threshold


def _train(config, data, model, coupled, callback=None):
    schedule = lambda_schedule(config.steps, config.kappa)
    k = config.coupling_k if coupled else 0.0
    ref = None
    if coupled and k > 0.0:
        ref = fit_smoothing_spline(data.times, data.measurements, config.spline_mu)
    problem = TrajectoryProblem(model, data, config.substeps, ref)
    params = model.init_params(config.seed)
    optimizer = AdamW(
        model.n_params,
        config.eta,
        betas=config.betas,
        eps=config.eps,
        weight_decay=config.weight_decay,
    )

    history: list[EpochRecord] = []
    best_mse = np.inf
    best_params = params.copy()
    best_epoch = -1
    rejected_total = 0
    epoch = 0
    n_stages = config.steps + 1
    for stage in range(n_stages):
        lam = float(schedule.lambdas[stage])
        coupling = Coupling(k, lam) if coupled else UNCOUPLED
        recorded_lam = lam if coupled else 0.0
        if stage > 0 and k > 0 and _reset_at_decrement(config, schedule, stage):
            # a lam decrement shifted the objective; stale moment estimates can
            # throw the warm start into a worse basin when the shift is large
            optimizer.reset()
        rejected = 0
        for _ in range(config.n_epoch):
            report, grad = problem.loss_grad(params, coupling)
            if report.diverged or grad is None:
                rejected += 1
            else:
                params = optimizer.step(params, grad)
            mse = problem.loss(params, UNCOUPLED).loss
            history.append(EpochRecord(epoch, recorded_lam, report.loss, mse))
            if mse < best_mse:
                best_mse = mse
                best_params = params.copy()
                best_epoch = epoch
            epoch += 1
        rejected_total += rejected
        if rejected > config.max_reject_fraction * config.n_epoch:
            raise TrainingAbort(
                f"stage {stage} (lam={lam:g}): {rejected}/{config.n_epoch} epochs diverged",
                step_index=stage,
                rejected=rejected,
            )
        if callback is not None:
            callback(stage, lam, params.copy())
    return TrainResult(
        best_params, best_epoch, best_mse, history, rejected_total, schedule.lambdas
    )
