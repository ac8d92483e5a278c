"""Neural ODE training on time series via synchronization-coupled homotopy.

The training objective augments the model's vector field with a proportional
feedback term pulling the trajectory toward a smoothing-spline reference of
the measurements; a homotopy schedule shrinks that term to zero so the final
optimum belongs to the original, uncoupled problem.
"""

from .errors import ConfigError, DataFormatError, DivergenceError, TrainingAbort
from .gradflow import (
    Coupling,
    LossReport,
    TrajectoryProblem,
    UNCOUPLED,
    coupled_field,
    field_loss,
    loss_gradient,
    trajectory_loss,
)
from .mlp import MlpSpec, mlp_forward, mlp_init, mlp_vjp
from .models import (
    BlackBoxMlp,
    HybridLotkaVolterra,
    hybrid_lv_field,
    load_model_checkpoint,
    model_from_config,
    save_model_checkpoint,
)
from .smoothing import SmoothingSpline, fit_smoothing_spline, gcv_select_mu
from .solvers import Trajectory, integrate_adaptive, integrate_fixed, rk4_step
from .systems import (
    Dataset,
    LorenzParams,
    LotkaVolterraParams,
    NoiseSpec,
    double_pendulum_energy,
    double_pendulum_field,
    load_csv_dataset,
    lorenz_field,
    lotka_volterra_field,
    make_dataset,
    noise_floor,
    save_dataset_csv,
)
from .training import (
    AdamW,
    EpochRecord,
    HomotopySchedule,
    TrainConfig,
    TrainResult,
    adamw_step,
    lambda_schedule,
    train_homotopy,
    train_vanilla,
)

__version__ = "0.1.0"
