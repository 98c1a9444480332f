"""Hidden-state reconstruction of chaotic systems with an echo state network
whose output time-derivative is propagated exactly through the recurrence."""

from .config import ExperimentConfig, load_config, parse_config
from .dual import Dual, dual_tanh, reservoir_step_dual
from .metrics import MetricsReport, compare_histograms, nrmse, pdf_histogram, squared_error_series
from .ode import (LorenzParams, StateSplit, Trajectory, estimate_lyapunov,
                  exact_input_derivative, integrate, jacobian, rhs)
from .reservoir import (EsnWeights, HyperParams, ReservoirRun, build_weights,
                        fe_output_derivative, readout, readout_derivative,
                        run_teacher_forced, spectral_radius_estimate, step,
                        step_tangent)
from .training import (AdamState, PhysicsProblem, ReadoutPartition, TrainConfig,
                       adam_step, init_output_matrix, physics_loss,
                       physics_loss_grad, physics_residuals, ridge_solve,
                       train_hidden_rows)

__version__ = "0.1.0"
