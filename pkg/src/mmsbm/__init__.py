"""Momentum multi-marginal bridge matching toolkit.

Analytic phase-space bridges through pinned positions, a Gaussian
conditional-path sampler, an alternating drift-matching trainer, and the
transport metrics used to score imputed snapshots.
"""

from .bridge import (EPS_PIN, PhaseState, PinnedSet, SegmentCoefficients,
                     SnapshotSchedule, c_functions, conditional_acceleration,
                     bridge_drift, lambda_vector, normalize_schedule,
                     segment_alpha_beta, segment_coefficients, z_functions)
from .data import (SnapshotDataset, generate_gaussian_mixture_sequence,
                   generate_lotka_volterra, generate_vortex_2d, read_csv,
                   write_csv)
from .errors import (ConfigError, MMSBMError, NumericalError, ParseError,
                     ScheduleError, SimulationError, TrainingError)
from .gaussian_path import (GaussianPath, build_gaussian_path, covariance_path,
                            mean_path, sample_state)
from .matching import (TrainConfig, TrainingLog, load_checkpoint,
                       matching_loss, save_checkpoint, train)
from .metrics import EmpiricalMeasure, mmd_rbf, sliced_wasserstein, wasserstein
from .net import AdamW, DriftNet
from .oracle import FiniteCOracle, SoftConstraintConfig, finite_c_oracle, probe_lambda
from .sde import (Trajectory, bridge_sim_drift, euler_maruyama,
                  refine_velocities, refresh_coupling)

__version__ = "0.1.0"
