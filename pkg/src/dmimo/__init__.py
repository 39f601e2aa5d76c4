"""Training-based CIR estimation for diffusive M x M MIMO molecular channels."""
from .channel import mean_observations, rng_stream, sample_observations
from .cir import (
    DiffusionParams,
    NoiseModel,
    Topology,
    build_cir,
    green_mean,
    jitter,
    paired_grid,
    peak_time,
)
from .config import ExperimentConfig, load_config, paper2x2
from .design import DesignProblem, DesignResult, design, enumerate_feasible, evaluate_design
from .estimators import (
    Estimate,
    SingularDesignError,
    crb,
    fisher_matrix,
    log_likelihood,
    ls_estimate,
    ml_estimate,
    score,
)
from .harness import MseCurve, emit_csv, mse_db, nmse_db, run_montecarlo
from .training import (
    SequenceConstraints,
    build_design_matrix,
    concatenate,
    validate_sequence,
)

__version__ = "0.1.0"
