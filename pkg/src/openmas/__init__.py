"""Simulation and stability analysis of open multi-agent consensus networks."""

from .dyn_graph import (
    GraphSnapshot,
    algebraic_connectivity,
    degree,
    erdos_renyi,
    is_connected,
    laplacian,
)
from .errors import HypothesisViolatedError, InvalidInputError, OpenMASError, UnknownNodeError
from .opdc import OpdcParams, StepInput, build_p_matrix, compute_tpi, contraction_factor, pdc_run, step
from .open_state import (
    OpenVector,
    bounded_variation_constant,
    infinity_norm,
    mean_and_deviation,
    open_distance,
)
from .scenario import ScenarioConfig, generate, run
from .stability import (
    EmpiricalConstants,
    TraceRecord,
    check_open_stability,
    check_step_inequality,
    estimate_constants,
    radius_general,
    radius_opdc,
    radius_opdc_disconnected,
    verify_assumptions,
)

__version__ = "0.1.0"
