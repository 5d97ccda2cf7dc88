"""DeGroot influence dynamics, the phi heuristic and trial analysis tools."""
from ._backend import NAME as BACKEND
from .dynamics import BeliefState, Outcome, converge, improvement, run_rounds, step
from .errors import CrowdnetError, ValidationError
from .heuristic import Label, ReducedGroup, critical_c, phi, phi_rule, predict_outcome
from .netcore import (
    InfluenceNetwork,
    build_network,
    centrality,
    centralization,
    star_network,
    talkativeness_network,
    uniform_network,
)
from .simlab import TrialSpec, run_ensemble, run_trial, sweep

__version__ = "0.1.0"
