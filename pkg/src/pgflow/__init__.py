"""Asymmetric low-rank matrix sensing by factorized gradient descent, the
exact piecewise flow interpolant of its iterates, and certificate monitors
for the invariants that drive convergence."""

__version__ = "0.1.0"

from . import dynamics, errors, experiment, lifted, linalg, measurement, monitors, reports
from .experiment import ExperimentConfig, run
from .lifted import LiftedState, ProblemSpec, derive, make_problem_spec
from .measurement import MeasOp, gaussian_operator, identity_operator

__all__ = [
    "ExperimentConfig",
    "LiftedState",
    "MeasOp",
    "ProblemSpec",
    "derive",
    "dynamics",
    "errors",
    "experiment",
    "gaussian_operator",
    "identity_operator",
    "lifted",
    "linalg",
    "make_problem_spec",
    "measurement",
    "monitors",
    "reports",
    "run",
]
