"""Fixed-step Runge-Kutta integration for index-1 DAEs with exact
forward, adjoint and second-order sensitivities, plus multiple-shooting
and direct-collocation OCP transcription and a small equality-constrained
SQP solver."""

from .butcher import ButcherTableau, SchemeFamily, check_order_conditions, make_tableau
from .erk import Erk, erk_adjoint, erk_forward, erk_hessian, erk_simulate
from .irk import Irk, NewtonOpts, irk_adjoint, irk_forward, irk_hessian, irk_simulate
from .models import (
    ConvergenceError,
    DynamicsModel,
    get_model,
    make_algebraic_test,
    make_chain,
    make_linear_test,
    steady_state,
)
from .ocp import Nlp, OcpSpec, transcribe_collocation, transcribe_multiple_shooting
from .simout import IntegrationError, SimOutput, SimStats
from .sqp import SqpOpts, SqpResult, SqpStatus, solve

__version__ = "0.1.0"

__all__ = [
    "ButcherTableau",
    "SchemeFamily",
    "check_order_conditions",
    "make_tableau",
    "Erk",
    "erk_simulate",
    "erk_forward",
    "erk_adjoint",
    "erk_hessian",
    "Irk",
    "NewtonOpts",
    "irk_simulate",
    "irk_forward",
    "irk_adjoint",
    "irk_hessian",
    "DynamicsModel",
    "ConvergenceError",
    "get_model",
    "make_linear_test",
    "make_algebraic_test",
    "make_chain",
    "steady_state",
    "Nlp",
    "OcpSpec",
    "transcribe_multiple_shooting",
    "transcribe_collocation",
    "IntegrationError",
    "SimOutput",
    "SimStats",
    "SqpOpts",
    "SqpResult",
    "SqpStatus",
    "solve",
]
