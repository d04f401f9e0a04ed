"""Exact discrete-ODE calculus: finite differences, sg-polynomial linearity
analysis, jump-compressed length-ODE evaluation and a register-machine to
linear length-ODE compiler."""

from .numeric import ValueVector, Valuation, cond, cosg, length, parse_value, sg
from .expr import degree, linear_decompose, parse, render
from .engine import (
    LENGTH,
    LOdeProblem,
    LinearOdeSystem,
    check_linear,
    eval_length_ode,
    eval_lode_compressed,
    guarded_eval,
    iterate_ivp,
    solve_linear_closed,
    solve_lode_linear,
)
from .problem_file import load_problem, parse_problem
from .stdlib import PROGRAMS, get_program

__all__ = [
    "ValueVector", "Valuation", "cond", "cosg", "length", "parse_value", "sg",
    "degree", "linear_decompose", "parse", "render",
    "LENGTH", "LOdeProblem", "LinearOdeSystem", "check_linear", "eval_length_ode",
    "eval_lode_compressed", "guarded_eval", "iterate_ivp", "solve_linear_closed",
    "solve_lode_linear", "load_problem", "parse_problem", "PROGRAMS", "get_program",
]

__version__ = "0.1.0"
