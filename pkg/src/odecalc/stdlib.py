"""Worked example programs as ready-made problems, each with an oracle."""

from __future__ import annotations

import math
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass
from typing import Optional

from .engine import (
    AuxExpr,
    Budget,
    EvalTrace,
    Ivp,
    LinearOdeSystem,
    LOdeProblem,
    ScanDriver,
    eval_lode_compressed,
    iterate_ivp,
    solve_linear_closed,
)
from .expr import parse
from .numeric import Valuation, length
from .problem_file import EvalRecipe, ProblemSpec, run_spec

__all__ = [
    "NamedProgram",
    "PROGRAMS",
    "get_program",
    "pow2_length",
    "pow2_lenprod",
    "floor_sqrt",
    "int_div",
    "suffix",
    "suffix_ivp",
    "prefix_min",
    "prefix_min_problem",
    "bsum",
    "bprod",
    "bsum_system",
    "bprod_system",
    "sign_ivp",
]


def _aux(**defs: str) -> dict:
    return {name.replace("_", "."): AuxExpr(src) for name, src in defs.items()}


@dataclass(frozen=True, eq=False)
class NamedProgram:
    name: str
    spec: ProblemSpec
    oracle: Callable[..., int]
    arity: int
    doc: str = ""

    @property
    def problem(self) -> LOdeProblem:
        return self.spec.problem

    def __call__(self, *args: int, mode: str = "length", **kw) -> int:
        self.validate(args)
        value, _ = run_spec(self.spec, args, mode=mode, **kw)
        return value

    def run(self, args: Sequence[int], mode: str = "length", trace: Optional[EvalTrace] = None,
            budget: Optional[Budget] = None, max_steps: Optional[int] = None):
        self.validate(args)
        return run_spec(self.spec, args, mode=mode, trace=trace, budget=budget, max_steps=max_steps)

    def validate(self, args: Sequence[int]) -> None:
        if len(args) != self.arity:
            raise TypeError(f"{self.name} takes {self.arity} arguments, got {len(args)}")
        if any(a < 0 for a in args):
            raise ValueError(f"{self.name} is defined on non-negative inputs")
        if self.name == "int_div" and args[1] == 0:
            raise ZeroDivisionError("int_div by zero")


def _make(name, rhs, init, aux, params, recipe, oracle, doc):
    problem = LOdeProblem(
        rhs=tuple(parse(e) for e in rhs),
        init=tuple(parse(e) for e in init),
        aux=aux,
        params=params,
        name=name,
    )
    return NamedProgram(name, ProblemSpec(problem, recipe), oracle, len(recipe.input_names(problem)), doc)


def _in(*names: str, at: Optional[str] = None, output: Optional[str] = None, **binds: str) -> EvalRecipe:
    from .engine import AUX_FUNCTIONS

    def p(s):
        return parse(s, functions=AUX_FUNCTIONS)

    return EvalRecipe(
        inputs=names,
        at=p(at) if at else None,
        bindings={k: p(v) for k, v in binds.items()},
        output=p(output) if output else None,
    )


# The dichotomic searches start at G = n and move by 2^(L-1), ..., 2, 1 where
# L = length(n): up while h(G) < n, down while h(G) > n. Reading the step from
# length(x) at the jump points makes step t use 2^(L-1-t). Evaluating at
# 2^L gives exactly L steps. The square is extended to an odd function so the
# walk stays monotone when it overshoots below zero.
_SQ = "G*G*(2*sg(G) - 1)"

pow2_length_program = _make(
    "pow2_length", ["f.0"], ["2"], {}, (),
    _in("x", output="f.0"),
    lambda x: 1 << length(x),
    "2^length(x)",
)

pow2_lenprod_program = _make(
    "pow2_lenprod", ["f.0 * (h.p - 1)"], ["h.p"], _aux(h_p="pow2length(y)"), ("y",),
    _in("x", "y", output="f.0"),
    lambda x, y: 1 << (length(x) * length(y)),
    "2^(length(x) * length(y))",
)


def _isqrt(n: int) -> int:
    return math.isqrt(n)


floor_sqrt_program = NamedProgram(
    "floor_sqrt",
    ProblemSpec(
        LOdeProblem(
            rhs=(parse(f"h.s * (sg(n - {_SQ}) - sg({_SQ} - n))".replace("G", "f.0")),),
            init=(parse("n"),),
            aux=_aux(h_s="pow2(length(n) - length(x))"),
            params=("n",),
            name="floor_sqrt",
        ),
        _in("n", at="pow2length(n)", output="f.0 - sg(f.0*f.0 - n)"),
    ),
    _isqrt,
    1,
    "floor of the square root of n",
)

int_div_program = NamedProgram(
    "int_div",
    ProblemSpec(
        LOdeProblem(
            rhs=(parse("h.s * (sg(n - f.0*m) - sg(f.0*m - n))"),),
            init=(parse("n"),),
            aux=_aux(h_s="pow2(length(n) - length(x))"),
            params=("n", "m"),
            name="int_div",
        ),
        _in("n", "m", at="pow2length(n)", output="f.0 - sg(f.0*m - n)"),
    ),
    lambda n, m: n // m,
    2,
    "floor(n / m) for m >= 1",
)

# Top bits of n are stripped one per step, from position length(n)-1 down,
# while the position is at least length(m).
suffix_program = NamedProgram(
    "suffix",
    ProblemSpec(
        LOdeProblem(
            rhs=(parse("0 - h.b * sg(f.0 - h.b + 1)"),),
            init=(parse("n"),),
            aux=_aux(h_b="pow2(length(n) - length(x)) * sg(length(n) - length(x) - length(m) + 1)"),
            params=("n", "m"),
            name="suffix",
        ),
        _in("n", "m", at="n", output="f.0"),
    ),
    lambda n, m: n % (1 << length(m)),
    2,
    "the length(m) least significant bits of n",
)

PROGRAMS: dict[str, NamedProgram] = {
    p.name: p
    for p in (pow2_length_program, pow2_lenprod_program, floor_sqrt_program, int_div_program, suffix_program)
}


def get_program(name: str) -> NamedProgram:
    try:
        return PROGRAMS[name]
    except KeyError:
        raise KeyError(f"unknown program {name!r}; known: {', '.join(sorted(PROGRAMS))}") from None


def pow2_length(x: int) -> int:
    return pow2_length_program(x)


def pow2_lenprod(x: int, y: int) -> int:
    return pow2_lenprod_program(x, y)


def floor_sqrt(x: int) -> int:
    return floor_sqrt_program(x)


def int_div(x: int, y: int) -> int:
    return int_div_program(x, y)


def suffix(x: int, y: int) -> int:
    return suffix_program(x, y)


def suffix_ivp(x: int, y: int) -> int:
    """Sequential top-bit stripping run for length(x) plain steps; a
    reference for the length-ODE form."""
    ly = length(y)

    def rhs(f, t, env):
        F = f[0]
        return [0 if length(F) <= ly else -(1 << (length(F) - 1))]

    return iterate_ivp(Ivp(1, lambda env: [x], rhs), length(x))[0]


# ------------------------------------------------------------------ searches


def prefix_min_problem(f: Callable[[int], int]) -> LOdeProblem:
    """F(0) = f(0); F(t+1) = F(t) if F(t) <= f(t+1) else f(t+1)."""
    return LOdeProblem(
        rhs=(parse("sg(f.0 - h.f) * (h.f - f.0)"),),
        init=(parse("h.f0"),),
        driver=ScanDriver(lambda t, y: t, index="t"),
        aux={"h.f": lambda t, y: f(t + 1), "h.f0": lambda t, y: f(0)},
        index="t",
        name="prefix_min",
    )


def prefix_min(f: Callable[[int], int], x: int) -> int:
    """min of f(0..x)."""
    if x < 0:
        raise ValueError("x must be >= 0")
    return eval_lode_compressed(prefix_min_problem(f), x)[0]


# ------------------------------------------------------ bounded sum/product


def _gaux(g: Callable[..., int]) -> dict:
    return {"h.g": lambda x, y: g(x, **dict(y)) if y else g(x)}


def bsum_system(g: Callable[..., int], params: Sequence[str] = ()) -> LinearOdeSystem:
    """f(0) = 0, f' = g."""
    return LinearOdeSystem(G=(0,), A=((0,),), B=(parse("h.g"),), aux=_gaux(g), params=tuple(params))


def bprod_system(g: Callable[..., int], params: Sequence[str] = ()) -> LinearOdeSystem:
    """f(0) = 1, f' = f * (g - 1)."""
    return LinearOdeSystem(G=(1,), A=((parse("h.g - 1"),),), B=(0,), aux=_gaux(g), params=tuple(params))


def _solve_checked(s: LinearOdeSystem, x: int, y: Mapping[str, int]) -> int:
    if x < 0:
        raise ValueError("x must be >= 0")
    closed = solve_linear_closed(s, x, y)
    stepped = iterate_ivp(s.as_ivp(), x, y)
    if closed != stepped:
        raise AssertionError(f"closed form {closed} disagrees with iteration {stepped}")
    return closed[0]


def bsum(g: Callable[..., int], x: int, y: Mapping[str, int] = Valuation()) -> int:
    """sum of g(z, **y) for z < x."""
    return _solve_checked(bsum_system(g, tuple(y)), x, y)


def bprod(g: Callable[..., int], x: int, y: Mapping[str, int] = Valuation()) -> int:
    """product of g(z, **y) for z < x."""
    return _solve_checked(bprod_system(g, tuple(y)), x, y)


def sign_ivp() -> LinearOdeSystem:
    """f(0) = 0, f' = 1 - f; its solution over the naturals is sg."""
    return LinearOdeSystem(G=(0,), A=((-1,),), B=(1,))
