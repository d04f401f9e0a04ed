"""Discrete IVP semantics and solvers.

Covers forward iteration, the sum-product closed form for linear systems,
jump sets of a driver, jump-compressed evaluation of L-ODEs, the
length-ODE time variable, linearity checking and the bit-growth guard.
"""

from __future__ import annotations

import json
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

from .expr import (
    Expr,
    LinearDecomposition,
    as_expr,
    compile_expr,
    emit_code,
    linear_decompose,
    parse,
    render,
    terms_of,
)
from .numeric import Valuation, ValueVector, bit_length, length, pow2

__all__ = [
    "Ivp",
    "Driver",
    "LengthDriver",
    "ScanDriver",
    "LENGTH",
    "JumpData",
    "LOdeProblem",
    "LinearOdeSystem",
    "StepRecord",
    "EvalTrace",
    "Budget",
    "StepLimitExceeded",
    "GrowthBoundViolated",
    "BudgetExceeded",
    "iterate_ivp",
    "solve_linear_closed",
    "jump_set",
    "eval_lode_naive",
    "eval_lode_compressed",
    "eval_length_ode",
    "length_ode_trajectory",
    "check_linear",
    "guarded_eval",
    "solve_lode_linear",
    "TRACE_SCHEMA",
    "AUX_FUNCTIONS",
    "AuxExpr",
]

AuxFn = Callable[[int, Valuation], int]

AUX_FUNCTIONS: dict[str, Callable[..., int]] = {
    "length": length,
    "pow2": pow2,
    "pow2length": lambda v: pow2(length(v)),
    "constant": lambda v: v,
}


class AuxExpr:
    """Auxiliary function h(x, y) given by an expression that may call the
    builtins of AUX_FUNCTIONS (length, pow2, pow2length, constant)."""

    def __init__(self, expr: Expr | str, index: str = "x"):
        self.expr = expr if isinstance(expr, Expr) else parse(expr, functions=AUX_FUNCTIONS)
        self.index = index
        self._fn = compile_expr(self.expr, AUX_FUNCTIONS)

    def __call__(self, x: int, y: Valuation) -> int:
        return self._fn(y.extend({self.index: x}))

    def __repr__(self) -> str:
        return f"AuxExpr({render(self.expr)!r})"


class StepLimitExceeded(RuntimeError):
    """An evaluation would need more steps than the configured cap."""


class GrowthBoundViolated(ArithmeticError):
    """Bit-length growth broke the linear-growth bound at some step."""

    def __init__(self, step: int, detail: str):
        super().__init__(f"growth bound violated at step {step}: {detail}")
        self.step = step


class BudgetExceeded(ArithmeticError):
    def __init__(self, step: int, bits: int, budget: int):
        super().__init__(f"step {step}: bit length {bits} exceeds budget {budget}")
        self.step = step
        self.bits = bits
        self.budget = budget


def _check_cap(n: int, max_steps: Optional[int]) -> None:
    if max_steps is not None and n > max_steps:
        raise StepLimitExceeded(f"{n} steps requested, cap is {max_steps}")


# ------------------------------------------------------------------ IVPs


@dataclass(frozen=True)
class Ivp:
    """f(0, y) = init(y); f(x+1, y) = f(x, y) + rhs(f(x, y), x, y)."""

    dim: int
    init: Callable[[Valuation], Sequence[int]]
    rhs: Callable[[ValueVector, int, Valuation], Sequence[int]]


def iterate_ivp(p: Ivp, x: int, y: Mapping[str, int] = Valuation(), max_steps: Optional[int] = None) -> ValueVector:
    """f(x, y) by x forward steps."""
    if x < 0:
        raise ValueError("x must be >= 0")
    _check_cap(x, max_steps)
    y = Valuation(y)
    f = ValueVector.of(p.init(y))
    if len(f) != p.dim:
        raise ValueError(f"initial value has arity {len(f)}, expected {p.dim}")
    for t in range(x):
        f = f + ValueVector.of(p.rhs(f, t, y))
    return f


# --------------------------------------------------------------- drivers


@dataclass(frozen=True)
class JumpData:
    """Indices i < x after which the driver changes value, in order."""

    jumps: tuple[int, ...]

    @property
    def count(self) -> int:
        return len(self.jumps)

    def alpha(self, t: int) -> int:
        return self.jumps[t]


class Driver:
    name = "driver"

    def value(self, x: int, y: Valuation) -> int:
        raise NotImplementedError

    def delta(self, x: int, y: Valuation) -> int:
        return self.value(x + 1, y) - self.value(x, y)

    def scan_jumps(self, x: int, y: Valuation) -> JumpData:
        out = []
        prev = self.value(0, y)
        for i in range(x):
            cur = self.value(i + 1, y)
            if cur != prev:
                out.append(i)
            prev = cur
        return JumpData(tuple(out))

    def jumps(self, x: int, y: Valuation) -> JumpData:
        return self.scan_jumps(x, y)


class LengthDriver(Driver):
    """L(x, y) = length(x); jumps are exactly 2^(t+1) - 1 for t < length(x) - 1."""

    name = "length"

    def value(self, x: int, y: Valuation) -> int:
        return length(x)

    def jumps(self, x: int, y: Valuation) -> JumpData:
        if x <= 0:
            return JumpData(())
        return JumpData(tuple((1 << (t + 1)) - 1 for t in range(length(x) - 1)))

    def __repr__(self) -> str:
        return "LengthDriver()"

    def __eq__(self, other) -> bool:
        return isinstance(other, LengthDriver)

    def __hash__(self) -> int:
        return hash("length")


LENGTH = LengthDriver()


class ScanDriver(Driver):
    """Arbitrary driver; jumps are found by scanning 0..x-1 (linear in x)."""

    name = "scan"

    def __init__(self, fn: Callable[[int, Valuation], int] | Expr | str, index: str = "x"):
        if isinstance(fn, (Expr, str)):
            self.expr: Optional[Expr] = as_expr(fn)
            compiled = compile_expr(self.expr)
            self._fn = lambda x, y: compiled(y.extend({index: x}))
        else:
            self.expr = None
            self._fn = fn
        self.index = index

    def value(self, x: int, y: Valuation) -> int:
        return self._fn(x, y)

    def __repr__(self) -> str:
        return f"ScanDriver({self.expr if self.expr is not None else self._fn!r})"


def jump_set(driver: Driver, x: int, y: Mapping[str, int] = Valuation(), scan: bool = False) -> JumpData:
    """Jump data of ``driver`` below x; ``scan=True`` forces the scanning path."""
    if x < 0:
        raise ValueError("x must be >= 0")
    y = Valuation(y)
    return driver.scan_jumps(x, y) if scan else driver.jumps(x, y)


# --------------------------------------------------------------- problems


def _names(prefix: str, n: int) -> tuple[str, ...]:
    return tuple(f"{prefix}.{i}" for i in range(n))


@dataclass(frozen=True, eq=False)
class _Rhs:
    """Shared evaluation machinery for state/aux/index/param environments."""

    state: tuple[str, ...]
    aux: Mapping[str, AuxFn]
    index: str
    params: tuple[str, ...]

    def env(self, f: Sequence[int], i: int, y: Valuation, needed_aux) -> Valuation:
        b = dict(y)
        b[self.index] = i
        b.update(zip(self.state, f))
        for name in needed_aux:
            b[name] = self.aux[name](i, y)
        return Valuation(b)


@dataclass(frozen=True, eq=False)
class LOdeProblem:
    """f(0, y) = init; f(x+1, y) = f(x, y) + (L(x+1, y) - L(x, y)) * rhs(...).

    ``rhs`` entries are sg-polynomials over the state names, aux names, the
    index name and the parameters. ``init`` entries may use parameters and
    aux slots (evaluated at index 0).
    """

    rhs: tuple[Expr, ...]
    init: tuple[Expr, ...]
    driver: Driver = LENGTH
    aux: Mapping[str, AuxFn] = field(default_factory=dict)
    state: Optional[tuple[str, ...]] = None
    params: tuple[str, ...] = ()
    index: str = "x"
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "rhs", tuple(as_expr(e) for e in self.rhs))
        object.__setattr__(self, "init", tuple(as_expr(e) for e in self.init))
        if self.state is None:
            object.__setattr__(self, "state", _names("f", len(self.rhs)))
        object.__setattr__(self, "state", tuple(self.state))
        object.__setattr__(self, "params", tuple(self.params))
        object.__setattr__(self, "aux", dict(self.aux))
        if not (len(self.rhs) == len(self.init) == len(self.state)):
            raise ValueError("rhs, init and state must have the same length")
        allowed = set(self.state) | set(self.aux) | {self.index} | set(self.params)
        for e in self.rhs:
            extra = terms_of(e) - allowed
            if extra:
                raise ValueError(f"rhs uses undeclared terms {sorted(extra)}")
        init_allowed = set(self.aux) | {self.index} | set(self.params)
        for e in self.init:
            extra = terms_of(e) - init_allowed
            if extra:
                raise ValueError(f"init uses undeclared terms {sorted(extra)}")

    @property
    def dim(self) -> int:
        return len(self.rhs)

    @cached_property
    def _ctx(self) -> _Rhs:
        return _Rhs(self.state, self.aux, self.index, self.params)

    @cached_property
    def _rhs_fn(self):
        return compile_expr(self.rhs)

    @cached_property
    def _rhs_aux(self) -> tuple[str, ...]:
        used = set().union(*(terms_of(e) for e in self.rhs))
        return tuple(sorted(used & set(self.aux)))

    @cached_property
    def _init_aux(self) -> tuple[str, ...]:
        used = set().union(*(terms_of(e) for e in self.init))
        return tuple(sorted(used & set(self.aux)))

    @cached_property
    def _init_fn(self):
        return compile_expr(self.init)

    @cached_property
    def linear_decomposition(self) -> LinearDecomposition:
        """A . f + B form of the rhs; raises NotEssentiallyLinear."""
        return linear_decompose(self.rhs, self.state)

    @cached_property
    def _coef_fn(self):
        dec = self.linear_decomposition
        return compile_expr([e for row in dec.q1 for e in row] + list(dec.q2))

    def _kernel_parts(self, extra: Sequence[Expr] = ()):
        """Generated statements for one length-ODE step, or None when an aux
        slot used by the rhs is not an AuxExpr over this index."""
        if not isinstance(self.driver, LengthDriver):
            return None
        used = self._rhs_aux
        if any(not isinstance(self.aux[n], AuxExpr) or self.aux[n].index != self.index for n in used):
            return None
        outer = {self.index: "a_", **{n: f"p{i}" for i, n in enumerate(self.params)}}
        ids = {**outer, **{n: f"s{i}" for i, n in enumerate(self.state)}}
        ids.update({n: f"h{i}" for i, n in enumerate(used)})
        consts: dict[str, object] = {}
        body: list[str] = []
        try:
            for i, n in enumerate(used):
                lines, (r,) = emit_code([self.aux[n].expr], outer.__getitem__, AUX_FUNCTIONS, f"q{i}_", consts)
                body += lines + [f"h{i} = {r}"]
            lines, res = emit_code([*self.rhs, *extra], ids.__getitem__, None, "r", consts)
        except KeyError:
            return None
        head = [f"    p{i} = y[{n!r}]" for i, n in enumerate(self.params)]
        return consts, head, body + lines, res

    @staticmethod
    def _exec_kernel(src: list[str], consts: dict) -> Callable:
        namespace = dict(consts)
        exec(compile("\n".join(src) + "\n", "<odecalc-kernel>", "exec"), namespace)
        return namespace["_kernel"]

    @cached_property
    def _length_kernel(self) -> Optional[Callable]:
        """The whole length-ODE loop as one generated function of
        (F(1), y, steps); None when it cannot be generated."""
        parts = self._kernel_parts()
        if parts is None:
            return None
        consts, head, body, res = parts
        state = "".join(f"s{i}, " for i in range(self.dim))
        src = ["def _kernel(F, y, n):", f"    {state}= F", *head]
        src += ["    for t in range(1, n + 1):", "        a_ = (1 << t) - 1"]
        src += [f"        {line}" for line in body]
        src.append(f"        {state}= " + "".join(f"s{i} + {r}, " for i, r in enumerate(res)))
        src.append(f"    return ({state})")
        return self._exec_kernel(src, consts)

    @cached_property
    def _guard_kernel(self) -> Optional[Callable]:
        """Generated guarded loop over the length jumps, checking the same
        bounds as guarded_eval with the problem's own decomposition."""
        dec = self.linear_decomposition
        d = self.dim
        coefs = [e for row in dec.q1 for e in row] + list(dec.q2)
        parts = self._kernel_parts(coefs)
        if parts is None:
            return None
        consts, head, body, res = parts
        consts.update(_VV=ValueVector, _Growth=GrowthBoundViolated, _Budget=BudgetExceeded)
        rhs, A, B = res[:d], res[d:d + d * d], res[d + d * d:]
        S = [f"s{i}" for i in range(d)]
        N = [f"n{i}" for i in range(d)]
        state = "".join(f"{v}, " for v in S)
        src = ["def _kernel(F, y, J, pm, g_bits, slack, add):", f"    {state}= F", *head]
        src += ["    for t in range(J):", "        a_ = (2 << t) - 1"]
        src += [f"        {line}" for line in body]
        for i in range(d):
            terms = " + ".join(f"{A[i * d + j]} * {S[j]}" for j in range(d))
            src.append(f"        {N[i]} = {S[i]} + {terms} + {B[i]}")
        same = " and ".join(f"{N[i]} == {S[i]} + {rhs[i]}" for i in range(d))
        src += [
            f"        if not ({same}):",
            "            raise ValueError(f'step {t}: decomposition does not reproduce the rhs')",
            "        c = max(" + ", ".join(f"(abs({v}).bit_length() or 1)" for v in A + B) + ")",
            "        bound = pm(t, a_)",
            "        if c > bound:",
            "            raise _Growth(t, f'coefficient length {c} exceeds p_M = {bound}')",
            "        ob = max(" + ", ".join(f"(abs({v}).bit_length() or 1)" for v in S) + ", 0)",
            "        nb = max(" + ", ".join(f"(abs({v}).bit_length() or 1)" for v in N) + ", 0)",
            "        if nb > ob + c + slack:",
            "            raise _Growth(t, f'length grew {ob} -> {nb} with coefficients of length {c}')",
            "        if nb > g_bits + (t + 2) * bound:",
            "            raise _Budget(t, nb, g_bits + (t + 2) * bound)",
            f"        {state}= {''.join(f'{v}, ' for v in N)}",
            "        if add is not None:",
            f"            add(t, a_, 1, _VV(({state})))",
            f"    return ({state})",
        ]
        return self._exec_kernel(src, consts)

    def initial(self, y: Mapping[str, int]) -> ValueVector:
        y = self.bind(y)
        env = self._ctx.env((), 0, y, self._init_aux)
        return ValueVector(self._init_fn(env))

    def bind(self, y: Mapping[str, int]) -> Valuation:
        y = Valuation(y)
        missing = [p for p in self.params if p not in y]
        if missing:
            raise ValueError(f"missing parameters {missing}")
        return y

    def env_at(self, f: Sequence[int], i: int, y: Valuation) -> Valuation:
        return self._ctx.env(f, i, y, self._rhs_aux)

    def rhs_at(self, f: Sequence[int], i: int, y: Valuation) -> ValueVector:
        """u(f, h(i, y), i, y)."""
        return ValueVector(self._rhs_fn(self.env_at(f, i, y)))

    def as_ivp(self) -> Ivp:
        """The naive step-by-step semantics, as a plain IVP."""

        def rhs(f, i, y):
            dl = self.driver.delta(i, y)
            return self.rhs_at(f, i, y) * dl

        return Ivp(self.dim, self.initial, rhs)


@dataclass(frozen=True, eq=False)
class LinearOdeSystem:
    """f(0, y) = G(y); f'(x, y) = A . f(x, y) + B, with A, B sg-polynomials.

    A and B may read the state (the general form): every step reads the
    already computed f(t, y).
    """

    G: tuple[Expr, ...]
    A: tuple[tuple[Expr, ...], ...]
    B: tuple[Expr, ...]
    aux: Mapping[str, AuxFn] = field(default_factory=dict)
    state: Optional[tuple[str, ...]] = None
    params: tuple[str, ...] = ()
    index: str = "x"

    def __post_init__(self):
        d = len(self.B)
        object.__setattr__(self, "G", tuple(as_expr(e) for e in self.G))
        object.__setattr__(self, "B", tuple(as_expr(e) for e in self.B))
        object.__setattr__(self, "A", tuple(tuple(as_expr(e) for e in row) for row in self.A))
        if self.state is None:
            object.__setattr__(self, "state", _names("f", d))
        object.__setattr__(self, "state", tuple(self.state))
        object.__setattr__(self, "aux", dict(self.aux))
        if len(self.G) != d or len(self.A) != d or any(len(r) != d for r in self.A):
            raise ValueError("G, A, B dimensions disagree")

    @property
    def dim(self) -> int:
        return len(self.B)

    @cached_property
    def _coef_fn(self):
        flat = [e for row in self.A for e in row] + list(self.B)
        return compile_expr(flat)

    @cached_property
    def _aux_used(self) -> tuple[str, ...]:
        used = set().union(*(terms_of(e) for row in self.A for e in row), *(terms_of(e) for e in self.B))
        return tuple(sorted(used & set(self.aux)))

    @cached_property
    def reads_state(self) -> bool:
        used = set().union(*(terms_of(e) for row in self.A for e in row), *(terms_of(e) for e in self.B))
        return bool(used & set(self.state))

    def _env(self, f, t, y, aux_names) -> Valuation:
        b = dict(y)
        b[self.index] = t
        b.update(zip(self.state, f))
        for name in aux_names:
            b[name] = self.aux[name](t, y)
        return Valuation(b)

    @cached_property
    def _init(self):
        init_aux = set().union(*(terms_of(e) for e in self.G)) & set(self.aux)
        return compile_expr(self.G), sorted(init_aux)

    def initial(self, y: Valuation) -> ValueVector:
        fn, init_aux = self._init
        return ValueVector(fn(self._env((), 0, y, init_aux)))

    def coefficients(self, f: Sequence[int], t: int, y: Valuation):
        """(A(t), B(t)) as integer lists at state f."""
        vals = self._coef_fn(self._env(f, t, y, self._aux_used))
        d = self.dim
        A = [list(vals[r * d:(r + 1) * d]) for r in range(d)]
        return A, list(vals[d * d:])

    def as_ivp(self) -> Ivp:
        def rhs(f, t, y):
            A, B = self.coefficients(f, t, y)
            return [sum(a * v for a, v in zip(row, f)) + b for row, b in zip(A, B)]

        return Ivp(self.dim, self.initial, rhs)


# -------------------------------------------------------- linear closed form


def _matmul(P, Q):
    return [[sum(P[i][k] * Q[k][j] for k in range(len(Q))) for j in range(len(Q[0]))] for i in range(len(P))]


def _matvec(P, v):
    return [sum(a * b for a, b in zip(row, v)) for row in P]


def _identity(d):
    return [[int(i == j) for j in range(d)] for i in range(d)]


def _closed_form_at(x: int, G, coeffs) -> list[int]:
    """sum_{u=-1}^{x-1} (prod_{t=u+1}^{x-1} (I + A(t))) . B(u), with B(-1) = G."""
    d = len(G)
    P = _identity(d)
    total = [0] * d
    for u in range(x - 1, -2, -1):
        Bu = G if u == -1 else coeffs(u)[1]
        total = [s + v for s, v in zip(total, _matvec(P, Bu))]
        if u >= 0:
            A = coeffs(u)[0]
            IA = [[A[i][j] + (i == j) for j in range(d)] for i in range(d)]
            # later factors stay on the left
            P = _matmul(P, IA)
    return total


def solve_linear_closed(
    s: LinearOdeSystem, x: int, y: Mapping[str, int] = Valuation(), max_steps: Optional[int] = None
) -> ValueVector:
    """f(x, y) from the sum-product form of the linear solution.

    When A or B read the state, f(0..x-1) are first obtained the same way,
    each from the formula, in dynamic-programming order.
    """
    if x < 0:
        raise ValueError("x must be >= 0")
    _check_cap(x, max_steps)
    y = Valuation(y)
    G = list(s.initial(y))
    if not s.reads_state:
        cache: dict[int, tuple] = {}

        def coeffs(t):
            if t not in cache:
                cache[t] = s.coefficients([0] * s.dim, t, y)
            return cache[t]

        return ValueVector(_closed_form_at(x, G, coeffs))

    values = [G]
    cache = {}

    def coeffs(t):
        if t not in cache:
            cache[t] = s.coefficients(values[t], t, y)
        return cache[t]

    for target in range(1, x + 1):
        values.append(_closed_form_at(target, G, coeffs))
    return ValueVector(values[x])


# --------------------------------------------------------------- tracing


@dataclass(frozen=True)
class StepRecord:
    t: int
    alpha: int
    delta_l: int
    bits: tuple[int, ...]
    value: tuple[int, ...]

    def to_json(self) -> dict:
        return {
            "t": self.t,
            "alpha": str(self.alpha),
            "deltaL": self.delta_l,
            "bits": list(self.bits),
            "value": [str(v) for v in self.value],
        }


@dataclass
class EvalTrace:
    """Per-step records of a compressed evaluation."""

    records: list[StepRecord] = field(default_factory=list)
    keep_values: bool = True

    @property
    def steps(self) -> int:
        return len(self.records)

    @property
    def max_bits(self) -> int:
        return max((max(r.bits, default=1) for r in self.records), default=0)

    def add(self, t: int, alpha: int, delta_l: int, f: ValueVector) -> None:
        self.records.append(
            StepRecord(t, alpha, delta_l, f.bits(), tuple(f) if self.keep_values else ())
        )

    def to_json(self) -> list[dict]:
        return [r.to_json() for r in self.records]

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1)


TRACE_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "array",
    "items": {
        "type": "object",
        "required": ["t", "alpha", "deltaL", "bits", "value"],
        "additionalProperties": False,
        "properties": {
            "t": {"type": "integer", "minimum": 0},
            "alpha": {"type": "string", "pattern": "^-?[0-9]+$"},
            "deltaL": {"type": "integer"},
            "bits": {"type": "array", "items": {"type": "integer", "minimum": 1}},
            "value": {"type": "array", "items": {"type": "string", "pattern": "^-?[0-9]+$"}},
        },
    },
}


# ------------------------------------------------------------- L-ODE eval


def eval_lode_naive(p: LOdeProblem, x: int, y: Mapping[str, int] = Valuation(), max_steps: Optional[int] = None) -> ValueVector:
    """Step-by-step semantics over every index below x."""
    return iterate_ivp(p.as_ivp(), x, p.bind(y), max_steps)


def eval_lode_compressed(
    p: LOdeProblem,
    x: int,
    y: Mapping[str, int] = Valuation(),
    trace: Optional[EvalTrace] = None,
    max_steps: Optional[int] = None,
    jumps: Optional[JumpData] = None,
) -> ValueVector:
    """f(x, y) in exactly J steps, one per jump of the driver below x.

    The rhs (and its aux slots) is only evaluated at jump points.
    """
    if x < 0:
        raise ValueError("x must be >= 0")
    y = p.bind(y)
    jd = jumps if jumps is not None else jump_set(p.driver, x, y)
    _check_cap(jd.count, max_steps)
    F = p.initial(y)
    for t, i in enumerate(jd.jumps):
        dl = p.driver.delta(i, y)
        F = F + p.rhs_at(F, i, y) * dl
        if trace is not None:
            trace.add(t, i, dl, F)
    return F


def length_ode_trajectory(p: LOdeProblem, steps: int, y: Mapping[str, int] = Valuation()):
    """Yield F(1), F(2), ..., F(steps + 1) of the length time variable."""
    y = p.bind(y)
    F = p.initial(y)
    yield F
    for t in range(1, steps + 1):
        F = F + p.rhs_at(F, (1 << t) - 1, y)
        yield F


def eval_length_ode(
    p: LOdeProblem,
    x: int,
    y: Mapping[str, int] = Valuation(),
    trace: Optional[EvalTrace] = None,
    max_steps: Optional[int] = None,
) -> ValueVector:
    """F(length(x), y) with F(1) = f(0, y), F(t+1) = F(t) + u(F(t), h(2^t - 1), 2^t - 1, y).

    x == 0 is answered by the initial condition.
    """
    if x < 0:
        raise ValueError("x must be >= 0")
    if not isinstance(p.driver, LengthDriver):
        raise ValueError("eval_length_ode needs the length driver")
    y = p.bind(y)
    F = p.initial(y)
    if x == 0:
        return F
    n = length(x) - 1
    _check_cap(n, max_steps)
    kernel = p._length_kernel if trace is None else None
    if kernel is not None:
        return ValueVector(kernel(tuple(F), y, n))
    for t in range(1, n + 1):
        a = (1 << t) - 1
        F = F + p.rhs_at(F, a, y)
        if trace is not None:
            trace.add(t - 1, a, 1, F)
    return F


# ---------------------------------------------------- linearity and guard


def check_linear(p: LOdeProblem) -> LinearDecomposition:
    """Decompose the rhs as A . f + B with A, B essentially constant in f.

    Raises NotEssentiallyLinear with the offending entry otherwise.
    """
    return p.linear_decomposition


def solve_lode_linear(
    p: LOdeProblem, x: int, y: Mapping[str, int] = Valuation(), max_steps: Optional[int] = None
) -> ValueVector:
    """f(x, y) of a linear L-ODE from the sum-product form over the jumps.

    Step u of the product uses I + dL(alpha_u) * A(alpha_u) and
    dL(alpha_u) * B(alpha_u); state-dependent coefficients are filled in
    dynamic-programming order.
    """
    if x < 0:
        raise ValueError("x must be >= 0")
    dec = check_linear(p)
    y = p.bind(y)
    d = p.dim
    coef_fn = compile_expr([e for row in dec.q1 for e in row] + list(dec.q2))
    used = set().union(*(terms_of(e) for row in dec.q1 for e in row), *(terms_of(e) for e in dec.q2))
    reads_state = bool(used & set(p.state))
    jd = jump_set(p.driver, x, y)
    _check_cap(jd.count, max_steps)
    G = list(p.initial(y))
    values = [G]
    cache: dict[int, tuple] = {}

    def coeffs(u):
        if u not in cache:
            i = jd.alpha(u)
            dl = p.driver.delta(i, y)
            F = ValueVector(values[u] if reads_state else [0] * d)
            A, B = _coef_values(coef_fn, F, p.env_at(F, i, y), d)
            cache[u] = ([[dl * a for a in row] for row in A], [dl * b for b in B])
        return cache[u]

    if not reads_state:
        return ValueVector(_closed_form_at(jd.count, G, coeffs))
    for target in range(1, jd.count + 1):
        values.append(_closed_form_at(target, G, coeffs))
    return ValueVector(values[jd.count])


@dataclass(frozen=True)
class Budget:
    """Coefficient bit bound p_M(t) = const + slope * t."""

    const: int
    slope: int = 0

    def bound(self, t: int, alpha: int) -> int:
        return self.const + self.slope * t

    @classmethod
    def parse(cls, text: str) -> Budget:
        parts = [int(s) for s in text.split(",")]
        if not 1 <= len(parts) <= 2 or min(parts) < 0:
            raise ValueError(f"bad budget {text!r}; expected CONST[,SLOPE]")
        return cls(*parts)


@dataclass(frozen=True)
class _AutoBudget:
    """4 x max(initial coefficient bits, bits of the jump index, parameter bits)."""

    base: int
    factor: int = 4

    def bound(self, t: int, alpha: int) -> int:
        return self.factor * max(self.base, bit_length(alpha))


def _coef_values(A_fn, f, env, d):
    vals = A_fn(env)
    return [list(vals[r * d:(r + 1) * d]) for r in range(d)], list(vals[d * d:])


def guarded_eval(
    p: LOdeProblem,
    x: int,
    y: Mapping[str, int] = Valuation(),
    budget: Optional[Budget] = None,
    decomposition: Optional[LinearDecomposition] = None,
    check: bool = True,
    max_steps: Optional[int] = None,
    record: bool = True,
) -> tuple[ValueVector, EvalTrace]:
    """Compressed evaluation that checks the linear-growth bound at each step.

    At step t, with coefficients A_t, B_t (already scaled by the driver
    jump) of bit length c_t:

    * c_t must not exceed the budget p_M(t)             (GrowthBoundViolated)
    * length(f_{t+1}) <= length(f_t) + c_t + s          (GrowthBoundViolated)
    * length(f_{t+1}) <= length(G) + (t + 2) * p_M(t)   (BudgetExceeded)

    where lengths of vectors are sup norms and s = ceil(log2(d + 2)) absorbs
    the d-term row sums. ``check=False`` skips the linearity analysis; with
    no decomposition the whole rhs is then treated as B. ``record=False``
    skips the per-step records of the returned trace.
    """
    if x < 0:
        raise ValueError("x must be >= 0")
    y = p.bind(y)
    d = p.dim
    own = decomposition is None and check
    if decomposition is None:
        if check:
            decomposition = p.linear_decomposition
        else:
            decomposition = LinearDecomposition(
                tuple(tuple(as_expr(0) for _ in range(d)) for _ in range(d)), p.rhs, p.state
            )
    if tuple(decomposition.pivots) != p.state:
        raise ValueError("decomposition pivots must be the problem state")
    if own:
        coef_fn = p._coef_fn
    else:
        coef_fn = compile_expr([e for row in decomposition.q1 for e in row] + list(decomposition.q2))
    jd = jump_set(p.driver, x, y)
    _check_cap(jd.count, max_steps)
    F = p.initial(y)
    g_bits = max(F.bits())
    slack = (d + 1).bit_length()
    trace = EvalTrace()

    if budget is None:
        param_bits = max((bit_length(v) for v in y.values()), default=1)
        base = max(1, param_bits)
        if jd.count:
            i0 = jd.alpha(0)
            dl0 = p.driver.delta(i0, y)
            A0, B0 = _coef_values(coef_fn, F, p.env_at(F, i0, y), d)
            base = max(base, *(bit_length(dl0 * v) for row in A0 for v in row), *(bit_length(dl0 * v) for v in B0))
        budget = _AutoBudget(base)

    kernel = p._guard_kernel if own else None
    if kernel is not None:
        add = trace.add if record else None
        return ValueVector(kernel(tuple(F), y, jd.count, budget.bound, g_bits, slack, add)), trace

    for t, i in enumerate(jd.jumps):
        dl = p.driver.delta(i, y)
        env = p.env_at(F, i, y)
        A, B = _coef_values(coef_fn, F, env, d)
        A = [[dl * a for a in row] for row in A]
        B = [dl * b for b in B]
        new = F + p.rhs_at(F, i, y) * dl
        via_ab = ValueVector(f + s + b for f, s, b in zip(F, _matvec(A, F), B))
        if via_ab != new:
            raise ValueError(f"step {t}: decomposition does not reproduce the rhs")
        c_t = max([bit_length(v) for row in A for v in row] + [bit_length(v) for v in B])
        pm = budget.bound(t, i)
        if c_t > pm:
            raise GrowthBoundViolated(t, f"coefficient length {c_t} exceeds p_M = {pm}")
        old_bits, new_bits = max(F.bits()), max(new.bits())
        if new_bits > old_bits + c_t + slack:
            raise GrowthBoundViolated(t, f"length grew {old_bits} -> {new_bits} with coefficients of length {c_t}")
        limit = g_bits + (t + 2) * pm
        if new_bits > limit:
            raise BudgetExceeded(t, new_bits, limit)
        F = new
        if record:
            trace.add(t, i, dl, F)
    return F, trace
