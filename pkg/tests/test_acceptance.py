"""Acceptance criteria, one test per criterion at its stated tolerance.

A PASS/FAIL line per criterion is printed in the terminal summary.
"""

import math
import random
import time

import pytest

from odecalc.calculus import derivative, falling_exponential, falling_power, integral
from odecalc.engine import (
    LENGTH,
    AuxExpr,
    EvalTrace,
    GrowthBoundViolated,
    LOdeProblem,
    check_linear,
    eval_length_ode,
    eval_lode_compressed,
    eval_lode_naive,
    guarded_eval,
    iterate_ivp,
    solve_linear_closed,
    solve_lode_linear,
)
from odecalc.expr import (
    NotEssentiallyLinear,
    cond_expr,
    degree,
    is_essentially_constant,
    is_essentially_linear,
    linear_decompose,
    parse,
)
from odecalc.machine import compile_program, compiled_trajectory, load_program, trajectory
from odecalc.numeric import Valuation, ValueVector, length
from odecalc.stdlib import PROGRAMS, bprod, bsum, floor_sqrt, int_div, sign_ivp, suffix

from generators import random_problem, random_system

CASES = 1000


def _poly(rng, deg=4, span=20):
    cs = [rng.randint(-span, span) for _ in range(deg + 1)]
    return lambda x, env=None: sum(c * x**k for k, c in enumerate(cs))


@pytest.mark.criterion(1, "calculus identities, >= 10^3 random cases each, < 5 s")
def test_criterion_1_calculus_identities():
    rng = random.Random(1)
    start = time.perf_counter()
    for _ in range(CASES):
        F = _poly(rng)
        a, b = sorted(rng.randint(0, 64) for _ in range(2))
        assert integral(lambda x, e: derivative(F, x, e), a, b)[0] == F(b) - F(a)
    for _ in range(CASES):
        f, g, x = _poly(rng), _poly(rng), rng.randint(0, 64)
        d = lambda h: derivative(h, x)[0]
        fg = d(lambda t, e: f(t) * g(t))
        assert fg == d(f) * g(x + 1) + f(x) * d(g) == f(x + 1) * d(g) + d(f) * g(x)
    for _ in range(CASES):
        m, x = rng.randint(1, 8), rng.randint(0, 64)
        assert derivative(lambda t, e: falling_power(t, m), x)[0] == m * falling_power(x, m - 1)
    for _ in range(CASES):
        U, x = _poly(rng, deg=3, span=5), rng.randint(0, 32)
        E = lambda t, e=None: falling_exponential(U, t)
        assert derivative(E, x)[0] == derivative(U, x)[0] * E(x)
    assert time.perf_counter() - start < 5


@pytest.mark.criterion(2, "closed-form linear solution = iteration on 200 random systems, < 10 s")
def test_criterion_2_linear_oracle():
    rng = random.Random(2)
    start = time.perf_counter()
    dependent = 0
    for k in range(200):
        s = random_system(rng, state_dependent=k % 2 == 1)
        dependent += s.reads_state
        x = rng.randint(0, 30)
        assert s.dim <= 3
        assert solve_linear_closed(s, x) == iterate_ivp(s.as_ivp(), x)
    assert dependent >= 50
    assert time.perf_counter() - start < 10


class _Counter:
    """Aux slot that counts its evaluations and contributes 0."""

    def __init__(self):
        self.calls = 0

    def __call__(self, x, y):
        self.calls += 1
        return 0


def _counted(p, counter):
    rhs = tuple(parse(f"{e} + h.count") for e in map(str, p.rhs))
    return LOdeProblem(rhs=rhs, init=p.init, driver=LENGTH, aux={**p.aux, "h.count": counter}, params=p.params)


def _criterion_3_problems():
    rng = random.Random(3)
    lenprod = LOdeProblem(
        rhs=(parse("f.0 * (h.p - 1)"),), init=(parse("h.p"),),
        aux={"h.p": AuxExpr("pow2length(y)")}, params=("y",),
    )
    yield LOdeProblem(rhs=("f.0",), init=(2,)), {}
    yield lenprod, {"y": 5}
    for _ in range(4):
        yield random_problem(rng), {}


def _criterion_3_points():
    rng = random.Random(33)
    naive = [0, 1, 2, 3, 7, 8, 1000, 4095, 4096, 2**16 - 1, 2**16] + [rng.randint(0, 2**16) for _ in range(4)]
    beyond = [2**16 + 1, 2**20 - 1, 2**20] + [rng.randint(2**16, 2**20) for _ in range(20)]
    return naive, beyond


@pytest.mark.criterion(3, "jump compression: compressed = naive, RHS count = length(x) - 1, 2^length(2^20) in <= 21 steps")
def test_criterion_3_jump_compression():
    naive_xs, beyond_xs = _criterion_3_points()
    for p, y in _criterion_3_problems():
        for x in naive_xs + beyond_xs:
            counter = _Counter()
            q = _counted(p, counter)
            got = eval_lode_compressed(q, x, y)
            assert counter.calls == max(length(x) - 1, 0) if x else counter.calls == 0
            assert got == eval_length_ode(p, x, y)
            if x in naive_xs:
                assert got == eval_lode_naive(p, x, y)
    trace = EvalTrace()
    pow2 = PROGRAMS["pow2_length"]
    value, _ = pow2.run([2**20], mode="compressed", trace=trace)
    assert value == 2**21 and trace.steps <= 21


@pytest.mark.criterion(4, "sign-function IVP reproduces sg(x) for x <= 1000")
def test_criterion_4_sign_ivp():
    ivp = sign_ivp().as_ivp()
    f = ivp.init(Valuation())
    for x in range(1001):
        assert f[0] == (1 if x > 0 else 0)
        if x % 97 == 0:
            assert iterate_ivp(ivp, x)[0] == f[0]
        f = ValueVector(a + b for a, b in zip(f, ivp.rhs(f, x, Valuation())))
    assert all(solve_linear_closed(sign_ivp(), x)[0] == (x > 0) for x in range(0, 1001, 50))


@pytest.mark.criterion(5, "degree analyzer verdict sets, and rejection of f*f - f")
def test_criterion_5_degree_verdicts():
    P = parse("x*sg((x*x - z)*y) + y*y*y")
    assert is_essentially_linear(P, "x") and not is_essentially_constant(P, "x")
    assert is_essentially_constant(P, "z")
    assert not is_essentially_linear(P, "y")

    Q = parse("sg(x*x - z)*z*z + h.p")  # h.p stands for 2^length(y)
    assert is_essentially_constant(Q, "x")
    assert is_essentially_linear(Q, "h.p") and not is_essentially_constant(Q, "h.p")
    assert not is_essentially_linear(Q, "z")

    C = cond_expr(parse("x"), parse("y"), parse("z"))
    assert is_essentially_constant(C, "x")
    assert is_essentially_linear(C, "y") and is_essentially_linear(C, "z")

    A = [[parse("sg(x - y)"), parse("sg(x)*y")], [parse("sg(z*z*z*z*z - x*x*x)"), parse("z")]]
    assert is_essentially_constant(A, "x")
    assert is_essentially_linear(A, "y") and is_essentially_linear(A, "z")

    with pytest.raises(NotEssentiallyLinear) as e:
        linear_decompose([parse("f*f - f")], ["f"])
    assert degree(e.value.expr, "f") == 2


BISIM_PROGRAMS = ["add", "max", "truncsub", "copy", "counter", "loop"]


@pytest.mark.criterion(6, "register-machine bisimulation, 100 inputs x t <= 200 per program")
def test_criterion_6_bisimulation():
    rng = random.Random(6)
    for name in BISIM_PROGRAMS:
        prog = load_program(name)
        c = compile_program(prog)
        check_linear(c.problem)
        arity = {"add": 2, "max": 2, "truncsub": 2}.get(name, 1)
        for _ in range(100):
            inputs = [rng.randrange(2**32) for _ in range(arity)]
            machine = [s.as_vector() for s in trajectory(prog, inputs, 200)]
            assert list(compiled_trajectory(c, 200, inputs)) == machine


def _sweep_inputs():
    rng = random.Random(7)
    sqrt_in = list(range(10**4 + 1)) + [rng.getrandbits(60) for _ in range(100)]
    div_in = [(x, y) for x in range(10**4 + 1) for y in range(1, 101)]
    div_in += [(rng.getrandbits(60), rng.getrandbits(60) or 1) for _ in range(100)]
    suffix_in = [(x, y) for x in range(2**12 + 1) for y in (0, 1, 2, 5, 9, 100, 4095)]
    suffix_in += [(rng.getrandbits(60), rng.getrandbits(rng.randint(1, 60))) for _ in range(100)]
    return sqrt_in, div_in, suffix_in


@pytest.mark.criterion(7, "stdlib oracle sweep and step bound, < 60 s")
def test_criterion_7_stdlib_sweep():
    sqrt_in, div_in, suffix_in = _sweep_inputs()
    start = time.perf_counter()
    for x in sqrt_in:
        assert floor_sqrt(x) == math.isqrt(x)
    for x, y in div_in:
        assert int_div(x, y) == x // y
    for x, y in suffix_in:
        assert suffix(x, y) == x % 2 ** length(y)
    for x in range(101):
        g = lambda z: 3 * z - 7
        assert bsum(g, x) == sum(g(z) for z in range(x))
        assert bprod(lambda z: z % 5 + 1, x) == math.prod(z % 5 + 1 for z in range(x))
    elapsed = time.perf_counter() - start

    rng = random.Random(77)
    for name, prog in PROGRAMS.items():
        for _ in range(200):
            args = [rng.getrandbits(rng.randint(1, 60)) for _ in range(prog.arity)]
            if name == "int_div":
                args[1] = args[1] or 1
            trace = EvalTrace()
            value, _ = prog.run(args, mode="length", trace=trace)
            assert trace.steps <= length(args[0]) + 2
            assert value == prog.oracle(*args) or value[0] == prog.oracle(*args)
    assert elapsed < 60, f"sweep took {elapsed:.1f} s"


def _guard(prog, args):
    x, y, _ = prog.spec.recipe.prepare(prog.problem, args)
    guarded_eval(prog.problem, x, y, record=False)


@pytest.mark.criterion(8, "growth guard holds on criterion-3/7 runs and compiled systems; f^2 trips it within 6 steps")
def test_criterion_8_growth_guard():
    naive_xs, beyond_xs = _criterion_3_points()
    for p, y in _criterion_3_problems():
        for x in naive_xs + beyond_xs:
            value, _ = guarded_eval(p, x, y, record=False)
            assert value == eval_lode_compressed(p, x, y)
            assert value == solve_lode_linear(p, x, y)

    sqrt_in, div_in, suffix_in = _sweep_inputs()
    for x in sqrt_in:
        _guard(PROGRAMS["floor_sqrt"], [x])
    for x, y in div_in:
        _guard(PROGRAMS["int_div"], [x, y])
    for x, y in suffix_in:
        _guard(PROGRAMS["suffix"], [x, y])
    for x in sqrt_in[::10]:
        _guard(PROGRAMS["pow2_length"], [x])
        _guard(PROGRAMS["pow2_lenprod"], [x, x // 3])

    rng = random.Random(8)
    for name in BISIM_PROGRAMS:
        c = compile_program(load_program(name))
        for _ in range(10):
            binds = {p: rng.randrange(2**32) for p in c.problem.params}
            guarded_eval(c.problem, 2**200, binds, record=False)

    square = LOdeProblem(rhs=(parse("f.0 * f.0"),), init=(3,))
    with pytest.raises(GrowthBoundViolated) as e:
        guarded_eval(square, 2**40, check=False)
    assert e.value.step < 6
