from pathlib import Path

import pytest

from odecalc.engine import eval_lode_compressed
from odecalc.machine import SHIPPED_PROGRAMS, compile_program, eval_compiled, load_program
from odecalc.numeric import ValueVector
from odecalc.problem_file import ProblemFileError, dump_problem, load_problem, parse_problem, run_spec
from odecalc.stdlib import PROGRAMS

PROBLEMS = Path(__file__).resolve().parent.parent / "problems"

LENPROD = """\
# 2^(length(x)*length(y))
dim: 1
params: y
driver: length
init:
  f.0 = h.p
rhs:
  f.0 = f.0 * (h.p - 1)   # linear in f.0
aux:
  h.p = pow2length(y)
"""


def test_parse_and_run():
    spec = parse_problem(LENPROD)
    assert spec.problem.params == ("y",)
    for mode in ("compressed", "length", "naive", "guard"):
        value, _ = run_spec(spec, [6, 3], mode=mode)
        assert value == ValueVector([64])


@pytest.mark.parametrize(
    "text, line, col",
    [
        (LENPROD.replace("h.p - 1", "h.p - "), 8, 22),
        (LENPROD.replace("dim: 1", "dim: one"), 2, 1),
        (LENPROD.replace("f.0 * (h.p", "f.0 * (q"), 8, 16),
        (LENPROD.replace("driver: length", "driver: quadratic"), 4, 9),
        (LENPROD.replace("params: y", "prams: y"), 3, 1),
        (LENPROD.replace("  f.0 = h.p\n", "  f.1 = h.p\n"), 6, 1),
    ],
)
def test_errors_carry_location(text, line, col):
    with pytest.raises(ProblemFileError) as e:
        parse_problem(text)
    assert (e.value.line, e.value.col) == (line, col)


def test_missing_dim():
    with pytest.raises(ProblemFileError):
        parse_problem("init:\n  f.0 = 1\nrhs:\n  f.0 = 1\n")


def test_init_may_not_read_state():
    with pytest.raises(ProblemFileError):
        parse_problem("dim: 1\ninit:\n  f.0 = f.0\nrhs:\n  f.0 = 1\n")


def test_scan_driver_and_index():
    spec = parse_problem("dim: 1\nindex: t\ndriver: scan: t\ninit:\n  f.0 = 0\nrhs:\n  f.0 = t\n")
    assert run_spec(spec, [5])[0] == ValueVector([10])


def test_eval_section():
    text = LENPROD + "eval:\n  inputs = a\n  at = a\n  y = a + 1\n  output = f.0 + a\n"
    assert run_spec(parse_problem(text), [6])[0] == 2 ** (3 * 3) + 6


@pytest.mark.parametrize("path", sorted(PROBLEMS.glob("*.ode")), ids=lambda p: p.name)
def test_dump_round_trip(path):
    spec = load_problem(path)
    again = parse_problem(dump_problem(spec.problem, spec.recipe), base_dir=PROBLEMS)
    assert again.problem.rhs == spec.problem.rhs
    assert again.problem.init == spec.problem.init
    assert again.recipe == spec.recipe


@pytest.mark.parametrize("name", sorted(PROGRAMS))
def test_stdlib_dump_round_trip(name):
    prog = PROGRAMS[name]
    spec = parse_problem(dump_problem(prog.problem, prog.spec.recipe))
    for args in ([5, 3], [1000, 7], [0, 1]):
        args = args[: prog.arity]
        assert run_spec(spec, args, mode="length")[0] == prog(*args)


@pytest.mark.parametrize("name", sorted(SHIPPED_PROGRAMS))
def test_compiled_round_trip(name):
    from odecalc.cli import compiled_recipe

    prog = load_program(name)
    c = compile_program(prog)
    spec = parse_problem(dump_problem(c.problem, compiled_recipe(prog.k)))
    inputs = [7] * SHIPPED_PROGRAMS[name]
    padded = inputs + [0] * (prog.k - len(inputs))
    for steps in (0, 1, 5, 20):
        assert run_spec(spec, [steps, *padded], mode="length")[0] == eval_compiled(c, steps, inputs)


def test_nested_problem():
    spec = load_problem(PROBLEMS / "nested_sqrt.ode")
    assert run_spec(spec, [8, 50])[0] == ValueVector([21])


def test_shipped_files_agree_with_stdlib():
    assert run_spec(load_problem(PROBLEMS / "sqrt.ode"), [10**6])[0] == 1000
    assert run_spec(load_problem(PROBLEMS / "div.ode"), [100, 7])[0] == 14
    assert run_spec(load_problem(PROBLEMS / "suffix.ode"), [53, 5])[0] == ValueVector([5])
    assert run_spec(load_problem(PROBLEMS / "bprod.ode"), [6])[0] == ValueVector([720])
    assert run_spec(load_problem(PROBLEMS / "bsum.ode"), [5])[0] == ValueVector([10])
    sign = load_problem(PROBLEMS / "sign.ode")
    assert [eval_lode_compressed(sign.problem, x)[0] for x in range(4)] == [0, 1, 1, 1]
    assert run_spec(load_problem(PROBLEMS / "prefix_min.ode"), [5])[0] == ValueVector([0])
