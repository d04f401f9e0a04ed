"""odecalc command-line front end.

Exit status: 0 on success, 1 when an analysis rejects the input or a growth
guard fires, 2 on usage, parse and input errors.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from .engine import (
    Budget,
    BudgetExceeded,
    EvalTrace,
    GrowthBoundViolated,
    StepLimitExceeded,
    check_linear,
    solve_lode_linear,
)
from .expr import NotEssentiallyLinear, degree, render
from .machine import (
    SHIPPED_PROGRAMS,
    AssemblyError,
    FuelExhausted,
    compile_program,
    eval_compiled,
    load_program,
    parse_assembly,
    run,
)
from .numeric import ValueVector, parse_value, render_value
from .problem_file import EvalRecipe, ProblemFileError, ProblemSpec, dump_problem, load_problem, run_spec
from .stdlib import PROGRAMS, get_program

DEFAULT_MAX_STEPS = 1 << 22
EXIT_OK, EXIT_REJECT, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def default_max_steps() -> int:
    env = os.environ.get("ODECALC_MAX_STEPS")
    if env is None:
        return DEFAULT_MAX_STEPS
    try:
        return int(env, 10)
    except ValueError:
        raise UsageError(f"ODECALC_MAX_STEPS must be an integer, got {env!r}") from None


def _values(texts: Sequence[str]) -> list[int]:
    out = []
    for t in texts:
        try:
            out.append(parse_value(t))
        except ValueError:
            raise UsageError(f"not an integer: {t!r}") from None
    return out


def _show(v) -> str:
    if isinstance(v, ValueVector):
        return " ".join(render_value(c) for c in v)
    return render_value(v)


def _load_spec(path: str) -> ProblemSpec:
    try:
        return load_problem(path)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


def _load_asm(path: str, registers: Optional[int] = None):
    p = Path(path)
    if not p.exists() and path in SHIPPED_PROGRAMS:
        return load_program(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    try:
        return parse_assembly(text, registers=registers, name=p.stem)
    except AssemblyError as exc:
        raise UsageError(f"{path}:{exc.line}: {exc.msg}") from None


def _max_steps(args) -> int:
    return args.max_steps if args.max_steps is not None else default_max_steps()


# ----------------------------------------------------------------- commands


def cmd_check(args, out) -> int:
    p = _load_spec(args.file).problem
    names = list(p.state)
    width = max(len(n) for n in names + ["component"])
    print(f"{'component':<{width}}  " + "  ".join(f"deg({n})" for n in names) + "  deg(state)  rhs", file=out)
    for name, e in zip(p.state, p.rhs):
        cells = "  ".join(f"{degree(e, n):>{len(n) + 5}}" for n in names)
        print(f"{name:<{width}}  {cells}  {degree(e, set(names)):>10}  {render(e)}", file=out)
    try:
        dec = check_linear(p)
    except NotEssentiallyLinear as exc:
        print(
            f"REJECT: component {p.state[exc.entry]} has deg({exc.term}) = {exc.degree}; "
            f"witness: {render(exc.witness)}",
            file=out,
        )
        return EXIT_REJECT
    print("ACCEPT: linear in " + ", ".join(names), file=out)
    print("A =", file=out)
    for row in dec.q1:
        print("  [ " + ", ".join(render(e) for e in row) + " ]", file=out)
    print("B =", file=out)
    print("  [ " + ", ".join(render(e) for e in dec.q2) + " ]", file=out)
    return EXIT_OK


def _budget(args) -> Optional[Budget]:
    if not getattr(args, "budget", None):
        return None
    try:
        return Budget.parse(args.budget)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _evaluate(spec: ProblemSpec, args, out, force_trace: bool = False):
    values = _values(args.args)
    mode = "guard" if args.guard else args.mode
    trace = EvalTrace() if (args.trace or force_trace) and mode != "guard" else None
    try:
        value, trace = run_spec(spec, values, mode=mode, trace=trace, budget=_budget(args), max_steps=_max_steps(args))
    except ValueError as exc:
        if isinstance(exc, NotEssentiallyLinear):
            raise
        raise UsageError(str(exc)) from None
    return value, trace


def cmd_eval(args, out) -> int:
    value, trace = _evaluate(_load_spec(args.file), args, out)
    print(_show(value), file=out)
    if args.trace:
        Path(args.trace).write_text(trace.dumps() + "\n")
    return EXIT_OK


def cmd_trace(args, out) -> int:
    _, trace = _evaluate(_load_spec(args.file), args, out, force_trace=True)
    if args.trace:
        Path(args.trace).write_text(trace.dumps() + "\n")
    else:
        print(trace.dumps(), file=out)
    return EXIT_OK


def cmd_solve_linear(args, out) -> int:
    spec = _load_spec(args.file)
    p = spec.problem
    try:
        x, y, env = spec.recipe.prepare(p, _values(args.args))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    state = solve_lode_linear(p, x, y, max_steps=_max_steps(args))
    print(_show(spec.recipe.project(p, state, env)), file=out)
    return EXIT_OK


def compiled_recipe(k: int) -> EvalRecipe:
    """Recipe for emitted compiled systems: inputs ``steps x1 .. xk``."""
    from .engine import AUX_FUNCTIONS
    from .expr import parse

    return EvalRecipe(inputs=("steps", *(f"x{r}" for r in range(1, k + 1))), at=parse("pow2(steps)", functions=AUX_FUNCTIONS))


def cmd_compile_rm(args, out) -> int:
    prog = _load_asm(args.file, args.registers)
    c = compile_program(prog)
    text = dump_problem(
        c.problem,
        compiled_recipe(prog.k),
        comment=f"compiled from {Path(args.file).name}; inputs: "
        + " ".join(compiled_recipe(prog.k).inputs),
    )
    if args.emit:
        Path(args.emit).write_text(text)
        print(f"wrote {args.emit} ({c.problem.dim} components)", file=out)
    else:
        out.write(text)
    return EXIT_OK


def cmd_run_rm(args, out) -> int:
    prog = _load_asm(args.file, args.registers)
    inputs = _values(args.inputs)
    try:
        res = run(prog, inputs, fuel=args.fuel)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    print(render_value(res.output), file=out)
    status = "halted" if res.halted else "running"
    print(f"# {status} after {res.steps} steps at label {res.inst}", file=sys.stderr)
    if args.ode:
        state = eval_compiled(compile_program(prog), res.steps, inputs)
        agree = list(state) == [res.inst, *res.registers]
        print(f"# compiled ODE after {res.steps} steps: R0 = {state[1]} ({'agrees' if agree else 'DISAGREES'})", file=sys.stderr)
        if not agree:
            return EXIT_REJECT
    return EXIT_OK if res.halted else EXIT_REJECT


def cmd_stdlib(args, out) -> int:
    if args.action == "list":
        for name, prog in sorted(PROGRAMS.items()):
            ins = " ".join(prog.spec.recipe.input_names(prog.problem))
            print(f"{name:<14} {ins:<6} {prog.doc}", file=out)
        return EXIT_OK
    if not args.name:
        raise UsageError(f"stdlib {args.action} needs a program name")
    try:
        prog = get_program(args.name)
    except KeyError as exc:
        raise UsageError(exc.args[0]) from None
    if args.action == "show":
        out.write(dump_problem(prog.problem, prog.spec.recipe, comment=f"{prog.name}: {prog.doc}"))
        return EXIT_OK
    values = _values(args.args)
    try:
        prog.validate(values)
    except (TypeError, ValueError, ZeroDivisionError) as exc:
        raise UsageError(str(exc)) from None
    value, trace = _evaluate(prog.spec, args, out)
    print(_show(value), file=out)
    if args.trace:
        Path(args.trace).write_text(trace.dumps() + "\n")
    return EXIT_OK


# ------------------------------------------------------------------- parser


def _eval_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("args", nargs="*", help="inputs (decimal or 0b binary)")
    p.add_argument("--trace", metavar="OUT", help="write the step trace as JSON")
    p.add_argument("--guard", action="store_true", help="check the linear growth bound at every step")
    p.add_argument("--budget", metavar="C[,S]", help="coefficient bit budget const + slope*t (with --guard)")
    p.add_argument("--mode", choices=("compressed", "length", "naive"), default="compressed")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="odecalc", description="Exact discrete-ODE calculator.")
    ap.add_argument("--max-steps", type=int, default=None,
                    help=f"cap on evaluation steps (default {DEFAULT_MAX_STEPS}, or $ODECALC_MAX_STEPS)")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="degree table and linearity verdict")
    p.add_argument("file")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("eval", help="evaluate a problem file")
    p.add_argument("file")
    _eval_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("trace", help="evaluate and print the step trace as JSON")
    p.add_argument("file")
    _eval_flags(p)
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("solve-linear", help="evaluate a linear problem through its closed form")
    p.add_argument("file")
    p.add_argument("args", nargs="*")
    p.set_defaults(func=cmd_solve_linear)

    p = sub.add_parser("compile-rm", help="compile register-machine assembly to a problem file")
    p.add_argument("file", help="assembly file or shipped program name")
    p.add_argument("--emit", metavar="OUT", help="write the problem file here instead of stdout")
    p.add_argument("--registers", type=int, default=None, help="minimum register count")
    p.set_defaults(func=cmd_compile_rm)

    p = sub.add_parser("run-rm", help="run register-machine assembly")
    p.add_argument("file", help="assembly file or shipped program name")
    p.add_argument("inputs", nargs="*")
    p.add_argument("--fuel", type=int, default=100_000, help="instruction budget")
    p.add_argument("--registers", type=int, default=None)
    p.add_argument("--ode", action="store_true", help="also run the compiled system and compare")
    p.set_defaults(func=cmd_run_rm)

    p = sub.add_parser("stdlib", help="built-in example programs")
    p.add_argument("action", choices=("list", "show", "run"))
    p.add_argument("name", nargs="?")
    _eval_flags(p)
    p.set_defaults(func=cmd_stdlib, mode="length")
    return ap


def main(argv: Optional[Sequence[str]] = None, out=None) -> int:
    out = out or sys.stdout
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args, out)
    except (UsageError, ProblemFileError) as exc:
        print(f"odecalc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NotEssentiallyLinear as exc:
        print(f"odecalc: rejected: {exc}", file=sys.stderr)
        return EXIT_REJECT
    except (GrowthBoundViolated, BudgetExceeded) as exc:
        print(f"odecalc: guard: {exc}", file=sys.stderr)
        return EXIT_REJECT
    except (StepLimitExceeded, FuelExhausted) as exc:
        print(f"odecalc: limit: {exc}", file=sys.stderr)
        return EXIT_REJECT


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
