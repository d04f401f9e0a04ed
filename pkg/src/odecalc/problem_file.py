"""Text format for L-ODE problems, and the evaluation recipe that maps
command-line inputs to an evaluation point and an output.

Example (2^(length(x) * length(y)))::

    # comment
    dim: 1
    params: y
    driver: length
    init:
      f.0 = h.p
    rhs:
      f.0 = f.0 * (h.p - 1)
    aux:
      h.p = pow2length(y)

Sections
    ``dim: d``            number of state components (required)
    ``state: a b ...``    state names, default ``f.0 .. f.{d-1}``
    ``params: a b ...``   parameter names
    ``index: x``          name of the ODE variable, default ``x``
    ``driver: length`` or ``driver: scan: <expr>`` (expr over index and params)
    ``init:``             one ``name = expr`` per component, over params and aux
    ``rhs:``              one ``name = expr`` per component, an sg-polynomial
                          over state, aux, index and params
    ``aux:``              ``h.name = <expr>`` where the expression may call
                          ``length``, ``pow2``, ``pow2length``, ``constant``;
                          or ``h.name = problem <file> with a=<expr>, ...``
                          which runs another problem file on the given inputs
    ``eval:``             optional recipe: ``inputs = a b ...`` (positional
                          argument names, default index then params),
                          ``at = <expr>`` (evaluation point, default the
                          index input), ``<param> = <expr>`` bindings and
                          ``output = <expr>`` over state and inputs
"""

from __future__ import annotations

import re
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Optional, Union

from .engine import (
    AUX_FUNCTIONS,
    LENGTH,
    AuxExpr,
    Budget,
    EvalTrace,
    LengthDriver,
    LOdeProblem,
    ScanDriver,
    eval_length_ode,
    eval_lode_compressed,
    eval_lode_naive,
    guarded_eval,
)
from .expr import Expr, ExprSyntaxError, compile_expr, parse, render
from .numeric import Valuation, ValueVector

__all__ = [
    "ProblemFileError",
    "EvalRecipe",
    "ProblemSpec",
    "NestedProblemAux",
    "parse_problem",
    "load_problem",
    "dump_problem",
    "run_spec",
]


class ProblemFileError(ValueError):
    def __init__(self, msg: str, line: int, col: int = 1, path: str = "<problem>"):
        super().__init__(f"{path}:{line}:{col}: {msg}")
        self.line = line
        self.col = col
        self.path = path


@dataclass(frozen=True)
class EvalRecipe:
    """How positional inputs become (evaluation point, parameters) and how
    the final state is projected to an answer."""

    inputs: Optional[tuple[str, ...]] = None
    at: Optional[Expr] = None
    bindings: Mapping[str, Expr] = field(default_factory=dict)
    output: Optional[Expr] = None

    def input_names(self, problem: LOdeProblem) -> tuple[str, ...]:
        if self.inputs is not None:
            return self.inputs
        return (problem.index, *problem.params)

    def prepare(self, problem: LOdeProblem, args: Sequence[int]) -> tuple[int, Valuation, dict]:
        names = self.input_names(problem)
        if len(args) != len(names):
            raise ValueError(f"expected {len(names)} inputs ({' '.join(names)}), got {len(args)}")
        env = dict(zip(names, args))
        ev = Valuation(env)
        x = _aux_eval(self.at, ev) if self.at is not None else ev[problem.index]
        y = {}
        for p in problem.params:
            y[p] = _aux_eval(self.bindings[p], ev) if p in self.bindings else ev[p]
        return x, Valuation(y), env

    def project(self, problem: LOdeProblem, state: ValueVector, env: dict) -> Union[int, ValueVector]:
        if self.output is None:
            return state
        b = dict(env)
        b.update(zip(problem.state, state))
        return _aux_eval(self.output, Valuation(b))


@lru_cache(maxsize=512)
def _compiled(e: Expr):
    return compile_expr(e, AUX_FUNCTIONS)


def _aux_eval(e: Expr, env: Valuation) -> int:
    return _compiled(e)(env)


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    problem: LOdeProblem
    recipe: EvalRecipe = EvalRecipe()
    path: Optional[Path] = None

    def run(self, args: Sequence[int], **kw):
        return run_spec(self, args, **kw)


def run_spec(
    spec: ProblemSpec,
    args: Sequence[int],
    mode: str = "compressed",
    trace: Optional[EvalTrace] = None,
    budget: Optional[Budget] = None,
    max_steps: Optional[int] = None,
):
    """Evaluate a problem spec on positional inputs.

    ``mode`` is one of ``compressed``, ``length``, ``naive`` or ``guard``.
    Returns ``(answer, trace)``; the trace is None unless one was requested
    or the mode is ``guard``.
    """
    p = spec.problem
    x, y, env = spec.recipe.prepare(p, args)
    if mode == "guard":
        state, trace = guarded_eval(p, x, y, budget=budget, max_steps=max_steps)
    elif mode == "length":
        state = eval_length_ode(p, x, y, trace=trace, max_steps=max_steps)
    elif mode == "naive":
        state = eval_lode_naive(p, x, y, max_steps=max_steps)
    elif mode == "compressed":
        state = eval_lode_compressed(p, x, y, trace=trace, max_steps=max_steps)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return spec.recipe.project(p, state, env), trace


class NestedProblemAux:
    """Aux slot whose value is another problem file run on computed inputs."""

    def __init__(self, spec: ProblemSpec, bindings: Mapping[str, Expr], index: str, ref: str):
        self.spec = spec
        self.bindings = dict(bindings)
        self.index = index
        self.ref = ref
        names = spec.recipe.input_names(spec.problem)
        missing = [n for n in names if n not in self.bindings]
        if missing:
            raise ValueError(f"nested problem {ref}: inputs {missing} not bound")
        self._names = names

    def __call__(self, x: int, y: Valuation) -> int:
        env = y.extend({self.index: x})
        args = [_aux_eval(self.bindings[n], env) for n in self._names]
        value, _ = run_spec(self.spec, args)
        if isinstance(value, ValueVector):
            if len(value) != 1:
                raise ValueError(f"nested problem {self.ref} must produce a scalar")
            value = value[0]
        return value

    def text(self) -> str:
        binds = ", ".join(f"{n}={render(self.bindings[n])}" for n in self._names)
        return f"problem {self.ref} with {binds}"


_HEADER = re.compile(r"^([A-Za-z_]+)\s*:(.*)$")
_ENTRY = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_.]*)\s*=\s*(.*?)\s*$")
_NESTED = re.compile(r"^problem\s+(\S+)\s+with\s+(.*)$")
_SECTIONS = {"dim", "state", "params", "index", "driver", "init", "rhs", "aux", "eval"}
_BLOCKS = {"init", "rhs", "aux", "eval"}


def parse_problem(text: str, base_dir: Optional[Path] = None, path: str = "<problem>") -> ProblemSpec:
    """Parse the problem format; errors carry line and column."""
    heads: dict[str, tuple[str, int, int]] = {}
    blocks: dict[str, list[tuple[str, str, int, int]]] = {b: [] for b in _BLOCKS}
    current: Optional[str] = None

    def err(msg, line, col=1):
        return ProblemFileError(msg, line, col, path)

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        m = _HEADER.match(line)
        if m and not line[0].isspace():
            name, rest = m.group(1), m.group(2)
            if name not in _SECTIONS:
                raise err(f"unknown section {name!r}", lineno)
            if name in heads or (name in _BLOCKS and blocks[name]):
                raise err(f"duplicate section {name!r}", lineno)
            current = name if name in _BLOCKS else None
            if name in _BLOCKS:
                if rest.strip():
                    raise err(f"section {name!r} takes entries on the following lines", lineno)
            else:
                heads[name] = (rest.strip(), lineno, m.start(2) + len(rest) - len(rest.lstrip()) + 1)
            continue
        e = _ENTRY.match(line)
        if current is None:
            raise err("entry outside of a block section", lineno)
        if e is None:
            raise err("expected 'name = expression'", lineno)
        blocks[current].append((e.group(1), e.group(2), lineno, e.start(2) + 1))

    if "dim" not in heads:
        raise err("missing 'dim' section", 1)
    dim_text, dim_line, _ = heads["dim"]
    try:
        dim = int(dim_text)
    except ValueError:
        raise err(f"dim must be an integer, got {dim_text!r}", dim_line) from None
    if dim < 1:
        raise err("dim must be positive", dim_line)

    state = tuple(heads["state"][0].replace(",", " ").split()) if "state" in heads else tuple(f"f.{i}" for i in range(dim))
    if len(state) != dim:
        raise err(f"state lists {len(state)} names for dim {dim}", heads["state"][1])
    params = tuple(heads["params"][0].replace(",", " ").split()) if "params" in heads else ()
    index = heads["index"][0] if "index" in heads else "x"

    def parse_at(src, line, col, known, functions=()):
        try:
            return parse(src, terms=known, functions=functions)
        except ExprSyntaxError as exc:
            c = col + exc.col - 1 if exc.line == 1 else exc.col
            raise err(exc.msg, line + exc.line - 1, c) from None

    # aux first: rhs and init may refer to them
    aux: dict[str, object] = {}
    aux_known = set(params) | {index}
    for name, src, line, col in blocks["aux"]:
        if name in aux:
            raise err(f"duplicate aux {name!r}", line)
        nm = _NESTED.match(src)
        if nm:
            ref = nm.group(1)
            target = (base_dir or Path(".")) / ref
            try:
                sub = load_problem(target)
            except OSError as exc:
                raise err(f"cannot read nested problem {ref}: {exc.strerror}", line, col) from None
            binds = {}
            for part in nm.group(2).split(","):
                bm = _ENTRY.match(part)
                if bm is None:
                    raise err("expected 'name=expr' bindings after 'with'", line, col)
                binds[bm.group(1)] = parse_at(bm.group(2), line, col, aux_known, AUX_FUNCTIONS)
            try:
                aux[name] = NestedProblemAux(sub, binds, index, ref)
            except ValueError as exc:
                raise err(str(exc), line, col) from None
        else:
            aux[name] = AuxExpr(parse_at(src, line, col, aux_known, AUX_FUNCTIONS), index)

    def component_block(section):
        entries = {}
        for name, src, line, col in blocks[section]:
            if name not in state:
                raise err(f"{name!r} is not a state component", line)
            if name in entries:
                raise err(f"duplicate entry for {name!r}", line)
            known = (set(state) if section == "rhs" else set()) | set(aux) | {index} | set(params)
            entries[name] = parse_at(src, line, col, known)
        missing = [s for s in state if s not in entries]
        if missing:
            raise err(f"section {section!r} lacks entries for {missing}", blocks[section][-1][2] if blocks[section] else 1)
        return tuple(entries[s] for s in state)

    rhs = component_block("rhs")
    init = component_block("init")

    driver_text, dline, dcol = heads.get("driver", ("length", 1, 1))
    if driver_text == "length":
        driver = LENGTH
    elif driver_text.startswith("scan:"):
        src = driver_text[len("scan:"):]
        offset = dcol + len("scan:") + (len(src) - len(src.lstrip()))
        driver = ScanDriver(parse_at(src.strip(), dline, offset, set(params) | {index}), index)
    else:
        raise err(f"unknown driver {driver_text!r}", dline, dcol)

    recipe_kw: dict = {}
    binds = {}
    for name, src, line, col in blocks["eval"]:
        if name == "inputs":
            recipe_kw["inputs"] = tuple(src.replace(",", " ").split())
    ins = recipe_kw.get("inputs", (index, *params))
    in_known = set(ins)
    for name, src, line, col in blocks["eval"]:
        if name == "inputs":
            continue
        if name == "at":
            recipe_kw["at"] = parse_at(src, line, col, in_known, AUX_FUNCTIONS)
        elif name == "output":
            recipe_kw["output"] = parse_at(src, line, col, in_known | set(state), AUX_FUNCTIONS)
        elif name in params:
            binds[name] = parse_at(src, line, col, in_known, AUX_FUNCTIONS)
        else:
            raise err(f"unknown eval entry {name!r}", line)
    if index not in ins and "at" not in recipe_kw:
        raise err(f"eval needs 'at' when {index!r} is not an input", blocks["eval"][0][2] if blocks["eval"] else 1)
    for p_ in params:
        if p_ not in ins and p_ not in binds:
            raise err(f"parameter {p_!r} is neither an input nor bound in eval", 1)
    recipe = EvalRecipe(bindings=binds, **recipe_kw)

    try:
        problem = LOdeProblem(rhs=rhs, init=init, driver=driver, aux=aux, state=state, params=params, index=index)
    except ValueError as exc:
        raise err(str(exc), 1) from None
    return ProblemSpec(problem, recipe)


def load_problem(path: Union[str, Path]) -> ProblemSpec:
    path = Path(path)
    spec = parse_problem(path.read_text(), base_dir=path.parent, path=str(path))
    return ProblemSpec(spec.problem, spec.recipe, path)


def dump_problem(problem: LOdeProblem, recipe: Optional[EvalRecipe] = None, comment: str = "") -> str:
    """Render a problem in the text format. Aux slots must be AuxExpr or
    nested problems."""
    out = []
    if comment:
        out.extend(f"# {line}" for line in comment.splitlines())
    out.append(f"dim: {problem.dim}")
    if problem.state != tuple(f"f.{i}" for i in range(problem.dim)):
        out.append(f"state: {' '.join(problem.state)}")
    if problem.params:
        out.append(f"params: {' '.join(problem.params)}")
    if problem.index != "x":
        out.append(f"index: {problem.index}")
    if isinstance(problem.driver, LengthDriver):
        out.append("driver: length")
    elif isinstance(problem.driver, ScanDriver) and problem.driver.expr is not None:
        out.append(f"driver: scan: {render(problem.driver.expr)}")
    else:
        raise ValueError("driver has no textual form")
    if problem.aux:
        out.append("aux:")
        for name, fn in problem.aux.items():
            if isinstance(fn, AuxExpr):
                out.append(f"  {name} = {render(fn.expr)}")
            elif isinstance(fn, NestedProblemAux):
                out.append(f"  {name} = {fn.text()}")
            else:
                raise ValueError(f"aux {name!r} has no textual form")
    out.append("init:")
    out.extend(f"  {s} = {render(e)}" for s, e in zip(problem.state, problem.init))
    out.append("rhs:")
    out.extend(f"  {s} = {render(e)}" for s, e in zip(problem.state, problem.rhs))
    if recipe is not None and (recipe.inputs or recipe.at or recipe.bindings or recipe.output):
        out.append("eval:")
        if recipe.inputs is not None:
            out.append(f"  inputs = {' '.join(recipe.inputs)}")
        if recipe.at is not None:
            out.append(f"  at = {render(recipe.at)}")
        for name, e in recipe.bindings.items():
            out.append(f"  {name} = {render(e)}")
        if recipe.output is not None:
            out.append(f"  output = {render(recipe.output)}")
    return "\n".join(out) + "\n"
