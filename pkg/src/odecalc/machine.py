"""Register machines and their compilation into linear length-ODEs.

Assembly format, one instruction per line, labels are line numbers from 0
(blank and comment-only lines do not count)::

    ADD j i     R_j := R_j + R_i
    SUB j i     R_j := R_j - R_i
    SET j a     R_j := a, a in {0, 1}
    JGEZ j p    if R_j >= 0 goto p
    HALT

``#`` starts a comment.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
from importlib import resources
from typing import Optional, Union

from .engine import LENGTH, LOdeProblem, eval_length_ode, length_ode_trajectory
from .expr import Const, Expr, Sg, Term, cond_expr, cosg_expr
from .numeric import ValueVector, length

__all__ = [
    "AddReg",
    "SubReg",
    "SetConst",
    "JumpIfNonNeg",
    "Halt",
    "Instruction",
    "RegisterProgram",
    "MachineState",
    "RunResult",
    "AssemblyError",
    "FuelExhausted",
    "CompiledSystem",
    "ClockedResult",
    "parse_assembly",
    "render_assembly",
    "load_program",
    "SHIPPED_PROGRAMS",
    "step",
    "trajectory",
    "initial_state",
    "run",
    "compile_program",
    "eval_compiled",
    "compiled_trajectory",
    "clocked_output",
]


@dataclass(frozen=True)
class AddReg:
    j: int
    i: int


@dataclass(frozen=True)
class SubReg:
    j: int
    i: int


@dataclass(frozen=True)
class SetConst:
    j: int
    a: int


@dataclass(frozen=True)
class JumpIfNonNeg:
    j: int
    p: int


@dataclass(frozen=True)
class Halt:
    pass


Instruction = Union[AddReg, SubReg, SetConst, JumpIfNonNeg, Halt]


class AssemblyError(ValueError):
    def __init__(self, msg: str, line: int):
        super().__init__(f"line {line}: {msg}")
        self.line = line
        self.msg = msg


class FuelExhausted(RuntimeError):
    """The machine did not reach a halt instruction within its fuel."""


def _registers_used(ins: Instruction) -> tuple[int, ...]:
    if isinstance(ins, (AddReg, SubReg)):
        return (ins.j, ins.i)
    if isinstance(ins, (SetConst, JumpIfNonNeg)):
        return (ins.j,)
    return ()


def _problems(instructions: Sequence[Instruction], registers: int):
    for label, ins in enumerate(instructions):
        for r in _registers_used(ins):
            if not 0 <= r < registers:
                yield label, f"register {r} out of range"
        if isinstance(ins, SetConst) and ins.a not in (0, 1):
            yield label, "SET constant must be 0 or 1"
        if isinstance(ins, JumpIfNonNeg) and not 0 <= ins.p < len(instructions):
            yield label, f"jump target {ins.p} out of range"


@dataclass(frozen=True)
class RegisterProgram:
    """Instructions labelled 0..m acting on registers R_0..R_{registers-1}."""

    instructions: tuple[Instruction, ...]
    registers: int
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "instructions", tuple(self.instructions))
        if not self.instructions:
            raise ValueError("empty program")
        for label, msg in _problems(self.instructions, self.registers):
            raise ValueError(f"label {label}: {msg}")

    @classmethod
    def from_instructions(cls, instructions: Sequence[Instruction], registers: Optional[int] = None, name: str = "") -> RegisterProgram:
        used = max((r for ins in instructions for r in _registers_used(ins)), default=0)
        return cls(tuple(instructions), max(used + 1, registers or 0), name)

    @property
    def k(self) -> int:
        """Index of the last register."""
        return self.registers - 1

    def halt_labels(self) -> frozenset[int]:
        """Labels where the machine stops: every HALT, plus the label just past the end."""
        halts = {l for l, ins in enumerate(self.instructions) if isinstance(ins, Halt)}
        return frozenset(halts | {len(self.instructions)})


_OPS = {"ADD": (AddReg, 2), "SUB": (SubReg, 2), "SET": (SetConst, 2), "JGEZ": (JumpIfNonNeg, 2), "HALT": (Halt, 0)}


def parse_assembly(text: str, registers: Optional[int] = None, name: str = "") -> RegisterProgram:
    """Load assembly text. The register count is 1 + the highest index used,
    or ``registers`` when that is larger."""
    instructions: list[Instruction] = []
    lines: list[int] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        op, *args = body.split()
        op = op.upper()
        if op not in _OPS:
            raise AssemblyError(f"unknown opcode {op!r}", lineno)
        cls, nargs = _OPS[op]
        if len(args) != nargs:
            raise AssemblyError(f"{op} takes {nargs} operands, got {len(args)}", lineno)
        try:
            vals = [int(a, 10) for a in args]
        except ValueError:
            raise AssemblyError(f"operands must be decimal integers: {args}", lineno) from None
        if any(v < 0 for v in vals):
            raise AssemblyError("operands must be non-negative", lineno)
        instructions.append(cls(*vals))
        lines.append(lineno)
    if not instructions:
        raise AssemblyError("no instructions", 1)
    used = max((r for ins in instructions for r in _registers_used(ins)), default=0)
    count = max(used + 1, registers or 0)
    for label, msg in _problems(instructions, count):
        raise AssemblyError(msg, lines[label])
    return RegisterProgram(tuple(instructions), count, name)


def render_assembly(prog: RegisterProgram) -> str:
    out = []
    for ins in prog.instructions:
        if isinstance(ins, AddReg):
            out.append(f"ADD {ins.j} {ins.i}")
        elif isinstance(ins, SubReg):
            out.append(f"SUB {ins.j} {ins.i}")
        elif isinstance(ins, SetConst):
            out.append(f"SET {ins.j} {ins.a}")
        elif isinstance(ins, JumpIfNonNeg):
            out.append(f"JGEZ {ins.j} {ins.p}")
        else:
            out.append("HALT")
    return "\n".join(out) + "\n"


# name -> input arity used by tests and the CLI
SHIPPED_PROGRAMS = {"add": 2, "max": 2, "truncsub": 2, "copy": 1, "counter": 1, "loop": 1}


def load_program(name: str) -> RegisterProgram:
    text = resources.files("odecalc.programs").joinpath(f"{name}.rm").read_text()
    return parse_assembly(text, name=name)


# ------------------------------------------------------------- simulator


@dataclass(frozen=True)
class MachineState:
    inst: int
    registers: tuple[int, ...]

    def as_vector(self) -> ValueVector:
        """Component order (inst, R_0, ..., R_k)."""
        return ValueVector((self.inst, *self.registers))


def initial_state(prog: RegisterProgram, inputs: Sequence[int]) -> MachineState:
    """R_1..R_p loaded with the inputs, everything else 0, label 0.

    Inputs must be non-negative and fit in R_1..R_k.
    """
    inputs = tuple(inputs)
    if len(inputs) > prog.k:
        raise ValueError(f"{len(inputs)} inputs but only registers R1..R{prog.k}")
    if any(v < 0 for v in inputs):
        raise ValueError("machine inputs must be non-negative")
    regs = [0] * prog.registers
    regs[1:1 + len(inputs)] = inputs
    return MachineState(0, tuple(regs))


def step(prog: RegisterProgram, s: MachineState) -> MachineState:
    """One transition. A halt, or a label past the last instruction, is a fixed point."""
    if s.inst >= len(prog.instructions):
        return s
    ins = prog.instructions[s.inst]
    regs = list(s.registers)
    if isinstance(ins, Halt):
        return s
    if isinstance(ins, AddReg):
        regs[ins.j] += regs[ins.i]
    elif isinstance(ins, SubReg):
        regs[ins.j] -= regs[ins.i]
    elif isinstance(ins, SetConst):
        regs[ins.j] = ins.a
    elif isinstance(ins, JumpIfNonNeg):
        return MachineState(ins.p if regs[ins.j] >= 0 else s.inst + 1, s.registers)
    return MachineState(s.inst + 1, tuple(regs))


@dataclass(frozen=True)
class RunResult:
    registers: tuple[int, ...]
    inst: int
    halted: bool
    steps: int

    @property
    def output(self) -> int:
        return self.registers[0]


def run(prog: RegisterProgram, inputs: Sequence[int], fuel: int, strict: bool = False) -> RunResult:
    """Execute up to ``fuel`` instructions or until a halt is reached.

    Running out of fuel is reported through ``halted=False``; with
    ``strict=True`` it raises FuelExhausted instead.
    """
    if fuel < 0:
        raise ValueError("fuel must be >= 0")
    halts = prog.halt_labels()
    s = initial_state(prog, inputs)
    n = 0
    while n < fuel and s.inst not in halts:
        s = step(prog, s)
        n += 1
    halted = s.inst in halts
    if strict and not halted:
        raise FuelExhausted(f"no halt after {fuel} instructions")
    return RunResult(s.registers, s.inst, halted, n)


def trajectory(prog: RegisterProgram, inputs: Sequence[int], steps: int):
    """Yield the machine state after 0, 1, ..., steps instructions."""
    s = initial_state(prog, inputs)
    yield s
    for _ in range(steps):
        s = step(prog, s)
        yield s


# -------------------------------------------------------------- compiler


@dataclass(frozen=True)
class CompiledSystem:
    """Linear length-ODE for (inst, R_0..R_k) plus the per-label next tables."""

    problem: LOdeProblem
    next_table: tuple[dict[str, Expr], ...]
    program: RegisterProgram

    @property
    def components(self) -> tuple[str, ...]:
        return self.problem.state

    def bind_inputs(self, inputs: Sequence[int]) -> dict[str, int]:
        state0 = initial_state(self.program, inputs)
        return {f"x{r}": state0.registers[r] for r in range(1, self.program.registers)}

    def is_normal_form(self) -> bool:
        """Initial values are constants or single parameters; no aux slots."""
        simple = all(isinstance(e, Const) or (isinstance(e, Term) and e.name in self.problem.params) for e in self.problem.init)
        return simple and not self.problem.aux


def _reg(r: int) -> str:
    return f"R{r}"


def compile_program(prog: RegisterProgram) -> CompiledSystem:
    """Emit, for inst and every register, the selector sum

        sum_l (prod_{i<l} sg(inst - i)) * cosg(inst - l) * next_l

    with the next tables of each instruction kind.
    """
    k = prog.k
    inst = Term("inst")
    comps = ["inst"] + [_reg(r) for r in range(k + 1)]
    zero = Const(0)
    tables: list[dict[str, Expr]] = []
    for label, ins in enumerate(prog.instructions):
        nxt = {c: zero for c in comps}
        if isinstance(ins, AddReg):
            nxt["inst"] = Const(1)
            nxt[_reg(ins.j)] = Term(_reg(ins.i))
        elif isinstance(ins, SubReg):
            nxt["inst"] = Const(1)
            nxt[_reg(ins.j)] = -Term(_reg(ins.i))
        elif isinstance(ins, SetConst):
            nxt["inst"] = Const(1)
            nxt[_reg(ins.j)] = Const(ins.a) - Term(_reg(ins.j))
        elif isinstance(ins, JumpIfNonNeg):
            # cond(R_j >= 0, p - inst, 1) is cond(sg(R_j + 1), 1, p - inst)
            nxt["inst"] = cond_expr(Sg(Term(_reg(ins.j)) + 1), Const(1), Const(ins.p) - inst)
        tables.append(nxt)

    selectors: list[Expr] = []
    prefix: Expr = Const(1)
    for label in range(len(prog.instructions)):
        selectors.append(prefix * cosg_expr(inst - label))
        prefix = prefix * Sg(inst - label)

    rhs = []
    for c in comps:
        acc: Optional[Expr] = None
        for label, sel in enumerate(selectors):
            entry = tables[label][c]
            if entry == zero:
                continue
            summand = sel * entry
            acc = summand if acc is None else acc + summand
        rhs.append(zero if acc is None else acc)

    params = tuple(f"x{r}" for r in range(1, k + 1))
    init = [Const(0), Const(0)] + [Term(p) for p in params]
    problem = LOdeProblem(
        rhs=tuple(rhs), init=tuple(init), driver=LENGTH, state=tuple(comps), params=params,
        index="t", name=prog.name or "compiled",
    )
    return CompiledSystem(problem, tuple(tables), prog)


def eval_compiled(c: CompiledSystem, steps: int, inputs: Sequence[int]) -> ValueVector:
    """State after ``steps`` serial rhs applications: the length-ODE at 2^steps."""
    if steps < 0:
        raise ValueError("steps must be >= 0")
    return eval_length_ode(c.problem, 1 << steps, c.bind_inputs(inputs))


def compiled_trajectory(c: CompiledSystem, steps: int, inputs: Sequence[int]):
    """Yield the compiled state after 0, 1, ..., steps applications."""
    yield from length_ode_trajectory(c.problem, steps, c.bind_inputs(inputs))


@dataclass(frozen=True)
class ClockedResult:
    value: int
    halted: bool
    steps: int


def clocked_output(c: CompiledSystem, inputs: Sequence[int], c_exp: int) -> ClockedResult:
    """R_0 after (length(x_1) + ... + length(x_p))^c_exp steps of the compiled system.

    The clock is iterated directly rather than materialising 2^(|x|^2)-style
    arguments.
    """
    if c_exp < 1:
        raise ValueError("clock exponent must be >= 1")
    total = sum(length(v) for v in inputs)
    steps = total ** c_exp
    state = eval_compiled(c, steps, inputs)
    return ClockedResult(state[1], state[0] in c.program.halt_labels(), steps)
