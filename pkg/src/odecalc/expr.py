"""sg-polynomial expressions: AST, parser, renderer, evaluation and the
sg-aware degree analysis behind essential constancy / linearity.

Grammar::

    expr   := term (('+' | '-') term)*
    term   := factor ('*' factor)*
    factor := INT | IDENT | 'sg' '(' expr ')' | '(' expr ')' | '-' factor
    IDENT  := [A-Za-z_][A-Za-z0-9_.]*      INT := decimal | 0b-binary

``sg`` is reserved. When a parser is given a function table, ``IDENT '('
args ')'`` additionally produces :class:`Call` nodes; calls are only used for
auxiliary definitions and are rejected by the degree analysis.
"""

from __future__ import annotations

import re
from collections.abc import Callable, Collection, Iterable, Mapping, Sequence
from dataclasses import dataclass
from typing import Union

from .numeric import Valuation, parse_value, sg

__all__ = [
    "Expr",
    "Const",
    "Term",
    "Add",
    "Sub",
    "Mul",
    "Sg",
    "Call",
    "ExprSyntaxError",
    "UnknownIdentifier",
    "NotEssentiallyLinear",
    "LinearDecomposition",
    "parse",
    "render",
    "evaluate",
    "compile_expr",
    "terms_of",
    "degree",
    "is_essentially_constant",
    "is_essentially_linear",
    "linear_decompose",
    "as_expr",
    "cosg_expr",
    "cond_expr",
]


class Expr:
    """Base class of expression nodes. Supports ``+ - *`` with ints/Exprs."""

    __slots__ = ()

    def __add__(self, other):
        return Add(self, as_expr(other))

    def __radd__(self, other):
        return Add(as_expr(other), self)

    def __sub__(self, other):
        return Sub(self, as_expr(other))

    def __rsub__(self, other):
        return Sub(as_expr(other), self)

    def __mul__(self, other):
        return Mul(self, as_expr(other))

    def __rmul__(self, other):
        return Mul(as_expr(other), self)

    def __neg__(self):
        if isinstance(self, Const):
            return Const(-self.value)
        return Mul(Const(-1), self)

    def __str__(self) -> str:
        return render(self)


@dataclass(frozen=True, eq=True)
class Const(Expr):
    value: int


@dataclass(frozen=True, eq=True)
class Term(Expr):
    name: str


@dataclass(frozen=True, eq=True)
class Add(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True, eq=True)
class Sub(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True, eq=True)
class Mul(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True, eq=True)
class Sg(Expr):
    arg: Expr


@dataclass(frozen=True, eq=True)
class Call(Expr):
    """Application of a named auxiliary function (not an sg-polynomial node)."""

    name: str
    args: tuple[Expr, ...]


ExprLike = Union[Expr, int, str]


def as_expr(v: ExprLike) -> Expr:
    if isinstance(v, Expr):
        return v
    if isinstance(v, bool):
        raise TypeError("bool is not an expression")
    if isinstance(v, int):
        return Const(v)
    if isinstance(v, str):
        return parse(v)
    raise TypeError(f"cannot convert {v!r} to Expr")


def cosg_expr(e: ExprLike) -> Expr:
    """(1 - sg(e)) * (1 - sg(-e)): 1 iff e == 0."""
    e = as_expr(e)
    return Mul(Sub(Const(1), Sg(e)), Sub(Const(1), Sg(-e)))


def cond_expr(x: ExprLike, y: ExprLike, z: ExprLike) -> Expr:
    """z + cosg(x) * (y - z): y when x == 0, z otherwise."""
    y, z = as_expr(y), as_expr(z)
    return Add(z, Mul(cosg_expr(x), Sub(y, z)))


# ---------------------------------------------------------------- parsing


class ExprSyntaxError(ValueError):
    def __init__(self, msg: str, line: int, col: int):
        super().__init__(f"{msg} at line {line}, column {col}")
        self.msg = msg
        self.line = line
        self.col = col


class UnknownIdentifier(ExprSyntaxError):
    def __init__(self, name: str, line: int, col: int):
        super().__init__(f"unknown identifier {name!r}", line, col)
        self.name = name


_TOKEN = re.compile(
    r"(?P<ws>[ \t\r\n]+)|(?P<int>0[bB][01]+|\d+)|(?P<ident>[A-Za-z_][A-Za-z0-9_.]*)"
    r"|(?P<op>[-+*(),])"
)


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Tok]:
    toks: list[_Tok] = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "ws":
            chunk = m.group()
            nl = chunk.count("\n")
            if nl:
                line += nl
                line_start = pos + chunk.rfind("\n") + 1
        else:
            toks.append(_Tok(kind, m.group(), line, pos - line_start + 1))
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


class _Parser:
    def __init__(self, text: str, known: Collection[str] | None, functions: Collection[str]):
        self.toks = _tokenize(text)
        self.i = 0
        self.known = known
        self.functions = functions

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def take(self) -> _Tok:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, text: str) -> _Tok:
        tok = self.take()
        if tok.text != text:
            what = "end of input" if tok.kind == "eof" else repr(tok.text)
            raise ExprSyntaxError(f"expected {text!r}, found {what}", tok.line, tok.col)
        return tok

    def parse(self) -> Expr:
        e = self.expr()
        tok = self.peek()
        if tok.kind != "eof":
            raise ExprSyntaxError(f"unexpected {tok.text!r}", tok.line, tok.col)
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.peek().text in ("+", "-"):
            op = self.take().text
            rhs = self.term()
            e = Add(e, rhs) if op == "+" else Sub(e, rhs)
        return e

    def term(self) -> Expr:
        e = self.factor()
        while self.peek().text == "*":
            self.take()
            e = Mul(e, self.factor())
        return e

    def factor(self) -> Expr:
        tok = self.take()
        if tok.kind == "int":
            return Const(parse_value(tok.text))
        if tok.text == "-":
            inner = self.factor()
            return -inner
        if tok.text == "(":
            e = self.expr()
            self.expect(")")
            return e
        if tok.kind == "ident":
            if tok.text == "sg":
                self.expect("(")
                e = self.expr()
                self.expect(")")
                return Sg(e)
            if self.peek().text == "(" and tok.text in self.functions:
                self.take()
                args = [self.expr()]
                while self.peek().text == ",":
                    self.take()
                    args.append(self.expr())
                self.expect(")")
                return Call(tok.text, tuple(args))
            if self.peek().text == "(":
                raise UnknownIdentifier(tok.text, tok.line, tok.col)
            if self.known is not None and tok.text not in self.known:
                raise UnknownIdentifier(tok.text, tok.line, tok.col)
            return Term(tok.text)
        what = "end of input" if tok.kind == "eof" else repr(tok.text)
        raise ExprSyntaxError(f"unexpected {what}", tok.line, tok.col)


def parse(
    text: str,
    terms: Collection[str] | None = None,
    functions: Collection[str] = (),
) -> Expr:
    """Parse ``text``. With ``terms``, identifiers outside it are rejected."""
    return _Parser(text, terms, functions).parse()


# -------------------------------------------------------------- rendering

_PREC = {Add: 1, Sub: 1, Mul: 2}


def render(e: Expr) -> str:
    """Canonical text; ``parse(render(e)) == e`` for every Expr."""
    if isinstance(e, Const):
        return str(e.value)
    if isinstance(e, Term):
        return e.name
    if isinstance(e, Sg):
        return f"sg({render(e.arg)})"
    if isinstance(e, Call):
        return f"{e.name}({', '.join(render(a) for a in e.args)})"
    p = _PREC[type(e)]
    left = render(e.left)
    if _PREC.get(type(e.left), 3) < p:
        left = f"({left})"
    right = render(e.right)
    if _PREC.get(type(e.right), 3) <= p:
        right = f"({right})"
    op = {Add: "+", Sub: "-", Mul: "*"}[type(e)]
    return f"{left} {op} {right}"


# ------------------------------------------------------------- evaluation

Functions = Mapping[str, Callable[..., int]]


def evaluate(e: Expr, env: Mapping[str, int], functions: Functions | None = None) -> int:
    """Exact value of ``e`` under ``env``. Unbound terms raise UnboundTerm."""
    if not isinstance(env, Valuation):
        env = Valuation(env)
    # explicit stack: compiled systems can nest deeper than the recursion limit
    out: list[int] = []
    stack: list[tuple[Expr, bool]] = [(e, False)]
    while stack:
        node, ready = stack.pop()
        if isinstance(node, Const):
            out.append(node.value)
        elif isinstance(node, Term):
            out.append(env[node.name])
        elif not ready:
            stack.append((node, True))
            if isinstance(node, Sg):
                stack.append((node.arg, False))
            elif isinstance(node, Call):
                for a in reversed(node.args):
                    stack.append((a, False))
            else:
                stack.append((node.right, False))
                stack.append((node.left, False))
        elif isinstance(node, Sg):
            out.append(sg(out.pop()))
        elif isinstance(node, Call):
            n = len(node.args)
            args = out[len(out) - n:]
            del out[len(out) - n:]
            if functions is None or node.name not in functions:
                raise KeyError(f"no auxiliary function {node.name!r}")
            out.append(functions[node.name](*args))
        else:
            b = out.pop()
            a = out.pop()
            if isinstance(node, Add):
                out.append(a + b)
            elif isinstance(node, Sub):
                out.append(a - b)
            else:
                out.append(a * b)
    return out[0]


def emit_code(
    roots: Sequence[Expr],
    term_src: Callable[[str], str],
    functions: Functions | None = None,
    prefix: str = "v",
    consts: dict[str, object] | None = None,
) -> tuple[list[str], list[str]]:
    """Straight-line Python statements computing ``roots``.

    Returns (lines, result variable names). Terms are rendered with
    ``term_src``; helper objects (``_sg`` and called functions) are added to
    ``consts``, which becomes the namespace of the generated code.
    """
    lines: list[str] = []
    names: dict[int, str] = {}
    consts = {} if consts is None else consts
    consts["_sg"] = sg
    fns = dict(functions or {})

    def emit(node: Expr) -> str:
        key = id(node)
        if key in names:
            return names[key]
        # iterative post-order
        stack: list[tuple[Expr, bool]] = [(node, False)]
        while stack:
            n, ready = stack.pop()
            if id(n) in names:
                continue
            kids: tuple[Expr, ...]
            if isinstance(n, (Const, Term)):
                kids = ()
            elif isinstance(n, Sg):
                kids = (n.arg,)
            elif isinstance(n, Call):
                kids = n.args
            else:
                kids = (n.left, n.right)
            if not ready and any(id(k) not in names for k in kids):
                stack.append((n, True))
                for k in reversed(kids):
                    if id(k) not in names:
                        stack.append((k, False))
                continue
            var = f"{prefix}{len(names)}"
            if isinstance(n, Const):
                src = repr(n.value)
            elif isinstance(n, Term):
                src = term_src(n.name)
            elif isinstance(n, Sg):
                src = f"_sg({names[id(n.arg)]})"
            elif isinstance(n, Call):
                if n.name not in fns:
                    raise KeyError(f"no auxiliary function {n.name!r}")
                fname = f"_fn_{n.name}"
                consts[fname] = fns[n.name]
                src = f"{fname}({', '.join(names[id(a)] for a in n.args)})"
            else:
                op = {Add: "+", Sub: "-", Mul: "*"}[type(n)]
                src = f"{names[id(n.left)]} {op} {names[id(n.right)]}"
            lines.append(f"{var} = {src}")
            names[id(n)] = var
        return names[key]

    return lines, [emit(r) for r in roots]


def compile_expr(
    exprs: Expr | Sequence[Expr], functions: Functions | None = None
) -> Callable[[Mapping[str, int]], object]:
    """Compile one Expr (or a sequence) into a Python function of an env.

    Straight-line code with one temporary per distinct node, so nesting
    depth never matters. For a sequence the function returns a tuple.
    """
    single = isinstance(exprs, Expr)
    roots = [exprs] if single else list(exprs)
    consts: dict[str, object] = {}
    lines, results = emit_code(roots, lambda name: f"_env[{name!r}]", functions, consts=consts)
    ret = results[0] if single else "(" + "".join(f"{r}, " for r in results) + ")"
    body = "".join(f"    {line}\n" for line in lines)
    src = "def _compiled(_env):\n" + body + f"    return {ret}\n"
    code = compile(src, "<odecalc-expr>", "exec")
    namespace = dict(consts)
    exec(code, namespace)
    fn = namespace["_compiled"]

    def run(env: Mapping[str, int]):
        if not isinstance(env, Valuation):
            env = Valuation(env)
        return fn(env)

    run.source = src  # type: ignore[attr-defined]
    return run


# ------------------------------------------------------- degree analysis


def terms_of(e: Expr) -> set[str]:
    found: set[str] = set()
    stack = [e]
    while stack:
        n = stack.pop()
        if isinstance(n, Term):
            found.add(n.name)
        elif isinstance(n, Sg):
            stack.append(n.arg)
        elif isinstance(n, Call):
            stack.extend(n.args)
        elif isinstance(n, (Add, Sub, Mul)):
            stack.extend((n.left, n.right))
    return found


def degree(e: Expr, t: str | Collection[str]) -> int:
    """sg-aware degree of ``e`` in term ``t`` (or jointly in a set of terms).

    deg(t, t) = 1; other terms and constants 0; max over + and -; sum over
    *; 0 under sg.
    """
    targets = {t} if isinstance(t, str) else set(t)
    memo: dict[int, int] = {}

    def go(n: Expr) -> int:
        k = id(n)
        if k in memo:
            return memo[k]
        if isinstance(n, Term):
            d = 1 if n.name in targets else 0
        elif isinstance(n, (Const, Sg)):
            d = 0
        elif isinstance(n, (Add, Sub)):
            d = max(go(n.left), go(n.right))
        elif isinstance(n, Mul):
            d = go(n.left) + go(n.right)
        elif isinstance(n, Call):
            raise TypeError(f"{n.name}(...) is not an sg-polynomial node")
        else:
            raise TypeError(f"not an expression: {n!r}")
        memo[k] = d
        return d

    return go(e)


def _entries(m) -> Iterable[Expr]:
    if isinstance(m, Expr):
        yield m
        return
    for row in m:
        yield from _entries(row)


def is_essentially_constant(m: Expr | Sequence, t: str | Collection[str]) -> bool:
    """True iff every entry of ``m`` has degree 0 in ``t``."""
    return all(degree(e, t) == 0 for e in _entries(m))


def is_essentially_linear(m: Expr | Sequence, t: str | Collection[str]) -> bool:
    """True iff every entry of ``m`` has degree at most 1 in ``t``."""
    return all(degree(e, t) <= 1 for e in _entries(m))


class NotEssentiallyLinear(ValueError):
    """An entry is not essentially linear in the pivot terms."""

    def __init__(self, entry: int, expr: Expr, term: str, degree: int, witness: Expr):
        super().__init__(
            f"entry {entry} is not essentially linear: deg({term}) = {degree} "
            f"in {render(witness)}"
        )
        self.entry = entry
        self.expr = expr
        self.term = term
        self.degree = degree
        self.witness = witness


@dataclass(frozen=True)
class LinearDecomposition:
    """``entries[i] == sum_j q1[i][j] * pivots[j] + q2[i]`` on every valuation."""

    q1: tuple[tuple[Expr, ...], ...]
    q2: tuple[Expr, ...]
    pivots: tuple[str, ...]

    def reconstruct(self) -> tuple[Expr, ...]:
        out = []
        for row, b in zip(self.q1, self.q2):
            acc: Expr = b
            for coef, p in zip(row, self.pivots):
                acc = _add(acc, _mul(coef, Term(p)))
            out.append(acc)
        return tuple(out)


_ZERO, _ONE = Const(0), Const(1)


def _add(a: Expr, b: Expr) -> Expr:
    if a == _ZERO:
        return b
    if b == _ZERO:
        return a
    return Add(a, b)


def _sub(a: Expr, b: Expr) -> Expr:
    if b == _ZERO:
        return a
    if a == _ZERO:
        return -b
    return Sub(a, b)


def _mul(a: Expr, b: Expr) -> Expr:
    if a == _ZERO or b == _ZERO:
        return _ZERO
    if a == _ONE:
        return b
    if b == _ONE:
        return a
    return Mul(a, b)


def linear_decompose(entries: Expr | Sequence[Expr], pivots: Sequence[str]) -> LinearDecomposition:
    """Split each entry as Q1 . pivots + Q2 with Q1, Q2 free of pivots.

    Products are distributed only as far as needed to pull out a pivot
    factor; nothing under sg is touched. An entry whose joint degree in the
    pivots exceeds 1 raises :class:`NotEssentiallyLinear`.
    """
    if isinstance(entries, Expr):
        entries = [entries]
    pivots = tuple(pivots)
    pset = set(pivots)
    q1_rows, q2 = [], []
    for idx, entry in enumerate(entries):
        memo: dict[int, tuple[dict[str, Expr], Expr]] = {}

        def split(n: Expr) -> tuple[dict[str, Expr], Expr]:
            k = id(n)
            if k in memo:
                return memo[k]
            if isinstance(n, Term) and n.name in pset:
                r: tuple[dict[str, Expr], Expr] = ({n.name: _ONE}, _ZERO)
            elif isinstance(n, (Const, Term, Sg)):
                r = ({}, n)
            elif isinstance(n, (Add, Sub)):
                (ca, ka), (cb, kb) = split(n.left), split(n.right)
                comb = _add if isinstance(n, Add) else _sub
                coeffs = {p: comb(ca.get(p, _ZERO), cb.get(p, _ZERO)) for p in set(ca) | set(cb)}
                if ka is n.left and kb is n.right and not coeffs:
                    r = ({}, n)
                else:
                    r = (coeffs, comb(ka, kb))
            elif isinstance(n, Mul):
                (ca, ka), (cb, kb) = split(n.left), split(n.right)
                if ca and cb:
                    involved = sorted(set(ca) | set(cb))
                    if len(involved) == 1:
                        term, deg = involved[0], degree(entry, involved[0])
                    else:
                        term, deg = "*".join(involved), degree(entry, pset)
                    raise NotEssentiallyLinear(idx, entry, term, deg, n)
                if ca:
                    r = ({p: _mul(c, kb) for p, c in ca.items()}, _mul(ka, kb))
                elif cb:
                    r = ({p: _mul(ka, c) for p, c in cb.items()}, _mul(ka, kb))
                else:
                    r = ({}, n)
            else:
                raise TypeError(f"not an sg-polynomial node: {n!r}")
            memo[k] = r
            return r

        coeffs, const = split(entry)
        q1_rows.append(tuple(coeffs.get(p, _ZERO) for p in pivots))
        q2.append(const)
    return LinearDecomposition(tuple(q1_rows), tuple(q2), pivots)
