"""Exact integer values, fixed-arity vectors, valuations and the basic
function alphabet (sg, cosg, cond, length)."""

from __future__ import annotations

import re
from collections.abc import Iterable, Iterator, Mapping

__all__ = [
    "ArityError",
    "UnboundTerm",
    "ValueVector",
    "Valuation",
    "sg",
    "cosg",
    "cond",
    "length",
    "bit_length",
    "pow2",
    "parse_value",
    "render_value",
]


class ArityError(ValueError):
    """Componentwise operation on vectors of different arity."""


class UnboundTerm(KeyError):
    """Lookup of a term name that has no binding."""

    def __init__(self, name: str):
        super().__init__(name)
        self.name = name

    def __str__(self) -> str:
        return f"unbound term {self.name!r}"


def sg(x: int) -> int:
    """1 for x > 0, 0 otherwise."""
    return 1 if x > 0 else 0


def cosg(x: int) -> int:
    """1 iff x == 0, computed literally as (1 - sg(x)) * (1 - sg(-x))."""
    return (1 - sg(x)) * (1 - sg(-x))


def cond(x: int, y: int, z: int) -> int:
    """y when x == 0, z otherwise."""
    return z + cosg(x) * (y - z)


def length(x: int) -> int:
    """Number of binary digits of |x|, with length(0) == 1."""
    return abs(x).bit_length() or 1


# Bit length of the magnitude used by growth bookkeeping; same convention.
bit_length = length


def pow2(n: int) -> int:
    """floor(2**n); 0 for negative n."""
    return 1 << n if n >= 0 else 0


_LITERAL = re.compile(r"[+-]?(0[bB][01]+|\d+)\Z")


def parse_value(text: str) -> int:
    """Parse a decimal or 0b-prefixed binary literal, optionally signed."""
    s = text.strip().replace("_", "")
    if not _LITERAL.match(s):
        raise ValueError(f"not an integer literal: {text!r}")
    sign = -1 if s[0] == "-" else 1
    body = s.lstrip("+-")
    if body[:2].lower() == "0b":
        return sign * int(body[2:], 2)
    return sign * int(body, 10)


def render_value(v: int) -> str:
    return str(v)


class ValueVector(tuple):
    """Immutable vector of exact integers.

    ``+``, ``-`` and unary ``-`` are componentwise and require equal arity;
    ``k * v`` scales by an integer.
    """

    __slots__ = ()

    def __new__(cls, components: Iterable[int] = ()):
        comps = tuple(components)
        for c in comps:
            if not isinstance(c, int) or isinstance(c, bool):
                raise TypeError(f"vector components must be int, got {c!r}")
        return super().__new__(cls, comps)

    @classmethod
    def of(cls, value: int | Iterable[int]) -> ValueVector:
        if isinstance(value, ValueVector):
            return value
        if isinstance(value, int):
            return cls((value,))
        return cls(value)

    @property
    def arity(self) -> int:
        return len(self)

    def _check(self, other: tuple) -> None:
        if len(self) != len(other):
            raise ArityError(f"arity mismatch: {len(self)} vs {len(other)}")

    def __add__(self, other):  # type: ignore[override]
        if not isinstance(other, tuple):
            return NotImplemented
        self._check(other)
        return ValueVector(a + b for a, b in zip(self, other))

    def __sub__(self, other):
        if not isinstance(other, tuple):
            return NotImplemented
        self._check(other)
        return ValueVector(a - b for a, b in zip(self, other))

    def __neg__(self):
        return ValueVector(-a for a in self)

    def __mul__(self, k):  # type: ignore[override]
        if not isinstance(k, int):
            return NotImplemented
        return ValueVector(k * a for a in self)

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return f"ValueVector({list(self)!r})"

    def bits(self) -> tuple[int, ...]:
        return tuple(length(a) for a in self)


class Valuation(Mapping):
    """Immutable binding of term names to integers; unbound lookups raise."""

    __slots__ = ("_b",)

    def __init__(self, bindings: Mapping[str, int] | Iterable[tuple[str, int]] = (), **kw: int):
        b = dict(bindings)
        b.update(kw)
        for k, v in b.items():
            if not isinstance(v, int) or isinstance(v, bool):
                raise TypeError(f"binding {k!r} must be int, got {v!r}")
        self._b = b

    def __getitem__(self, name: str) -> int:
        try:
            return self._b[name]
        except KeyError:
            raise UnboundTerm(name) from None

    def __iter__(self) -> Iterator[str]:
        return iter(self._b)

    def __len__(self) -> int:
        return len(self._b)

    def extend(self, other: Mapping[str, int] = (), **kw: int) -> Valuation:
        b = dict(self._b)
        b.update(other)
        b.update(kw)
        return Valuation(b)

    def __repr__(self) -> str:
        return f"Valuation({self._b!r})"

    def __hash__(self) -> int:
        return hash(frozenset(self._b.items()))
