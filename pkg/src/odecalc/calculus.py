"""Discrete calculus over exact integers.

A sequence function is any callable ``f(x, env)`` returning an int or an
iterable of ints; results are normalised to :class:`ValueVector`.
"""

from __future__ import annotations

from collections.abc import Callable
from typing import Union

from .numeric import Valuation, ValueVector

__all__ = [
    "SequenceFn",
    "derivative",
    "integral",
    "falling_power",
    "falling_exponential",
    "integral_param_derivative",
]

SequenceFn = Callable[[int, Valuation], Union[int, ValueVector, tuple]]
TwoIndexFn = Callable[[int, int, Valuation], Union[int, ValueVector, tuple]]

_EMPTY = Valuation()


def _vec(v) -> ValueVector:
    return ValueVector.of(v)


def derivative(f: SequenceFn, x: int, env: Valuation = _EMPTY) -> ValueVector:
    """Forward difference f(x+1) - f(x)."""
    if x < 0:
        raise ValueError("derivative is defined for x >= 0")
    return _vec(f(x + 1, env)) - _vec(f(x, env))


def integral(f: SequenceFn, a: int, b: int, env: Valuation = _EMPTY) -> ValueVector:
    """Sum of f(x) for a <= x < b; zero when a == b; sign flip when a > b."""
    if a > b:
        return -integral(f, b, a, env)
    acc: ValueVector | None = None
    for x in range(a, b):
        v = _vec(f(x, env))
        acc = v if acc is None else acc + v
    if acc is None:
        # arity of an empty sum: probe one point so vector integrands stay vectors
        return _vec(f(a, env)) * 0
    return acc


def falling_power(x: int, m: int) -> int:
    """x (x-1) ... (x-m+1); 1 for m == 0."""
    if m < 0:
        raise ValueError("falling power needs m >= 0")
    p = 1
    for k in range(m):
        p *= x - k
    return p


def falling_exponential(U: SequenceFn, x: int, env: Valuation = _EMPTY) -> int:
    """Product of (1 + U'(t)) for t = 0 .. x-1 (empty product is 1).

    ``U`` must be scalar. Negative ``x`` is rejected.
    """
    if x < 0:
        raise ValueError("falling exponential is defined for x >= 0")
    p = 1
    prev = _scalar(U(0, env))
    for t in range(x):
        nxt = _scalar(U(t + 1, env))
        p *= 1 + (nxt - prev)
        prev = nxt
    return p


def _scalar(v) -> int:
    if isinstance(v, int):
        return v
    vec = _vec(v)
    if len(vec) != 1:
        raise ValueError("falling exponential needs a scalar function")
    return vec[0]


def integral_param_derivative(
    f: TwoIndexFn,
    a: Callable[[int, Valuation], int],
    b: Callable[[int, Valuation], int],
    x: int,
    env: Valuation = _EMPTY,
) -> ValueVector:
    """Derivative at x of F(x) = integral of f(x, t) dt over [a(x), b(x)).

    Evaluated as the three-term sum: the integral of the partial difference
    in x, plus the two boundary corrections for moving a and b.
    """
    if x < 0:
        raise ValueError("x must be >= 0")
    ax, bx = a(x, env), b(x, env)
    ax1, bx1 = a(x + 1, env), b(x + 1, env)
    partial = integral(lambda t, e: _vec(f(x + 1, t, e)) - _vec(f(x, t, e)), ax, bx, env)
    lower = integral(lambda t, e: f(x + 1, ax1 + t, e), 0, -(ax1 - ax), env)
    upper = integral(lambda t, e: f(x + 1, bx + t, e), 0, bx1 - bx, env)
    return partial + lower + upper
