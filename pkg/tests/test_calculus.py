import random

import pytest
from hypothesis import given, settings, strategies as st

from odecalc.calculus import (
    derivative,
    falling_exponential,
    falling_power,
    integral,
    integral_param_derivative,
)
from odecalc.numeric import Valuation, ValueVector


def poly(coeffs):
    return lambda x, env=None: sum(c * x**k for k, c in enumerate(coeffs))


coeff_lists = st.lists(st.integers(-20, 20), min_size=1, max_size=5)


def test_derivative_examples():
    assert derivative(lambda x, e: x * x, 3) == ValueVector([7])
    assert derivative(lambda x, e: 2**x, 4) == ValueVector([16])
    assert derivative(lambda x, e: 11, 99) == ValueVector([0])


def test_derivative_vector_and_domain():
    assert derivative(lambda x, e: (x, x * x), 2) == ValueVector([1, 5])
    with pytest.raises(ValueError):
        derivative(lambda x, e: x, -1)


def test_integral_examples():
    assert integral(lambda x, e: x, 0, 4) == ValueVector([6])
    assert integral(lambda x, e: x**3, 7, 7) == ValueVector([0])
    assert integral(lambda x, e: 1, 5, 2) == ValueVector([-3])


def test_empty_integral_keeps_arity():
    assert integral(lambda x, e: (x, 1), 3, 3) == ValueVector([0, 0])


def test_integral_reads_env():
    env = Valuation({"k": 3})
    assert integral(lambda x, e: e["k"] * x, 0, 3, env) == ValueVector([9])


def test_falling_power_examples():
    assert falling_power(5, 3) == 60
    assert falling_power(12345, 0) == 1
    assert falling_power(3, 5) == 0
    with pytest.raises(ValueError):
        falling_power(3, -1)


def test_falling_exponential_examples():
    assert falling_exponential(lambda x, e: x, 5) == 32
    assert falling_exponential(lambda x, e: x**7 - 3, 0) == 1
    assert falling_exponential(lambda x, e: x * x, 3) == 48
    with pytest.raises(ValueError):
        falling_exponential(lambda x, e: x, -1)


def test_integral_param_derivative_examples():
    f = lambda x, t, e: t
    assert integral_param_derivative(f, lambda x, e: 0, lambda x, e: x, 3) == ValueVector([3])
    g = lambda x, t, e: x
    assert integral_param_derivative(g, lambda x, e: 2, lambda x, e: 9, 4) == ValueVector([7])
    h = lambda x, t, e: t * t
    assert integral_param_derivative(h, lambda x, e: 2, lambda x, e: 9, 4) == ValueVector([0])


@given(coeff_lists, st.integers(0, 64), st.integers(0, 64))
def test_fundamental_theorem(cs, a, b):
    F = poly(cs)
    lhs = integral(lambda x, e: derivative(F, x, e), a, b)
    assert lhs == ValueVector([F(b) - F(a)])


@given(coeff_lists, coeff_lists, st.integers(-5, 5), st.integers(-5, 5), st.integers(0, 50))
def test_derivative_is_linear(fc, gc, a, b, x):
    f, g = poly(fc), poly(gc)
    combo = derivative(lambda t, e: a * f(t) + b * g(t), x)
    assert combo == a * derivative(f, x) + b * derivative(g, x)


@given(coeff_lists, coeff_lists, st.integers(0, 50))
def test_product_rule(fc, gc, x):
    f, g = poly(fc), poly(gc)
    d = lambda h: derivative(h, x)[0]
    fg = d(lambda t, e: f(t) * g(t))
    assert fg == d(f) * g(x + 1) + f(x) * d(g)
    assert fg == f(x + 1) * d(g) + d(f) * g(x)


@given(st.integers(1, 8), st.integers(0, 64))
def test_falling_power_derivative(m, x):
    assert derivative(lambda t, e: falling_power(t, m), x)[0] == m * falling_power(x, m - 1)


@given(coeff_lists, st.integers(0, 32))
def test_falling_exponential_derivative(cs, x):
    U = poly(cs)
    E = lambda t, e: falling_exponential(U, t)
    assert derivative(E, x)[0] == derivative(U, x)[0] * E(x, None)


@settings(max_examples=60)
@given(st.integers(0, 2**32), st.integers(0, 20))
def test_integral_param_derivative_matches_direct(seed, x):
    rng = random.Random(seed)
    c = [rng.randint(-4, 4) for _ in range(4)]
    ka, kb = rng.randint(-2, 2), rng.randint(-2, 3)
    a0, b0 = rng.randint(0, 5), rng.randint(0, 8)
    f = lambda s, t, e: c[0] + c[1] * s + c[2] * t + c[3] * s * t
    a = lambda s, e: a0 + ka * s
    b = lambda s, e: b0 + kb * s
    F = lambda s, e: integral(lambda t, e2: f(s, t, e2), a(s, e), b(s, e), e)
    assert integral_param_derivative(f, a, b, x) == derivative(F, x)
