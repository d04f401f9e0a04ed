import pytest
from hypothesis import given, strategies as st

from odecalc.numeric import (
    ArityError,
    UnboundTerm,
    Valuation,
    ValueVector,
    cond,
    cosg,
    length,
    parse_value,
    pow2,
    render_value,
    sg,
)

ints = st.integers(min_value=-(2**80), max_value=2**80)


@pytest.mark.parametrize("x, want", [(5, 1), (0, 0), (-3, 0)])
def test_sg(x, want):
    assert sg(x) == want


@pytest.mark.parametrize("x, want", [(0, 1), (7, 0), (-7, 0)])
def test_cosg(x, want):
    assert cosg(x) == want


@pytest.mark.parametrize("x, want", [(0, 4), (1, 9), (-2, 9)])
def test_cond(x, want):
    assert cond(x, 4, 9) == want


def _halvings(n):
    n, c = abs(n), 0
    while n:
        n //= 2
        c += 1
    return max(c, 1)


@pytest.mark.parametrize("x, want", [(5, 3), (0, 1), (-8, 4)])
def test_length(x, want):
    assert length(x) == want


@given(ints)
def test_length_matches_halving_and_is_even(x):
    assert length(x) == _halvings(x) == length(-x)


@given(st.integers(min_value=1, max_value=2**200))
def test_length_brackets(x):
    assert 2 ** (length(x) - 1) <= x < 2 ** length(x)


@given(ints)
def test_sg_cosg_partition(x):
    assert sg(x) * cosg(x) == 0
    if x >= 0:
        assert sg(x) + cosg(x) == 1


@given(ints, ints, ints)
def test_cond_picks_a_branch(x, y, z):
    assert cond(x, y, z) == (y if x == 0 else z)


def test_pow2():
    assert [pow2(n) for n in (-2, -1, 0, 1, 10)] == [0, 0, 1, 2, 1024]


@pytest.mark.parametrize("text, want", [("42", 42), ("-17", -17), ("0b101", 5), ("-0b11", -3), ("+0", 0)])
def test_parse_value(text, want):
    assert parse_value(text) == want


@pytest.mark.parametrize("text", ["", "0x10", "1.5", "0b", "abc", "--1"])
def test_parse_value_rejects(text):
    with pytest.raises(ValueError):
        parse_value(text)


@given(ints)
def test_value_round_trip(v):
    assert parse_value(render_value(v)) == v
    assert parse_value(("-" if v < 0 else "") + bin(abs(v))) == v


def test_vector_ops():
    a, b = ValueVector([1, 2]), ValueVector([10, -3])
    assert a + b == ValueVector([11, -1])
    assert a - b == ValueVector([-9, 5])
    assert -a == ValueVector([-1, -2])
    assert 3 * a == a * 3 == ValueVector([3, 6])
    assert ValueVector.of(4).arity == 1
    assert ValueVector([0, -8]).bits() == (1, 4)


def test_vector_arity_mismatch():
    with pytest.raises(ArityError):
        ValueVector([1]) + ValueVector([1, 2])


def test_vector_rejects_non_int():
    with pytest.raises(TypeError):
        ValueVector([1.5])


def test_valuation_unbound_is_error():
    v = Valuation({"x": 1})
    assert v["x"] == 1
    with pytest.raises(UnboundTerm) as e:
        v["y"]
    assert e.value.name == "y"
    assert v.extend({"y": 2})["y"] == 2
    assert "y" not in v
