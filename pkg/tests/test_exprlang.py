import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from modeswitch.exprlang import (Abs, Add, Const, Mul, Neg, ParseError, Pow,
                                 Sub, Var, evaluate, growth_degree, parse,
                                 to_source)


# ---------------------------------------------------------------------------
# parsing

def test_parse_cost_expression_structure():
    tree = parse("0.5*|x| + 0.1")
    assert isinstance(tree, Add)
    assert isinstance(tree.left, Mul)
    assert isinstance(tree.left.right, Abs)
    assert tree.right == Const(0.1)


def test_parse_single_variable():
    assert parse("x") == Var()


def test_parse_profit_expression_structure():
    tree = parse("x^2 + 1")
    assert tree == Add(Pow(Var(), 2), Const(1.0))


def test_parse_precedence():
    # ^ binds tighter than *, which binds tighter than +/-
    assert parse("2*x^2 + 1") == Add(Mul(Const(2.0), Pow(Var(), 2)), Const(1.0))
    assert parse("-x^2") == Neg(Pow(Var(), 2))


def test_parse_parentheses_and_nested_abs():
    assert evaluate(parse("(x + 1)*(x - 1)"), 3.0) == 8.0
    assert evaluate(parse("||x| - 2|"), -1.0) == 1.0


def test_parse_scientific_notation():
    assert evaluate(parse("1.5e-3*x"), 2.0) == pytest.approx(3e-3)


@pytest.mark.parametrize("source,offset", [
    ("x +", 3),
    ("x ^ -2", 4),
    ("x^2.5", 2),
    ("x y", 2),
    ("(x", 2),
    ("|x", 2),
    ("", 0),
    ("x/2", 1),
])
def test_parse_errors_carry_offsets(source, offset):
    with pytest.raises(ParseError) as err:
        parse(source)
    assert err.value.offset == offset


# ---------------------------------------------------------------------------
# evaluation

def test_evaluate_examples():
    assert evaluate(parse("0.5*|x| + 0.1"), 2.0) == 1.1
    assert evaluate(parse("x^2 + 1"), -3.0) == 10.0
    assert evaluate(parse("x"), 7.5) == 7.5


def test_evaluate_vectorized():
    xs = np.array([-2.0, 0.0, 1.0, 3.0])
    got = evaluate(parse("0.5*x^2 - 0.3*x + 1"), xs)
    np.testing.assert_array_equal(got, 0.5 * xs ** 2 - 0.3 * xs + 1)


def test_evaluate_saturates_instead_of_raising():
    with np.errstate(over="ignore"):
        big = evaluate(parse("x^3"), 1e300)
    assert big == np.inf


# ---------------------------------------------------------------------------
# growth degree

@pytest.mark.parametrize("source,degree", [
    ("x^2 + 1", 2),
    ("0.5*|x| + 0.1", 1),
    ("3", 0),
    ("x*x*x", 3),
    ("(x^2 + 1)^3", 6),
    ("-|x|", 1),
])
def test_growth_degree(source, degree):
    assert growth_degree(parse(source)) == degree


# ---------------------------------------------------------------------------
# property tests

_consts = st.floats(min_value=-50.0, max_value=50.0,
                    allow_nan=False, allow_infinity=False).map(
    lambda v: Const(float(v)))


def _trees():
    return st.recursive(
        st.one_of(_consts, st.just(Var())),
        lambda kids: st.one_of(
            kids.map(Abs),
            kids.map(Neg),
            st.tuples(kids, st.integers(0, 3)).map(lambda t: Pow(*t)),
            st.tuples(kids, kids).map(lambda t: Add(*t)),
            st.tuples(kids, kids).map(lambda t: Sub(*t)),
            st.tuples(kids, kids).map(lambda t: Mul(*t)),
        ),
        max_leaves=10,
    )


@settings(max_examples=120, deadline=None)
@given(_trees(), st.integers(0, 2 ** 32 - 1))
def test_print_parse_roundtrip_is_value_exact(tree, seed):
    reparsed = parse(to_source(tree))
    xs = np.random.Generator(np.random.Philox(key=seed)).uniform(-100, 100, 100)
    for x in xs:
        a = evaluate(tree, float(x))
        b = evaluate(reparsed, float(x))
        assert a == b or (np.isnan(a) and np.isnan(b))


@settings(max_examples=120, deadline=None)
@given(_trees(), st.floats(min_value=-1e6, max_value=1e6,
                           allow_nan=False, allow_infinity=False))
def test_evaluate_is_total(tree, x):
    value = evaluate(tree, float(x))
    assert isinstance(value, float)


@settings(max_examples=100, deadline=None)
@given(_trees())
def test_growth_degree_bounds_asymptotic_growth(tree):
    d = growth_degree(tree)
    # fit the constant on |x| in {10, 100}, check at |x| = 1000 with slack
    fit = max(abs(float(evaluate(tree, s * x))) / (1.0 + x ** d)
              for x in (10.0, 100.0) for s in (-1.0, 1.0))
    for s in (-1.0, 1.0):
        val = abs(float(evaluate(tree, s * 1000.0)))
        assert val <= 2.0 * fit * (1.0 + 1000.0 ** d) + 1e-9
