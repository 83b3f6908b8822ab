from fractions import Fraction

import mpmath
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lindtree.coeffalg import BigFloat, CoeffPoly, QNum, parse_scalar, set_prune_exponent

PHI = parse_scalar("(1+sqrt5)/2")

rats = st.fractions(min_value=-20, max_value=20, max_denominator=30)
qnums = st.builds(lambda a, b, c, e: QNum(a, b, c, e, 5), rats, rats, rats, rats)


def test_golden_mean_identities():
    assert PHI * PHI == PHI + 1
    assert PHI.inverse() == PHI - 1
    assert (PHI ** 4) == PHI * 3 + 2
    assert str(PHI) == "1/2 + 1/2*sqrt5"


def test_parse_scalar_forms():
    assert parse_scalar("3/4") == QNum(Fraction(3, 4))
    assert parse_scalar("1+2i") == QNum(1, 0, 2)
    assert parse_scalar("sqrt(5)") == QNum.sqrt(5)
    assert isinstance(parse_scalar("0.1"), BigFloat)
    with pytest.raises(ValueError):
        parse_scalar("")
    with pytest.raises(ValueError):
        parse_scalar("3/")


def test_sqrt_rejects_non_squarefree():
    assert QNum.sqrt(9) == QNum(3)
    with pytest.raises(ValueError):
        QNum.sqrt(12)


def test_exact_sign_of_quadratic_numbers():
    # Lucas and Fibonacci numbers: 843 - 377 sqrt5 = 4/(843 + 377 sqrt5) > 0
    assert QNum(843, -377, 0, 0, 5) > 0
    assert QNum(-843, 377, 0, 0, 5) < 0
    assert QNum(1393, -623, 0, 0, 5) < 0


@given(qnums, qnums, qnums)
def test_field_axioms(a, b, c):
    assert (a + b) * c == a * c + b * c
    assert (a * b).conjugate() == a.conjugate() * b.conjugate()
    if not a.is_zero():
        assert a * a.inverse() == 1


@given(qnums)
def test_bigfloat_agrees_with_exact(a):
    z = complex(a)
    b = a.to_big(128)
    assert abs(complex(b) - z) <= 1e-12 * max(1.0, abs(z))


def _poly(d, coeffs):
    p = CoeffPoly.zero(d)
    for i, v in enumerate(coeffs):
        exps = [(i >> k) & 1 for k in range(2 * d)]
        p = p + CoeffPoly.monomial(d, exps, v)
    return p


polys = st.lists(qnums, min_size=1, max_size=6).map(lambda cs: _poly(2, cs))
amps = st.lists(st.fractions(min_value=-2, max_value=2, max_denominator=8), min_size=2, max_size=2)


@settings(max_examples=40)
@given(polys, polys, amps)
def test_evaluation_is_a_ring_homomorphism(p, q, c):
    assert (p * q).evaluate(c) == p.evaluate(c) * q.evaluate(c)
    assert (p + q).evaluate(c) == p.evaluate(c) + q.evaluate(c)


@settings(max_examples=40)
@given(polys)
def test_serialization_round_trip(p):
    assert CoeffPoly.parse(2, str(p)) == p


@given(polys)
def test_conjugation_swaps_symbols(p):
    c = [Fraction(1, 3), Fraction(-2, 5)]
    assert p.conjugate().evaluate(c) == p.evaluate(c).conjugate()


def test_symbol_division():
    d = 1
    p = CoeffPoly.symbol(d, 1, 1) * CoeffPoly.symbol(d, 1, -1)
    assert p.divide_symbol(1, 1) == CoeffPoly.symbol(d, 1, -1)
    assert p.is_modulus_only()
    assert not CoeffPoly.symbol(d, 1, 1, 2).is_modulus_only()
    with pytest.raises(ArithmeticError):
        CoeffPoly.symbol(d, 1, 1).divide_symbol(1, -1)


def test_bigfloat_pruning_threshold():
    x = BigFloat(mpmath.mpf(2) ** -200, 256)
    assert x.is_zero()
    set_prune_exponent(Fraction(1))
    try:
        assert not x.is_zero()
    finally:
        set_prune_exponent(Fraction(1, 2))


def test_mixed_precision_rounds_down():
    a = BigFloat(1, 256)
    b = BigFloat(3, 80)
    assert (a / b).prec == 80
