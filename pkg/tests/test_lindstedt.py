import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lindtree.coeffalg import CoeffPoly, QNum, parse_scalar
from lindtree.lindstedt import ResonanceError, check_invariants, solve_up_to
from lindtree.model import model_from_dict

from conftest import FIXTURES, model, table

SQ5 = QNum.sqrt(5)


def test_sysA_second_order_oracle():
    ref = json.loads((FIXTURES / "sysA_order2.json").read_text())
    t = table("sysA", 2)
    for k, text in ref["eta"].items():
        assert t.eta_c(int(k), 1) == CoeffPoly.parse(1, text)
    for nu, text in ref["x1"].items():
        assert t.xc(1, 1, (int(nu),)) == CoeffPoly.parse(1, text)


def test_golden_mean_first_order_by_hand():
    # x1'' + x1 + eps x1 x2 = 0, x2'' + phi^2 x2 + eps x1^2 / 2 = 0
    t = table("g2", 1)
    c = lambda j, s: CoeffPoly.symbol(2, j, s)
    phi = (SQ5 + 1) / 2
    # nu = (1, 1): -c1 c2 / (1 - (1 + phi)^2) = c1 c2 / (1 + 3 phi)
    assert t.xc(1, 1, (1, 1)) == (c(1, 1) * c(2, 1)).scale((SQ5 * 3 - 5) / 10)
    assert t.xc(1, 1, (1, -1)) == (c(1, 1) * c(2, -1)).scale(-phi)
    # nu = (2, 0): -(1/2) c1^2 / (phi^2 - 4) = (5 + sqrt5)/20 c1^2
    assert t.xc(1, 2, (2, 0)) == c(1, 1).__pow__(2).scale((SQ5 + 5) / 20)
    assert t.xc(1, 2, (0, 0)) == (c(1, 1) * c(1, -1)).scale(-(3 - SQ5) / 2)
    assert t.eta_c(1, 1).is_zero() and t.eta_c(1, 2).is_zero()


@pytest.mark.parametrize("name", ["sysA", "g2", "ham1", "ham2"])
def test_structural_invariants(name):
    assert check_invariants(table(name, 5)) == []


@pytest.mark.parametrize("name", ["ham1", "ham2"])
def test_counterterm_signs_are_conjugate(name):
    t = table(name, 5)
    for k in range(1, 6):
        for j in range(1, t.d + 1):
            e = t.eta_c(k, j, 1)
            assert e.is_real() and e.is_modulus_only()
            assert t.eta_c(k, j, -1) == e.conjugate()


@pytest.mark.parametrize("name", ["sysA", "g2"])
def test_embedded_variant_reproduces_real_solution(name):
    real = table(name, 4)
    zw = table(name, 4, "complex-zw")
    for k in range(1, 5):
        for j, nu, p in real.entries(k):
            assert zw.xc(k, j, nu) == p
        for j in range(1, real.d + 1):
            assert zw.eta_c(k, j) == real.eta_c(k, j)


def test_order_zero_is_the_free_solution():
    t = solve_up_to(model("g2"), 0)
    assert t.K == 0
    assert t.xc(0, 2, (0, 1)) == CoeffPoly.symbol(2, 2, 1)
    with pytest.raises(ValueError):
        solve_up_to(model("g2"), -1)


def test_resonant_model_raises():
    m = model_from_dict({"kind": "real", "d": 2, "omega": ["1", "2"], "tau": "2",
                         "gamma0": "1/10",
                         "terms": [{"j": 2, "p": 1, "s": [2, 0], "coeff": "1"}]})
    with pytest.raises(ResonanceError):
        solve_up_to(m, 1)


coeffs = st.fractions(min_value=-3, max_value=3, max_denominator=4).filter(lambda x: x != 0)


@settings(max_examples=15, deadline=None)
@given(coeffs, coeffs)
def test_random_quadratic_systems_keep_symmetries(a, b):
    m = model_from_dict({"kind": "real", "d": 2, "omega": ["1", "(1+sqrt5)/2"], "tau": "3/2",
                         "terms": [{"j": 1, "p": 1, "s": [1, 1], "coeff": str(a)},
                                   {"j": 2, "p": 1, "s": [2, 0], "coeff": str(b)}]})
    assert check_invariants(solve_up_to(m, 3)) == []


@settings(max_examples=10, deadline=None)
@given(coeffs)
def test_counterterm_scales_with_coupling(a):
    # x'' + x + eps a x^2: eta^(2) = (10/3) a^2 |c|^2
    m = model_from_dict({"kind": "real", "d": 1, "omega": ["1"], "tau": "1",
                         "terms": [{"j": 1, "p": 1, "s": [2], "coeff": str(a)}]})
    eta2 = solve_up_to(m, 2).eta_c(2, 1)
    ref = (CoeffPoly.symbol(1, 1, 1) * CoeffPoly.symbol(1, 1, -1)).scale(parse_scalar("10/3") * a * a)
    assert eta2 == ref
