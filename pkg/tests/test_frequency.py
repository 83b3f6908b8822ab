from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lindtree.coeffalg import QNum
from lindtree.frequency import (FrequencySpec, ScalePartition, check_divisor_separation,
                                check_scale_separation, divisor_neighbours, equal_divisors,
                                modes, norm, partition_sweep, small_divisor)
from lindtree.selfenergy import neighbour_count

from conftest import model


def test_small_divisor_and_sign():
    spec = model("sysA").spec
    assert small_divisor(spec, 1, (3,)) == (QNum(2), 1)
    assert small_divisor(spec, 1, (-3,)) == (QNum(2), -1)
    # ties go to +1
    assert small_divisor(spec, 1, (0,))[1] == 1


def test_gamma_estimate_golden_mean():
    spec = model("g2").spec
    # min |omega.nu| |nu|^tau over the scan is attained near Fibonacci vectors
    g0 = spec.gamma0_value
    assert 0 < g0 <= 1
    assert spec.gamma == g0 / 2


def test_equal_divisor_criterion_matches_direct_comparison():
    spec = model("g2").spec
    for nu in modes(2, 4):
        for nu2 in modes(2, 4):
            for j in (1, 2):
                for j2 in (1, 2):
                    direct = small_divisor(spec, j, nu)[0] == small_divisor(spec, j2, nu2)[0]
                    assert direct == equal_divisors(spec, nu, j, nu2, j2)


def test_divisor_scans_have_no_violations():
    for name in ("sysA", "g2"):
        spec = model(name).spec
        r = check_divisor_separation(spec, 4)
        assert r["violations"] == [] and r["criterion_mismatches"] == []
        assert r["hypothesis_count"] > 0
        s = check_scale_separation(spec, 4, 10)
        assert s["violations"] == []


def test_scan_radius_is_bounded():
    spec = model("sysA").spec
    with pytest.raises(ValueError):
        check_divisor_separation(spec, spec.nu_scan_radius + 1)


def test_neighbours_of_small_divisors():
    spec = model("g2").spec
    seen = 0
    for nu in modes(2, 5):
        for j in (1, 2):
            delta, _ = small_divisor(spec, j, nu)
            if 0 < delta <= spec.gamma:
                seen += 1
                assert neighbour_count(spec, nu, j) == 2 * spec.d - 1
                for nu2, j2 in divisor_neighbours(spec, nu, j):
                    assert norm(tuple(a - b for a, b in zip(nu, nu2))) <= 2
    assert seen > 0


def test_frequency_validation():
    with pytest.raises(ValueError):
        FrequencySpec((QNum(1), QNum(1)), Fraction(2))
    with pytest.raises(ValueError):
        FrequencySpec((QNum(-1),), Fraction(1))
    with pytest.raises(ValueError):
        FrequencySpec((QNum(1), QNum(2)), Fraction(1))


@pytest.mark.parametrize("shape", ScalePartition.SHAPES)
def test_partition_sweep(shape):
    part = ScalePartition(QNum(Fraction(1, 2)), shape)
    r = partition_sweep(part, count=500 if shape != "smoothstep-C1" else 2000, seed=3)
    assert r["max_deviation"] <= 2.0 ** -64
    assert r["max_multiplicity"] <= 2
    assert r["window_violations"] == []


us = st.fractions(min_value=Fraction(1, 2 ** 30), max_value=Fraction(7, 16))


@settings(max_examples=200)
@given(us)
def test_partition_of_unity_exact(u):
    part = ScalePartition(QNum(Fraction(1, 2)))
    sup = part.support(u)
    assert 1 <= len(sup) <= 2
    total = sum((part.Psi(n, u) for n in range(max(sup) + 1)), QNum(0))
    assert total == 1
    for n in sup:
        assert Fraction(1, 2 ** (n + 2)) <= u <= Fraction(1, 2 ** n)
