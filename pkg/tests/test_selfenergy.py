from fractions import Fraction

import mpmath
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lindtree.coeffalg import CoeffPoly, QNum, parse_scalar
from lindtree.frequency import ScalePartition
from lindtree.selfenergy import (LaurentPoly, PoleError, _psi_pair, build_matrix, detect_clusters,
                                 enumerate_self_energy, localization_cutoff, localize,
                                 matrix_product_vanishes, regularize, regularize_quadrature_check,
                                 se_derivative, se_value, verify_cancellation, verify_counting,
                                 verify_symmetry_lemmas)
from lindtree.trees import _enumerator, flatten

from conftest import model

MOD = CoeffPoly.symbol(1, 1, 1) * CoeffPoly.symbol(1, 1, -1)


def _sysA_clusters():
    m = model("sysA")
    return [c for s in (1, -1) for c in enumerate_self_energy(m, 2, 1, s, 1, 1, (4,), 3)]


def _two_node_tree():
    # root line nu = 2 leaves node 0; line 2 (nu = 3) joins node 2, entered by line 4 (nu = 2)
    en = _enumerator(model("sysA"), "real")
    want = "N1+[1](E1-,N1+[1](E1+,N1+[1](E1+,E1+)))"
    return next(t for t in en.trees(3, 1) if t.key == want)


def test_two_node_cluster_is_detected():
    t = _two_node_tree()
    assert [ln.nu for ln in flatten(t)][:5] == [(2,), (-1,), (3,), (1,), (2,)]
    rep = detect_clusters(model("sysA"), t, [5, None, 3, None, 5, None, None])
    assert len(rep.self_energy) == 1
    c = rep.self_energy[0]
    assert (c.exiting, c.entering, c.path, c.scale, c.k) == (0, (4,), (2,), 3, 2)
    assert rep.extracted[0].key.startswith("N1+[1](E1-,N1+[1](E1+,X1+@2)")


def test_interior_scale_too_close_is_not_a_self_energy():
    t = _two_node_tree()
    rep = detect_clusters(model("sysA"), t, [5, None, 4, None, 5, None, None])
    assert rep.self_energy == []
    assert rep.clusters


def test_first_order_has_no_self_energy_clusters():
    # one node moves the momentum by a unit vector, never by s e_j - s' e_j'
    for name in ("g2", "ham2"):
        m = model(name)
        for jp in (1, 2):
            for sp in (1, -1):
                for j in (1, 2):
                    for s in (1, -1):
                        nin = (-4 + (jp == 1) * sp, 3 + (jp == 2) * sp)
                        assert enumerate_self_energy(m, 1, j, s, jp, sp, nin, 3) == []


def test_sysA_localized_values():
    cl = _sysA_clusters()
    assert len(cl) == 5
    got = {c.key: (c.multiplicity, localize(c, True)) for c in cl}
    # single path line at local momentum u0 - 1 = 0 or u0 + 1 = 2: G = 1/(x^2 - 1)
    assert got["N1+[1](E1+,N1+[1](E1-,X1+@4)#0)"] == (4, MOD.scale(-1))
    assert got["N1+[1](E1-,N1+[1](E1+,X1+@4)#0)"] == (4, MOD.scale(Fraction(1, 3)))
    total = CoeffPoly.zero(1)
    for mult, v in got.values():
        total = total + v.scale(mult)
    # on shell the order-2 self-energy cancels the counterterm eta^(2) = (10/3)|c|^2
    assert total == MOD.scale(Fraction(-10, 3))


def test_value_off_shell_by_hand():
    c = next(c for c in _sysA_clusters() if c.key == "N1+[1](E1+,N1+[1](E1-,X1+@4)#0)")
    u = QNum(Fraction(63, 64))
    # path line at u - 1 = -1/64 with Psi_0 = 1: G = 1/((1/64)^2 - 1)
    assert se_value(c, u) == MOD.scale(Fraction(-4096, 4095))
    with pytest.raises(PoleError):
        se_value(c, QNum(0), scaled=False)


def test_local_plus_regular_is_the_value():
    m = model("g2")
    u = parse_scalar("1 - 1/64")
    for s in (1, -1):
        for j in (1, 2):
            for c in enumerate_self_energy(m, 2, j, s, 1, 1, (-4, 3), 3):
                assert localize(c, True) + regularize(c, u, True) == se_value(c, u)


def test_exact_and_float_kernels_agree():
    m = model("g2")
    u = parse_scalar("1 - 1/128")
    for c in enumerate_self_energy(m, 2, 1, 1, 1, 1, (-4, 3), 3):
        exact = se_value(c, u)
        approx = se_value(c, u.to_big(256))
        for (e, a), (e2, b) in zip(exact.items(), approx.items()):
            assert e == e2
            assert abs((a.to_big(256) - b).value) < 1e-60
        d_exact = se_derivative(c, u)
        assert isinstance(d_exact, CoeffPoly)


def test_regular_part_matches_quadrature():
    for c in _sysA_clusters():
        r = regularize_quadrature_check(c, QNum(Fraction(63, 64)))
        assert r["rel_error"] <= 1e-20
    m = model("g2")
    u = parse_scalar("1 - 1/64")
    for c in enumerate_self_energy(m, 2, 2, 1, 1, 1, (-4, 3), 3):
        assert regularize_quadrature_check(c, u)["rel_error"] <= 1e-20


def test_localization_cutoff_is_exact():
    tau = Fraction(1)
    assert localization_cutoff(0, 0, tau)
    assert localization_cutoff(1, 10, tau)      # 4 <= 2^2
    assert not localization_cutoff(1, 9, tau)   # 4 > 2^1
    assert not localization_cutoff(1, 7, tau)
    # tau = 3/2: (4k)^3 <= 2^(2(n_T - 8))
    assert localization_cutoff(1, 11, Fraction(3, 2))
    assert not localization_cutoff(1, 10, Fraction(3, 2))
    assert localization_cutoff(2, 13, Fraction(3, 2))
    assert not localization_cutoff(2, 12, Fraction(3, 2))


def test_unforced_localization_vanishes_at_small_scales():
    for c in _sysA_clusters():
        assert localize(c).is_zero()


def test_laurent_polynomials_compare_by_cross_multiplication():
    a = LaurentPoly(MOD, [(1, 1)])
    b = LaurentPoly(CoeffPoly.symbol(1, 1, -1), [])
    assert a == b
    assert a == CoeffPoly.symbol(1, 1, -1)
    assert (a - b).is_zero()
    assert not (a + b).is_zero()


def test_mass_matrices():
    ham1 = build_matrix(model("ham1"), 2, 3, force_localize=True)
    assert ham1.factorized and ham1.factors[(1, 1)] == CoeffPoly.constant(1, -6)
    g2 = build_matrix(model("g2"), 2, 3, force_localize=True)
    assert g2.count == 68 and g2.factorized
    assert g2.factors[(1, 1)] == CoeffPoly.constant(2, parse_scalar("-5/4 + 11/20*sqrt5"))
    assert g2.factors[(1, 2)] == CoeffPoly.constant(2, parse_scalar("-1 - sqrt5/5"))
    assert g2.factors[(2, 1)] == g2.factors[(1, 2)]
    assert g2.factors[(2, 2)].is_zero()
    assert matrix_product_vanishes(g2, g2, 2)
    assert matrix_product_vanishes(ham1, ham1, 1)


@pytest.mark.parametrize("name, count", [("sysA", 5), ("g2", 68), ("ham1", 22), ("ham2", 92)])
def test_symmetry_identities(name, count):
    rep = verify_symmetry_lemmas(model(name), 2, 3, True)
    assert rep["ok"], rep["failures"][:3]
    assert rep["counts"]["clusters"] == count


def test_enumerated_clusters_are_redetected():
    m = model("g2")
    for c in enumerate_self_energy(m, 2, 2, -1, 1, 1, (-4, 3), 3):
        lines = flatten(c.tree)
        xi = next(ln.index for ln in lines if ln.tree.kind == "X")
        scales = [ln.tree.scale for ln in lines]
        scales[0] = scales[xi] = c.n_T
        rep = detect_clusters(m, c.tree, scales, extract=False)
        top = [s for s in rep.self_energy if s.exiting == 0 and s.entering == (xi,)]
        assert len(top) == 1 and top[0].path == c.path


@settings(max_examples=100)
@given(st.integers(min_value=0, max_value=12), st.fractions(min_value=Fraction(1, 2 ** 14),
                                                            max_value=Fraction(1, 2)))
def test_fast_partition_matches_exact(n, delta):
    part = ScalePartition(QNum(Fraction(1, 2)))
    with mpmath.workprec(256):
        a, da = _psi_pair(part, n, mpmath.mpf(delta.numerator) / delta.denominator, 256)
    assert abs(a - part.Psi(n, delta).to_big(256).value.real) < 1e-60
    assert abs(da - part.dPsi(n, delta).to_big(256).value.real) < 1e-50


def test_propagator_pair_gain():
    rep = verify_cancellation(model("ham1"), samples=200, scales=range(4, 9), matrix=False)
    assert rep["ok"]
    for key, r in rep["pairs"].items():
        assert r["bound_ok"] and r["identity_ok"] and r["derivative_ok"]


def test_counting_on_small_trees():
    rep = verify_counting(model("g2"), 3)
    assert rep["ok"]
    assert rep["sup_ratio"] == pytest.approx(2 ** (2 / 3))
