from math import comb

import pytest
from hypothesis import given
from hypothesis import strategies as st

from lindtree.coeffalg import CoeffPoly
from lindtree.frequency import ScalePartition
from lindtree.trees import (_enumerator, check_constraints, count_plane_trees, end_counts,
                            enumerate_trees, flatten, prune, scale_assignments, sign_flip,
                            tree_value, verify_trees)

from conftest import model


def _variant(m):
    return "real" if m.kind == "real" else "zw"


@pytest.mark.parametrize("name", ["sysA", "g2", "ham1", "ham2"])
def test_tree_sums_equal_direct_solver(name):
    rep = verify_trees(model(name), 3)
    assert rep["mismatches"] == [] and rep["checked"] > 0


def test_sysA_counterterm_from_trees():
    m = model("sysA")
    from lindtree.trees import coefficient_from_trees
    eta2 = coefficient_from_trees(m, 2, 1, (1,))
    assert str(eta2) == "(10/3) * c1+^1 c1-^1"


@given(st.integers(min_value=1, max_value=12))
def test_plane_tree_count(n):
    catalan = comb(2 * (n - 1), n - 1) // n
    assert count_plane_trees(n) == catalan
    assert count_plane_trees(n) <= 4 ** n


@pytest.mark.parametrize("name", ["sysA", "g2", "ham2"])
def test_sign_flip(name):
    m = model(name)
    en = _enumerator(m, _variant(m))
    for k in (1, 2, 3):
        for j in range(1, m.spec.d + 1):
            for t in en.trees(k, j):
                f = sign_flip(m, t)
                assert sign_flip(m, f).key == t.key
                assert f.value == t.value.conjugate()
                assert tuple(-a for a in t.nu) == f.nu


@pytest.mark.parametrize("name", ["sysA", "g2", "ham1"])
def test_scales_resolve_the_value(name):
    m = model(name)
    v = _variant(m)
    en = _enumerator(m, v)
    part = ScalePartition(m.spec.gamma)
    for k in (1, 2):
        for j in range(1, m.spec.d + 1):
            for t in en.trees(k, j):
                check_constraints(t, m.spec, v)
                total = CoeffPoly.zero(m.spec.d)
                for sc, _ in scale_assignments(m.spec, t, part, v):
                    total = total + tree_value(m, t, "scaled", part, sc, v)
                assert total == tree_value(m, t, "unscaled", variant=v)


def test_constraint_violations_raise():
    m = model("g2")
    en = _enumerator(m, "real")
    t = en.trees(1, 1)[0]
    from lindtree.trees import Tree
    bad = Tree("N", t.j, t.sigma, t.p, t.children, tuple(a + 1 for a in t.nu), t.order)
    with pytest.raises(ValueError):
        check_constraints(bad, m.spec, "real")


def test_enumerate_scaled_trees_carry_scales():
    m = model("g2")
    classes = enumerate_trees(m, 2, 1, (1, 0), scaled=True)
    assert classes
    for tc in classes:
        assert len(tc.scales) == len(flatten(tc.tree))
        assert "|" in tc.key


def test_pruning_drops_counterterm_subtrees():
    m = model("sysA")
    en = _enumerator(m, "real")
    for t in en.trees(3, 1):
        kept = prune(t)
        assert kept[0].index == 0
        if t.kind == "V":
            # the on-shell subtree under the counterterm node is removed
            assert len(kept) < len(flatten(t))
        ends = end_counts(kept)
        assert all(n > 0 for n in ends.values())
