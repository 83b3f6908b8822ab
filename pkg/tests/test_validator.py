import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from lindtree.validator import (fit_slope, growth_diagnostics, residual_sweep, torus_grid,
                                zw_consistency)

from conftest import model, table


def test_torus_grid_is_a_rank_one_lattice():
    g = torus_grid(2)
    assert len(g) == 128
    assert g[1] == [(1, 128), (19, 128)]
    assert len({tuple(p) for p in g}) == 128


@given(st.floats(min_value=0.5, max_value=8), st.floats(min_value=1e-3, max_value=1e3))
def test_fit_slope_recovers_power_laws(p, a):
    eps = [10 ** (-2 - k / 2) for k in range(4)]
    assert fit_slope(eps, [a * e ** p for e in eps]) == pytest.approx(p, rel=1e-9)


def test_fit_slope_needs_four_points():
    assert fit_slope([1e-2, 1e-3, 1e-4], [1, 2, 3]) is None


def test_free_solution_has_zero_residual():
    rep = residual_sweep(model("g2"), table("g2", 2), eps_grid=["0"])
    assert float(rep.residual[0]) == 0.0


@pytest.mark.parametrize("K", [2, 3])
def test_residual_slope_sysA(K):
    rep = residual_sweep(model("sysA"), table("sysA", K))
    assert K + 0.7 <= rep.slope <= K + 1.3
    rows = rep.csv_rows()
    assert rows[0] == ["epsilon", "residual", "residual_1"]
    assert len(rows) == 5
    assert rep.outside_window == []


def test_first_order_system_residual():
    rep = residual_sweep(model("ham1"), table("ham1", 2), equations="zw")
    assert 2.7 <= rep.slope <= 3.3


def test_real_residual_needs_real_system():
    with pytest.raises(ValueError):
        residual_sweep(model("ham1"), table("ham1", 2), equations="real")


def test_embedded_table_reproduces_real_residual():
    r = zw_consistency(model("sysA"), 3)
    assert r["max_relative_difference"] <= 1e-60
    assert 3.7 <= r["zw_equation_slope"] <= 4.3


def test_growth_of_coefficients():
    g = growth_diagnostics(table("sysA", 6), c=["1/2"])
    assert len(g["orders"]) == 6
    assert all(math.isfinite(r["ratio"]) for r in g["orders"])
    assert g["max_root"] < 1
