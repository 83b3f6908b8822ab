"""Numerical validation of truncated series against the equations of motion.

A truncated table gives x(t) = sum_{k<=K} eps^k sum_nu x^(k)_nu e^{i nu.omega t}
and eta(eps).  Substituting back leaves a residual of order eps^(K+1), which
is sampled on a torus grid and fitted on a log-log scale.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import mpmath

from .coeffalg import QNum, parse_scalar, to_scalar
from .lindstedt import solve_up_to

__all__ = [
    "ResidualReport",
    "torus_grid",
    "residual_sweep",
    "fit_slope",
    "growth_diagnostics",
    "zw_consistency",
    "DEFAULT_EPS",
]

DEFAULT_EPS = ("1e-2", "10^-2.5", "1e-3", "10^-3.5")


def _eps_value(e, prec):
    with mpmath.workprec(prec):
        if isinstance(e, str) and "^" in e:
            base, ex = e.split("^")
            return mpmath.power(mpmath.mpf(base), mpmath.mpf(ex))
        return mpmath.mpf(e)


@dataclass
class ResidualReport:
    model: str
    K: int
    c: list
    eps: list
    residual: list
    per_component: list
    slope: float = None
    equations: str = "real"
    grid_points: int = 0
    outside_window: list = field(default_factory=list)

    def as_dict(self):
        return asdict(self)

    def csv_rows(self):
        d = len(self.per_component[0]) if self.per_component else 0
        head = ["epsilon", "residual"] + [f"residual_{j + 1}" for j in range(d)]
        rows = [head]
        for e, r, pc in zip(self.eps, self.residual, self.per_component):
            rows.append([e, r] + list(pc))
        return rows


def torus_grid(d, points=None, generator=19):
    """Rank-1 lattice of phase vectors 2 pi m g / N, g = (1, a, a^2, ...) mod N."""
    n = points if points is not None else 64 * d
    g = [pow(generator, i, n) for i in range(d)]
    # each phase 2 pi a/n is stored as the pair (a, n)
    return [[((m * gi) % n, n) for gi in g] for m in range(n)]


def _phases(grid, nu, prec):
    # e^{i nu.phi} for every grid point
    out = []
    with mpmath.workprec(prec):
        for pt in grid:
            num = sum(n * a for n, (a, _) in zip(nu, pt))
            den = pt[0][1]
            out.append(mpmath.expjpi(mpmath.mpf(2 * num) / den))
    return out


def _numeric(poly, c, prec):
    return poly.evaluate(c, prec).value


def _mode_sums(table, c, grid, prec, weight):
    """sums[k][key][m] = sum over modes of weight(key, nu) * coeff * e^{i nu.phi_m}."""
    cache = {}
    sums = {}
    for k in range(0, table.K + 1):
        acc = {}
        for key, nu, poly in weight.items_for(table, k):
            if poly.is_zero():
                continue
            w = weight(key, nu)
            if w.is_zero():
                continue
            ph = cache.get(nu)
            if ph is None:
                ph = cache[nu] = _phases(grid, nu, prec)
            with mpmath.workprec(prec):
                coef = _numeric(poly, c, prec) * w.to_big(prec).value
                row = acc.setdefault(key, [mpmath.mpc(0)] * len(grid))
                for m in range(len(grid)):
                    row[m] += coef * ph[m]
        sums[k] = acc
    return sums


class _RealWeights:
    def __init__(self, spec, linear):
        self.spec = spec
        self.linear = linear

    def items_for(self, table, k):
        for j, nu, p in table.entries(k):
            yield j, nu, p

    def __call__(self, j, nu):
        if not self.linear:
            return QNum(1)
        x = self.spec.dot(nu)
        w = self.spec.omega[j - 1]
        return w * w - x * x


class _ZwWeights:
    def __init__(self, spec, linear):
        self.spec = spec
        self.linear = linear

    def items_for(self, table, k):
        for (j, nu), p in table.z.get(k, {}).items():
            yield (j, 1), nu, p
        for (j, nu), p in table.w.get(k, {}).items():
            yield (j, -1), nu, p

    def __call__(self, key, nu):
        if not self.linear:
            return QNum(1)
        j, s = key
        x = self.spec.dot(nu)
        return (x if s > 0 else -x) - self.spec.omega[j - 1]


def _poly_series(table, k_max, j, c, prec, sigma=1):
    return [(_numeric(table.eta_c(k, j, sigma), c, prec) if k >= 1 else mpmath.mpc(0))
            for k in range(0, k_max + 1)]


def _horner(coeffs, eps):
    tot = mpmath.mpc(0)
    for a in reversed(coeffs):
        tot = tot * eps + a
    return tot


def fit_slope(eps, res):
    """Least-squares slope of log residual against log epsilon (None if < 4 points)."""
    pts = [(math.log(float(e)), math.log(float(r))) for e, r in zip(eps, res)
           if float(e) > 0 and float(r) > 0]
    if len(pts) < 4:
        return None
    n = len(pts)
    mx = sum(p[0] for p in pts) / n
    my = sum(p[1] for p in pts) / n
    sxx = sum((p[0] - mx) ** 2 for p in pts)
    sxy = sum((p[0] - mx) * (p[1] - my) for p in pts)
    return sxy / sxx


def _gamma3(c):
    g = max([1.0] + [abs(complex(x)) for x in c])
    return g ** 3


def residual_sweep(model, table=None, c=None, eps_grid=DEFAULT_EPS, t_grid=None, K=None,
                   prec=256, equations=None):
    """Residual of the truncated series on a torus grid for each epsilon.

    ``equations`` is ``"real"`` (second-order equations, x from the table) or
    ``"zw"`` (the first-order pair for z and w).
    """
    if table is None:
        table = solve_up_to(model, K if K is not None else 2)
    spec = table.spec
    d = spec.d
    if c is None:
        c = ["3/10"] * d
    c = list(c)
    if equations is None:
        equations = "real" if table.variant == "real-x" else "zw"
    grid = t_grid if t_grid is not None else torus_grid(d)
    if equations == "real" and model.kind != "real":
        raise ValueError("the second-order residual needs a real system")
    with mpmath.workprec(prec):
        if equations == "real":
            out = _real_residuals(model, table, c, grid, eps_grid, prec)
        else:
            out = _zw_residuals(table, c, grid, eps_grid, prec)
    eps_vals = [_eps_value(e, prec) for e in eps_grid]
    window = [str(e) for e, v in zip(eps_grid, eps_vals)
              if float(abs(v)) * _gamma3([_c(x, prec) for x in c]) > 1e-2]
    res = [r for r, _ in out]
    rep = ResidualReport(model.name, table.K, [str(x) for x in c], [str(e) for e in eps_grid],
                         [mpmath.nstr(r, 12) for r in res],
                         [[mpmath.nstr(x, 12) for x in pc] for _, pc in out],
                         None, equations, len(grid), window)
    rep.slope = fit_slope(eps_vals, res)
    return rep


def _c(x, prec):
    s = parse_scalar(x) if isinstance(x, str) else to_scalar(x)
    return complex(s)


def _real_residuals(model, table, c, grid, eps_grid, prec):
    spec = table.spec
    d = spec.d
    lin = _mode_sums(table, c, grid, prec, _RealWeights(spec, True))
    val = _mode_sums(table, c, grid, prec, _RealWeights(spec, False))
    etas = [_poly_series(table, table.K, j, c, prec) for j in range(1, d + 1)]
    terms = {j: [(s, p, v.to_big(prec).value) for s, p, v in model.terms_for(j)]
             for j in range(1, d + 1)}
    out = []
    for e in eps_grid:
        eps = _eps_value(e, prec)
        per = [mpmath.mpf(0)] * d
        for m in range(len(grid)):
            xs = [_series_at(val, j, m, eps) for j in range(1, d + 1)]
            for j in range(1, d + 1):
                r = _series_at(lin, j, m, eps)
                for s, p, v in terms[j]:
                    t = v * eps ** p
                    for xi, si in zip(xs, s):
                        if si:
                            t = t * xi ** si
                    r += t
                r += _horner(etas[j - 1], eps) * xs[j - 1]
                per[j - 1] = max(per[j - 1], abs(r))
        out.append((max(per), per))
    return out


def _series_at(sums, key, m, eps):
    tot = mpmath.mpc(0)
    for k in sorted(sums, reverse=True):
        row = sums[k].get(key)
        tot = tot * eps + (row[m] if row is not None else 0)
    return tot


def _zw_residuals(table, c, grid, eps_grid, prec):
    spec = table.spec
    d = spec.d
    ft = table.forces
    embedded = ft.coupling == "embedded"
    lin = _mode_sums(table, c, grid, prec, _ZwWeights(spec, True))
    val = _mode_sums(table, c, grid, prec, _ZwWeights(spec, False))
    etas = {(j, s): _poly_series(table, table.K, j, c, prec, s)
            for j in range(1, d + 1) for s in (1, -1)}
    terms = {(j, s): [(sp, sm, p, v.to_big(prec).value) for sp, sm, p, v in ft.terms_for(s, j)]
             for j in range(1, d + 1) for s in (1, -1)}
    out = []
    for e in eps_grid:
        eps = _eps_value(e, prec)
        per = [mpmath.mpf(0)] * d
        for m in range(len(grid)):
            zs = [_series_at(val, (j, 1), m, eps) for j in range(1, d + 1)]
            ws = [_series_at(val, (j, -1), m, eps) for j in range(1, d + 1)]
            for j in range(1, d + 1):
                for s in (1, -1):
                    r = _series_at(lin, (j, s), m, eps)
                    for sp, sm, p, v in terms[(j, s)]:
                        t = v * eps ** p
                        for xi, si in zip(zs, sp):
                            if si:
                                t = t * xi ** si
                        for xi, si in zip(ws, sm):
                            if si:
                                t = t * xi ** si
                        r -= t
                    eta = _horner(etas[(j, s)], eps)
                    if embedded:
                        w = spec.omega[j - 1].to_big(prec).value
                        r -= eta * (zs[j - 1] + ws[j - 1]) / (2 * w)
                    else:
                        r -= eta * (zs[j - 1] if s > 0 else ws[j - 1])
                    per[j - 1] = max(per[j - 1], abs(r))
        out.append((max(per), per))
    return out


def zw_consistency(model, K, c=None, eps_grid=DEFAULT_EPS, prec=256):
    """Real residual of x = z + w from the (z, w) table against the real table's."""
    real = solve_up_to(model, K)
    zw = solve_up_to(model, K, variant="complex-zw")
    a = residual_sweep(model, real, c, eps_grid, prec=prec, equations="real")
    b = residual_sweep(model, zw, c, eps_grid, prec=prec, equations="real")
    z = residual_sweep(model, zw, c, eps_grid, prec=prec, equations="zw")
    diff = max(abs(mpmath.mpf(x) - mpmath.mpf(y)) / max(mpmath.mpf(x), mpmath.mpf(10) ** -60)
               for x, y in zip(a.residual, b.residual))
    return {"model": model.name, "K": K, "real_residual": a.residual,
            "embedded_residual": b.residual, "zw_equation_residual": z.residual,
            "zw_equation_slope": z.slope, "max_relative_difference": float(diff)}


def growth_diagnostics(table, c=None, prec=256):
    """a_k = max |x^(k)_{j,nu}(c)|, the roots a_k^(1/k) and a_k / Gamma(c)^(3k)."""
    d = table.d
    if c is None:
        c = ["1/2"] * d
    g3 = _gamma3([_c(x, prec) for x in c])
    rows = []
    with mpmath.workprec(prec):
        for k in range(1, table.K + 1):
            a = mpmath.mpf(0)
            for _, _, p in table.entries(k):
                a = max(a, abs(_numeric(p, c, prec)))
            root = a ** (mpmath.mpf(1) / k) if a > 0 else mpmath.mpf(0)
            rows.append({"k": k, "a_k": float(a), "root": float(root),
                         "ratio": float(a / mpmath.mpf(g3) ** k)})
    roots = [r["root"] for r in rows]
    return {"K": table.K, "c": [str(x) for x in c], "gamma3": g3, "orders": rows,
            "max_root": max(roots) if roots else 0.0}
