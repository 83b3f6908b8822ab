"""Direct order-by-order solver for the Lindstedt coefficients.

For the real variant the k-th order equations are::

    ((omega.nu)^2 - omega_j^2) x^(k)_{j,nu} = f^(k)_{j,nu} + sum_{k'} eta^(k')_j x^(k-k')_{j,nu}
    f^(k)_{j,+-e_j} + eta^(k)_j c_j^{+-} = 0

and for the (z, w) variant the first-order analogues with denominators
+-omega.nu - omega_j.  Nonlinear terms are assembled by convolving Fourier
tables of the lower orders; no trees are involved.
"""

from __future__ import annotations

from .coeffalg import BigFloat, CoeffPoly
from .frequency import norm
from .model import as_force_table

__all__ = ["SeriesTable", "ResonanceError", "ConsistencyError", "solve_order", "solve_up_to", "check_invariants"]


class ResonanceError(ArithmeticError):
    """A reachable mode has a vanishing denominator."""

    def __init__(self, j, nu, sigma=None):
        self.j, self.nu, self.sigma = j, nu, sigma
        super().__init__(f"zero denominator for component {j} at mode {list(nu)}")


class ConsistencyError(AssertionError):
    """The unsolved half of the bifurcation equation failed."""


def _unit(d, j, s=1):
    v = [0] * d
    v[j - 1] = s
    return tuple(v)


def _conv(A, B, d):
    """Product of two Fourier tables {nu: CoeffPoly}."""
    out = {}
    for n1, p1 in A.items():
        for n2, p2 in B.items():
            nu = tuple(a + b for a, b in zip(n1, n2))
            q = p1 * p2
            acc = out.get(nu)
            if acc is None:
                out[nu] = q
            else:
                acc.add_into(q)
    return {nu: p for nu, p in out.items() if not p.is_zero()}


def _accumulate(target, table, factor=None):
    for nu, p in table.items():
        acc = target.get(nu)
        if acc is None:
            target[nu] = p.scale(factor) if factor is not None else CoeffPoly._wrap(p.d, dict(p.terms))
        else:
            acc.add_into(p, factor)


class _Monomials:
    """Memoized Fourier tables of eps-coefficients of products of variables.

    ``var[i][m]`` is the order-m Fourier table of variable i.  ``get(s, m)``
    returns the order-m table of prod_i var_i^{s_i}.
    """

    def __init__(self, var, d):
        self.var = var
        self.d = d
        self.memo = {}

    def get(self, s, m):
        key = (s, m)
        r = self.memo.get(key)
        if r is not None:
            return r
        idx = [i for i, e in enumerate(s) if e]
        if not idx:
            raise ValueError("empty monomial")
        elif len(idx) == 1 and s[idx[0]] == 1:
            r = self.var[idx[0]].get(m, {})
        else:
            i = idx[-1]
            s2 = list(s)
            s2[i] -= 1
            s2 = tuple(s2)
            r = {}
            for a in range(m + 1):
                A = self.get(s2, a)
                if not A:
                    continue
                B = self.var[i].get(m - a, {})
                if not B:
                    continue
                _accumulate(r, _conv(A, B, self.d))
            r = {nu: p for nu, p in r.items() if not p.is_zero()}
        self.memo[key] = r
        return r


class SeriesTable:
    """Per-order Fourier coefficients and counterterms.

    Real variant: ``x[k][(j, nu)]`` and ``eta[(k, j)]``.
    (z, w) variant: ``z[k][(j, nu)]``, ``w[k][(j, nu)]`` and ``eta[(k, j)]``
    for the + equation, ``eta_minus[(k, j)]`` solving the - equation.
    """

    def __init__(self, model, variant=None):
        if variant is None:
            variant = "real-x" if model.kind == "real" else "complex-zw"
        self.variant = variant
        self.model = model
        if variant == "complex-zw":
            self.forces = as_force_table(model)
        elif model.kind != "real":
            raise ValueError("the real-x variant needs a real system")
        else:
            self.forces = None
        self.spec = model.spec
        self.d = d = model.spec.d
        self.K = 0
        self.eta = {}
        self.eta_minus = {}
        if variant == "real-x":
            self.x = {0: {}}
            for j in range(1, d + 1):
                self.x[0][(j, _unit(d, j, 1))] = CoeffPoly.symbol(d, j, 1)
                self.x[0][(j, _unit(d, j, -1))] = CoeffPoly.symbol(d, j, -1)
            self._vars = [self._var_view(self.x, j) for j in range(1, d + 1)]
        else:
            self.z = {0: {}}
            self.w = {0: {}}
            for j in range(1, d + 1):
                self.z[0][(j, _unit(d, j, 1))] = CoeffPoly.symbol(d, j, 1)
                self.w[0][(j, _unit(d, j, -1))] = CoeffPoly.symbol(d, j, -1)
            self._vars = ([self._var_view(self.z, j) for j in range(1, d + 1)]
                          + [self._var_view(self.w, j) for j in range(1, d + 1)])
        self._mono = _Monomials(self._vars, d)

    @staticmethod
    def _var_view(store, j):
        class View:
            def get(self_inner, m, default=None):
                tab = store.get(m)
                if tab is None:
                    return default
                return {nu: p for (jj, nu), p in tab.items() if jj == j}
        return _CachedView(View())

    # -- accessors ----------------------------------------------------------
    def _get(self, store, k, j, nu):
        return store.get(k, {}).get((j, tuple(nu)), CoeffPoly.zero(self.d))

    def xc(self, k, j, nu):
        if self.variant == "real-x":
            return self._get(self.x, k, j, nu)
        return self._get(self.z, k, j, nu) + self._get(self.w, k, j, nu)

    def zc(self, k, j, nu):
        return self._get(self.z, k, j, nu)

    def wc(self, k, j, nu):
        return self._get(self.w, k, j, nu)

    def eta_c(self, k, j, sigma=1):
        store = self.eta if sigma > 0 else self.eta_minus
        return store.get((k, j), CoeffPoly.zero(self.d))

    def entries(self, k):
        """[(j, nu, poly)] of the order-k solution (x, or z+w reconstructed)."""
        if self.variant == "real-x":
            return sorted(((j, nu, p) for (j, nu), p in self.x.get(k, {}).items()),
                          key=lambda t: (t[0], t[1]))
        keys = set(self.z.get(k, {})) | set(self.w.get(k, {}))
        return sorted(((j, nu, self.xc(k, j, nu)) for (j, nu) in keys), key=lambda t: (t[0], t[1]))


class _CachedView:
    def __init__(self, view):
        self.view = view
        self.cache = {}

    def get(self, m, default=None):
        if m not in self.cache:
            r = self.view.get(m)
            if r is None:
                return default
            self.cache[m] = r
        return self.cache[m]


def _is_zero_den(den):
    if isinstance(den, BigFloat):
        return abs(den.value) < den.value.context.ldexp(1, -den.prec + 8)
    return den.is_zero()


def _force(table, terms, k):
    """f^(k) as a Fourier table from [(s, p, coeff)] terms."""
    out = {}
    for s, p, coeff in terms:
        if p > k:
            continue
        prod = table._mono.get(s, k - p)
        if prod:
            _accumulate(out, prod, coeff)
    return out


def _eta_terms(table, store_get, j, k, nu, coupling_scale=None):
    """sum_{k'=1}^{k} eta^(k')_j X^(k-k')_{j,nu}."""
    acc = CoeffPoly.zero(table.d)
    for kp in range(1, k + 1):
        e = table.eta.get((kp, j))
        if e is None or e.is_zero():
            continue
        X = store_get(k - kp, j, nu)
        if not X.is_zero():
            acc = acc + e * X
    if coupling_scale is not None and not acc.is_zero():
        acc = acc.scale(coupling_scale)
    return acc


def solve_order(table, k, strict=True):
    """Extend ``table`` (complete through order k-1) to order k."""
    if k != table.K + 1:
        raise ValueError(f"table holds orders <= {table.K}; cannot solve order {k}")
    if table.variant == "real-x":
        _solve_real(table, k, strict)
    else:
        _solve_zw(table, k, strict)
    table.K = k
    return table


def _solve_real(table, k, strict):
    m, spec, d = table.model, table.spec, table.d
    out = {}
    for j in range(1, d + 1):
        f = _force(table, [(tuple(s), p, v) for s, p, v in m.terms_for(j)], k)
        ep, em = _unit(d, j, 1), _unit(d, j, -1)
        # x^(m)_{j,+-e_j} = 0 for m >= 1, so only f enters the bifurcation equation
        fp = f.get(ep, CoeffPoly.zero(d))
        eta = (-fp).divide_symbol(j, 1)
        table.eta[(k, j)] = eta
        fm = f.get(em, CoeffPoly.zero(d))
        eta_m = (-fm).divide_symbol(j, -1)
        table.eta_minus[(k, j)] = eta_m
        if strict and eta_m != eta:
            raise ConsistencyError(f"order {k}, component {j}: the two bifurcation equations disagree")
        omj2 = spec.omega[j - 1] * spec.omega[j - 1]
        keys = set(f)
        for kp in range(1, k):
            keys |= {nu for (jj, nu) in table.x.get(k - kp, {}) if jj == j}
        for nu in sorted(keys):
            if nu == ep or nu == em:
                continue
            rhs = f.get(nu, CoeffPoly.zero(d)) + _eta_terms(table, table.xc, j, k, nu)
            if rhs.is_zero():
                continue
            x = spec.dot(nu)
            den = x * x - omj2
            if _is_zero_den(den):
                raise ResonanceError(j, nu)
            out[(j, nu)] = rhs.scale(1 / den)
    table.x[k] = out


def _solve_zw(table, k, strict):
    ft, spec, d = table.forces, table.spec, table.d
    embedded = ft.coupling == "embedded"
    zs, ws = {}, {}
    for j in range(1, d + 1):
        ep, em = _unit(d, j, 1), _unit(d, j, -1)
        omj = spec.omega[j - 1]
        scale = (1 / (omj * 2)) if embedded else None
        fplus = _force(table, [(sp + sm, p, v) for sp, sm, p, v in ft.terms_for(1, j)], k)
        fminus = _force(table, [(sp + sm, p, v) for sp, sm, p, v in ft.terms_for(-1, j)], k)
        getz = table.xc if embedded else table.zc
        getw = table.xc if embedded else table.wc
        # bifurcation equations; eta^(k) multiplies the order-0 amplitude
        lower_p = _shifted_eta(table, getz, j, k, ep, scale)
        lower_m = _shifted_eta(table, getw, j, k, em, scale)
        bp = fplus.get(ep, CoeffPoly.zero(d)) + lower_p
        bm = fminus.get(em, CoeffPoly.zero(d)) + lower_m
        eta = (-bp).divide_symbol(j, 1)
        eta_m = (-bm).divide_symbol(j, -1)
        if embedded:
            eta = eta.scale(omj * 2)
            eta_m = eta_m.scale(omj * 2)
        table.eta[(k, j)] = eta
        table.eta_minus[(k, j)] = eta_m
        if strict and eta_m != eta:
            raise ConsistencyError(f"order {k}, component {j}: the two bifurcation equations disagree")
        for sigma, f, store, get, skip in ((1, fplus, zs, getz, ep), (-1, fminus, ws, getw, em)):
            keys = set(f)
            src = table.z if sigma > 0 else table.w
            for kp in range(1, k + 1):
                for (jj, nu) in src.get(k - kp, {}):
                    if jj == j:
                        keys.add(nu)
                if embedded:
                    other = table.w if sigma > 0 else table.z
                    for (jj, nu) in other.get(k - kp, {}):
                        if jj == j:
                            keys.add(nu)
            for nu in sorted(keys):
                if nu == skip:
                    continue
                rhs = f.get(nu, CoeffPoly.zero(d)) + _eta_terms(table, get, j, k, nu, scale)
                if rhs.is_zero():
                    continue
                x = spec.dot(nu)
                den = (x if sigma > 0 else -x) - omj
                if _is_zero_den(den):
                    raise ResonanceError(j, nu, sigma)
                store[(j, nu)] = rhs.scale(1 / den)
    table.z[k] = zs
    table.w[k] = ws


def _shifted_eta(table, get, j, k, nu, scale):
    """sum_{k'=1}^{k-1} eta^(k') X^(k-k')_nu (the eta^(k) X^(0) term is excluded)."""
    acc = CoeffPoly.zero(table.d)
    for kp in range(1, k):
        e = table.eta.get((kp, j))
        if e is None or e.is_zero():
            continue
        X = get(k - kp, j, nu)
        if not X.is_zero():
            acc = acc + e * X
    if scale is not None and not acc.is_zero():
        acc = acc.scale(scale)
    return acc


def solve_up_to(model, K, variant=None, strict=True):
    """Series table through order K."""
    if K < 0:
        raise ValueError("K must be >= 0")
    table = SeriesTable(model, variant)
    for k in range(1, K + 1):
        solve_order(table, k, strict)
    return table


def check_invariants(table):
    """Structural facts every solved table satisfies; returns a list of failures."""
    fails = []
    d = table.d
    q = table.model.max_degree() if table.variant == "real-x" else table.forces.max_degree()
    for k in range(1, table.K + 1):
        for j, nu, p in table.entries(k):
            if norm(nu) > k * (q - 1) + 1 and not p.is_zero():
                fails.append(f"mode support: k={k} j={j} nu={list(nu)}")
            if table.variant == "real-x":
                if p.conjugate() != table.xc(k, j, tuple(-a for a in nu)):
                    fails.append(f"reality: k={k} j={j} nu={list(nu)}")
        for j in range(1, d + 1):
            for s in (1, -1):
                if not table.xc(k, j, _unit(d, j, s)).is_zero() and table.variant == "real-x":
                    fails.append(f"x^(k)_(j,+-e_j) nonzero: k={k} j={j}")
            eta = table.eta_c(k, j)
            if not eta.is_modulus_only():
                fails.append(f"eta not modulus-only: k={k} j={j}")
            if table.eta_c(k, j, -1) != eta.conjugate():
                fails.append(f"eta_- != conj(eta_+): k={k} j={j}")
    return fails
