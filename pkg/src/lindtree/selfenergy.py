"""Clusters, self-energy clusters, localisation and the self-energy matrix.

A self-energy cluster T is stored as a marked tree.  Its root line is the
exiting line, and one leaf of kind ``X`` stands for the entering line with
momentum nu'.  Interior lines carry their scale label inside the key, so maps
that keep labels (marking another end, flipping signs) act on one object.

The entering value u = omega.nu' reaches Val(T, u) only through the path lines
between the two external lines.  A path line with momentum nu_l is evaluated
at x = omega.nu_l + (u - omega.nu'), so that Val(T, u) is the product of a
fixed polynomial and the scalar g(u) = prod over the path of G_l(u).
"""

from __future__ import annotations

import itertools
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from fractions import Fraction

import mpmath

from .coeffalg import BigFloat, CoeffPoly, QNum
from .frequency import (ScalePartition, add, modes, neg, norm, divisor_neighbours,
                        small_divisor, sub, unit, zw_divisor, equal_divisors)
from .trees import (Tree, _enumerator, _force_coeff, _multisets, _node_counts, _sgn,
                    _source, check_constraints, flatten, line_divisor, tree_value)

__all__ = [
    "CTree",
    "LaurentPoly",
    "Cluster",
    "ClusterReport",
    "SelfEnergyCluster",
    "SelfEnergyMatrix",
    "PoleError",
    "detect_clusters",
    "enumerate_self_energy",
    "se_value",
    "se_derivative",
    "localize",
    "regularize",
    "regularize_quadrature_check",
    "localization_cutoff",
    "build_matrix",
    "matrix_product_vanishes",
    "verify_symmetry_lemmas",
    "verify_cancellation",
    "verify_counting",
    "neighbour_count",
]


class PoleError(ZeroDivisionError):
    """A propagator hit a zero denominator in unscaled evaluation."""


def _variant(model, variant):
    if variant is None:
        return "real" if model.kind == "real" else "zw"
    return variant


# -- marked trees ------------------------------------------------------------------
class CTree(Tree):
    """A tree node with an optional scale label on the line leaving it.

    Kind ``X`` is the entering leaf of a self-energy cluster: component j',
    sign sigma', momentum nu' and order 0.
    """

    __slots__ = ("scale",)

    def __init__(self, kind, j, sigma, p, children, nu, order, coeff=None, scale=None):
        super().__init__(kind, j, sigma, p, children, nu, order, coeff)
        self.scale = scale
        if kind == "X":
            self.key = f"X{j}{_sgn(sigma)}@" + ",".join(str(a) for a in nu)
        if scale is not None:
            self.key += f"#{scale}"
        if kind in ("E", "X"):
            self.multiplicity = 1
        elif kind == "N":
            reps = Counter(c.key for c in children)
            self.multiplicity = (math.factorial(len(children))
                                 // math.prod(math.factorial(m) for m in reps.values())
                                 * math.prod(c.multiplicity for c in children))
        else:
            self.multiplicity = 2 * children[0].multiplicity * children[1].multiplicity

    def __repr__(self):
        return f"CTree({self.key}, nu={list(self.nu)})"


def _remake(t, kids, scale):
    """Copy of node ``t`` with new children and label; momentum is recomputed."""
    if t.kind in ("E", "X"):
        return CTree(t.kind, t.j, t.sigma, 0, (), t.nu, 0)
    if t.kind == "N":
        kids = tuple(sorted(kids, key=lambda c: c.key))
        nu = tuple(sum(c.nu[a] for c in kids) for a in range(len(t.nu)))
    else:
        kids = tuple(kids)
        nu = kids[1].nu
    return CTree(t.kind, t.j, t.sigma, t.p, kids, nu, t.order, t.coeff, scale)


def _label(t):
    return getattr(t, "scale", None)


def _marked_order(t):
    if t.kind in ("E", "X"):
        return 0
    return (t.p if t.kind == "N" else 0) + sum(_marked_order(c) for c in t.children)


class _Ctx:
    """Model data shared by the self-energy routines."""

    def __init__(self, model, variant, partition=None):
        self.model = model
        self.variant = variant
        self.spec = model.spec
        self.d = model.spec.d
        self.en = _enumerator(model, variant)
        self.src = _source(model, variant)
        self.part = partition if partition is not None else ScalePartition(model.spec.gamma)

    def sign(self, j, nu, default):
        if self.variant == "real":
            return small_divisor(self.spec, j, nu)[1]
        return default

    def on_shell(self, t):
        return t.kind not in ("E", "X") and t.nu == unit(self.d, t.j, t.sigma)


def _rebuild(ctx, t, repl, pos, root=True):
    """Rebuild ``t`` replacing the leaves at pre-order positions in ``repl``.

    Momenta are recomputed; real line signs follow the minimizer, order-0
    node signs and all labels are kept.
    """
    i = pos[0]
    pos[0] += 1
    if i in repl:
        # skip the replaced subtree in the position count
        pos[0] += len(t.nodes()) - 1
        return repl[i]
    if t.kind in ("E", "X"):
        return t if isinstance(t, CTree) else CTree(t.kind, t.j, t.sigma, 0, (), t.nu, 0)
    kids = [_rebuild(ctx, c, repl, pos, False) for c in t.children]
    if t.kind == "N":
        kids = tuple(sorted(kids, key=lambda c: c.key))
        nu = tuple(sum(c.nu[a] for c in kids) for a in range(ctx.d))
        sig = ctx.sign(t.j, nu, t.sigma)
    else:
        kids = tuple(kids)
        nu = kids[1].nu
        sig = t.sigma
    return CTree(t.kind, t.j, sig, t.p, kids, nu, t.order, t.coeff, _label(t))


def _replace(ctx, t, repl):
    return _rebuild(ctx, t, repl, [0])


def _flip(ctx, t):
    """Negate momenta, end signs and order-0 signs; labels are kept.

    In the (z, w) variant every line sign is negated and the force
    coefficients are looked up again for the new signs.
    """
    if t.kind == "E":
        return CTree("E", t.j, -t.sigma, 0, (), neg(t.nu), 0)
    if t.kind == "X":
        return CTree("X", t.j, -t.sigma, 0, (), neg(t.nu), 0)
    kids = [_flip(ctx, c) for c in t.children]
    if t.kind == "N":
        kids = tuple(sorted(kids, key=lambda c: c.key))
        nu = neg(t.nu)
        sig = ctx.sign(t.j, nu, -t.sigma)
        coeff = t.coeff
        if ctx.variant == "zw":
            probe = Tree("N", t.j, sig, t.p, kids, nu, t.order, QNum(0))
            coeff = _force_coeff(ctx.src, "zw", probe)
        return CTree("N", t.j, sig, t.p, kids, nu, t.order, coeff, _label(t))
    return CTree("V", t.j, -t.sigma, 0, tuple(kids), kids[1].nu, t.order, None, _label(t))


# -- enumeration --------------------------------------------------------------------
class _MarkedEnumerator:
    """Trees containing exactly one copy of a given entering leaf."""

    def __init__(self, en, leaf):
        self.en = en
        self.leaf = leaf
        self._memo = {}

    def trees(self, k, j):
        if k == 0:
            return [self.leaf] if self.leaf.j == j else []
        key = (k, j)
        r = self._memo.get(key)
        if r is None:
            r = self._build(k, j)
            self._memo[key] = r
        return r

    def _pool(self, i, tau, max_order):
        en, d = self.en, self.en.d
        out = []
        for m in range(max_order + 1):
            for t in self.trees(m, i):
                if en.variant == "zw" and t.sigma != tau:
                    continue
                if m > 0 and t.nu in (unit(d, i, 1), unit(d, i, -1)):
                    if en.variant == "real" or t.nu == unit(d, i, t.sigma):
                        continue
                out.append(t)
        return out

    def _entries(self, j):
        en, d = self.en, self.en.d
        if en.variant == "real":
            for s, p, v in en.model.terms_for(j):
                yield None, [(i + 1, None, s[i]) for i in range(d) if s[i]], p, v
            return
        for sigma in (1, -1):
            for sp, sm, p, v in en.forces.terms_for(sigma, j):
                slots = ([(i + 1, 1, sp[i]) for i in range(d) if sp[i]]
                         + [(i + 1, -1, sm[i]) for i in range(d) if sm[i]])
                yield sigma, slots, p, v

    def _build(self, k, j):
        en, d = self.en, self.en.d
        out = []
        for sigma, slots, p, coeff in self._entries(j):
            if p > k:
                continue
            budget = k - p
            pools = [en._child_pool(i, tau, budget) for i, tau, _ in slots]
            for a, (i, tau, _) in enumerate(slots):
                counts = [c - (b == a) for b, (_, _, c) in enumerate(slots)]
                for mt in self._pool(i, tau, budget):
                    for combo in _multisets(pools, counts, budget - mt.order):
                        kids = tuple(sorted(combo + (mt,), key=lambda t: t.key))
                        nu = tuple(sum(c.nu[x] for c in kids) for x in range(d))
                        sig = en.line_sign(j, nu) if sigma is None else sigma
                        out.append(CTree("N", j, sig, p, kids, nu, k, coeff))
        for k1 in range(1, k + 1):
            k2 = k - k1
            for sigma in (1, -1):
                on = unit(d, j, sigma)
                pairs = []
                if k2 >= 1:
                    pairs.append((self.trees(k1, j), en.trees(k2, j)))
                pairs.append((en.trees(k1, j), self.trees(k2, j)))
                for etas, others in pairs:
                    etas = [t for t in etas if t.nu == on and t.sigma == sigma]
                    if not etas:
                        continue
                    others = [t for t in others if t.nu != on and t.sigma == sigma]
                    for a in etas:
                        for b in others:
                            out.append(CTree("V", j, sigma, 0, (a, b), b.nu, k))
        # one tree per marked key: the marked child makes siblings distinct
        uniq = {}
        for t in out:
            uniq.setdefault(t.key, t)
        return list(uniq.values())


def _se_condition(ctx, nu_out, j, sigma, nu_in, jp, sp):
    """|nu_T - nu'| <= 2 and equal small divisors of the external lines."""
    if norm(sub(nu_out, nu_in)) > 2:
        return False
    if ctx.variant == "real":
        return equal_divisors(ctx.spec, nu_out, j, nu_in, jp)
    a = zw_divisor(ctx.spec, j, sigma, nu_out)
    b = zw_divisor(ctx.spec, jp, sp, nu_in)
    return abs(a) == abs(b)


def _path_indices(lines):
    """Path lines from the entering side upward (root and leaf excluded)."""
    x = [ln.index for ln in lines if ln.tree.kind == "X"]
    if len(x) != 1:
        raise ValueError("a self-energy cluster needs exactly one entering leaf")
    out = []
    i = lines[x[0]].parent
    while i > 0:
        out.append(i)
        i = lines[i].parent
    return x[0], out


def _local_momentum(ctx, nu, nu_in, jp, sp):
    """Path momentum at u = sigma' omega_j': nu - nu' + sigma' e_j'."""
    return add(sub(nu, nu_in), unit(ctx.d, jp, sp))


def _label_choices(ctx, tree, nu_in, jp, sp, n):
    lines = flatten(tree)
    _, path = _path_indices(lines)
    on_path = set(path)
    choices = []
    for ln in lines:
        t = ln.tree
        if ln.index == 0 or t.kind in ("E", "X"):
            choices.append([None])
            continue
        if ctx.on_shell(t):
            choices.append([-1])
            continue
        opts = set()
        moms = [t.nu]
        if ln.index in on_path:
            moms.append(_local_momentum(ctx, t.nu, nu_in, jp, sp))
        for mom in moms:
            delta = line_divisor(ctx.spec, ctx.variant, t.j, t.sigma, mom)
            if delta.is_zero():
                continue
            opts.update(m for m in ctx.part.support(delta) if m <= n)
        if not opts:
            return None
        choices.append(sorted(opts))
    return choices


def _with_labels(t, labels, pos):
    i = pos[0]
    pos[0] += 1
    if t.kind in ("E", "X"):
        return t if isinstance(t, CTree) else CTree(t.kind, t.j, t.sigma, 0, (), t.nu, 0)
    kids = [_with_labels(c, labels, pos) for c in t.children]
    return _remake(t, kids, labels[i])


@dataclass(eq=False)
class SelfEnergyCluster:
    """A self-energy cluster in the marked-tree form.

    ``path`` lists pre-order indices of the path lines from the entering side;
    ``n`` bounds the interior scales and ``n_T`` is the smaller external scale.
    """

    tree: CTree
    j: int
    sigma: int
    jp: int
    sp: int
    nu_in: tuple
    nu_out: tuple
    k: int
    n: int
    n_T: int
    e_class: bool
    path: tuple
    depth: int = 1
    k_ring: int = None
    core: object = None
    model: object = field(default=None, repr=False)
    variant: str = "real"
    partition: object = field(default=None, repr=False)

    @property
    def key(self):
        return self.tree.key

    @property
    def multiplicity(self):
        return self.tree.multiplicity

    def path_labels(self):
        lines = flatten(self.tree)
        return [lines[i].tree.scale for i in self.path]


def _make_cluster(ctx, tree, n, n_T, depth=1, core=None):
    lines = flatten(tree)
    xi, path = _path_indices(lines)
    leaf = lines[xi].tree
    e_class = tree.kind == "V" and tree.children[1].kind == "X"
    se = SelfEnergyCluster(tree, tree.j, tree.sigma, leaf.j, leaf.sigma, leaf.nu, tree.nu,
                           _marked_order(tree), n, n_T, e_class, tuple(path), depth,
                           None, core, ctx.model, ctx.variant, ctx.part)
    se.k_ring = _k_ring(ctx, se)
    return se


def _k_ring(ctx, se):
    """Order of T minus the maximal self-energy clusters strictly inside T."""
    lines = flatten(se.tree)
    scales = [ln.tree.scale for ln in lines]
    scales[0] = se.n_T
    xi = [ln.index for ln in lines if ln.tree.kind == "X"][0]
    scales[xi] = se.n_T
    rep = detect_clusters(ctx.model, se.tree, scales, ctx.variant, extract=False)
    top = [c for c in rep.self_energy if c.exiting == 0 and c.entering[0] == xi]
    base = top[0].depth if top else 0
    inner = [c for c in rep.self_energy if c.depth == base + 1 and c.exiting != 0]
    return se.k - sum(c.k for c in inner)


def enumerate_self_energy(model, k, j, sigma, jp, sp, nu_in, n, variant=None, partition=None):
    """Inequivalent self-energy clusters of order k in R^k_{j,sigma,j',sigma'}(u, n).

    u is fixed by the entering momentum nu'.  Interior lines get scales in
    [0, n] (or -1 on shell); a scale is admissible when Psi_m does not vanish
    at the actual divisor or, on a path line, at the localised one.  The
    external lines are taken at scale n + 2.
    """
    variant = _variant(model, variant)
    ctx = _Ctx(model, variant, partition)
    d = ctx.d
    nu_in = tuple(nu_in)
    if k < 1:
        return []
    if variant == "real" and small_divisor(ctx.spec, jp, nu_in)[1] != sp:
        return []
    if nu_in == unit(d, jp, sp):
        return []
    leaf = CTree("X", jp, sp, 0, (), nu_in, 0)
    me = _MarkedEnumerator(ctx.en, leaf)
    out = []
    for t in me.trees(k, j):
        if t.sigma != sigma or ctx.on_shell(t):
            continue
        if not _se_condition(ctx, t.nu, j, sigma, nu_in, jp, sp):
            continue
        choices = _label_choices(ctx, t, nu_in, jp, sp, n)
        if choices is None:
            continue
        for labels in itertools.product(*choices):
            lt = _with_labels(t, labels, [0])
            out.append(_make_cluster(ctx, lt, n, n + 2))
    out.sort(key=lambda c: c.key)
    return out


def neighbour_count(spec, nu, j):
    """Number of (nu', j') with |nu - nu'| <= 2 sharing the small divisor of (nu, j)."""
    return len(divisor_neighbours(spec, tuple(nu), j))


# -- values -------------------------------------------------------------------------
class LaurentPoly:
    """A polynomial divided by a monomial in the c symbols.

    Arises when a counterterm factor 1/c^sigma has no matching end, which
    only happens when the entering leaf sits under a counterterm child.
    """

    __slots__ = ("num", "den")

    def __init__(self, num, den):
        self.num = num
        self.den = tuple(sorted(den))

    def _cross(self, other):
        if isinstance(other, LaurentPoly):
            a, b = self.num, other.num
            for j, s in other.den:
                a = a.times_symbol(j, s)
            for j, s in self.den:
                b = b.times_symbol(j, s)
            return a, b
        b = other
        for j, s in self.den:
            b = b.times_symbol(j, s)
        return self.num, b

    def __eq__(self, other):
        a, b = self._cross(other)
        return a == b

    def __sub__(self, other):
        den = list(self.den)
        a, b = self._cross(other)
        if isinstance(other, LaurentPoly):
            den += list(other.den)
        return LaurentPoly(a - b, den)

    def __add__(self, other):
        den = list(self.den)
        a, b = self._cross(other)
        if isinstance(other, LaurentPoly):
            den += list(other.den)
        return LaurentPoly(a + b, den)

    def scale(self, s):
        return LaurentPoly(self.num.scale(s), self.den)

    def is_zero(self):
        return self.num.is_zero()

    def __str__(self):
        den = "*".join(f"c{j}{_sgn(s)}" for j, s in self.den)
        return f"({self.num})/({den})"


@dataclass
class _Split:
    """Val(T, u) = poly * const * prod over path of G_l(u)."""

    poly: CoeffPoly
    divisions: list
    const: object
    path: list       # (j, sigma, x0, label) with x = x0 + u
    u_actual: object


def _prop(ctx, j, sigma, x, label, scaled, where):
    """(G, dG) of a line with real argument x; label -1 means on shell."""
    w = ctx.spec.omega[j - 1]
    if ctx.variant == "real":
        den = x * x - w * w
        dden = 2 * x
        s = 1 if x >= 0 else -1
        y = x - s * w
        delta, ddelta = (y, 1) if y >= 0 else (-y, -1)
    else:
        den = (x if sigma > 0 else -x) - w
        dden = sigma
        delta, ddelta = (den, sigma) if den >= 0 else (-den, -sigma)
    if not scaled:
        if den.is_zero():
            raise PoleError(f"pole on line {where}: component {j}, argument {x}")
        return 1 / den, -dden / (den * den)
    psi = ctx.part.Psi(label, delta)
    if psi.is_zero():
        return QNum(0), ctx.part.dPsi(label, delta) * ddelta / den if not den.is_zero() else QNum(0)
    dpsi = ctx.part.dPsi(label, delta) * ddelta
    return psi / den, dpsi / den - psi * dden / (den * den)


def _split(se, scaled=True, ctx=None):
    ctx = ctx or _Ctx(se.model, se.variant, se.partition)
    d = ctx.d
    lines = flatten(se.tree)
    on_path = set(se.path)
    u_act = ctx.spec.dot(se.nu_in)
    poly = CoeffPoly.constant(d, 1)
    divisions = []
    const = QNum(1)
    path = []
    for ln in lines:
        t = ln.tree
        if t.kind == "E":
            poly = poly * CoeffPoly.symbol(d, t.j, t.sigma)
            continue
        if t.kind == "X":
            continue
        if t.kind == "N":
            fw, _ = _node_counts(t, ctx.variant)
            const = const * _force_coeff(ctx.src, ctx.variant, t) * fw
        else:
            const = const * QNum(-1) / 2
            divisions.append((t.j, t.sigma))
        if ln.index == 0:
            continue
        label = t.scale
        if ln.index in on_path:
            if label == -1 or (not scaled and ctx.on_shell(t)):
                continue
            path.append((t.j, t.sigma, ctx.spec.dot(t.nu) - u_act, label, ln.index))
            continue
        if label == -1 or (not scaled and ctx.on_shell(t)):
            continue
        g, _ = _prop(ctx, t.j, t.sigma, ctx.spec.dot(t.nu), label, scaled, ln.index)
        const = const * g
    return _Split(poly, divisions, const, path, u_act)


def _finish(poly, divisions):
    try:
        for j, s in divisions:
            poly = poly.divide_symbol(j, s)
        return poly
    except ArithmeticError:
        pass
    return LaurentPoly(poly, divisions)


def _path_product(ctx, sp, u, scaled):
    g = QNum(1)
    for j, sigma, x0, label, idx in sp.path:
        x = u + x0 if isinstance(u, BigFloat) else x0 + u
        gl, _ = _prop(ctx, j, sigma, x, label, scaled, idx)
        g = gl * g if isinstance(gl, BigFloat) else g * gl
    return g


def _path_derivative(ctx, sp, u, scaled):
    vals = []
    for j, sigma, x0, label, idx in sp.path:
        x = u + x0 if isinstance(u, BigFloat) else x0 + u
        vals.append(_prop(ctx, j, sigma, x, label, scaled, idx))
    total = QNum(0)
    for a in range(len(vals)):
        term = vals[a][1]
        for b, (g, _) in enumerate(vals):
            if b != a:
                term = g * term if isinstance(g, BigFloat) else term * g
        total = term + total if isinstance(term, BigFloat) else total + term
    return total


def _scaled_poly(sp, g):
    s = g * sp.const if isinstance(g, BigFloat) else sp.const * g
    if isinstance(s, BigFloat):
        return _finish(sp.poly.to_big(s.prec).scale(s), sp.divisions)
    return _finish(sp.poly.scale(s), sp.divisions)


def se_value(se, u=None, scaled=True):
    """Val(T, u); u defaults to omega.nu' and may be exact or a BigFloat.

    With ``scaled=False`` the cutoff functions are dropped and a vanishing
    denominator raises ``PoleError`` naming the line.
    """
    ctx = _Ctx(se.model, se.variant, se.partition)
    sp = _split(se, scaled, ctx)
    if u is None:
        u = sp.u_actual
    return _scaled_poly(sp, _path_product(ctx, sp, u, scaled))


def se_derivative(se, u=None, scaled=True):
    """d/du Val(T, u)."""
    ctx = _Ctx(se.model, se.variant, se.partition)
    sp = _split(se, scaled, ctx)
    if u is None:
        u = sp.u_actual
    return _scaled_poly(sp, _path_derivative(ctx, sp, u, scaled))


def localization_cutoff(k_ring, n_T, tau):
    """k <= K0 2^(n_T/tau) with K0 = 2^(-8/tau)/4, decided in integers."""
    if k_ring == 0:
        return True
    e = n_T - 8
    if e < 0:
        return False
    p, q = tau.numerator, tau.denominator
    return (4 * k_ring) ** p <= 2 ** (e * q)


def _zero(se):
    return CoeffPoly.zero(se.model.spec.d)


def localize(se, force_localize=False):
    """L Val(T, u): the value at u = sigma' omega_j' when T is small enough.

    Zero when a path line is on shell or (unless forced) when
    k(T ring) > K0 2^(n_T/tau).
    """
    if any(lab == -1 for lab in se.path_labels()):
        return _zero(se)
    if not force_localize and not localization_cutoff(se.k_ring, se.n_T, se.model.spec.tau):
        return _zero(se)
    u0 = se.model.spec.omega[se.jp - 1] * se.sp
    return se_value(se, u0)


def regularize(se, u=None, force_localize=False):
    """R Val(T, u) = Val(T, u) - L Val(T, u)."""
    v = se_value(se, u)
    loc = localize(se, force_localize)
    if isinstance(v, CoeffPoly) and any(isinstance(c, BigFloat) for _, c in v.items()):
        prec = next(c.prec for _, c in v.items() if isinstance(c, BigFloat))
        loc = loc.to_big(prec) if isinstance(loc, CoeffPoly) else loc
    return v - loc


def _breakpoints(ctx, sp, u0, h):
    """Values t in (0, 1) where some path propagator changes smoothness."""
    pts = set()
    lo, hi = ctx.part.lo, ctx.part.hi
    for j, sigma, x0, label, _ in sp.path:
        w = ctx.spec.omega[j - 1]
        ds = [QNum(0)]
        if label is not None and label >= 0:
            for m in (label, label - 1):
                if m >= 0:
                    ds += [lo / 2 ** m, hi / 2 ** m]
        xs = []
        for b in ds:
            if ctx.variant == "real":
                xs += [w + b, w - b, -w + b, -w - b]
            else:
                xs += [(w + b) * sigma, (w - b) * sigma]
        if ctx.variant == "real":
            xs.append(QNum(0))
        for xstar in xs:
            t = (xstar - x0 - u0) / h
            if t > 0 and t < 1:
                pts.add(t)
    return sorted(pts, key=lambda t: t.to_big(128).value.real)


def regularize_quadrature_check(se, u, prec=256, force_localize=True):
    """Compare R Val(T, u) with (u - u0) int_0^1 d/du Val(u0 + t (u - u0)) dt.

    Both sides share the polynomial factor, so the comparison is made on the
    scalar path product.  Returns a dict with the relative error.
    """
    ctx = _Ctx(se.model, se.variant, se.partition)
    sp = _split(se, True, ctx)
    u0 = se.model.spec.omega[se.jp - 1] * se.sp
    active = localize(se, force_localize)
    if isinstance(active, CoeffPoly) and active.is_zero():
        return {"key": se.key, "localized": False, "rel_error": 0.0}
    h = u - u0
    ub = u.to_big(prec)
    direct = _path_product(ctx, sp, ub, True) - _path_product(ctx, sp, u0.to_big(prec), True)
    cuts = _breakpoints(ctx, sp, u0, h)
    with mpmath.workprec(prec):
        u0v = u0.to_big(prec).value.real
        hv = h.to_big(prec).value.real

        def f(t):
            x = BigFloat(mpmath.mpf(u0v + t * hv), prec)
            return _path_derivative(ctx, sp, x, True).to_big(prec).value.real

        nodes = [mpmath.mpf(0)] + [c.to_big(prec).value.real for c in cuts] + [mpmath.mpf(1)]
        integral = mpmath.quad(f, nodes) * hv
        ref = direct.to_big(prec).value.real
        err = abs(integral - ref)
        scale = max(abs(ref), mpmath.mpf(2) ** (-prec // 2))
        rel = err / scale
    return {"key": se.key, "localized": True, "direct": mpmath.nstr(ref, 20),
            "integral": mpmath.nstr(integral, 20), "rel_error": float(rel)}


# -- clusters inside a tree ------------------------------------------------------------
@dataclass(frozen=True)
class Cluster:
    """A maximal connected set of nodes joined by lines of scale <= n."""

    scale: int
    nodes: frozenset
    lines: frozenset
    exiting: int
    entering: tuple
    k: int
    self_energy: bool = False
    path: tuple = ()
    depth: int = 0
    k_ring: int = None


@dataclass
class ClusterReport:
    clusters: list
    self_energy: list
    resonant: list
    extracted: list = None


class _UF:
    def __init__(self, n):
        self.p = list(range(n))

    def find(self, i):
        while self.p[i] != i:
            self.p[i] = self.p[self.p[i]]
            i = self.p[i]
        return i

    def union(self, a, b):
        self.p[self.find(a)] = self.find(b)


def _node_k(t):
    return t.p if t.kind == "N" else 0


def _extract(lines, sc, x, e):
    kids = defaultdict(list)
    for ln in lines:
        if ln.parent >= 0:
            kids[ln.parent].append(ln.index)

    def build(i):
        t = lines[i].tree
        if i == e:
            return CTree("X", t.j, t.sigma, 0, (), t.nu, 0)
        if t.kind == "E":
            return CTree("E", t.j, t.sigma, 0, (), t.nu, 0)
        return _remake(t, [build(c) for c in kids[i]], None if i == x else sc[i])

    return build(x)


def detect_clusters(model, tree, scales, variant=None, extract=True):
    """Clusters, self-energy clusters and resonant lines of a scaled tree.

    ``scales`` follows ``flatten(tree)``; ends may carry ``None`` and count as
    scale -1.  Node i is the node the line i leaves.
    """
    variant = _variant(model, variant)
    ctx = _Ctx(model, variant)
    lines = flatten(tree)
    L = len(lines)
    sc = []
    for ln in lines:
        s = scales[ln.index]
        if s is None:
            if ln.tree.kind == "E":
                s = -1
            else:
                raise ValueError(f"line {ln.index} needs a scale")
        sc.append(s)
    parent = [ln.parent for ln in lines]
    internal = [i for i in range(1, L)]
    found = {}
    for n in sorted(set(sc[i] for i in internal)):
        uf = _UF(L)
        use = [i for i in internal if sc[i] <= n]
        for i in use:
            uf.union(i, parent[i])
        groups = defaultdict(list)
        for i in use:
            groups[uf.find(i)].append(i)
        for members in groups.values():
            if max(sc[i] for i in members) != n:
                continue
            nodes = frozenset(set(members) | {parent[i] for i in members})
            if nodes in found:
                continue
            top = [v for v in nodes if parent[v] not in nodes]
            x = top[0]
            entering = tuple(i for i in range(1, L) if parent[i] in nodes and i not in nodes)
            k = sum(_node_k(lines[v].tree) for v in nodes)
            found[nodes] = Cluster(n, nodes, frozenset(members), x, entering, k)
    clusters = sorted(found.values(), key=lambda c: (c.scale, sorted(c.nodes)))
    se = []
    for c in clusters:
        if len(c.entering) != 1:
            continue
        e, x = c.entering[0], c.exiting
        if c.scale > min(sc[x], sc[e]) - 2:
            continue
        te, tx = lines[e].tree, lines[x].tree
        if ctx.on_shell(tx) or te.kind == "E":
            continue
        if not _se_condition(ctx, tx.nu, tx.j, tx.sigma, te.nu, te.j, te.sigma):
            continue
        path = []
        v = parent[e]
        while v != x:
            path.append(v)
            v = parent[v]
        se.append(c.__class__(c.scale, c.nodes, c.lines, x, c.entering, c.k, True, tuple(path)))
    out = []
    for c in se:
        depth = sum(1 for o in se if c.nodes <= o.nodes)
        inner = [o for o in se if o.nodes < c.nodes
                 and sum(1 for z in se if o.nodes <= z.nodes) == depth + 1]
        kr = c.k - sum(o.k for o in inner)
        out.append(Cluster(c.scale, c.nodes, c.lines, c.exiting, c.entering, c.k, True,
                           c.path, depth, kr))
    exits = {c.exiting for c in out}
    enters = {c.entering[0] for c in out}
    resonant = sorted(exits & enters)
    extracted = None
    if extract:
        extracted = []
        for c in out:
            e, x = c.entering[0], c.exiting
            mt = _extract(lines, sc, x, e)
            cl = _make_cluster(ctx, mt, c.scale, min(sc[x], sc[e]), c.depth, c)
            extracted.append(cl)
    return ClusterReport(clusters, out, resonant, extracted)


# -- the self-energy matrix -------------------------------------------------------------
def _default_base(ctx):
    """A momentum nu far from the origin with the smallest divisor delta_{1,+}."""
    d = ctx.d
    best = None
    radius = 8 if d > 1 else 6
    for nu in modes(d, radius):
        if norm(nu) < 4:
            continue
        x = ctx.spec.dot(nu)
        if x <= 0:
            continue
        delta = abs(x - ctx.spec.omega[0])
        if delta.is_zero():
            continue
        key = (delta, tuple(nu))
        if best is None or delta < best[0] or (delta == best[0] and tuple(nu) < best[1]):
            best = key
    return best[1]


def _entering_momentum(d, nu, jp, sp):
    return add(sub(nu, unit(d, 1, 1)), unit(d, jp, sp))


@dataclass
class SelfEnergyMatrix:
    """Localised self-energy blocks for one order k and interior scale bound n.

    ``entries[(j, s, j', s')]`` sums L Val over the clusters whose external
    momenta are nu - e_1 + s e_j and nu - e_1 + s' e_j'.  ``factors[(j, j')]``
    is M_jj' when every entry equals c_j^s c_j'^(-s') M_jj'.
    """

    k: int
    n: int
    nu: tuple
    entries: dict
    factors: dict
    form: str
    factorized: bool
    count: int


_FORM_A = "c_j^s c_j'^-s'"
_FORM_B = "c_j^-s c_j'^s'"


def _factor(entries, d, form):
    out = {}
    for j in range(1, d + 1):
        for jp in range(1, d + 1):
            qs = []
            for s in (1, -1):
                for sp in (1, -1):
                    e = entries[(j, s, jp, sp)]
                    if isinstance(e, LaurentPoly):
                        return None
                    a, b = (s, -sp) if form == _FORM_A else (-s, sp)
                    if e.is_zero():
                        qs.append(e)
                        continue
                    try:
                        qs.append(e.divide_symbol(j, a).divide_symbol(jp, b))
                    except ArithmeticError:
                        return None
            if any(q != qs[0] for q in qs):
                return None
            out[(j, jp)] = qs[0]
    return out


def build_matrix(model, k, n, nu=None, force_localize=False, variant=None, partition=None):
    variant = _variant(model, variant)
    ctx = _Ctx(model, variant, partition)
    d = ctx.d
    nu = tuple(nu) if nu is not None else _default_base(ctx)
    entries = {}
    count = 0
    for j, s, jp, sp in itertools.product(range(1, d + 1), (1, -1), range(1, d + 1), (1, -1)):
        nin = _entering_momentum(d, nu, jp, sp)
        nout = _entering_momentum(d, nu, j, s)
        acc = CoeffPoly.zero(d)
        for c in enumerate_self_energy(model, k, j, s, jp, sp, nin, n, variant, ctx.part):
            if c.nu_out != nout:
                continue
            count += 1
            acc = acc + localize(c, force_localize).scale(QNum(c.multiplicity))
        entries[(j, s, jp, sp)] = acc
    form, factors = None, None
    for f in (_FORM_A, _FORM_B):
        factors = _factor(entries, d, f)
        if factors is not None:
            form = f
            break
    return SelfEnergyMatrix(k, n, nu, entries, factors, form, factors is not None, count)


def matrix_product_vanishes(m1, m2, d):
    """LM1 diag(+1, -1, ...) LM2 == 0 as a matrix of polynomials."""
    for j1, s1, j2, s2 in itertools.product(range(1, d + 1), (1, -1), range(1, d + 1), (1, -1)):
        acc = CoeffPoly.zero(d)
        for jl, sl in itertools.product(range(1, d + 1), (1, -1)):
            acc = acc + (m1.entries[(j1, s1, jl, sl)] * m2.entries[(jl, sl, j2, s2)]).scale(QNum(sl))
        if not acc.is_zero():
            return False
    return True


# -- symmetry families -----------------------------------------------------------------
def _pruned_end_positions(t):
    """Pre-order positions of ends kept after dropping counterterm subtrees."""
    out = []
    pos = [0]

    def walk(u, top):
        i = pos[0]
        pos[0] += 1
        dropped = (not top) and u.kind not in ("E", "X") and _label(u) == -1
        if dropped:
            pos[0] += len(u.nodes()) - 1
            return
        if u.kind == "E":
            out.append((i, u.j, u.sigma))
        for c in u.children:
            walk(c, False)

    walk(t, True)
    return out


def _theta(ctx, se):
    """The tree obtained by turning the entering leaf into an end."""
    lines = flatten(se.tree)
    xi = [ln.index for ln in lines if ln.tree.kind == "X"][0]
    end = CTree("E", se.jp, se.sp, 0, (), unit(ctx.d, se.jp, se.sp), 0)
    return _replace(ctx, se.tree, {xi: end})


def _mark(ctx, t, positions, j, s, nu):
    out = []
    for i, jj, ss in _pruned_end_positions(t):
        if (jj, ss) == (j, s) and i in positions:
            out.append(_replace(ctx, t, {i: CTree("X", j, s, 0, (), tuple(nu), 0)}))
    return out


def _family(ctx, t, j, s, nu):
    pos = {i for i, jj, ss in _pruned_end_positions(t) if (jj, ss) == (j, s)}
    return _mark(ctx, t, pos, j, s, nu)


def _as_root(t):
    return _remake(t, list(t.children), None)


def _lval(ctx, tree, n, force):
    se = _make_cluster(ctx, tree, n, n + 2)
    return se, localize(se, force)


def _sum(vals, d):
    acc = None
    for v in vals:
        acc = v if acc is None else acc + v
    return acc if acc is not None else CoeffPoly.zero(d)


def _times(v, j, s):
    if isinstance(v, LaurentPoly):
        return LaurentPoly(v.num.times_symbol(j, s), v.den)
    return v.times_symbol(j, s)


def _end_count_check(ctx, se):
    """End-count balance of the pruned cluster (main branch only)."""
    d = ctx.d
    j, s, jp, sp = se.j, se.sigma, se.jp, se.sp
    if sub(se.nu_out, unit(d, j, s)) != sub(se.nu_in, unit(d, jp, sp)):
        return None
    if se.e_class:
        t = se.tree.children[0]
        ends = Counter((a, b) for _, a, b in _pruned_end_positions(_as_root(t)))
        return ends[(j, s)] == ends[(j, -s)] + 1
    ends = Counter((a, b) for _, a, b in _pruned_end_positions(se.tree))
    for i in range(1, d + 1):
        if i in (j, jp):
            continue
        if ends[(i, 1)] != ends[(i, -1)]:
            return False
    if j != jp:
        return (ends[(jp, -sp)] == ends[(jp, sp)] + 1 and ends[(j, s)] == ends[(j, -s)] + 1)
    if s == sp:
        return ends[(j, s)] == ends[(j, -s)]
    return ends[(j, s)] == ends[(j, -s)] + 2


def _u_classes(ctx, nu):
    d = ctx.d
    return {(jp, sp): _entering_momentum(d, nu, jp, sp)
            for jp in range(1, d + 1) for sp in (1, -1)}


def verify_symmetry_lemmas(model, k_max=2, n=3, force_localize=True, nu=None, variant=None):
    """Check the symmetry identities of localised values on enumerated clusters.

    Entering momenta are the points nu - e_1 + s' e_j' around a base nu.
    """
    variant = _variant(model, variant)
    ctx = _Ctx(model, variant)
    d = ctx.d
    nu = tuple(nu) if nu is not None else _default_base(ctx)
    c = {key: 0 for key in ("clusters", "e_class", "halving", "halving_skipped",
                            "e_class_balance", "exchange", "conjugate_exchange",
                            "theta_value", "theta_outside_grammar", "invalid_members",
                            "end_counts", "end_counts_other_branch", "u_independent")}
    failures = []
    for (jp, sp), nin in _u_classes(ctx, nu).items():
        for k in range(1, k_max + 1):
            for j in range(1, d + 1):
                for s in (1, -1):
                    for se in enumerate_self_energy(model, k, j, s, jp, sp, nin, n, variant, ctx.part):
                        c["clusters"] += 1
                        _check_cluster(ctx, se, n, force_localize, c, failures)
    return {"model": model.name, "variant": variant, "base": list(nu), "n": n,
            "k_max": k_max, "force_localize": force_localize, "counts": c,
            "failures": failures, "ok": not failures}


def _fail(failures, kind, se, detail=""):
    failures.append({"check": kind, "cluster": se.key, "detail": detail})


def _check_cluster(ctx, se, n, force, c, failures):
    d = ctx.d
    j, s, jp, sp = se.j, se.sigma, se.jp, se.sp
    ec = _end_count_check(ctx, se)
    if ec is None:
        c["end_counts_other_branch"] += 1
    elif ec:
        c["end_counts"] += 1
    elif all(lab != -1 for lab in se.path_labels()):
        _fail(failures, "end-counts", se)
    lval = localize(se, force)
    if all(lab != -1 for lab in se.path_labels()):
        # c^sigma' L Val(T) is the value of theta without its root propagator
        theta = _theta(ctx, se)
        try:
            check_constraints(theta, ctx.spec, ctx.variant)
        except ValueError:
            c["theta_outside_grammar"] += 1
        else:
            if _times(localize(se, True), jp, sp) != _theta_value(ctx, theta):
                _fail(failures, "theta-value", se)
            else:
                c["theta_value"] += 1
    if se.e_class:
        c["e_class"] += 1
        _check_e_class(ctx, se, n, force, lval, c, failures)
        return
    if j == jp or any(lab == -1 for lab in se.path_labels()):
        return
    theta = _theta(ctx, se)
    g1 = _family(ctx, theta, jp, sp, se.nu_in)
    g2 = _family(ctx, theta, jp, -sp, sub(se.nu_in, unit(d, jp, 2 * sp)))
    v1 = _sum([_member(ctx, t, n, force, c) for t in g1], d)
    v2 = _sum([_member(ctx, t, n, force, c) for t in g2], d)
    if _times(v1, jp, sp) != _times(v2, jp, -sp):
        _fail(failures, "exchange", se, f"{_times(v1, jp, sp)} vs {_times(v2, jp, -sp)}")
    else:
        c["exchange"] += 1
    flipped = _flip(ctx, theta)
    g3 = _family(ctx, flipped, jp, -sp, neg(se.nu_in))
    v3 = _sum([_member(ctx, t, n, force, c) for t in g3], d)
    lhs = _times(_times(v1, j, -s), jp, sp)
    rhs = _times(_times(v3, j, s), jp, -sp)
    if lhs != rhs:
        _fail(failures, "conjugate-exchange", se, f"{lhs} vs {rhs}")
    else:
        c["conjugate_exchange"] += 1


def _theta_value(ctx, theta):
    lines = flatten(theta)
    scales = []
    for ln in lines:
        t = ln.tree
        if t.kind == "E":
            scales.append(None)
        elif ln.index == 0:
            scales.append(-1 if ctx.on_shell(t) else None)
        else:
            scales.append(t.scale)
    return _root_free_value(ctx, theta, scales)


def _root_free_value(ctx, theta, scales):
    full_scales = list(scales)
    if full_scales[0] is None:
        # give the root any admissible scale and divide its propagator out
        t = theta
        delta = line_divisor(ctx.spec, ctx.variant, t.j, t.sigma, t.nu)
        m = ctx.part.support(delta)[0]
        full_scales[0] = m
        v = tree_value(ctx.model, theta, "scaled", ctx.part, tuple(full_scales), ctx.variant)
        g, _ = _prop(ctx, t.j, t.sigma, ctx.spec.dot(t.nu), m, True, 0)
        return v.scale(1 / g)
    return tree_value(ctx.model, theta, "scaled", ctx.part, tuple(full_scales), ctx.variant)


def _member(ctx, tree, n, force, c):
    se, v = _lval(ctx, tree, n, force)
    ok = _se_condition(ctx, se.nu_out, se.j, se.sigma, se.nu_in, se.jp, se.sp)
    if ctx.variant == "real":
        ok = ok and small_divisor(ctx.spec, se.jp, se.nu_in)[1] == se.sp
    if not ok:
        c["invalid_members"] += 1
    return v


def _check_e_class(ctx, se, n, force, lval, c, failures):
    d = ctx.d
    j, s = se.j, se.sigma
    eta = se.tree.children[0]
    # value is -Val(theta_T) / (2 c^sigma), independent of u
    root = _as_root(eta)
    v_act = se_value(se)
    v_other = se_value(se, ctx.spec.dot(se.nu_in) + QNum(Fraction(1, 7)))
    want = _theta_value(ctx, root).scale(QNum(Fraction(-1, 2)))
    if v_act != v_other or _times(v_act, j, s) != want:
        _fail(failures, "e-class-value", se)
    else:
        c["u_independent"] += 1
    pos = _pruned_end_positions(root)
    f1 = _family(ctx, root, j, s, se.nu_in)
    f2 = _family(ctx, root, j, -s, sub(se.nu_in, unit(d, j, 2 * s)))
    v1 = [_member(ctx, t, n, force, c) for t in f1]
    v2 = [_member(ctx, t, n, force, c) for t in f2]
    if not any((jj, ss) == (j, -s) for _, jj, ss in pos):
        c["halving"] += 1
        if len(v1) != 1 or lval.scale(QNum(-2)) != v1[0]:
            c["halving"] -= 1
            _fail(failures, "halving", se, f"{len(v1)} members")
    else:
        c["halving_skipped"] += 1
    lhs = _times(lval.scale(QNum(2)) + _sum(v1, d), j, s)
    rhs = _times(_sum(v2, d), j, -s)
    if lhs != rhs:
        _fail(failures, "e-class-balance", se, f"{lhs} vs {rhs}")
    else:
        c["e_class_balance"] += 1


# -- cancellation ------------------------------------------------------------------------
def verify_cancellation(model, samples=1000, scales=range(4, 13), k_max=2,
                        window=range(-1, 7), force_localize=True, prec=256, variant=None,
                        matrix=True):
    """Propagator-pair gain, its derivative form, and LM G LM = 0 on a scale window."""
    variant = _variant(model, variant)
    ctx = _Ctx(model, variant)
    part = ctx.part
    spec = ctx.spec
    d = ctx.d
    report = {"model": model.name, "variant": variant, "pairs": {}, "derivative": {},
              "matrix": None}
    ok = True
    with mpmath.workprec(prec):
        for j in range(1, d + 1):
            w = spec.omega[j - 1].to_big(prec).value.real
            for sigma in (1, -1):
                for n in scales:
                    res = _pair_sweep(part, w, sigma, n, samples, prec)
                    report["pairs"][f"{j},{_sgn(sigma)},{n}"] = res
                    ok = ok and res["bound_ok"] and res["identity_ok"] and res["derivative_ok"]
        # gain ratio times 2^n stays within a factor 4 across scales
        for j in range(1, d + 1):
            for sigma in (1, -1):
                r = [report["pairs"][f"{j},{_sgn(sigma)},{n}"]["gain_ratio"] * 2 ** n for n in scales]
                spread = max(r) / min(r)
                report["derivative"][f"{j},{_sgn(sigma)}"] = {"scaled_gain_spread": spread}
                ok = ok and spread <= 4
    if matrix:
        mres = _matrix_check(model, k_max, window, force_localize, variant, part)
        report["matrix"] = mres
        ok = ok and mres["ok"]
    report["ok"] = ok
    return report


def _pair_sweep(part, w, sigma, n, samples, prec):
    """Sample u across the support of Psi_n near the resonance x = sigma omega_j."""
    gamma = part.gamma.to_big(prec).value.real
    lo = mpmath.mpf(5) / 8 * gamma / 2 ** n
    hi = mpmath.mpf(7) / 4 * gamma / 2 ** n
    flat_lo = mpmath.mpf(7) / 8 * gamma / 2 ** n
    flat_hi = mpmath.mpf(5) / 4 * gamma / 2 ** n
    max_pair = mpmath.mpf(0)
    min_single = None
    max_gain = mpmath.mpf(0)
    worst_id = mpmath.mpf(0)
    worst_der = mpmath.mpf(0)
    bound = 2 / w ** 2
    sw = sigma * w
    for i in range(samples):
        side = 1 if i % 2 == 0 else -1
        frac = (mpmath.mpf(i // 2) + mpmath.mpf(1) / 2) / ((samples + 1) // 2)
        delta = lo + (hi - lo) * frac
        x = sw + side * delta
        x2 = x - 2 * sw
        P, dP = _psi_pair(part, n, delta, prec)
        dP = dP * side
        A, B = x + sw, x2 - sw
        g1 = P / ((x - sw) * A)
        g2 = P / ((x2 - sw) * (x2 + sw))
        pair = g1 + g2
        ident = 2 * P / (A * B)
        worst_id = max(worst_id, abs(pair - ident) / max(abs(ident), mpmath.mpf(2) ** (-prec // 2)))
        max_pair = max(max_pair, abs(pair))
        # derivatives of the two propagators (common delta, common dPsi)
        dg1 = dP / ((x - sw) * A) - P * (2 * x) / ((x - sw) * A) ** 2
        dg2 = dP / ((x2 - sw) * (x2 + sw)) - P * (2 * x2) / ((x2 - sw) * (x2 + sw)) ** 2
        want = 2 * dP / (A * B) - 4 * (x - sw) * P / (A ** 2 * B ** 2)
        scale = max(abs(want), mpmath.mpf(1))
        worst_der = max(worst_der, abs(dg1 + dg2 - want) / scale)
        if flat_lo <= delta <= flat_hi:
            single = abs(g1)
            min_single = single if min_single is None else min(min_single, single)
            max_gain = max(max_gain, abs(pair) / single)
    tol = mpmath.mpf(2) ** (-(prec - 40))
    return {
        "n": n,
        "samples": samples,
        "max_pair": float(max_pair),
        "bound": float(bound),
        "bound_ok": bool(max_pair <= bound),
        "min_single": float(min_single),
        "min_single_scaled": float(min_single / 2 ** n),
        "gain_ratio": float(max_gain),
        "identity_ok": bool(worst_id <= tol),
        "derivative_ok": bool(worst_der <= tol),
    }


def _big(x):
    return x.to_big(256).value.real if isinstance(x, (QNum, BigFloat)) else mpmath.mpf(x)


def _psi_pair(part, n, delta, prec):
    """(Psi_n, dPsi_n) at an mpf argument; plain mpmath for the smoothstep shape."""
    if part.shape != "smoothstep-C1":
        b = BigFloat(delta, prec)
        return _big(part.Psi(n, b)), _big(part.dPsi(n, b))
    g = part.gamma.to_big(prec).value.real
    lo, width = g * 5 / 8, g / 4

    def psi(u):
        if u <= lo:
            return mpmath.mpf(0), mpmath.mpf(0)
        if u >= lo + width:
            return mpmath.mpf(1), mpmath.mpf(0)
        t = (u - lo) / width
        return t * t * (3 - 2 * t), (6 * t - 6 * t * t) / width

    a, da = psi(delta * 2 ** n)
    da = da * 2 ** n
    if n == 0:
        return a, da
    b, db = psi(delta * 2 ** (n - 1))
    return a * (1 - b), da * (1 - b) - a * db * 2 ** (n - 1)


def _matrix_check(model, k_max, window, force, variant, part):
    d = model.spec.d
    mats = {}
    forms = set()
    factorized = True
    for k in range(0, k_max + 1):
        for n in window:
            m = build_matrix(model, k, n, None, force, variant, part)
            mats[(k, n)] = m
            if k >= 1:
                factorized = factorized and m.factorized
                if m.form:
                    forms.add(m.form)
    zero_order = all(all(e.is_zero() for e in mats[(0, n)].entries.values()) for n in window)
    triples = 0
    bad = []
    for k1, k2 in itertools.product(range(1, k_max + 1), repeat=2):
        for nl in window:
            for n1 in window:
                for n2 in window:
                    if n1 > nl - 2 or n2 > nl - 2:
                        continue
                    triples += 1
                    if not matrix_product_vanishes(mats[(k1, n1)], mats[(k2, n2)], d):
                        bad.append([k1, k2, nl, n1, n2])
    nonzero = sum(1 for (k, n), m in mats.items() if k >= 1
                  and any(not e.is_zero() for e in m.entries.values()))
    return {"triples": triples, "nonzero_blocks": nonzero, "failures": bad,
            "factorized": factorized, "forms": sorted(forms),
            "order_zero_vanishes": zero_order,
            "ok": not bad and factorized and zero_order}


# -- counting ---------------------------------------------------------------------------
def verify_counting(model, k_max=3, variant=None, partition=None):
    """Line counts and momentum bounds over all scaled trees of order <= k_max."""
    variant = _variant(model, variant)
    ctx = _Ctx(model, variant, partition)
    spec, d = ctx.spec, ctx.d
    en = ctx.en
    from .trees import scale_assignments

    tau = float(spec.tau)
    sup_ratio = 0.0
    per_n = {}
    stats = Counter()
    failures = []
    for k in range(1, k_max + 1):
        for j in range(1, d + 1):
            for t in en.trees(k, j):
                for scales, wgt in scale_assignments(spec, t, ctx.part, variant):
                    if wgt.is_zero():
                        continue
                    stats["scaled_trees"] += 1
                    lines = flatten(t)
                    full = list(scales)
                    rep = detect_clusters(model, t, full, variant, extract=False)
                    stats["clusters"] += len(rep.clusters)
                    stats["self_energy"] += len(rep.self_energy)
                    stats["resonant"] += len(rep.resonant)
                    res = set(rep.resonant)
                    sc = [(-1 if s is None else s) for s in full]
                    # non-resonant lines on scale >= n
                    for n in range(0, max(sc) + 1):
                        cnt = sum(1 for ln in lines if ln.tree.kind != "E"
                                  and ln.index not in res and sc[ln.index] >= n)
                        r = cnt / (2 ** (-n / tau) * k)
                        sup_ratio = max(sup_ratio, r)
                        per_n[n] = max(per_n.get(n, 0.0), r)
                    _check_resonant(rep, lines, sc, res, stats, failures, t)
                    _check_path_momenta(ctx, rep, lines, sc, stats, failures, t)
                    _check_complement(ctx, rep, lines, stats, failures, t)
    return {"model": model.name, "variant": variant, "k_max": k_max,
            "sup_ratio": sup_ratio, "per_scale": {str(n): per_n[n] for n in sorted(per_n)},
            "stats": dict(stats), "failures": failures, "ok": not failures}


def _deepest(rep, line):
    best = None
    for c in rep.self_energy:
        if line in c.lines and (best is None or c.depth > best.depth):
            best = c
    return best


def _check_resonant(rep, lines, sc, res, stats, failures, t):
    for l in rep.resonant:
        T = _deepest(rep, l)
        if T is None:
            stats["resonant_uncontained"] += 1
            continue
        ok = any(i not in res and sc[i] >= sc[l] - 1 for i in T.lines)
        if ok:
            stats["resonant_checked"] += 1
        else:
            failures.append({"check": "resonant-partner", "tree": t.key, "line": l})


def _check_path_momenta(ctx, rep, lines, sc, stats, failures, t):
    for ln in lines:
        if ln.index == 0 or ln.tree.kind == "E":
            continue
        T = _deepest(rep, ln.index)
        if T is None or ln.index not in T.path:
            continue
        pos = T.path.index(ln.index)
        if any(sc[i] == -1 for i in T.path[:pos]):
            continue
        nu0 = sub(ln.tree.nu, lines[T.entering[0]].tree.nu)
        bound = 4 * T.k_ring if T.k_ring >= 1 else 2
        if norm(nu0) <= bound:
            stats["path_momenta_checked"] += 1
        else:
            failures.append({"check": "path-momentum", "tree": t.key, "line": ln.index,
                             "nu0": list(nu0), "k_ring": T.k_ring})


def _check_complement(ctx, rep, lines, stats, failures, t):
    below = defaultdict(set)
    for ln in reversed(lines):
        below[ln.index].add(ln.index)
        if ln.parent >= 0:
            below[ln.parent] |= below[ln.index]
    for ln in lines:
        if ln.index == 0 or ln.tree.kind == "E":
            continue
        gamma = set(range(len(lines))) - below[ln.index]
        gamma = {v for v in gamma if lines[v].tree.kind != "E"}
        inside = set()
        for c in rep.self_energy:
            if not (c.nodes & below[ln.index]):
                inside |= c.nodes
        kg = sum(_node_k(lines[v].tree) for v in gamma - inside)
        if kg < 1:
            continue
        diff = norm(sub(lines[0].tree.nu, ln.tree.nu))
        if diff <= 7 * kg:
            stats["complement_checked"] += 1
        else:
            failures.append({"check": "complement-momentum", "tree": t.key,
                             "line": ln.index, "k": kg})
