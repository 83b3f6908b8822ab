"""Labelled trees: enumeration, values and the structural maps between them.

Trees are hash-consed.  A tree is identified by its root line, so every
``Tree`` object stands for the subtree hanging from one line.  Three node
kinds occur:

* ``E``: an end node (j, sigma) with mode sigma e_j and node factor c_j^sigma;
* ``N``: an internal node of order p = s - 1 with node factor
  (prod_i s_i! / s!) f_{j,s};
* ``V``: an internal node of order 0 with two entering lines, one with
  momentum sigma e_j (the counterterm child) and one without, and node factor
  -1/(2 c_j^sigma).

Children of ``N`` nodes are stored sorted by key, so one ``Tree`` stands for
all its orderings of siblings.  ``multiplicity`` counts those orderings; the
coefficients of the series are ``sum multiplicity * value``.

Two variants share the machinery.  ``real`` trees carry line signs fixed by
the minimizer sigma(nu, j); ``zw`` trees carry a free sign on every line, use
the force table f^sigma and first-order propagators 1/(sigma omega.nu - omega_j).
"""

from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass

from .coeffalg import CoeffPoly, QNum
from .frequency import ScalePartition, small_divisor, unit
from .model import as_force_table

__all__ = [
    "Tree",
    "TreeClass",
    "Line",
    "TreeEnumerator",
    "enumerate_trees",
    "tree_value",
    "coefficient_from_trees",
    "sign_flip",
    "prune",
    "flatten",
    "check_constraints",
    "scale_assignments",
    "count_plane_trees",
    "verify_trees",
]


def _sgn(s):
    return "+" if s > 0 else "-"


class Tree:
    __slots__ = ("kind", "j", "sigma", "p", "children", "nu", "order", "key",
                 "value", "multiplicity", "coeff")

    def __init__(self, kind, j, sigma, p, children, nu, order, coeff=None):
        self.kind = kind
        self.j = j
        self.sigma = sigma
        self.p = p
        self.children = children
        self.nu = nu
        self.order = order
        self.coeff = coeff
        if kind == "E":
            self.key = f"E{j}{_sgn(sigma)}"
        elif kind == "N":
            self.key = f"N{j}{_sgn(sigma)}[{p}](" + ",".join(c.key for c in children) + ")"
        else:
            self.key = f"V{j}{_sgn(sigma)}(" + ";".join(c.key for c in children) + ")"
        self.value = None
        self.multiplicity = None

    def __repr__(self):
        return f"Tree({self.key}, nu={list(self.nu)})"

    def __eq__(self, other):
        return isinstance(other, Tree) and self.key == other.key

    def __hash__(self):
        return hash(self.key)

    @property
    def is_end(self):
        return self.kind == "E"

    def nodes(self):
        """Pre-order list of all subtrees (one per node)."""
        out = [self]
        for c in self.children:
            out.extend(c.nodes())
        return out

    def counts(self):
        """(|E|, |V|, |V_0|)."""
        e = v = v0 = 0
        for t in self.nodes():
            if t.kind == "E":
                e += 1
            else:
                v += 1
                v0 += t.kind == "V"
        return e, v, v0


@dataclass(frozen=True)
class TreeClass:
    """One inequivalent tree, optionally with a scale assignment.

    ``scales`` follows the pre-order of ``flatten(tree)``.
    """

    key: str
    tree: Tree
    order: int
    multiplicity: int
    scales: tuple = None


@dataclass(frozen=True)
class Line:
    """A line of a flattened tree; ``parent`` is the index of the line it enters."""

    index: int
    parent: int
    tree: Tree
    depth: int

    @property
    def nu(self):
        return self.tree.nu

    @property
    def j(self):
        return self.tree.j

    @property
    def sigma(self):
        return self.tree.sigma

    def on_shell(self):
        """nu_l = sigma_l e_{j_l} (the scale -1 case)."""
        return self.tree.nu == unit(len(self.tree.nu), self.tree.j, self.tree.sigma)


def flatten(tree):
    """Lines of ``tree`` in pre-order; index 0 is the root line."""
    out = []

    def walk(t, parent, depth):
        idx = len(out)
        out.append(Line(idx, parent, t, depth))
        for c in t.children:
            walk(c, idx, depth + 1)

    walk(tree, -1, 0)
    return out


class TreeEnumerator:
    """Memoized model-driven enumeration of trees by (order, component)."""

    def __init__(self, model, variant=None):
        if variant is None:
            variant = "real" if model.kind == "real" else "zw"
        if variant == "real":
            if model.kind != "real":
                raise ValueError("real trees need a real system")
            self.forces = None
        elif variant == "zw":
            ft = as_force_table(model)
            if ft.coupling != "diagonal":
                raise ValueError("the (z, w) tree expansion needs a diagonal counterterm coupling")
            self.forces = ft
        else:
            raise ValueError(f"unknown tree variant {variant!r}")
        self.model = model
        self.variant = variant
        self.spec = model.spec
        self.d = model.spec.d
        self._memo = {}
        self._intern = {}
        self._ends = {}
        for j in range(1, self.d + 1):
            for s in (1, -1):
                self._ends[(j, s)] = self._make(Tree("E", j, s, 0, (), unit(self.d, j, s), 0))

    # -- construction -----------------------------------------------------
    def _make(self, t):
        old = self._intern.get(t.key)
        if old is not None:
            return old
        _evaluate_node(self, t)
        self._intern[t.key] = t
        return t

    def end(self, j, sigma):
        return self._ends[(j, sigma)]

    def line_sign(self, j, nu):
        return small_divisor(self.spec, j, nu)[1]

    def trees(self, k, j):
        """All trees of order k with root component j (every momentum and sign)."""
        if k == 0:
            return [self.end(j, 1), self.end(j, -1)]
        key = (k, j)
        r = self._memo.get(key)
        if r is None:
            r = self._build(k, j)
            self._memo[key] = r
        return r

    def _child_pool(self, i, tau, max_order):
        """Trees allowed as a child line of an order >= 1 node: ends, and
        internal trees whose root momentum is not on shell."""
        pool = []
        for m in range(0, max_order + 1):
            for t in self.trees(m, i):
                if self.variant == "zw" and t.sigma != tau:
                    continue
                if m > 0 and t.nu in (unit(self.d, i, 1), unit(self.d, i, -1)):
                    if self.variant == "real" or t.nu == unit(self.d, i, t.sigma):
                        continue
                pool.append(t)
        return pool

    def _build(self, k, j):
        out = []
        d = self.d
        if self.variant == "real":
            slots_list = [((), s, p, v) for s, p, v in self.model.terms_for(j)]
            signs = [None]
        else:
            signs = [1, -1]
        for sigma in signs:
            if self.variant == "zw":
                slots_list = [((sp, sm), None, p, v) for sp, sm, p, v in self.forces.terms_for(sigma, j)]
            for entry in slots_list:
                p, coeff = entry[2], entry[3]
                if p > k:
                    continue
                if self.variant == "real":
                    s = entry[1]
                    slots = [(i + 1, None, s[i]) for i in range(d) if s[i]]
                else:
                    sp, sm = entry[0]
                    slots = ([(i + 1, 1, sp[i]) for i in range(d) if sp[i]]
                             + [(i + 1, -1, sm[i]) for i in range(d) if sm[i]])
                pools = [self._child_pool(i, tau, k - p) for i, tau, _ in slots]
                for combo in _multisets(pools, [c for _, _, c in slots], k - p):
                    children = tuple(sorted(combo, key=lambda t: t.key))
                    nu = tuple(sum(c.nu[a] for c in children) for a in range(d))
                    if self.variant == "real":
                        sig = self.line_sign(j, nu)
                    else:
                        sig = sigma
                    out.append(self._make(Tree("N", j, sig, p, children, nu, k, coeff)))
        # order-0 nodes
        for k1 in range(1, k):
            k2 = k - k1
            for sigma in (1, -1):
                on = unit(d, j, sigma)
                etas = [t for t in self.trees(k1, j) if t.nu == on and t.sigma == sigma]
                if not etas:
                    continue
                others = [t for t in self.trees(k2, j)
                          if t.nu != on and t.sigma == sigma]
                for a in etas:
                    for b in others:
                        out.append(self._make(Tree("V", j, sigma, 0, (a, b), b.nu, k)))
        return out


def _multisets(pools, counts, budget):
    """Tuples of children: for each slot a multiset of ``counts[i]`` items from
    ``pools[i]`` (indices non-decreasing), total order exactly ``budget``."""
    res = []

    def slot(si, rem, acc):
        if si == len(pools):
            if rem == 0:
                res.append(tuple(acc))
            return
        pool = pools[si]

        def pick(start, left, rem2, acc2):
            if left == 0:
                slot(si + 1, rem2, acc2)
                return
            for idx in range(start, len(pool)):
                t = pool[idx]
                if t.order > rem2:
                    continue
                pick(idx, left - 1, rem2 - t.order, acc2 + [t])

        pick(0, counts[si], rem, acc)

    slot(0, budget, [])
    return res


# -- values -------------------------------------------------------------------
def _propagator(spec, variant, j, sigma, nu):
    """1 on shell; otherwise 1/((omega.nu)^2 - omega_j^2) or 1/(sigma omega.nu - omega_j)."""
    d = len(nu)
    if nu == unit(d, j, sigma):
        return QNum(1)
    x = spec.dot(nu)
    w = spec.omega[j - 1]
    den = (x * x - w * w) if variant == "real" else ((x if sigma > 0 else -x) - w)
    if den.is_zero():
        raise ZeroDivisionError(f"resonant line: component {j}, momentum {list(nu)}")
    return 1 / den


def _node_counts(t, variant):
    """(factorial weight prod s_i!/s!, multiplicity s!/prod m_a!)."""
    s = len(t.children)
    if variant == "real":
        groups = Counter(c.j for c in t.children)
    else:
        groups = Counter((c.j, c.sigma) for c in t.children)
    fw = QNum(math.prod(math.factorial(m) for m in groups.values())) / math.factorial(s)
    reps = Counter(c.key for c in t.children)
    mult = math.factorial(s) // math.prod(math.factorial(m) for m in reps.values())
    return fw, mult


def _force_coeff(model_like, variant, t):
    d = len(t.nu)
    if variant == "real":
        s = [0] * d
        for c in t.children:
            s[c.j - 1] += 1
        return model_like.fcoeffs.get((t.j, tuple(s)), QNum(0))
    sp, sm = [0] * d, [0] * d
    for c in t.children:
        (sp if c.sigma > 0 else sm)[c.j - 1] += 1
    return model_like.get(t.sigma, t.j, sp, sm)


def _evaluate_node(en, t):
    d = en.d
    if t.kind == "E":
        t.value = CoeffPoly.symbol(d, t.j, t.sigma)
        t.multiplicity = 1
        return
    g = _propagator(en.spec, en.variant, t.j, t.sigma, t.nu)
    prod = CoeffPoly.constant(d, 1)
    for c in t.children:
        prod = prod * c.value
    if t.kind == "N":
        fw, mult = _node_counts(t, en.variant)
        t.value = prod.scale(t.coeff * fw * g)
        t.multiplicity = mult * math.prod(c.multiplicity for c in t.children)
    else:
        t.value = prod.divide_symbol(t.j, t.sigma).scale(g * QNum(-1) / 2)
        t.multiplicity = 2 * t.children[0].multiplicity * t.children[1].multiplicity


def _source(model, variant):
    if variant == "real":
        return model
    return as_force_table(model)


def tree_value(model, t, mode="unscaled", partition=None, scales=None, variant=None):
    """Val of one (planar) representative of ``t``, recomputed from the labels.

    In ``scaled`` mode ``scales`` gives one scale per line (pre-order of
    ``flatten``) and each off-shell propagator is multiplied by Psi_n(delta).
    """
    if variant is None:
        variant = "real" if model.kind == "real" else "zw"
    src = _source(model, variant)
    spec = model.spec
    d = spec.d
    check_constraints(t, spec, variant)
    lines = flatten(t)
    if mode == "scaled":
        if partition is None:
            partition = ScalePartition(spec.gamma)
        if scales is None or len(scales) != len(lines):
            raise ValueError("scaled evaluation needs one scale per line")
    val = CoeffPoly.constant(d, 1)
    for ln in lines:
        u = ln.tree
        if u.kind == "E":
            val = val * CoeffPoly.symbol(d, u.j, u.sigma)
            continue
        g = _propagator(spec, variant, u.j, u.sigma, u.nu)
        if mode == "scaled":
            n = scales[ln.index]
            if ln.on_shell():
                if n != -1:
                    return CoeffPoly.zero(d)
            else:
                if n < 0:
                    return CoeffPoly.zero(d)
                g = g * partition.Psi(n, line_divisor(spec, variant, u.j, u.sigma, u.nu))
        if u.kind == "N":
            fw, _ = _node_counts(u, variant)
            f = _force_coeff(src, variant, u)
            val = val.scale(f * fw * g)
        else:
            val = val.scale(g * QNum(-1) / 2)
    # the order-0 node factors -1/(2 c_j^sigma): cancel one monomial each
    for ln in lines:
        if ln.tree.kind == "V":
            val = val.divide_symbol(ln.tree.j, ln.tree.sigma)
    return val


def line_divisor(spec, variant, j, sigma, nu):
    """delta of a line: delta_j(omega.nu) (real) or |sigma omega.nu - omega_j| (zw)."""
    if variant == "real":
        return small_divisor(spec, j, nu)[0]
    x = spec.dot(nu)
    return abs((x if sigma > 0 else -x) - spec.omega[j - 1])


def check_constraints(t, spec, variant="real"):
    """Raise ValueError if the labels of ``t`` break the tree grammar."""
    d = spec.d
    for ln in flatten(t):
        u = ln.tree
        if u.kind == "E":
            if u.nu != unit(d, u.j, u.sigma) or u.children:
                raise ValueError(f"end node with mode {list(u.nu)} and sign {u.sigma}")
            continue
        if variant == "real" and u.sigma != small_divisor(spec, u.j, u.nu)[1]:
            raise ValueError(f"line sign differs from the minimizer at {list(u.nu)}")
        if u.kind == "N":
            if len(u.children) < 2 or u.p != len(u.children) - 1:
                raise ValueError("internal node arity does not match its order")
            nu = tuple(sum(c.nu[a] for c in u.children) for a in range(d))
            if nu != u.nu:
                raise ValueError("conservation law violated")
            for c in u.children:
                if not c.is_end and c.nu == unit(d, c.j, c.sigma):
                    raise ValueError("on-shell internal line entering an order >= 1 node")
        elif u.kind == "V":
            a, b = u.children
            on = unit(d, u.j, u.sigma)
            if a.is_end or b.is_end:
                raise ValueError("order-0 node with an end line entering")
            if not (a.j == b.j == u.j and a.sigma == b.sigma == u.sigma):
                raise ValueError("order-0 node labels disagree with its entering lines")
            if a.nu != on or b.nu == on:
                raise ValueError("order-0 node needs exactly one on-shell entering line")
            if u.nu != b.nu:
                raise ValueError("conservation law violated at an order-0 node")
        else:
            raise ValueError(f"unknown node kind {u.kind!r}")


# -- public enumeration API -----------------------------------------------------
_ENUMS = {}


def _enumerator(model, variant):
    key = (id(model), variant)
    en = _ENUMS.get(key)
    if en is None or en.model is not model:
        en = TreeEnumerator(model, variant)
        _ENUMS[key] = en
    return en


def scale_assignments(spec, tree, partition, variant="real"):
    """All admissible scale tuples of ``tree`` with their weight products."""
    lines = flatten(tree)
    options = []
    for ln in lines:
        u = ln.tree
        if u.kind == "E":
            options.append([(None, QNum(1))])
        elif ln.on_shell():
            options.append([(-1, QNum(1))])
        else:
            delta = line_divisor(spec, variant, u.j, u.sigma, u.nu)
            options.append(partition.scale_weights(delta))
    out = []
    for combo in itertools.product(*options):
        w = QNum(1)
        for _, x in combo:
            w = w * x
        out.append((tuple(n for n, _ in combo), w))
    return out


def enumerate_trees(model, k, j, nu, scaled=False, variant=None, sigma=None, partition=None):
    """Inequivalent trees of order k, root component j and root momentum nu.

    In the (z, w) variant ``sigma`` selects the root sign (both if omitted).
    End lines carry the scale ``None``: their propagator is not part of Val.
    """
    if variant is None:
        variant = "real" if model.kind == "real" else "zw"
    en = _enumerator(model, variant)
    nu = tuple(nu)
    found = [t for t in en.trees(k, j) if t.nu == nu and (sigma is None or t.sigma == sigma)]
    found.sort(key=lambda t: t.key)
    if not scaled:
        return [TreeClass(t.key, t, k, t.multiplicity) for t in found]
    if partition is None:
        partition = ScalePartition(model.spec.gamma)
    out = []
    for t in found:
        for scales, _w in scale_assignments(model.spec, t, partition, variant):
            tag = ",".join("e" if n is None else str(n) for n in scales)
            out.append(TreeClass(f"{t.key}|{tag}", t, k, t.multiplicity, scales))
    return out


def coefficient_from_trees(model, k, j, nu, variant=None, sigma=None):
    """sum multiplicity * Val over the trees; on shell this is eta^(k)_{j,sigma}.

    In the (z, w) variant ``sigma`` picks z (+1) or w (-1); on shell the
    counterterm uses the root sign of the on-shell momentum.
    """
    if variant is None:
        variant = "real" if model.kind == "real" else "zw"
    d = model.spec.d
    nu = tuple(nu)
    on = None
    for s in (1, -1):
        if nu == unit(d, j, s):
            on = s
    if variant == "zw":
        if sigma is None:
            sigma = on if on is not None else 1
        if on is not None and on != sigma:
            on = None
    acc = CoeffPoly.zero(d)
    for tc in enumerate_trees(model, k, j, nu, variant=variant, sigma=sigma if variant == "zw" else None):
        acc.add_into(tc.tree.value, QNum(tc.multiplicity))
    if on is None:
        return acc
    return (-acc).divide_symbol(j, on)


# -- structural maps -------------------------------------------------------------
def _rebuild(en, t, f):
    """Rebuild ``t`` bottom-up with ``f`` applied to each node (children first)."""
    kids = tuple(_rebuild(en, c, f) for c in t.children)
    return f(t, kids)


def sign_flip(model, t, variant=None):
    """Negate the sign labels of all end nodes and order-0 nodes.

    In the (z, w) variant every line sign is negated as well.  In the real
    variant an order-0 node whose other child has momentum 0 keeps sigma = +
    (the minimizer tie) and its counterterm subtree is left unchanged; its
    factor times that subtree is the counterterm itself, which is
    sign-independent.
    """
    if variant is None:
        variant = "real" if model.kind == "real" else "zw"
    en = _enumerator(model, variant)

    def go(u):
        if u.kind == "E":
            return en.end(u.j, -u.sigma)
        if u.kind == "N":
            kids = tuple(sorted((go(c) for c in u.children), key=lambda x: x.key))
            nu = tuple(-a for a in u.nu)
            sig = en.line_sign(u.j, nu) if variant == "real" else -u.sigma
            return en._make(Tree("N", u.j, sig, u.p, kids, nu, u.order, u.coeff))
        a, b = u.children
        b2 = go(b)
        if variant == "real" and b2.sigma == u.sigma:
            return en._make(Tree("V", u.j, u.sigma, 0, (a, b2), b2.nu, u.order))
        return en._make(Tree("V", u.j, -u.sigma, 0, (go(a), b2), b2.nu, u.order))

    out = go(t)
    if variant == "zw":
        # flipping every line sign maps the force table f^sigma to f^-sigma
        out = _resign_coeffs(en, out)
    return out


def _resign_coeffs(en, t):
    if t.kind == "E":
        return t
    kids = tuple(_resign_coeffs(en, c) for c in t.children)
    if t.kind == "N":
        kids = tuple(sorted(kids, key=lambda x: x.key))
        probe = Tree("N", t.j, t.sigma, t.p, kids, t.nu, t.order, QNum(0))
        coeff = _force_coeff(en.forces, "zw", probe)
        return en._make(Tree("N", t.j, t.sigma, t.p, kids, t.nu, t.order, coeff))
    return en._make(Tree("V", t.j, t.sigma, 0, kids, t.nu, t.order))


def prune(t):
    """Lines of the pruned tree: drop the counterterm subtrees closest to the root.

    Returns the list of ``Line`` objects kept (pre-order indices of ``flatten``).
    The root line itself is never pruned.
    """
    lines = flatten(t)
    dropped = set()
    for ln in lines:
        if ln.parent in dropped:
            dropped.add(ln.index)
            continue
        if ln.index == 0:
            continue
        if ln.on_shell() and not ln.tree.is_end:
            dropped.add(ln.index)
    return [ln for ln in lines if ln.index not in dropped]


def end_counts(kept):
    """{(j, sigma): count} over the end nodes of a pruned tree."""
    c = Counter()
    for ln in kept:
        if ln.tree.is_end:
            c[(ln.tree.j, ln.tree.sigma)] += 1
    return c


def count_plane_trees(n):
    """Number of unlabelled plane rooted trees with n nodes, by brute force."""
    memo = {1: 1}

    def forests(m):
        # ordered forests with m nodes in total
        if m == 0:
            return 1
        return sum(trees(a) * forests(m - a) for a in range(1, m + 1))

    def trees(m):
        if m not in memo:
            memo[m] = forests(m - 1)
        return memo[m]

    return trees(n)


def verify_trees(model, K, table=None):
    """Compare tree sums against the direct solver through order K.

    Returns a report with per-order counts and the list of mismatching entries.
    """
    from .lindstedt import solve_up_to

    variant = "real" if model.kind == "real" else "zw"
    if table is None:
        table = solve_up_to(model, K)
    d = model.spec.d
    en = _enumerator(model, variant)
    mismatches = []
    counts = {}
    checked = 0
    for k in range(1, K + 1):
        for j in range(1, d + 1):
            trees = en.trees(k, j)
            counts[f"{k},{j}"] = len(trees)
            for s in ((1,) if variant == "real" else (1, -1)):
                if variant == "real":
                    keys = {t.nu for t in trees} | {nu for (jj, nu) in table.x.get(k, {}) if jj == j}
                else:
                    store = table.z if s > 0 else table.w
                    keys = ({t.nu for t in trees if t.sigma == s}
                            | {nu for (jj, nu) in store.get(k, {}) if jj == j})
                for nu in sorted(keys):
                    on = [x for x in (1, -1) if nu == unit(d, j, x)]
                    if variant == "real":
                        if on:
                            want = table.eta_c(k, j, on[0])
                        else:
                            want = table.xc(k, j, nu)
                        got = coefficient_from_trees(model, k, j, nu, variant)
                    else:
                        if on and on[0] == s:
                            want = table.eta_c(k, j, s)
                        else:
                            want = table.zc(k, j, nu) if s > 0 else table.wc(k, j, nu)
                        got = coefficient_from_trees(model, k, j, nu, variant, sigma=s)
                    checked += 1
                    if got != want:
                        mismatches.append({"k": k, "j": j, "nu": list(nu), "sigma": s,
                                           "trees": str(got), "direct": str(want)})
    return {"checked": checked, "mismatches": mismatches, "tree_counts": counts}
