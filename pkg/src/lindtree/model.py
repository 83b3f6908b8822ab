"""Model definitions: real second-order systems and Hamiltonian systems in
complex variables, force tables and their symmetry relations.

Real system::

    x_j'' + omega_j^2 x_j + f_j(x, eps) + eta_j x_j = 0,
    f_j = sum_{p>=1} eps^p sum_{|s| = p+1} f_{j,s} x^s.

Hamiltonian system in (z, w)::

    -i z_j' = omega_j z_j + f^+_j(z, w, eps) + eta_j z_j,
     i w_j' = omega_j w_j + f^-_j(z, w, eps) + eta_j w_j,

with f^+_j = eps dF/dw_j, f^-_j = eps dF/dz_j and
F = sum_p eps^p sum_{|s+|+|s-| = p+3} a_{s+,s-} z^{s+} w^{s-}.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from math import comb

from .coeffalg import QNum, parse_scalar
from .frequency import FrequencySpec

__all__ = [
    "ModelError",
    "RealSystem",
    "HamiltonianSystem",
    "ForceTable",
    "load_model",
    "model_from_dict",
    "model_to_dict",
    "derive_force_table",
    "embed_real_system",
    "validate_force_symmetries",
]


class ModelError(ValueError):
    """Malformed or inconsistent model definition."""


def _vec(x, d, what):
    t = tuple(int(v) for v in x)
    if len(t) != d:
        raise ModelError(f"{what} {list(x)} must have length {d}")
    if any(v < 0 for v in t):
        raise ModelError(f"{what} {list(x)} has negative entries")
    return t


def _e(d, j):
    v = [0] * d
    v[j - 1] = 1
    return tuple(v)


def _add(a, b):
    return tuple(x + y for x, y in zip(a, b))


def _sub(a, b):
    return tuple(x - y for x, y in zip(a, b))


@dataclass(eq=False)
class RealSystem:
    """Real second-order system; ``fcoeffs[(j, s)]`` is f_{j,s} with p = |s| - 1."""

    spec: FrequencySpec
    fcoeffs: dict
    name: str = "real"
    real: bool = True

    kind = "real"

    def __post_init__(self):
        d = self.spec.d
        clean = {}
        for (j, s), v in self.fcoeffs.items():
            if not 1 <= j <= d:
                raise ModelError(f"component {j} out of range 1..{d}")
            s = _vec(s, d, "multi-index")
            if sum(s) < 2:
                raise ModelError(f"multi-index {list(s)} has degree < 2")
            if self.real and not v.is_real():
                raise ModelError(f"complex coefficient {v} in a real system")
            if not v.is_zero():
                clean[(j, s)] = clean.get((j, s), QNum(0)) + v
        self.fcoeffs = clean

    @property
    def d(self):
        return self.spec.d

    def terms_for(self, j):
        """[(s, p, f_{j,s})] for component j."""
        return [(s, sum(s) - 1, v) for (jj, s), v in sorted(self.fcoeffs.items()) if jj == j]

    def max_degree(self):
        return max((sum(s) for (_, s) in self.fcoeffs), default=0)


@dataclass(eq=False)
class ForceTable:
    """Per-sign force coefficients ``table[sigma][(j, s+, s-)]``.

    ``coupling`` records how the counterterm enters the (z, w) equations:
    ``"diagonal"`` is eta_j z_j (Hamiltonian form), ``"embedded"`` is
    eta_j (z_j + w_j)/(2 omega_j), the exact image of eta_j x_j of a real system.
    """

    spec: FrequencySpec
    table: dict = field(default_factory=lambda: {1: {}, -1: {}})
    coupling: str = "diagonal"
    name: str = "zw"

    kind = "zw"

    @property
    def d(self):
        return self.spec.d

    def get(self, sigma, j, sp, sm):
        return self.table[sigma].get((j, tuple(sp), tuple(sm)), QNum(0))

    def terms_for(self, sigma, j):
        return [(sp, sm, sum(sp) + sum(sm) - 1, v)
                for (jj, sp, sm), v in sorted(self.table[sigma].items()) if jj == j]

    def max_degree(self):
        return max((sum(sp) + sum(sm) for t in self.table.values() for (_, sp, sm) in t),
                   default=0)


@dataclass(eq=False)
class HamiltonianSystem:
    """Hamiltonian perturbation ``acoeffs[(s+, s-)] = a_{s+,s-}``."""

    spec: FrequencySpec
    acoeffs: dict
    name: str = "hamiltonian"

    kind = "hamiltonian"

    def __post_init__(self):
        d = self.spec.d
        clean = {}
        for (sp, sm), v in self.acoeffs.items():
            sp, sm = _vec(sp, d, "s+"), _vec(sm, d, "s-")
            if sum(sp) + sum(sm) < 3:
                raise ModelError("Hamiltonian terms need |s+|+|s-| >= 3")
            if not v.is_zero():
                clean[(sp, sm)] = v
        for (sp, sm), v in clean.items():
            partner = clean.get((sm, sp))
            if partner is None or partner != v.conjugate():
                raise ModelError(
                    f"reality violated: a_{list(sp)},{list(sm)} = {v} needs "
                    f"a_{list(sm)},{list(sp)} = {v.conjugate()}")
        self.acoeffs = clean

    @property
    def d(self):
        return self.spec.d


def derive_force_table(h):
    """f^+_{j,s+,s-} = (s-_j+1) a_{s+,s-+e_j}, f^-_{j,s+,s-} = (s+_j+1) a_{s++e_j,s-}."""
    d = h.d
    t = {1: {}, -1: {}}
    for (sp, sm), a in h.acoeffs.items():
        for j in range(1, d + 1):
            e = _e(d, j)
            if sm[j - 1] >= 1:
                key = (j, sp, _sub(sm, e))
                t[1][key] = t[1].get(key, QNum(0)) + a * sm[j - 1]
            if sp[j - 1] >= 1:
                key = (j, _sub(sp, e), sm)
                t[-1][key] = t[-1].get(key, QNum(0)) + a * sp[j - 1]
    ft = ForceTable(h.spec, {s: {k: v for k, v in tab.items() if not v.is_zero()}
                             for s, tab in t.items()}, "diagonal", h.name)
    report = validate_force_symmetries(ft)
    if report["violations"]:
        raise AssertionError(f"derived force table violates symmetries: {report['violations'][:3]}")
    return ft


def embed_real_system(m):
    """(z, w) form of a real system with x_j = z_j + w_j.

    With z_j = (x_j - i x_j'/omega_j)/2 the unperturbed solution is
    z_j = c_j^+ e^{i omega_j t}, w_j = c_j^- e^{-i omega_j t}, matching
    x_j = c_j^+ e^{i omega_j t} + c_j^- e^{-i omega_j t}.  The forces become
    f^pm_j = f_j(z + w)/(2 omega_j) and the counterterm enters as
    eta_j (z_j + w_j)/(2 omega_j).
    """
    t = {1: {}, -1: {}}
    for (j, s), v in m.fcoeffs.items():
        scale = v / (m.spec.omega[j - 1] * 2)
        for split in itertools.product(*(range(si + 1) for si in s)):
            sp = tuple(split)
            sm = _sub(s, sp)
            mult = 1
            for si, ai in zip(s, sp):
                mult *= comb(si, ai)
            for sigma in (1, -1):
                key = (j, sp, sm)
                t[sigma][key] = t[sigma].get(key, QNum(0)) + scale * mult
    return ForceTable(m.spec, t, "embedded", m.name + "-zw")


def validate_force_symmetries(ft):
    """Check the conjugation and exchange relations of a force table.

    Every instance touching a stored entry is tested.
    """
    d = ft.d
    fp, fm = ft.table[1], ft.table[-1]
    violations = []
    checked = 0

    def g(sig, j, sp, sm):
        return ft.get(sig, j, sp, sm)

    # conjugation: f^-_{j,s+,s-} = conj(f^+_{j,s-,s+})
    keys = set(fm) | {(j, sm, sp) for (j, sp, sm) in fp}
    for (j, sp, sm) in sorted(keys):
        checked += 1
        if g(-1, j, sp, sm) != g(1, j, sm, sp).conjugate():
            violations.append({"relation": "conjugation", "j": j, "s+": list(sp), "s-": list(sm)})

    # mixed exchange: (s+_{j2}+1) f^+_{j1,s++e_{j2},s-} = (s-_{j1}+1) f^-_{j2,s+,s-+e_{j1}}
    inst = set()
    for (j1, Sp, Sm) in fp:
        for j2 in range(1, d + 1):
            if Sp[j2 - 1] >= 1:
                inst.add((j1, j2, _sub(Sp, _e(d, j2)), Sm))
    for (j2, Sp, Sm) in fm:
        for j1 in range(1, d + 1):
            if Sm[j1 - 1] >= 1:
                inst.add((j1, j2, Sp, _sub(Sm, _e(d, j1))))
    for (j1, j2, sp, sm) in sorted(inst):
        checked += 1
        lhs = g(1, j1, _add(sp, _e(d, j2)), sm) * (sp[j2 - 1] + 1)
        rhs = g(-1, j2, sp, _add(sm, _e(d, j1))) * (sm[j1 - 1] + 1)
        if lhs != rhs:
            violations.append({"relation": "mixed-exchange", "j1": j1, "j2": j2,
                               "s+": list(sp), "s-": list(sm)})

    # exchange in s-: (s-_{j2}+1) f^+_{j1,s+,s-+e_{j2}} = (s-_{j1}+1) f^+_{j2,s+,s-+e_{j1}}
    # exchange in s+: (s+_{j2}+1) f^-_{j1,s++e_{j2},s-} = (s+_{j1}+1) f^-_{j2,s++e_{j1},s-}
    for sig, rel in ((1, "plus-exchange"), (-1, "minus-exchange")):
        inst = set()
        for (J, Sp, Sm) in (fp if sig > 0 else fm):
            S = Sm if sig > 0 else Sp
            for jj in range(1, d + 1):
                if jj == J or S[jj - 1] < 1:
                    continue
                base = _sub(S, _e(d, jj))
                key = (Sp, base) if sig > 0 else (base, Sm)
                inst.add((min(J, jj), max(J, jj)) + key)
        for (j1, j2, sp, sm) in sorted(inst):
            checked += 1
            if sig > 0:
                lhs = g(1, j1, sp, _add(sm, _e(d, j2))) * (sm[j2 - 1] + 1)
                rhs = g(1, j2, sp, _add(sm, _e(d, j1))) * (sm[j1 - 1] + 1)
            else:
                lhs = g(-1, j1, _add(sp, _e(d, j2)), sm) * (sp[j2 - 1] + 1)
                rhs = g(-1, j2, _add(sp, _e(d, j1)), sm) * (sp[j1 - 1] + 1)
            if lhs != rhs:
                violations.append({"relation": rel, "j1": j1, "j2": j2,
                                   "s+": list(sp), "s-": list(sm)})
    return {"checked": checked, "violations": violations}


# ---------------------------------------------------------------------------
# JSON
# ---------------------------------------------------------------------------


def _spec_from(obj, d):
    omega = obj.get("omega")
    if not isinstance(omega, list) or len(omega) != d:
        raise ModelError(f"'omega' must be a list of {d} scalars")
    try:
        return FrequencySpec.from_strings(
            [str(w) for w in omega], tau=obj.get("tau"),
            gamma0=obj.get("gamma0", "estimate"),
            nu_scan_radius=int(obj.get("nu_scan_radius", 16)))
    except (ValueError, ZeroDivisionError) as exc:
        raise ModelError(str(exc)) from exc


def model_from_dict(obj):
    """Build a model from its JSON object form."""
    if not isinstance(obj, dict):
        raise ModelError("model must be a JSON object")
    kind = obj.get("kind", "real")
    try:
        d = int(obj["d"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelError("missing or invalid 'd'") from exc
    spec = _spec_from(obj, d)
    name = str(obj.get("name", kind))
    terms = obj.get("terms", [])
    if not isinstance(terms, list):
        raise ModelError("'terms' must be a list")
    try:
        if kind == "real":
            fco = {}
            for t in terms:
                j, p, s = int(t["j"]), int(t["p"]), _vec(t["s"], d, "s")
                if sum(s) != p + 1:
                    raise ModelError(f"term {t}: |s| = {sum(s)} but p+1 = {p + 1}")
                v = parse_scalar(str(t["coeff"]))
                fco[(j, s)] = fco.get((j, s), QNum(0)) + v
            return RealSystem(spec, fco, name, bool(obj.get("real", True)))
        if kind == "hamiltonian":
            aco = {}
            for t in terms:
                p = int(t["p"])
                sp, sm = _vec(t["s_plus"], d, "s_plus"), _vec(t["s_minus"], d, "s_minus")
                if sum(sp) + sum(sm) != p + 3:
                    raise ModelError(f"term {t}: |s+|+|s-| must equal p+3 = {p + 3}")
                aco[(sp, sm)] = parse_scalar(str(t["coeff"]))
            return HamiltonianSystem(spec, aco, name)
    except KeyError as exc:
        raise ModelError(f"term missing field {exc}") from exc
    except (ValueError, ZeroDivisionError) as exc:
        if isinstance(exc, ModelError):
            raise
        raise ModelError(str(exc)) from exc
    raise ModelError(f"unknown model kind {kind!r}")


def load_model(path):
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ModelError(f"cannot read model {path}: {exc}") from exc
    return model_from_dict(obj)


def model_to_dict(m):
    """Normalized JSON object form (stable ordering)."""
    spec = m.spec
    out = {
        "kind": m.kind,
        "name": m.name,
        "d": spec.d,
        "omega": [str(w) for w in spec.omega],
        "tau": str(spec.tau),
        "gamma0": "estimate" if spec.gamma0 is None else str(spec.gamma0),
        "nu_scan_radius": spec.nu_scan_radius,
    }
    if m.kind == "real":
        out["real"] = m.real
        out["terms"] = [{"j": j, "p": sum(s) - 1, "s": list(s), "coeff": str(v)}
                        for (j, s), v in sorted(m.fcoeffs.items())]
    elif m.kind == "hamiltonian":
        out["terms"] = [{"p": sum(sp) + sum(sm) - 3, "s_plus": list(sp),
                         "s_minus": list(sm), "coeff": str(v)}
                        for (sp, sm), v in sorted(m.acoeffs.items())]
    else:
        raise ModelError("force tables have no file form")
    return out


def as_force_table(m):
    """The (z, w) force table of any model."""
    if m.kind == "zw":
        return m
    if m.kind == "hamiltonian":
        return derive_force_table(m)
    return embed_real_system(m)
