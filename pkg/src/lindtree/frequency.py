"""Frequency vectors, small divisors, the smooth scale partition and lattice
scans of the small-divisor separation properties."""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import mpmath

from .coeffalg import BigFloat, QNum, parse_scalar, to_scalar

__all__ = [
    "FrequencySpec",
    "ScalePartition",
    "norm",
    "unit",
    "modes",
    "small_divisor",
    "bar",
    "equal_divisors",
    "check_divisor_separation",
    "check_scale_separation",
    "partition_sweep",
    "divisor_neighbours",
    "zw_divisor",
]


def norm(nu):
    return sum(abs(x) for x in nu)


def unit(d, j, sigma=1):
    """sigma * e_j as a tuple (j is 1-based)."""
    v = [0] * d
    v[j - 1] = sigma
    return tuple(v)


def add(nu, mu):
    return tuple(a + b for a, b in zip(nu, mu))


def sub(nu, mu):
    return tuple(a - b for a, b in zip(nu, mu))


def neg(nu):
    return tuple(-a for a in nu)


@lru_cache(maxsize=None)
def modes(d, radius):
    """All integer vectors of length d with |nu| <= radius, sorted."""
    out = []
    for nu in itertools.product(range(-radius, radius + 1), repeat=d):
        if norm(nu) <= radius:
            out.append(nu)
    return tuple(out)


@dataclass(frozen=True, eq=False)
class FrequencySpec:
    """Frequency vector omega with Diophantine data.

    ``gamma0`` may be given or left as ``None`` for the lattice estimate
    min over 0 < |nu| <= nu_scan_radius of |omega.nu| |nu|^tau.
    """

    omega: tuple
    tau: Fraction = Fraction(1)
    gamma0: object = None
    nu_scan_radius: int = 16
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        om = tuple(to_scalar(w) for w in self.omega)
        object.__setattr__(self, "omega", om)
        object.__setattr__(self, "tau", Fraction(self.tau))
        d = len(om)
        if d < 1:
            raise ValueError("need at least one frequency")
        for w in om:
            if not w.is_real() or w <= 0:
                raise ValueError(f"frequency {w} must be real and positive")
        for a, b in itertools.combinations(om, 2):
            if a == b:
                raise ValueError("frequencies must have distinct moduli")
        if self.tau <= d - 1:
            raise ValueError(f"tau must exceed d-1 = {d - 1}")
        if self.gamma0 is not None:
            object.__setattr__(self, "gamma0", to_scalar(self.gamma0))

    @classmethod
    def from_strings(cls, omega, tau=None, gamma0=None, nu_scan_radius=16):
        om = tuple(parse_scalar(w) for w in omega)
        if tau is None:
            tau = Fraction(len(om))  # any tau > d-1 works; d is a safe default
        g = None if gamma0 in (None, "estimate") else parse_scalar(str(gamma0))
        return cls(om, Fraction(str(tau)), g, nu_scan_radius)

    @property
    def d(self):
        return len(self.omega)

    @property
    def exact(self):
        return all(isinstance(w, QNum) for w in self.omega)

    def dot(self, nu):
        c = self._cache
        key = ("dot", nu)
        r = c.get(key)
        if r is None:
            r = QNum(0)
            for w, n in zip(self.omega, nu):
                if n:
                    r = r + w * n
            c[key] = r
        return r

    def estimate_gamma0(self):
        """min over 0<|nu|<=N of |omega.nu| |nu|^tau (rounded down to a dyadic)."""
        key = ("gamma0",)
        if key in self._cache:
            return self._cache[key]
        best = None
        tau = mpmath.mpf(self.tau.numerator) / self.tau.denominator
        for nu in modes(self.d, self.nu_scan_radius):
            if not any(nu):
                continue
            x = abs(self.dot(nu))
            if x.is_zero():
                raise ValueError(f"resonant frequency: omega.{nu} = 0")
            val = x.to_big(128).value.real * mpmath.power(norm(nu), tau)
            best = val if best is None or val < best else best
        g = QNum(Fraction(int(mpmath.floor(best * 2 ** 30)), 2 ** 30))
        self._cache[key] = g
        return g

    @property
    def gamma0_value(self):
        return self.gamma0 if self.gamma0 is not None else self.estimate_gamma0()

    @property
    def gamma(self):
        """The gamma of the scale partition: half the Diophantine constant."""
        return self.gamma0_value / 2

    def small_divisor(self, j, nu):
        return small_divisor(self, j, nu)


def small_divisor(spec, j, nu):
    """(delta_j(omega.nu), sigma(nu, j)); ties go to sigma = +1."""
    key = ("sd", j, nu)
    r = spec._cache.get(key)
    if r is None:
        x = spec.dot(nu)
        w = spec.omega[j - 1]
        a, b = abs(x - w), abs(x + w)
        r = (a, 1) if a <= b else (b, -1)
        spec._cache[key] = r
    return r


def zw_divisor(spec, j, sigma, nu):
    """sigma*omega.nu - omega_j (signed first-order denominator)."""
    x = spec.dot(nu)
    return (x if sigma > 0 else -x) - spec.omega[j - 1]


def bar(spec, nu, j):
    """nu - sigma(nu, j) e_j."""
    _, s = small_divisor(spec, j, nu)
    return sub(nu, unit(spec.d, j, s))


def equal_divisors(spec, nu, j, nu2, j2):
    """Lattice-exact test of delta_j(omega.nu) == delta_j2(omega.nu2)."""
    b1, b2 = bar(spec, nu, j), bar(spec, nu2, j2)
    return b1 == b2 or b1 == neg(b2)


def close_equal_divisors(spec, nu, j, nu2, j2):
    """|nu - nu2| <= 2 with equal small divisors (lattice criterion)."""
    _, s1 = small_divisor(spec, j, nu)
    _, s2 = small_divisor(spec, j2, nu2)
    return sub(nu, nu2) == sub(unit(spec.d, j, s1), unit(spec.d, j2, s2))


# ---------------------------------------------------------------------------
# Scale partition
# ---------------------------------------------------------------------------


class ScalePartition:
    """psi rises from 0 at 5*gamma/8 to 1 at 7*gamma/8.

    ``Psi(n, u) = chi_{n-1}(u) psi(2^n u)`` with ``chi = 1 - psi`` and
    ``chi_{-1} = 1``.  The smoothstep shape stays exact on exact arguments; the
    exp-bump shape is evaluated in the big-float kernel.
    """

    SHAPES = ("smoothstep-C1", "exp-bump-Cinf")

    def __init__(self, gamma, psi_shape="smoothstep-C1", prec=256):
        if psi_shape not in self.SHAPES:
            raise ValueError(f"unknown psi shape {psi_shape!r}")
        self.gamma = to_scalar(gamma)
        self.shape = psi_shape
        self.prec = prec
        self.lo = self.gamma * Fraction(5, 8)
        self.hi = self.gamma * Fraction(7, 8)

    def psi(self, u):
        u = to_scalar(u)
        if u <= self.lo:
            return QNum(0)
        if u >= self.hi:
            return QNum(1)
        t = (u - self.lo) / (self.gamma / 4)
        if self.shape == "smoothstep-C1":
            return t * t * (3 - 2 * t)
        tv = t.to_big(self.prec).value.real
        a = mpmath.exp(-1 / tv)
        b = mpmath.exp(-1 / (1 - tv))
        return BigFloat(a / (a + b), self.prec)

    def dpsi(self, u):
        """Derivative of psi (used by the u-derivative of propagators)."""
        u = to_scalar(u)
        if u <= self.lo or u >= self.hi:
            return QNum(0)
        t = (u - self.lo) / (self.gamma / 4)
        if self.shape == "smoothstep-C1":
            return (6 * t - 6 * t * t) / (self.gamma / 4)
        tv = t.to_big(self.prec).value.real
        with mpmath.workprec(self.prec):
            val = mpmath.diff(lambda s: mpmath.exp(-1 / s) / (mpmath.exp(-1 / s) + mpmath.exp(-1 / (1 - s))), tv)
        return BigFloat(val, self.prec) / (self.gamma / 4)

    def chi(self, n, u):
        if n < 0:
            return QNum(1)
        return 1 - self.psi(to_scalar(u) * (2 ** n))

    def Psi(self, n, u):
        u = to_scalar(u)
        if n < 0:
            raise ValueError("scale -1 carries no cutoff function")
        return self.chi(n - 1, u) * self.psi(u * (2 ** n))

    def dPsi(self, n, u):
        """d/du Psi_n(u)."""
        u = to_scalar(u)
        a = self.psi(u * (2 ** n))
        da = self.dpsi(u * (2 ** n)) * (2 ** n)
        if n == 0:
            return da
        b = self.chi(n - 1, u)
        db = -self.dpsi(u * (2 ** (n - 1))) * (2 ** (n - 1))
        return da * b + a * db

    def support(self, delta):
        """Scales n >= 0 with Psi_n(delta) != 0."""
        delta = to_scalar(delta)
        if delta.is_zero() or delta < 0:
            raise ValueError("zero small divisor on a line that is not flagged resonant")
        n0 = 0
        x = delta
        while x <= self.lo:
            x = x * 2
            n0 += 1
        out = []
        for n in (n0, n0 + 1):
            if not self.Psi(n, delta).is_zero():
                out.append(n)
        return out

    def scale_weights(self, delta, on_shell=False):
        """[(n, Psi_n(delta))]; the marker scale -1 when ``on_shell`` is set."""
        if on_shell:
            return [(-1, QNum(1))]
        return [(n, self.Psi(n, delta)) for n in self.support(delta)]

    def cumulative(self, n, u):
        """sum_{m=0}^{n} Psi_m(u) = psi(2^n u)."""
        if n < 0:
            return QNum(0)
        return self.psi(to_scalar(u) * (2 ** n))


def partition_sweep(part, count=10_000, seed=0, max_scale=40):
    """Sample u in (0, 7 gamma/8] and check the partition-of-unity facts."""
    rng = random.Random(seed)
    worst = 0.0
    max_mult = 0
    window_violations = []
    gamma = part.gamma
    for _ in range(count):
        r = rng.randrange(0, max_scale)
        frac = Fraction(rng.randrange(1, 2 ** 40), 2 ** 40)
        u = part.hi * (frac / 2 ** r)
        sup = part.support(u)
        max_mult = max(max_mult, len(sup))
        total = QNum(0)
        for n in range(0, max(sup) + 1):
            w = part.Psi(n, u)
            total = total + w
            if not w.is_zero():
                lo, hi = gamma / 2 ** (n + 1), gamma * Fraction(2) ** (1 - n)
                if u < lo or u > hi:
                    window_violations.append((str(u), n))
        dev = abs(complex(total - 1))
        worst = max(worst, dev)
    return {
        "count": count,
        "max_deviation": worst,
        "max_multiplicity": max_mult,
        "window_violations": window_violations,
    }


# ---------------------------------------------------------------------------
# Lattice scans
# ---------------------------------------------------------------------------


def _pairs(spec, N):
    pts = [nu for nu in modes(spec.d, N)]
    for nu in pts:
        for nu2 in pts:
            if nu != nu2:
                yield nu, nu2


def check_divisor_separation(spec, N):
    """Equal divisors force |nu-nu'| >= |nu|+|nu'|-2 or |nu-nu'| = 2."""
    if N > spec.nu_scan_radius:
        raise ValueError("scan radius exceeds nu_scan_radius")
    scanned, hyp, violations, mismatches = 0, 0, [], []
    d = spec.d
    for nu, nu2 in _pairs(spec, N):
        for j in range(1, d + 1):
            for j2 in range(1, d + 1):
                scanned += 1
                eq = equal_divisors(spec, nu, j, nu2, j2)
                if spec.exact:
                    direct = small_divisor(spec, j, nu)[0] == small_divisor(spec, j2, nu2)[0]
                    if direct != eq:
                        mismatches.append([list(nu), j, list(nu2), j2])
                if not eq:
                    continue
                hyp += 1
                dist = norm(sub(nu, nu2))
                if not (dist >= norm(nu) + norm(nu2) - 2 or dist == 2):
                    violations.append([list(nu), j, list(nu2), j2])
    return {"check": "divisor-separation", "scanned_count": scanned, "hypothesis_count": hyp,
            "violations": violations, "criterion_mismatches": mismatches}


def check_scale_separation(spec, N, n_max):
    """Scale-separation and chain checks within radius N."""
    if N > spec.nu_scan_radius:
        raise ValueError("scan radius exceeds nu_scan_radius")
    d = spec.d
    gamma = spec.gamma
    tau = spec.tau
    pts = []
    for nu in modes(d, N):
        for j in range(1, d + 1):
            delta, s = small_divisor(spec, j, nu)
            if nu == unit(d, j, s):
                continue  # zero divisor: on-shell, not a propagator argument
            pts.append((nu, j, delta))
    scanned = 0
    violations_32 = []
    for n in range(0, n_max + 1):
        thr = gamma / 2 ** n
        small = [p for p in pts if p[2] <= thr]
        for (nu, j, _), (nu2, j2, _) in itertools.product(small, small):
            if nu == nu2:
                continue
            scanned += 1
            dist = norm(sub(nu, nu2))
            ok_far = _exceeds(dist, n, tau)
            ok_close = dist == 2 and equal_divisors(spec, nu, j, nu2, j2)
            if not (ok_far or ok_close):
                violations_32.append({"n": n, "nu": list(nu), "j": j, "nu2": list(nu2), "j2": j2})
    # chains: components of the graph of |step| <= 2 with equal divisors <= gamma
    small = [p for p in pts if p[2] <= gamma]
    parent = list(range(len(small)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for a, b in itertools.combinations(range(len(small)), 2):
        (nu, j, _), (nu2, j2, _) = small[a], small[b]
        if norm(sub(nu, nu2)) <= 2 and equal_divisors(spec, nu, j, nu2, j2):
            parent[find(a)] = find(b)
    comps = {}
    for i in range(len(small)):
        comps.setdefault(find(i), []).append(small[i])
    violations_34 = []
    for members in comps.values():
        for (nu, j, _), (nu2, j2, _) in itertools.combinations(members, 2):
            if norm(sub(nu, nu2)) > 2:
                violations_34.append({"nu": list(nu), "j": j, "nu2": list(nu2), "j2": j2})
    return {
        "check": "scale-separation",
        "scanned_count": scanned,
        "chain_classes": len(comps),
        "violations": violations_32 + violations_34,
        "violations_separation": violations_32,
        "violations_chain": violations_34,
    }


def _exceeds(dist, n, tau):
    """dist > 2^((n-2)/tau), decided in integers."""
    if n < 2:
        return dist >= 1
    p, q = tau.numerator, tau.denominator
    return dist ** p > 2 ** ((n - 2) * q)


def divisor_neighbours(spec, nu, j):
    """Momenta nu' != nu with |nu'-nu| <= 2 and equal divisor for some j'."""
    out = set()
    d = spec.d
    for mu in modes(d, 2):
        nu2 = add(nu, mu)
        if nu2 == nu:
            continue
        for j2 in range(1, d + 1):
            if close_equal_divisors(spec, nu, j, nu2, j2):
                out.add((nu2, j2))
    return sorted(out)
