"""Scalar kernels and polynomials in the amplitude symbols c_j^+, c_j^-.

Two scalar kernels are provided:

* ``QNum``: exact elements ``(a + b*sqrt(D)) + i*(c + e*sqrt(D))`` with rational
  parts.  With ``D = 0`` this is the exact rational complex kernel; with a
  squarefree ``D >= 2`` it is the quadratic-field kernel used for frequencies
  such as the golden mean.
* ``BigFloat``: complex floating point numbers at a fixed working precision
  (backed by mpmath).

``CoeffPoly`` stores a polynomial in ``c_1^+, c_1^-, ..., c_d^+, c_d^-`` as a
dictionary from packed exponent keys to scalars.
"""

from __future__ import annotations

import ast
import re
from fractions import Fraction
from functools import lru_cache

import gmpy2
import mpmath
from gmpy2 import mpq

__all__ = [
    "QNum",
    "BigFloat",
    "Scalar",
    "to_scalar",
    "parse_scalar",
    "CoeffPoly",
    "ZERO",
    "ONE",
    "set_prune_exponent",
]

_ZQ = mpq(0)
_RATIONALS = (int, Fraction, type(mpq(0)), type(gmpy2.mpz(0)))


def _q(x):
    if isinstance(x, Fraction):
        return mpq(x.numerator, x.denominator)
    return mpq(x)


def _qsign(x):
    return (x > 0) - (x < 0)


def _fmt_q(x):
    x = mpq(x)
    if x.denominator == 1:
        return str(x.numerator)
    return f"{x.numerator}/{x.denominator}"


class QNum:
    """Exact number ``(a + b sqrt(D)) + i (c + e sqrt(D))``.

    ``D == 0`` means no radical is present (``b == e == 0``).  Numbers with
    different nonzero ``D`` cannot be mixed.
    """

    __slots__ = ("a", "b", "c", "e", "D")

    def __init__(self, a=0, b=0, c=0, e=0, D=0):
        self.a = _q(a)
        self.b = _q(b)
        self.c = _q(c)
        self.e = _q(e)
        if D and not (self.b or self.e):
            D = 0
        self.D = D

    @classmethod
    def _raw(cls, a, b, c, e, D):
        r = object.__new__(cls)
        r.a, r.b, r.c, r.e = a, b, c, e
        r.D = D if (b or e) else 0
        return r

    @classmethod
    def sqrt(cls, D):
        """The exact square root of a positive squarefree integer."""
        D = int(D)
        r = gmpy2.isqrt(D)
        if r * r == D:
            return cls(int(r))
        if not _squarefree(D):
            raise ValueError(f"sqrt({D}): radicand must be squarefree")
        return cls(0, 1, 0, 0, D)

    # -- coercion -----------------------------------------------------------
    def _co(self, other):
        if isinstance(other, QNum):
            return other
        if isinstance(other, _RATIONALS):
            return QNum._raw(_q(other), _ZQ, _ZQ, _ZQ, 0)
        if isinstance(other, complex):
            raise TypeError("binary complex numbers are not exact")
        return NotImplemented

    @staticmethod
    def _field(x, y):
        if x.D == y.D or not y.D:
            return x.D
        if not x.D:
            return y.D
        raise ValueError(f"cannot mix sqrt({x.D}) and sqrt({y.D})")

    # -- arithmetic ---------------------------------------------------------
    def __add__(self, other):
        o = self._co(other)
        if o is NotImplemented:
            return NotImplemented
        D = self._field(self, o)
        return QNum._raw(self.a + o.a, self.b + o.b, self.c + o.c, self.e + o.e, D)

    __radd__ = __add__

    def __neg__(self):
        return QNum._raw(-self.a, -self.b, -self.c, -self.e, self.D)

    def __sub__(self, other):
        o = self._co(other)
        if o is NotImplemented:
            return NotImplemented
        D = self._field(self, o)
        return QNum._raw(self.a - o.a, self.b - o.b, self.c - o.c, self.e - o.e, D)

    def __rsub__(self, other):
        o = self._co(other)
        if o is NotImplemented:
            return NotImplemented
        return o - self

    def __mul__(self, other):
        o = self._co(other)
        if o is NotImplemented:
            return NotImplemented
        D = self._field(self, o)
        a, b, c, e = self.a, self.b, self.c, self.e
        p, q, r, s = o.a, o.b, o.c, o.e
        if not (c or e or r or s):
            if not (b or q):
                return QNum._raw(a * p, _ZQ, _ZQ, _ZQ, 0)
            return QNum._raw(a * p + b * q * D, a * q + b * p, _ZQ, _ZQ, D)
        # (x + iy)(u + iv) with x=a+b rD, y=c+e rD, u=p+q rD, v=r+s rD
        xu0, xu1 = a * p + b * q * D, a * q + b * p
        yv0, yv1 = c * r + e * s * D, c * s + e * r
        xv0, xv1 = a * r + b * s * D, a * s + b * r
        yu0, yu1 = c * p + e * q * D, c * q + e * p
        return QNum._raw(xu0 - yv0, xu1 - yv1, xv0 + yu0, xv1 + yu1, D)

    __rmul__ = __mul__

    def _real_inverse(self):
        # 1/(a + b rD) = (a - b rD)/(a^2 - b^2 D)
        a, b = self.a, self.b
        n = a * a - b * b * self.D
        if not n:
            raise ZeroDivisionError("division by exact zero")
        return QNum._raw(a / n, -b / n, _ZQ, _ZQ, self.D)

    def inverse(self):
        if not (self.c or self.e):
            return self._real_inverse()
        re_, im_ = self.real, self.imag
        n = re_ * re_ + im_ * im_
        return self.conjugate() * n._real_inverse()

    def _parts(self):
        return (self.a, self.b, self.c, self.e)

    def __truediv__(self, other):
        o = self._co(other)
        if o is NotImplemented:
            return NotImplemented
        return self * o.inverse()

    def __rtruediv__(self, other):
        o = self._co(other)
        if o is NotImplemented:
            return NotImplemented
        return o * self.inverse()

    def __pow__(self, n):
        if not isinstance(n, int):
            return NotImplemented
        if n < 0:
            return self.inverse() ** (-n)
        r = QNum(1)
        b = self
        while n:
            if n & 1:
                r = r * b
            b = b * b
            n >>= 1
        return r

    def conjugate(self):
        return QNum._raw(self.a, self.b, -self.c, -self.e, self.D)

    @property
    def real(self):
        return QNum._raw(self.a, self.b, _ZQ, _ZQ, self.D)

    @property
    def imag(self):
        return QNum._raw(self.c, self.e, _ZQ, _ZQ, self.D)

    # -- predicates ---------------------------------------------------------
    def is_zero(self):
        return not (self.a or self.b or self.c or self.e)

    def is_real(self):
        return not (self.c or self.e)

    def is_rational(self):
        return not (self.b or self.e)

    def __bool__(self):
        return not self.is_zero()

    def sign(self):
        """Sign of a real element, decided exactly."""
        if not self.is_real():
            raise ValueError("sign of a non-real number")
        a, b = self.a, self.b
        sa, sb = _qsign(a), _qsign(b)
        if sb == 0:
            return sa
        if sa == 0 or sa == sb:
            return sb
        return sa if a * a > b * b * self.D else sb

    def __abs__(self):
        return self if self.sign() >= 0 else -self

    def _cmp(self, other):
        o = self._co(other)
        if o is NotImplemented:
            if isinstance(other, BigFloat):
                return (self.to_big(other.prec) - other).real_sign()
            return NotImplemented
        return (self - o).sign()

    def __lt__(self, other):
        s = self._cmp(other)
        return s if s is NotImplemented else s < 0

    def __le__(self, other):
        s = self._cmp(other)
        return s if s is NotImplemented else s <= 0

    def __gt__(self, other):
        s = self._cmp(other)
        return s if s is NotImplemented else s > 0

    def __ge__(self, other):
        s = self._cmp(other)
        return s if s is NotImplemented else s >= 0

    def __eq__(self, other):
        if isinstance(other, BigFloat):
            return False
        o = self._co(other)
        if o is NotImplemented:
            return NotImplemented
        if self.D and o.D and self.D != o.D:
            return False
        return (self.a == o.a and self.b == o.b and self.c == o.c
                and self.e == o.e)

    def __hash__(self):
        if self.is_rational() and not self.c:
            return hash(Fraction(int(self.a.numerator), int(self.a.denominator)))
        return hash((self.a, self.b, self.c, self.e, self.D))

    # -- conversions --------------------------------------------------------
    def to_big(self, prec):
        ctx = _ctx(prec)
        r = ctx.sqrt(self.D) if self.D else ctx.zero

        def f(x):
            return ctx.mpf(int(x.numerator)) / int(x.denominator)

        re_ = f(self.a) + f(self.b) * r
        im_ = f(self.c) + f(self.e) * r
        return BigFloat(ctx.mpc(re_, im_), prec)

    def __complex__(self):
        return complex(self.to_big(64).value)

    def __float__(self):
        if not self.is_real():
            raise TypeError("non-real number")
        return float(self.to_big(64).value.real)

    def __repr__(self):
        return f"QNum({self})"

    def __str__(self):
        re_ = _fmt_real(self.a, self.b, self.D)
        if not (self.c or self.e):
            return re_
        im_ = _fmt_real(self.c, self.e, self.D)
        if " " in im_:
            im_ = f"({im_})"
        if not (self.a or self.b):
            return f"{im_} i"
        if im_.startswith("-"):
            return f"{re_} - {im_[1:]} i"
        return f"{re_} + {im_} i"


def _fmt_real(a, b, D):
    if not b:
        return _fmt_q(a)
    rad = f"{_fmt_q(b)}*sqrt{D}" if b != 1 else f"sqrt{D}"
    if b == -1:
        rad = f"-sqrt{D}"
    if not a:
        return rad
    if rad.startswith("-"):
        return f"{_fmt_q(a)} - {rad[1:]}"
    return f"{_fmt_q(a)} + {rad}"


def _squarefree(n):
    if n < 2:
        return False
    p = 2
    while p * p <= n:
        if n % (p * p) == 0:
            return False
        p += 1
    return True


@lru_cache(maxsize=None)
def _ctx(prec):
    ctx = mpmath.MPContext()
    ctx.prec = prec
    return ctx


# Big-float terms with modulus below 2^(-prune_exponent * prec) are pruned.
_PRUNE = {"fraction": Fraction(1, 2)}


def set_prune_exponent(fraction):
    """Set the pruning threshold 2^(-fraction*precision) for big-float terms."""
    _PRUNE["fraction"] = Fraction(fraction)


class BigFloat:
    """Complex floating point scalar at a fixed binary precision."""

    __slots__ = ("value", "prec")

    def __init__(self, value, prec=256):
        ctx = _ctx(prec)
        if isinstance(value, QNum):
            value = value.to_big(prec).value
        elif isinstance(value, str):
            value = ctx.mpmathify(value)
        self.value = ctx.mpc(value)
        self.prec = prec

    def _co(self, other):
        if isinstance(other, BigFloat):
            return other
        if isinstance(other, QNum):
            return other.to_big(self.prec)
        if isinstance(other, _RATIONALS):
            return QNum(other).to_big(self.prec)
        if isinstance(other, (float, complex)):
            return BigFloat(other, self.prec)
        return NotImplemented

    def _bin(self, other, op):
        o = self._co(other)
        if o is NotImplemented:
            return NotImplemented
        p = min(self.prec, o.prec)
        ctx = _ctx(p)
        return BigFloat(op(ctx, ctx.mpc(self.value), ctx.mpc(o.value)), p)

    def __add__(self, other):
        return self._bin(other, lambda c, x, y: x + y)

    __radd__ = __add__

    def __sub__(self, other):
        return self._bin(other, lambda c, x, y: x - y)

    def __rsub__(self, other):
        return self._bin(other, lambda c, x, y: y - x)

    def __mul__(self, other):
        return self._bin(other, lambda c, x, y: x * y)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self._bin(other, lambda c, x, y: x / y)

    def __rtruediv__(self, other):
        return self._bin(other, lambda c, x, y: y / x)

    def __neg__(self):
        return BigFloat(-self.value, self.prec)

    def __pow__(self, n):
        return BigFloat(self.value ** n, self.prec)

    def inverse(self):
        return BigFloat(1 / self.value, self.prec)

    def conjugate(self):
        return BigFloat(self.value.conjugate(), self.prec)

    @property
    def real(self):
        return BigFloat(self.value.real, self.prec)

    @property
    def imag(self):
        return BigFloat(self.value.imag, self.prec)

    def threshold(self):
        return _ctx(self.prec).ldexp(1, -int(self.prec * _PRUNE["fraction"]))

    def is_zero(self):
        return abs(self.value) < self.threshold()

    def is_real(self):
        return abs(self.value.imag) < self.threshold()

    def __bool__(self):
        return not self.is_zero()

    def real_sign(self):
        x = self.value.real
        return (x > 0) - (x < 0)

    def sign(self):
        return self.real_sign()

    def __abs__(self):
        return BigFloat(abs(self.value), self.prec)

    def _cmp(self, other):
        o = self._co(other)
        if o is NotImplemented:
            return NotImplemented
        return (self - o).real_sign()

    def __lt__(self, other):
        return self._cmp(other) < 0

    def __le__(self, other):
        return self._cmp(other) <= 0

    def __gt__(self, other):
        return self._cmp(other) > 0

    def __ge__(self, other):
        return self._cmp(other) >= 0

    def __eq__(self, other):
        o = self._co(other)
        if o is NotImplemented:
            return NotImplemented
        return self.value == o.value

    def __hash__(self):
        return hash((self.value.real, self.value.imag))

    def to_big(self, prec):
        return BigFloat(self.value, prec)

    def __complex__(self):
        return complex(self.value)

    def __float__(self):
        return float(self.value.real)

    def __repr__(self):
        return f"BigFloat({self}, prec={self.prec})"

    def __str__(self):
        dps = max(1, int(self.prec * 0.30103) - 1)
        re_ = mpmath.nstr(self.value.real, dps)
        if self.is_real():
            return re_
        im_ = mpmath.nstr(self.value.imag, dps)
        return f"{re_} + {im_} i"


Scalar = (QNum, BigFloat)
ZERO = QNum(0)
ONE = QNum(1)


def to_scalar(x, prec=None):
    """Coerce ints, fractions, floats and strings to a scalar."""
    if isinstance(x, (QNum, BigFloat)):
        return x
    if isinstance(x, _RATIONALS):
        return QNum(x)
    if isinstance(x, str):
        return parse_scalar(x, prec=prec or 256)
    if isinstance(x, (float, complex)):
        return BigFloat(x, prec or 256)
    if isinstance(x, mpmath.mpc) or isinstance(x, mpmath.mpf):
        return BigFloat(x, prec or mpmath.mp.prec)
    raise TypeError(f"cannot convert {x!r} to a scalar")


_DEC = re.compile(r"(?<![\w.])(\d+\.\d*(?:[eE][-+]?\d+)?|\d+[eE][-+]?\d+)")
_SQRT = re.compile(r"sqrt\s*(\d+)")
_IMPL_I = re.compile(r"([\d)])\s*([iI])\b")


def parse_scalar(text, prec=256):
    """Parse ``"3/4"``, ``"1+2i"``, ``"(1+sqrt5)/2"`` or decimals exactly.

    Decimal literals switch the result to the big-float kernel at ``prec`` bits.
    """
    s = str(text).strip()
    if not s:
        raise ValueError("empty scalar")
    s = _SQRT.sub(r"sqrt(\1)", s)
    decimals = []

    def _dec(m):
        decimals.append(m.group(1))
        return f"_dec({len(decimals) - 1})"

    s = _DEC.sub(_dec, s)
    s = _IMPL_I.sub(r"\1*\2", s)
    s = s.replace("^", "**")
    try:
        tree = ast.parse(s, mode="eval")
    except SyntaxError as exc:
        raise ValueError(f"cannot parse scalar {text!r}") from exc

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, int):
            return QNum(node.value)
        if isinstance(node, ast.Name) and node.id in ("i", "I"):
            return QNum(0, 0, 1)
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v = ev(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.BinOp):
            x, y = ev(node.left), ev(node.right)
            if isinstance(node.op, ast.Add):
                return x + y
            if isinstance(node.op, ast.Sub):
                return x - y
            if isinstance(node.op, ast.Mult):
                return x * y
            if isinstance(node.op, ast.Div):
                return x / y
            if isinstance(node.op, ast.Pow) and isinstance(y, QNum) and y.is_rational() \
                    and y.is_real() and y.a.denominator == 1:
                return x ** int(y.a)
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and len(node.args) == 1:
            arg = node.args[0]
            if node.func.id == "sqrt" and isinstance(arg, ast.Constant):
                return QNum.sqrt(arg.value)
            if node.func.id == "_dec" and isinstance(arg, ast.Constant):
                return BigFloat(decimals[arg.value], prec)
        raise ValueError(f"cannot parse scalar {text!r}")

    return ev(tree)


# ---------------------------------------------------------------------------
# Polynomials
# ---------------------------------------------------------------------------

_BITS = 16
_MASK = (1 << _BITS) - 1


def pack(exps):
    """Pack an exponent tuple (c1+, c1-, c2+, c2-, ...) into an integer key."""
    key = 0
    for i, m in enumerate(exps):
        if m < 0 or m > _MASK:
            raise ValueError(f"exponent {m} out of range")
        key |= m << (_BITS * i)
    return key


def unpack(key, d):
    return tuple((key >> (_BITS * i)) & _MASK for i in range(2 * d))


def sym_index(j, sigma):
    """Slot of symbol c_j^sigma (j is 1-based, sigma is +1 or -1)."""
    return 2 * (j - 1) + (0 if sigma > 0 else 1)


class CoeffPoly:
    """Polynomial in c_1^+, c_1^-, ..., c_d^+, c_d^- with scalar coefficients.

    Terms are kept in canonical form: no stored coefficient is zero.
    """

    __slots__ = ("d", "terms")

    def __init__(self, d, terms=None):
        self.d = d
        self.terms = {}
        if terms:
            for m, v in terms.items():
                key = m if isinstance(m, int) else pack(m)
                v = to_scalar(v)
                if not v.is_zero():
                    self.terms[key] = v

    @classmethod
    def _wrap(cls, d, terms):
        p = object.__new__(cls)
        p.d = d
        p.terms = terms
        return p

    @classmethod
    def zero(cls, d):
        return cls._wrap(d, {})

    @classmethod
    def constant(cls, d, value):
        value = to_scalar(value)
        return cls._wrap(d, {} if value.is_zero() else {0: value})

    @classmethod
    def symbol(cls, d, j, sigma, power=1):
        """The monomial (c_j^sigma)^power."""
        return cls._wrap(d, {power << (_BITS * sym_index(j, sigma)): ONE})

    @classmethod
    def monomial(cls, d, exps, coeff=1):
        return cls(d, {tuple(exps): coeff})

    # -- arithmetic ---------------------------------------------------------
    def _check(self, other):
        if self.d != other.d:
            raise ValueError(f"dimension mismatch: {self.d} vs {other.d}")

    def __add__(self, other):
        if not isinstance(other, CoeffPoly):
            other = CoeffPoly.constant(self.d, other)
        self._check(other)
        out = dict(self.terms)
        for m, v in other.terms.items():
            w = out.get(m)
            if w is None:
                out[m] = v
            else:
                w = w + v
                if w.is_zero():
                    del out[m]
                else:
                    out[m] = w
        return CoeffPoly._wrap(self.d, out)

    __radd__ = __add__

    def __neg__(self):
        return CoeffPoly._wrap(self.d, {m: -v for m, v in self.terms.items()})

    def __sub__(self, other):
        if not isinstance(other, CoeffPoly):
            other = CoeffPoly.constant(self.d, other)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def scale(self, s):
        s = to_scalar(s)
        if s.is_zero():
            return CoeffPoly.zero(self.d)
        out = {}
        for m, v in self.terms.items():
            w = v * s
            if not w.is_zero():
                out[m] = w
        return CoeffPoly._wrap(self.d, out)

    def __mul__(self, other):
        if not isinstance(other, CoeffPoly):
            return self.scale(other)
        self._check(other)
        out = {}
        get = out.get
        for m1, v1 in self.terms.items():
            for m2, v2 in other.terms.items():
                m = m1 + m2
                w = get(m)
                out[m] = v1 * v2 if w is None else w + v1 * v2
        return CoeffPoly._wrap(self.d, {m: v for m, v in out.items() if not v.is_zero()})

    def __rmul__(self, other):
        return self.scale(other)

    def __truediv__(self, s):
        return self.scale(to_scalar(1) / to_scalar(s))

    def __pow__(self, n):
        r = CoeffPoly.constant(self.d, 1)
        for _ in range(n):
            r = r * self
        return r

    def add_into(self, other, factor=None):
        """In-place ``self += factor * other`` (used by accumulators)."""
        self._check(other)
        out = self.terms
        for m, v in other.terms.items():
            if factor is not None:
                v = v * factor
            w = out.get(m)
            w = v if w is None else w + v
            if w.is_zero():
                out.pop(m, None)
            else:
                out[m] = w
        return self

    def divide_symbol(self, j, sigma):
        """Exact division by c_j^sigma; every monomial must contain the symbol."""
        shift = _BITS * sym_index(j, sigma)
        unit = 1 << shift
        out = {}
        for m, v in self.terms.items():
            if (m >> shift) & _MASK == 0:
                raise ArithmeticError(
                    f"monomial {self._mono_str(m)} lacks c{j}{'+' if sigma > 0 else '-'}")
            out[m - unit] = v
        return CoeffPoly._wrap(self.d, out)

    def times_symbol(self, j, sigma, power=1):
        unit = power << (_BITS * sym_index(j, sigma))
        return CoeffPoly._wrap(self.d, {m + unit: v for m, v in self.terms.items()})

    def exponent(self, key, j, sigma):
        return (key >> (_BITS * sym_index(j, sigma))) & _MASK

    # -- structure ----------------------------------------------------------
    def conjugate(self):
        out = {}
        for m, v in self.terms.items():
            e = unpack(m, self.d)
            sw = []
            for j in range(self.d):
                sw.extend((e[2 * j + 1], e[2 * j]))
            out[pack(sw)] = v.conjugate()
        return CoeffPoly._wrap(self.d, out)

    def is_zero(self):
        return not self.terms

    def is_modulus_only(self):
        for m, v in self.terms.items():
            e = unpack(m, self.d)
            if any(e[2 * j] != e[2 * j + 1] for j in range(self.d)):
                return False
            if not v.is_real():
                return False
        return True

    def is_real(self):
        """True iff the polynomial is real-valued under c_j^- = conj(c_j^+)."""
        return self == self.conjugate()

    def degree(self):
        return max((sum(unpack(m, self.d)) for m in self.terms), default=-1)

    def items(self):
        """Sorted (exponent tuple, scalar) pairs in lexicographic order."""
        return sorted(((unpack(m, self.d), v) for m, v in self.terms.items()),
                      key=lambda t: t[0])

    def coefficient(self, exps):
        return self.terms.get(pack(exps), ZERO)

    def evaluate(self, c, prec=None):
        """Substitute c_j^+ = c_j and c_j^- = conj(c_j)."""
        if len(c) != self.d:
            raise ValueError(f"expected {self.d} amplitudes, got {len(c)}")
        cs = [to_scalar(x, prec) for x in c]
        if prec is not None:
            cs = [x.to_big(prec) for x in cs]
        vals = []
        for x in cs:
            vals.extend((x, x.conjugate()))
        total = ZERO if prec is None else BigFloat(0, prec)
        for m, v in self.terms.items():
            e = unpack(m, self.d)
            t = v
            for x, k in zip(vals, e):
                if k:
                    t = t * (x ** k)
            total = total + t
        return total

    def map_scalars(self, fn):
        out = {}
        for m, v in self.terms.items():
            w = fn(v)
            if not w.is_zero():
                out[m] = w
        return CoeffPoly._wrap(self.d, out)

    def to_big(self, prec):
        return self.map_scalars(lambda v: v.to_big(prec))

    def __eq__(self, other):
        if isinstance(other, CoeffPoly):
            return self.d == other.d and self.terms == other.terms
        if isinstance(other, (int, QNum)):
            return self == CoeffPoly.constant(self.d, other)
        return NotImplemented

    def __hash__(self):
        return hash((self.d, frozenset(self.terms.items())))

    # -- text form ----------------------------------------------------------
    def _mono_str(self, key):
        e = unpack(key, self.d)
        parts = []
        for j in range(self.d):
            for s, k in (("+", e[2 * j]), ("-", e[2 * j + 1])):
                if k:
                    parts.append(f"c{j + 1}{s}^{k}")
        return " ".join(parts)

    def __str__(self):
        if not self.terms:
            return "0"
        out = []
        for exps, v in self.items():
            mono = self._mono_str(pack(exps))
            out.append(f"({v}) * {mono}" if mono else f"({v})")
        return " + ".join(out)

    def __repr__(self):
        return f"CoeffPoly(d={self.d}, {self})"

    @classmethod
    def parse(cls, d, text, prec=256):
        """Inverse of ``str`` for the canonical serialization."""
        text = text.strip()
        if text == "0":
            return cls.zero(d)
        terms = {}
        for chunk in _split_terms(text):
            chunk = chunk.strip()
            coeff, _, mono = chunk.partition(") * ")
            if not mono:
                coeff = chunk
            coeff = coeff.strip()
            if coeff.startswith("(") and coeff.endswith(")"):
                coeff = coeff[1:-1]
            elif coeff.startswith("("):
                coeff = coeff[1:]
            exps = [0] * (2 * d)
            for sym in mono.split():
                m = re.fullmatch(r"c(\d+)([+-])\^(\d+)", sym)
                if not m:
                    raise ValueError(f"bad monomial {sym!r}")
                j = int(m.group(1))
                exps[sym_index(j, 1 if m.group(2) == "+" else -1)] = int(m.group(3))
            key = pack(exps)
            v = parse_scalar(coeff, prec)
            terms[key] = terms[key] + v if key in terms else v
        return cls._wrap(d, {m: v for m, v in terms.items() if not v.is_zero()})


def _split_terms(text):
    """Split on top-level ' + ' separators between parenthesised terms."""
    out, depth, cur, i = [], 0, [], 0
    while i < len(text):
        ch = text[i]
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if depth == 0 and text.startswith(" + (", i):
            out.append("".join(cur))
            cur = []
            i += 3
            continue
        cur.append(ch)
        i += 1
    out.append("".join(cur))
    return out
