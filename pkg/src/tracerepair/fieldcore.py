"""Exact arithmetic in a field tower GF(p) <= B = GF(p^s) <= F = GF(p^(s*t)).

Elements are canonically enumerated: an element's index is the base-p
integer formed by its coefficient vector, least-significant coordinate
first (constant term of the constant B-coordinate is digit 0).  Index 0
is the zero element and index 1 is one; the subfield B occupies exactly
the indices below ``p**s``.

Moduli are canonical as well: the extension modulus of each step is the
lexicographically smallest monic irreducible polynomial of the required
degree, comparing coefficient tuples from the leading coefficient down
to the constant term under the element order of the coefficient field.
Two constructions with the same (p, s, t) therefore agree element by
element, which is what makes every downstream plan and transcript
reproducible.

Arithmetic is table-driven (discrete-log tables for multiplication),
built once at construction; construction cost grows with the field size,
which is why a size cap is enforced.
"""

from __future__ import annotations

import re
from itertools import product

DEFAULT_SIZE_CAP = 1 << 20

_SPEC_RE = re.compile(
    r"^\s*gf\(\s*(\d+)\s*(?:\^\s*(\d+)\s*)?\)\s*/\s*gf\(\s*(\d+)\s*(?:\^\s*(\d+)\s*)?\)\s*$",
    re.IGNORECASE,
)


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    d = 2
    while d * d <= n:
        if n % d == 0:
            return False
        d += 1
    return True


def _prime_factors(n: int) -> list[int]:
    out = []
    d = 2
    while d * d <= n:
        if n % d == 0:
            out.append(d)
            while n % d == 0:
                n //= d
        d += 1
    if n > 1:
        out.append(n)
    return out


class _PolyRing:
    """Polynomial helpers over an abstract coefficient field given by
    int-indexed add/mul/neg/inv callables.  Polynomials are lists of
    coefficient indices, constant term first."""

    def __init__(self, q, add, mul, neg, inv):
        self.q = q
        self.add = add
        self.mul = mul
        self.neg = neg
        self.inv = inv

    def trim(self, a):
        while a and a[-1] == 0:
            a = a[:-1]
        return a

    def rem(self, a, m):
        """Remainder of a modulo monic m."""
        a = list(a)
        dm = len(m) - 1
        for d in range(len(a) - 1, dm - 1, -1):
            c = a[d]
            if c == 0:
                continue
            a[d] = 0
            for i in range(dm):
                a[d - dm + i] = self.add(a[d - dm + i], self.neg(self.mul(c, m[i])))
        return a[:dm]

    def mulmod(self, a, b, m):
        dm = len(m) - 1
        res = [0] * (2 * dm - 1)
        for i, x in enumerate(a):
            if x == 0:
                continue
            for j, y in enumerate(b):
                if y:
                    res[i + j] = self.add(res[i + j], self.mul(x, y))
        return self.rem(res, m)

    def is_irreducible(self, m) -> bool:
        """Trial division by all monic polynomials of degree <= deg(m)/2."""
        dm = len(m) - 1
        for d in range(1, dm // 2 + 1):
            for tail in product(range(self.q), repeat=d):
                div = list(tail) + [1]
                if not self.trim(self.rem(m, div)):
                    return False
        return True

    def canonical_irreducible(self, degree: int):
        """Lexicographically smallest monic irreducible of the degree,
        comparing (c_{d-1}, ..., c_0) in coefficient-field index order."""
        for m_int in range(self.q ** degree):
            digits = []
            x = m_int
            for _ in range(degree):
                digits.append(x % self.q)
                x //= self.q
            # digits[i] is c_i: base-q integer order == lex order on
            # (c_{d-1},...,c_0) tuples.
            m = digits + [1]
            if self.is_irreducible(m):
                return tuple(m)
        raise RuntimeError(f"no irreducible polynomial of degree {degree}")


class SubElement:
    """An element of the base field B (a subsymbol, the bandwidth unit)."""

    __slots__ = ("field", "index")

    def __init__(self, field: "TowerField", index: int):
        self.field = field
        self.index = index

    def __add__(self, other):
        if isinstance(other, SubElement):
            return self.field._subs[self.field._badd[self.index * self.field.q + other.index]]
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, SubElement):
            f = self.field
            return f._subs[f._badd[self.index * f.q + f._bneg[other.index]]]
        return NotImplemented

    def __mul__(self, other):
        f = self.field
        if isinstance(other, SubElement):
            return f._subs[f._bmul[self.index * f.q + other.index]]
        if isinstance(other, FieldElement):
            return f._elems[f._mul(self.index, other.index)]
        return NotImplemented

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return self.field._subs[self.field._bneg[self.index]]

    def __truediv__(self, other):
        if isinstance(other, SubElement):
            return self * other.inverse()
        return NotImplemented

    def inverse(self) -> "SubElement":
        if self.index == 0:
            raise ZeroDivisionError("inversion of zero subsymbol")
        return self.field._subs[self.field._binv[self.index]]

    def lift(self) -> "FieldElement":
        """The same element viewed inside F (B sits at indices < q)."""
        return self.field._elems[self.index]

    def __bool__(self):
        return self.index != 0

    def __eq__(self, other):
        return (
            isinstance(other, SubElement)
            and self.index == other.index
            and self.field._key == other.field._key
        )

    def __hash__(self):
        return hash((self.field._key, "B", self.index))

    def digits(self) -> tuple[int, ...]:
        x, p = self.index, self.field.p
        out = []
        for _ in range(self.field.s):
            out.append(x % p)
            x //= p
        return tuple(out)

    def __str__(self):
        return _digit_string(self.digits(), self.field.p)

    def __repr__(self):
        return f"SubElement({self.field.spec_string()}, {self})"


class FieldElement:
    """An element of F (a stored symbol)."""

    __slots__ = ("field", "index")

    def __init__(self, field: "TowerField", index: int):
        self.field = field
        self.index = index

    def __add__(self, other):
        f = self.field
        if isinstance(other, FieldElement):
            return f._elems[f._add(self.index, other.index)]
        if isinstance(other, SubElement):
            return f._elems[f._add(self.index, other.index)]
        return NotImplemented

    def __radd__(self, other):
        return self.__add__(other)

    def __sub__(self, other):
        f = self.field
        if isinstance(other, (FieldElement, SubElement)):
            return f._elems[f._add(self.index, f._neg[other.index])]
        return NotImplemented

    def __mul__(self, other):
        f = self.field
        if isinstance(other, (FieldElement, SubElement)):
            return f._elems[f._mul(self.index, other.index)]
        return NotImplemented

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return self.field._elems[self.field._neg[self.index]]

    def __truediv__(self, other):
        if isinstance(other, (FieldElement, SubElement)):
            return self * self.field._elems[other.index].inverse()
        return NotImplemented

    def inverse(self) -> "FieldElement":
        f = self.field
        if self.index == 0:
            raise ZeroDivisionError("inversion of zero")
        return f._elems[f._exp[(f.size - 1) - f._log[self.index]]]

    def __pow__(self, n: int):
        f = self.field
        if self.index == 0:
            if n == 0:
                return f.one
            if n < 0:
                raise ZeroDivisionError("negative power of zero")
            return self
        e = (f._log[self.index] * n) % (f.size - 1)
        return f._elems[f._exp[e]]

    def __bool__(self):
        return self.index != 0

    def __eq__(self, other):
        return (
            isinstance(other, FieldElement)
            and self.index == other.index
            and self.field._key == other.field._key
        )

    def __hash__(self):
        return hash((self.field._key, self.index))

    def trace(self) -> SubElement:
        """Trace down to B."""
        f = self.field
        return f._subs[f._trace[self.index]]

    @property
    def in_base(self) -> bool:
        return self.index < self.field.q

    def as_sub(self) -> SubElement:
        """Reinterpret as a B element; requires the element to lie in B."""
        if not self.in_base:
            raise ValueError(f"{self} is not in the base field")
        return self.field._subs[self.index]

    def bcoords(self) -> tuple[SubElement, ...]:
        """Coordinates over B in the power basis of the extension modulus."""
        f = self.field
        x = self.index
        out = []
        for _ in range(f.t):
            out.append(f._subs[x % f.q])
            x //= f.q
        return tuple(out)

    def digits(self) -> tuple[int, ...]:
        x, p = self.index, self.field.p
        out = []
        for _ in range(self.field.s * self.field.t):
            out.append(x % p)
            x //= p
        return tuple(out)

    def __str__(self):
        return _digit_string(self.digits(), self.field.p)

    def __repr__(self):
        return f"FieldElement({self.field.spec_string()}, {self})"


def _digit_string(digits: tuple[int, ...], p: int) -> str:
    # most-significant coordinate first; dot-separated beyond single digits
    if p <= 10:
        return "".join(str(d) for d in reversed(digits))
    return ".".join(str(d) for d in reversed(digits))


def _parse_digit_string(text: str, ndigits: int, p: int) -> int:
    text = text.strip()
    if p <= 10:
        parts = list(text)
    else:
        parts = text.split(".")
    if len(parts) != ndigits:
        raise ValueError(f"element string {text!r} needs {ndigits} base-{p} digits")
    idx = 0
    for part in parts:  # most significant first
        d = int(part)
        if not 0 <= d < p:
            raise ValueError(f"digit {d} out of range for base {p}")
        idx = idx * p + d
    return idx


class TowerField:
    """The tower GF(p) <= B = GF(p^s) <= F = GF(p^(s*t)) with canonical
    moduli, canonical element enumeration, and the trace map F -> B.

    Immutable after construction; all element objects are interned, so
    arithmetic never allocates and equality is cheap.
    """

    def __init__(self, p: int, s: int, t: int, size_cap: int = DEFAULT_SIZE_CAP):
        if not is_prime(p):
            raise ValueError(f"characteristic {p} is not prime")
        if s < 1:
            raise ValueError("base degree s must be >= 1")
        if t < 2:
            raise ValueError("relative degree t must be >= 2 (B must be proper)")
        size = p ** (s * t)
        if size > size_cap:
            raise ValueError(
                f"|F| = {p}^{s * t} = {size} exceeds the size cap {size_cap}"
            )
        self.p = p
        self.s = s
        self.t = t
        self.q = p ** s
        self.size = size
        self._key = (p, s, t)

        self._build_base_tables()
        self._build_ext_tables()
        self._subs = [SubElement(self, i) for i in range(self.q)]
        self._elems = [FieldElement(self, i) for i in range(self.size)]
        self._build_trace_table()

        self.zero = self._elems[0]
        self.one = self._elems[1]
        self.sub_zero = self._subs[0]
        self.sub_one = self._subs[1]

    # -- construction ---------------------------------------------------

    def _build_base_tables(self):
        p, s, q = self.p, self.s, self.q
        padd = lambda a, b: (a + b) % p
        pmul = lambda a, b: (a * b) % p
        pneg = lambda a: (-a) % p
        pinv = lambda a: pow(a, p - 2, p)
        ring = _PolyRing(p, padd, pmul, pneg, pinv)
        if s == 1:
            self.base_modulus = (0, 1)  # vacuous: B is the prime field itself
        else:
            self.base_modulus = ring.canonical_irreducible(s)

        def bdigits(i):
            out = []
            for _ in range(s):
                out.append(i % p)
                i //= p
            return out

        def bindex(ds):
            idx = 0
            for d in reversed(ds):
                idx = idx * p + d
            return idx

        badd = [0] * (q * q)
        bneg = [0] * q
        for i in range(q):
            di = bdigits(i)
            bneg[i] = bindex([(-d) % p for d in di])
            for j in range(q):
                dj = bdigits(j)
                badd[i * q + j] = bindex([(x + y) % p for x, y in zip(di, dj)])
        self._badd = badd
        self._bneg = bneg

        if s == 1:
            bmul_fn = pmul
        else:
            m = list(self.base_modulus)
            bmul_fn = lambda a, b: bindex(
                ring.mulmod(bdigits(a), bdigits(b), m) + [0] * s
            )
        bmul = [0] * (q * q)
        for i in range(q):
            for j in range(i, q):
                v = bmul_fn(i, j)
                bmul[i * q + j] = v
                bmul[j * q + i] = v
        self._bmul = bmul
        binv = [0] * q
        for i in range(1, q):
            for j in range(1, q):
                if bmul[i * q + j] == 1:
                    binv[i] = j
                    break
        self._binv = binv

    def _build_ext_tables(self):
        q, t, size = self.q, self.t, self.size
        badd_t = self._badd
        bmul_t = self._bmul
        bneg_t = self._bneg
        ring = _PolyRing(
            q,
            lambda a, b: badd_t[a * q + b],
            lambda a, b: bmul_t[a * q + b],
            lambda a: bneg_t[a],
            lambda a: self._binv[a],
        )
        self.ext_modulus = ring.canonical_irreducible(t)
        m = list(self.ext_modulus)

        def fdigits(i):
            out = []
            for _ in range(t):
                out.append(i % q)
                i //= q
            return out

        def findex(ds):
            idx = 0
            for d in reversed(ds):
                idx = idx * q + d
            return idx

        def fmul_poly(a, b):
            return findex(ring.mulmod(fdigits(a), fdigits(b), m) + [0] * t)

        # negation table
        self._neg = [findex([bneg_t[d] for d in fdigits(i)]) for i in range(size)]

        # addition: XOR in characteristic 2, digit-wise otherwise (full
        # table when small enough to be worthwhile)
        if self.p == 2:
            self._add = lambda a, b: a ^ b
        elif size * size <= (1 << 20):
            fadd = [0] * (size * size)
            for i in range(size):
                di = fdigits(i)
                for j in range(size):
                    fadd[i * size + j] = findex(
                        [badd_t[x * q + y] for x, y in zip(di, fdigits(j))]
                    )
            self._add = lambda a, b: fadd[a * size + b]
        else:
            self._add = lambda a, b: findex(
                [badd_t[x * q + y] for x, y in zip(fdigits(a), fdigits(b))]
            )

        # discrete-log tables from the first generator in enumeration order
        order = size - 1
        factors = _prime_factors(order)

        def pow_poly(g, n):
            r, base = 1, g
            while n:
                if n & 1:
                    r = fmul_poly(r, base)
                base = fmul_poly(base, base)
                n >>= 1
            return r

        gen = None
        for cand in range(2, size):
            if all(pow_poly(cand, order // f) != 1 for f in factors):
                gen = cand
                break
        if gen is None:  # pragma: no cover - multiplicative group is cyclic
            raise RuntimeError("no generator found")

        exp = [0] * (2 * order)
        log = [0] * size
        x = 1
        for i in range(order):
            exp[i] = x
            exp[i + order] = x
            log[x] = i
            x = fmul_poly(x, gen)
        if x != 1:  # pragma: no cover
            raise RuntimeError("generator order mismatch")
        self._exp = exp
        self._log = log

        def fmul(a, b):
            if a == 0 or b == 0:
                return 0
            return exp[log[a] + log[b]]

        self._mul = fmul

    def _build_trace_table(self):
        q, t, size = self.q, self.t, self.size
        order = size - 1
        exp, log, add = self._exp, self._log, self._add
        trace = [0] * size
        for i in range(1, size):
            acc = 0
            x = i
            for _ in range(t):
                acc = add(acc, x)
                x = exp[(log[x] * q) % order] if x else 0
            if acc >= q:
                raise RuntimeError(
                    f"trace of element {i} left the base field (modulus bug)"
                )
            trace[i] = acc
        self._trace = trace

    # -- element access --------------------------------------------------

    def elem(self, index: int) -> FieldElement:
        return self._elems[index]

    def sub(self, index: int) -> SubElement:
        return self._subs[index]

    def elements(self) -> tuple[FieldElement, ...]:
        """All of F in canonical enumeration order."""
        return tuple(self._elems)

    def subelements(self) -> tuple[SubElement, ...]:
        return tuple(self._subs)

    def scalar(self, c: int) -> SubElement:
        """The prime-field scalar c as a B element."""
        return self._subs[c % self.p]

    def element_from_string(self, text: str) -> FieldElement:
        return self._elems[_parse_digit_string(text, self.s * self.t, self.p)]

    def sub_from_string(self, text: str) -> SubElement:
        return self._subs[_parse_digit_string(text, self.s, self.p)]

    # -- formatting -------------------------------------------------------

    def spec_string(self) -> str:
        base = f"gf({self.p})" if self.s == 1 else f"gf({self.p}^{self.s})"
        return f"gf({self.p}^{self.s * self.t})/{base}"

    def _poly_str(self, coeffs, coeff_fmt) -> str:
        terms = []
        for d in range(len(coeffs) - 1, -1, -1):
            c = coeffs[d]
            if c == 0:
                continue
            xpart = "" if d == 0 else ("x" if d == 1 else f"x^{d}")
            if d > 0 and c == 1:
                terms.append(xpart)
            elif d == 0:
                terms.append(coeff_fmt(c))
            else:
                terms.append(f"{coeff_fmt(c)}*{xpart}")
        return " + ".join(terms) if terms else "0"

    def base_modulus_str(self) -> str:
        return self._poly_str(self.base_modulus, str)

    def ext_modulus_str(self) -> str:
        if self.s == 1:
            return self._poly_str(self.ext_modulus, str)
        return self._poly_str(self.ext_modulus, lambda c: f"[{self._subs[c]}]")

    def __repr__(self):
        return f"TowerField({self.p}, {self.s}, {self.t})"

    def __eq__(self, other):
        return isinstance(other, TowerField) and self._key == other._key

    def __hash__(self):
        return hash(self._key)

    @classmethod
    def from_spec(cls, spec: str, size_cap: int = DEFAULT_SIZE_CAP) -> "TowerField":
        """Parse a field spec string like ``gf(2^4)/gf(2)``."""
        m = _SPEC_RE.match(spec)
        if not m:
            raise ValueError(f"bad field spec {spec!r}; expected gf(p^n)/gf(p^s)")
        p1, n1, p2, s2 = m.groups()
        p1, p2 = int(p1), int(p2)
        n = int(n1) if n1 else 1
        s = int(s2) if s2 else 1
        if p1 != p2:
            raise ValueError(f"field and subfield characteristics differ in {spec!r}")
        if n % s != 0 or n == s:
            raise ValueError(
                f"gf({p2}^{s}) is not a proper subfield of gf({p1}^{n})"
            )
        return cls(p1, s, n // s, size_cap=size_cap)


def field_new(p: int, s: int, t: int, size_cap: int = DEFAULT_SIZE_CAP) -> TowerField:
    """Construct the canonical tower GF(p) <= GF(p^s) <= GF(p^(s*t))."""
    return TowerField(p, s, t, size_cap=size_cap)
