"""Reed-Solomon codes over F with explicit dual-code multipliers and a
brute-force Lagrange decoder.

A code is the set of evaluation vectors (f(a_1), ..., f(a_n)) of
polynomials of degree < k over the ordered evaluation set A.  The dual
of such a code is a generalized RS code whose column multipliers are
lambda_a = prod_{b != a} (a - b)^{-1}; the multipliers are computed and
carried explicitly so that parity checks hold for arbitrary evaluation
sets, not just full-length ones.  Repair schemes upstream operate on
the scaled unknowns lambda_a * f(a) and divide the multiplier out at
the very end.

Messages and codewords are plain tuples of field elements (coefficient
vectors constant-term first for messages).
"""

from __future__ import annotations

from typing import Sequence

from tracerepair.fieldcore import FieldElement, TowerField

Message = tuple  # k coefficients, constant term first
Codeword = tuple  # n symbols


def poly_eval(coeffs: Sequence[FieldElement], x: FieldElement) -> FieldElement:
    """Horner evaluation; an empty polynomial is zero."""
    field = x.field
    acc = field.zero
    for c in reversed(coeffs):
        acc = acc * x + c
    return acc


def _poly_mul(a, b, field):
    if not a or not b:
        return []
    out = [field.zero] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        if not x:
            continue
        for j, y in enumerate(b):
            if y:
                out[i + j] = out[i + j] + x * y
    return out


def _poly_add(a, b, field):
    n = max(len(a), len(b))
    out = []
    for i in range(n):
        x = a[i] if i < len(a) else field.zero
        y = b[i] if i < len(b) else field.zero
        out.append(x + y)
    return out


def poly_degree(coeffs: Sequence[FieldElement]) -> int:
    """Degree with the convention deg(0) = -1."""
    for i in range(len(coeffs) - 1, -1, -1):
        if coeffs[i]:
            return i
    return -1


def lagrange_interpolate(points: Sequence[FieldElement],
                         values: Sequence[FieldElement]) -> list[FieldElement]:
    """The unique polynomial of degree < len(points) through the points,
    as a coefficient list (constant term first)."""
    if len(points) != len(values):
        raise ValueError("points/values length mismatch")
    if len(set(p.index for p in points)) != len(points):
        raise ValueError("repeated interpolation points")
    field = points[0].field
    # master = prod (x - p_j); per-point quotient by synthetic division
    master = [field.one]
    for pnt in points:
        master = _poly_mul(master, [-pnt, field.one], field)
    acc = [field.zero] * len(points)
    for pnt, val in zip(points, values):
        # master / (x - pnt), synthetic division
        quot = [field.zero] * (len(master) - 1)
        carry = field.zero
        for i in range(len(master) - 1, 0, -1):
            carry = master[i] + carry * pnt
            quot[i - 1] = carry
        denom = poly_eval(quot, pnt)
        scale = val / denom
        acc = _poly_add(acc, [scale * c for c in quot], field)
    return acc


def trace_quotient_eval(u: FieldElement, center: FieldElement,
                        x: FieldElement) -> FieldElement:
    """Value at x of the check polynomial Tr(u*(x - center))/(x - center).

    The apparent singularity at the center is removable with value u,
    and any x with u in the pair kernel of (center, x) evaluates to 0.
    As a polynomial this has degree |B|^(t-1) - 1.
    """
    if x == center:
        return u
    d = x - center
    return (u * d).trace() * d.inverse()


class RSCode:
    """An [n, k] Reed-Solomon code over a tower field, with the dual
    generalized-RS multipliers precomputed.

    ``repair_feasible`` records whether n - k >= |B|^(t-1), the degree
    headroom every trace-based repair scheme needs for its check
    polynomials.
    """

    def __init__(self, field: TowerField, points: Sequence[FieldElement], k: int):
        points = tuple(points)
        n = len(points)
        if len({a.index for a in points}) != n:
            raise ValueError("evaluation points must be distinct")
        if not 1 <= k < n:
            raise ValueError(f"need 1 <= k < n, got k={k}, n={n}")
        self.field = field
        self.points = points
        self.n = n
        self.k = k
        lambdas = []
        for a in points:
            prod = field.one
            for b in points:
                if b is not a:
                    prod = prod * (a - b)
            lambdas.append(prod.inverse())
        self.lambdas = tuple(lambdas)
        self.repair_feasible = (n - k) >= field.q ** (field.t - 1)

    @classmethod
    def prefix(cls, field: TowerField, n: int, k: int) -> "RSCode":
        """Code over the first n elements in canonical enumeration order."""
        if n > field.size:
            raise ValueError(f"n={n} exceeds the field size {field.size}")
        return cls(field, field.elements()[:n], k)

    def encode(self, message: Sequence[FieldElement]) -> Codeword:
        if len(message) != self.k:
            raise ValueError(f"message length {len(message)} != k={self.k}")
        return tuple(poly_eval(message, a) for a in self.points)

    def lagrange_decode(self, positions: Sequence[int],
                        values: Sequence[FieldElement]) -> Message:
        """Ground-truth decoder: interpolate the message polynomial from
        any k (position, value) pairs.  This is the naive-repair oracle
        every scheme is checked against."""
        if len(positions) != self.k or len(values) != self.k:
            raise ValueError(f"need exactly k={self.k} positions/values")
        if len(set(positions)) != len(positions):
            raise ValueError("repeated positions")
        pts = [self.points[i] for i in positions]
        coeffs = lagrange_interpolate(pts, values)
        return tuple(coeffs[: self.k] + [self.field.zero] * (self.k - len(coeffs)))

    def is_codeword(self, symbols: Sequence[FieldElement]) -> bool:
        """Dual-code membership test against all monomial check polynomials."""
        if len(symbols) != self.n:
            return False
        for j in range(self.n - self.k):
            acc = self.field.zero
            for a, lam, c in zip(self.points, self.lambdas, symbols):
                acc = acc + lam * (a ** j) * c
            if acc:
                return False
        return True

    def check_sum(self, message: Sequence[FieldElement],
                  check_poly: Sequence[FieldElement]) -> FieldElement:
        """sum lambda_a * g(a) * f(a) over the evaluation set; zero for
        every message polynomial f (deg < k) and check polynomial g
        (deg < n - k).  Returned for diagnostics rather than asserted."""
        if len(message) > self.k:
            raise ValueError("message longer than k")
        if poly_degree(check_poly) >= self.n - self.k:
            raise ValueError("check polynomial degree >= n - k")
        acc = self.field.zero
        for a, lam in zip(self.points, self.lambdas):
            acc = acc + lam * poly_eval(check_poly, a) * poly_eval(message, a)
        return acc

    def __repr__(self):
        return (
            f"RSCode({self.field.spec_string()}, n={self.n}, k={self.k}, "
            f"repair_feasible={self.repair_feasible})"
        )
