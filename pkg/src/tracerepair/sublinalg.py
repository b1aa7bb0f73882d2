"""B-linear algebra inside F: exact solves, trace kernels, basis
extension, dual bases, and recovery of a symbol from its traces.

All bases produced here are canonical: candidates are scanned in the
field's enumeration order and the first element that grows the rank is
kept.  Solves use Gaussian elimination with first-nonzero pivoting in
the same order.  This makes every derived object (and everything built
on top of it) identical across runs and across machines.
"""

from __future__ import annotations

from typing import Iterable, Optional, Sequence

from tracerepair.fieldcore import FieldElement, SubElement, TowerField


def _vec(field: TowerField, x: FieldElement) -> list[int]:
    """Coordinates of x over B in the power basis, as raw B indices."""
    q = field.q
    idx = x.index
    out = []
    for _ in range(field.t):
        out.append(idx % q)
        idx //= q
    return out


def _unvec(field: TowerField, vec: Sequence[int]) -> FieldElement:
    idx = 0
    for d in reversed(vec):
        idx = idx * field.q + d
    return field.elem(idx)


class _Echelon:
    """Incremental row-echelon form over B for rank and membership tests."""

    def __init__(self, field: TowerField, width: int):
        self.field = field
        self.width = width
        self.rows: list[list[int]] = []   # normalized, sorted by pivot col
        self.pivots: list[int] = []

    def _reduce(self, vec: list[int]) -> list[int]:
        f = self.field
        q = f.q
        badd, bmul, bneg = f._badd, f._bmul, f._bneg
        vec = list(vec)
        for piv, row in zip(self.pivots, self.rows):
            c = vec[piv]
            if c:
                for j in range(piv, self.width):
                    if row[j]:
                        vec[j] = badd[vec[j] * q + bneg[bmul[c * q + row[j]]]]
        return vec

    def add(self, vec: Sequence[int]) -> bool:
        """Insert a vector; True if it was independent of the rows so far."""
        f = self.field
        q = f.q
        red = self._reduce(list(vec))
        piv = next((j for j, c in enumerate(red) if c), None)
        if piv is None:
            return False
        inv = f._binv[red[piv]]
        bmul = f._bmul
        red = [bmul[inv * q + c] for c in red]
        at = next((i for i, p in enumerate(self.pivots) if p > piv), len(self.pivots))
        self.rows.insert(at, red)
        self.pivots.insert(at, piv)
        return True

    def contains(self, vec: Sequence[int]) -> bool:
        return not any(self._reduce(list(vec)))

    @property
    def rank(self) -> int:
        return len(self.rows)


class BBasis:
    """An ordered, B-linearly-independent tuple of elements of F.

    Independence is verified at construction by row reduction over B.
    """

    __slots__ = ("field", "elements", "_echelon", "_dual")

    def __init__(self, field: TowerField, elements: Iterable[FieldElement]):
        self.field = field
        self.elements = tuple(elements)
        if len(self.elements) > field.t:
            raise ValueError("more elements than the extension degree")
        ech = _Echelon(field, field.t)
        for x in self.elements:
            if not ech.add(_vec(field, x)):
                raise ValueError(f"elements are B-linearly dependent at {x}")
        self._echelon = ech
        self._dual = None

    @property
    def rank(self) -> int:
        return len(self.elements)

    def __len__(self):
        return len(self.elements)

    def __iter__(self):
        return iter(self.elements)

    def __getitem__(self, i):
        return self.elements[i]

    def __eq__(self, other):
        return isinstance(other, BBasis) and self.elements == other.elements

    def __hash__(self):
        return hash(self.elements)

    def __repr__(self):
        return f"BBasis([{', '.join(str(x) for x in self.elements)}])"

    def scaled(self, c: FieldElement) -> "BBasis":
        """The basis {c*b_i}; c must be nonzero."""
        return BBasis(self.field, tuple(c * b for b in self.elements))


class BSubspace:
    """A B-subspace of F given by a canonical basis."""

    __slots__ = ("basis", "_span")

    def __init__(self, basis: BBasis):
        self.basis = basis
        self._span = None

    @property
    def field(self) -> TowerField:
        return self.basis.field

    @property
    def dim(self) -> int:
        return self.basis.rank

    def contains(self, x: FieldElement) -> bool:
        return self.basis._echelon.contains(_vec(self.field, x))

    def span(self) -> tuple[FieldElement, ...]:
        """Every element of the subspace, sorted by enumeration index."""
        if self._span is None:
            field = self.field
            elems = {field.zero}
            for b in self.basis:
                elems = {x + s * b for x in elems for s in field.subelements()}
            self._span = tuple(sorted(elems, key=lambda e: e.index))
        return self._span

    def __contains__(self, x):
        return self.contains(x)

    def __eq__(self, other):
        return (
            isinstance(other, BSubspace)
            and self.dim == other.dim
            and all(other.contains(b) for b in self.basis)
        )

    def __hash__(self):
        return hash((self.dim, self.basis))

    def __repr__(self):
        return f"BSubspace(dim={self.dim}, basis={self.basis!r})"


def _greedy_basis(field: TowerField, members: Iterable[FieldElement],
                  stop_at: Optional[int] = None) -> list[FieldElement]:
    """First elements, in the given order, that keep growing the rank."""
    ech = _Echelon(field, field.t)
    out = []
    for x in members:
        if ech.add(_vec(field, x)):
            out.append(x)
            if stop_at is not None and len(out) == stop_at:
                break
    return out


def subspace_from_members(field: TowerField,
                          members: Iterable[FieldElement]) -> BSubspace:
    """Canonical subspace whose span is exactly the given member set
    (members must be closed under the span, e.g. a predicate scan)."""
    return BSubspace(BBasis(field, _greedy_basis(field, members)))


def trace_kernel(field: TowerField) -> BSubspace:
    """{x in F : Tr(x) = 0}, dimension t-1, canonical basis."""
    cached = getattr(field, "_trace_kernel_cache", None)
    if cached is not None:
        return cached
    ker = subspace_from_members(
        field, (x for x in field.elements() if not x.trace())
    )
    if ker.dim != field.t - 1:
        raise RuntimeError("trace kernel has wrong dimension (arithmetic bug)")
    field._trace_kernel_cache = ker
    return ker


def pair_kernel(alpha: FieldElement, beta: FieldElement) -> BSubspace:
    """{x : Tr((alpha-beta)x) = 0}; equals the trace kernel scaled by
    1/(alpha-beta), with dimension t-1."""
    if alpha == beta:
        raise ValueError("pair kernel needs two distinct points")
    field = alpha.field
    d = alpha - beta
    ker = subspace_from_members(
        field, (x for x in field.elements() if not (d * x).trace())
    )
    if ker.dim != field.t - 1:
        raise RuntimeError("pair kernel has wrong dimension")
    return ker


def triple_kernel(a1: FieldElement, a2: FieldElement,
                  a3: FieldElement) -> BSubspace:
    """{x : Tr(a1 x) = Tr(a2 x) = Tr(a3 x)}; dimension t-1 or t-2."""
    if len({a1.index, a2.index, a3.index}) != 3:
        raise ValueError("triple kernel needs three distinct points")
    field = a1.field
    d12 = a1 - a2
    d23 = a2 - a3
    ker = subspace_from_members(
        field,
        (
            x
            for x in field.elements()
            if not (d12 * x).trace() and not (d23 * x).trace()
        ),
    )
    if ker.dim not in (field.t - 1, field.t - 2):
        raise RuntimeError("triple kernel dimension outside the provable range")
    return ker


def intersect(s1: BSubspace, s2: BSubspace) -> BSubspace:
    """S1 intersect S2, with canonical basis."""
    if s1.dim <= s2.dim:
        small, big = s1, s2
    else:
        small, big = s2, s1
    members = [x for x in small.span() if big.contains(x)]
    return subspace_from_members(s1.field, members)


def extend_basis(inner: BBasis, target_dim: int,
                 constraint: Optional[BSubspace] = None) -> BBasis:
    """Extend a basis to target_dim by scanning candidates in enumeration
    order (restricted to the constraint subspace when given)."""
    field = inner.field
    if target_dim > field.t:
        raise ValueError("target dimension exceeds the extension degree")
    if inner.rank >= target_dim:
        return inner
    if constraint is not None:
        if target_dim > constraint.dim:
            raise ValueError("target dimension exceeds the constraint subspace")
        for x in inner:
            if not constraint.contains(x):
                raise ValueError("inner basis is not inside the constraint")
        candidates = constraint.span()
    else:
        candidates = field.elements()
    ech = _Echelon(field, field.t)
    out = list(inner.elements)
    for x in out:
        ech.add(_vec(field, x))
    for x in candidates:
        if ech.add(_vec(field, x)):
            out.append(x)
            if len(out) == target_dim:
                return BBasis(field, out)
    raise ValueError("extension impossible: candidates exhausted")


def solve_over_b(field: TowerField,
                 matrix: Sequence[Sequence[SubElement]],
                 rhs: Sequence[SubElement]) -> Optional[list[SubElement]]:
    """One solution of matrix . x = rhs over B (free variables set to
    zero, first-nonzero pivoting), or None when inconsistent."""
    sol = _solve_raw(
        field,
        [[e.index for e in row] for row in matrix],
        [e.index for e in rhs],
    )
    if sol is None:
        return None
    return [field.sub(i) for i in sol]


def _solve_raw(field: TowerField, matrix: list[list[int]],
               rhs: list[int]) -> Optional[list[int]]:
    nrows = len(matrix)
    if len(rhs) != nrows:
        raise ValueError("matrix/rhs dimension mismatch")
    ncols = len(matrix[0]) if nrows else 0
    for row in matrix:
        if len(row) != ncols:
            raise ValueError("ragged matrix")
    q = field.q
    badd, bmul, bneg, binv = field._badd, field._bmul, field._bneg, field._binv
    aug = [list(row) + [b] for row, b in zip(matrix, rhs)]
    pivot_cols: list[int] = []
    r = 0
    for c in range(ncols):
        pr = next((i for i in range(r, nrows) if aug[i][c]), None)
        if pr is None:
            continue
        aug[r], aug[pr] = aug[pr], aug[r]
        inv = binv[aug[r][c]]
        aug[r] = [bmul[inv * q + v] for v in aug[r]]
        for i in range(nrows):
            if i != r and aug[i][c]:
                f = aug[i][c]
                aug[i] = [
                    badd[vi * q + bneg[bmul[f * q + vr]]]
                    for vi, vr in zip(aug[i], aug[r])
                ]
        pivot_cols.append(c)
        r += 1
        if r == nrows:
            break
    for i in range(r, nrows):
        if aug[i][ncols]:
            return None
    sol = [0] * ncols
    for i, c in enumerate(pivot_cols):
        sol[c] = aug[i][ncols]
    return sol


def nullspace_over_b(field: TowerField,
                     matrix: Sequence[Sequence[SubElement]]) -> list[list[SubElement]]:
    """Canonical basis of the solution space of matrix . x = 0."""
    rows = [[e.index for e in row] for row in matrix]
    nrows = len(rows)
    ncols = len(rows[0]) if nrows else 0
    q = field.q
    badd, bmul, bneg, binv = field._badd, field._bmul, field._bneg, field._binv
    aug = [list(r) for r in rows]
    pivot_cols: list[int] = []
    r = 0
    for c in range(ncols):
        pr = next((i for i in range(r, nrows) if aug[i][c]), None)
        if pr is None:
            continue
        aug[r], aug[pr] = aug[pr], aug[r]
        inv = binv[aug[r][c]]
        aug[r] = [bmul[inv * q + v] for v in aug[r]]
        for i in range(nrows):
            if i != r and aug[i][c]:
                f = aug[i][c]
                aug[i] = [
                    badd[vi * q + bneg[bmul[f * q + vr]]]
                    for vi, vr in zip(aug[i], aug[r])
                ]
        pivot_cols.append(c)
        r += 1
        if r == nrows:
            break
    free_cols = [c for c in range(ncols) if c not in pivot_cols]
    out = []
    for fc in free_cols:
        vec = [0] * ncols
        vec[fc] = 1
        for i, pc in enumerate(pivot_cols):
            vec[pc] = bneg[aug[i][fc]]
        out.append([field.sub(v) for v in vec])
    return out


def coords_in_basis(x: FieldElement, basis: BBasis) -> tuple[SubElement, ...]:
    """The unique coefficients c with sum(c_i * basis_i) = x; raises if x
    is outside the span (an upstream construction bug)."""
    field = basis.field
    cols = [_vec(field, b) for b in basis]
    matrix = [[field.sub(cols[j][i]) for j in range(len(cols))]
              for i in range(field.t)]
    rhs = [field.sub(v) for v in _vec(field, x)]
    sol = solve_over_b(field, matrix, rhs)
    if sol is None:
        raise ValueError(f"{x} is not in the span of {basis!r}")
    return tuple(sol)


def reconstruct(basis: BBasis, coords: Sequence[SubElement]) -> FieldElement:
    acc = basis.field.zero
    for c, b in zip(coords, basis):
        acc = acc + c * b
    return acc


def dual_basis(basis: BBasis) -> BBasis:
    """The unique {d_j} with Tr(basis_i * d_j) = [i == j]; needs full rank."""
    field = basis.field
    t = field.t
    if basis.rank != t:
        raise ValueError("dual basis needs a full-rank basis")
    if basis._dual is not None:
        return basis._dual
    power = [field.elem(field.q ** m) for m in range(t)]
    gram = [[(basis[i] * power[m]).trace() for m in range(t)] for i in range(t)]
    duals = []
    for j in range(t):
        rhs = [field.sub_one if i == j else field.sub_zero for i in range(t)]
        sol = solve_over_b(field, gram, rhs)
        if sol is None:  # pragma: no cover - gram of a basis is invertible
            raise RuntimeError("singular trace Gram system for a full basis")
        duals.append(reconstruct(BBasis(field, power), sol))
    dual = BBasis(field, duals)
    basis._dual = dual
    return dual


def recover_from_traces(basis: BBasis,
                        traces: Sequence[SubElement]) -> FieldElement:
    """Reassemble gamma from the t subsymbols Tr(basis_i * gamma)."""
    field = basis.field
    if basis.rank != field.t:
        raise ValueError("recovery needs a full-rank basis")
    if len(traces) != field.t:
        raise ValueError(f"expected {field.t} traces, got {len(traces)}")
    dual = dual_basis(basis)
    acc = field.zero
    for tr, d in zip(traces, dual):
        acc = acc + tr * d
    return acc


def scaling_fixes_kernel(field: TowerField, sigma: FieldElement) -> bool:
    """Whether sigma * Ker(Tr) = Ker(Tr) as sets."""
    if not sigma:
        return False
    kernel = trace_kernel(field).span()
    return {sigma * x for x in kernel} == set(kernel)
