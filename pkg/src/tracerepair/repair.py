"""Construction of repair plans for one, two, and three erasures.

A plan fixes everything the protocol needs before any data moves:

- per-helper download instructions (each helper sends one trace of a
  fixed multiple of its own symbol),
- per-node aggregation weights turning the n - r downloads into t
  check-equation aggregates (pure traces plus mixed terms),
- an exchange schedule: per round, who sends what B-linear combination
  of the subsymbols it already holds to whom,
- per-node recovery recipes: t slot combinations whose values are the
  traces of the scaled unknown lambda * f(alpha) against a full-rank
  basis, followed by division by lambda.

Every subsymbol in the protocol is a B-linear functional of the scaled
unknowns F_j = lambda_j * f(alpha_j); plan validation computes that
functional for each aggregate, message, and recovery combination and
checks the recovery combinations isolate exactly the right traces.  A
plan that validates is correct by linearity for every codeword, which
the simulator then confirms dynamically against the Lagrange oracle.

Branch selection for three erasures depends on the dimension of the
triple kernel: full-dimensional kernels (all pairwise difference
ratios in B*) admit a one-round exchange; the deficient case needs
three rounds and extension degree above 3.  Everything the schemes
leave as a free choice (delta, the gammas, basis extensions) is fixed
by scanning the canonical element enumeration, so plans are bit-stable.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Optional, Sequence

from tracerepair.fieldcore import FieldElement, SubElement, TowerField
from tracerepair.rscode import RSCode, trace_quotient_eval
from tracerepair.sublinalg import (
    BBasis,
    coords_in_basis,
    extend_basis,
    nullspace_over_b,
    pair_kernel,
    solve_over_b,
    trace_kernel,
    triple_kernel,
)

BRANCH_SINGLE = "single"
BRANCH_TWO = "two"
BRANCH_THREE_L1_GENERAL = "three-l1-general"
BRANCH_THREE_L1_T2_CHAR_NOT3 = "three-l1-t2-charNot3"
BRANCH_THREE_L1_T2_CHAR3 = "three-l1-t2-char3"
BRANCH_THREE_L2 = "three-l2"


class RepairError(Exception):
    """Base for repair-plan construction failures."""


class InfeasibleCodeError(RepairError):
    """The code lacks the degree headroom n - k >= |B|^(t-1)."""


class UnsupportedPatternError(RepairError):
    """No scheme exists for this (kernel dimension, extension degree)."""

    def __init__(self, l: int, t: int):
        self.l = l
        self.t = t
        super().__init__(
            f"no repair scheme for triple-kernel dimension l={l} with t={t} "
            f"(deficient kernels need t > 3)"
        )


class GammaSelectionError(RepairError):
    """No gamma pair satisfies the exchange solvability systems."""


class PlanValidationError(RepairError):
    """A constructed plan failed its static dataflow/meaning check."""


@dataclass(frozen=True)
class FailurePattern:
    """Sorted positions (indices into the evaluation set) of erased symbols."""

    erased: tuple[int, ...]

    @classmethod
    def of(cls, positions: Sequence[int], code: RSCode) -> "FailurePattern":
        erased = tuple(sorted(positions))
        if len(set(erased)) != len(erased):
            raise ValueError("erased positions must be distinct")
        if not 1 <= len(erased) <= 3:
            raise ValueError("supported erasure counts are 1, 2, 3")
        if any(not 0 <= i < code.n for i in erased):
            raise ValueError("erased position out of range")
        if code.n - len(erased) < code.k:
            raise ValueError(
                f"{len(erased)} erasures leave fewer than k={code.k} symbols"
            )
        return cls(erased)

    @property
    def r(self) -> int:
        return len(self.erased)


@dataclass(frozen=True)
class SchemeBranch:
    tag: str
    l: Optional[int] = None  # triple-kernel dimension when r = 3


@dataclass(frozen=True)
class GammaSystemSolution:
    """Per-node (x, y) pairs solving the exchange solvability systems."""

    pairs: tuple[tuple[SubElement, SubElement], ...]


@dataclass(frozen=True)
class HelperInstruction:
    """Helper at ``helper`` sends Tr(multiplier * own symbol) to ``node``."""

    helper: int
    node: int
    multiplier: FieldElement


# A slot names a subsymbol a replacement node holds:
#   ("agg", m)           aggregate m of its own check equations
#   ("recv", round, s)   the message received in that round from node s
Slot = tuple


@dataclass(frozen=True)
class RecipeTerm:
    coeff: SubElement
    slot: Slot


@dataclass(frozen=True)
class PlannedMessage:
    round: int
    sender: int
    receiver: int
    terms: tuple[RecipeTerm, ...]


@dataclass(frozen=True)
class NodePlan:
    position: int
    factor: FieldElement                       # gamma multiplier in downloads
    rows: tuple[FieldElement, ...]             # t check-row elements
    agg_weights: tuple[tuple[SubElement, ...], ...]  # t x (n - r)
    recovery_terms: tuple[tuple[RecipeTerm, ...], ...]
    recovery_basis: BBasis                     # rank t


@dataclass(frozen=True)
class RepairPlan:
    code: RSCode
    branch: SchemeBranch
    erased: tuple[int, ...]
    helpers: tuple[int, ...]
    delta: FieldElement
    gammas: tuple[FieldElement, ...]
    helper_instructions: tuple[HelperInstruction, ...]
    nodes: tuple[NodePlan, ...]
    messages: tuple[PlannedMessage, ...]
    rounds: int
    coefficients: dict

    def node_for(self, position: int) -> NodePlan:
        for node in self.nodes:
            if node.position == position:
                return node
        raise KeyError(position)

    def to_dict(self) -> dict:
        """JSON-ready form; deterministic given identical inputs."""
        def el(x):
            return str(x)

        return {
            "branch": self.branch.tag,
            "l": self.branch.l,
            "erased": list(self.erased),
            "delta": el(self.delta),
            "gammas": [el(g) for g in self.gammas],
            "helper_instructions": [
                {"helper": h.helper, "node": h.node, "mu": el(h.multiplier)}
                for h in self.helper_instructions
            ],
            "bases": {
                str(n.position): {
                    "factor": el(n.factor),
                    "rows": [el(x) for x in n.rows],
                    "recovery_basis": [el(x) for x in n.recovery_basis],
                }
                for n in self.nodes
            },
            "schedule": [
                {
                    "round": m.round,
                    "sender": m.sender,
                    "receiver": m.receiver,
                    "terms": [[str(t.coeff), _slot_str(t.slot)] for t in m.terms],
                }
                for m in self.messages
            ],
            "recovery": {
                str(n.position): [
                    [[str(t.coeff), _slot_str(t.slot)] for t in combo]
                    for combo in n.recovery_terms
                ]
                for n in self.nodes
            },
            "coefficients": self.coefficients,
            "bandwidth": dict(
                zip(("phase1", "phase2", "rounds"), plan_bandwidth(self))
            ),
        }


def _slot_str(slot: Slot) -> str:
    if slot[0] == "agg":
        return f"agg:{slot[1]}"
    return f"recv:{slot[1]}:{slot[2]}"


def _slot_key(slot: Slot):
    if slot[0] == "agg":
        return (0, slot[1], 0)
    return (1, slot[1], slot[2])


def plan_bandwidth(plan: RepairPlan) -> tuple[int, int, int]:
    """(phase-1 subsymbols, phase-2 subsymbols, exchange rounds), counted
    statically from the plan; execution must match exactly."""
    r = len(plan.erased)
    return (r * (plan.code.n - r), len(plan.messages), plan.rounds)


# -- parameter selection ------------------------------------------------


def choose_delta(field: TowerField) -> FieldElement:
    """Enumeration-first element with trace 1."""
    one = field.sub_one
    for x in field.elements():
        if x.trace() == one:
            return x
    raise RuntimeError("trace is surjective; unreachable")


def choose_gamma_two(field: TowerField) -> FieldElement:
    """Enumeration-first nonzero element of the trace kernel."""
    for x in trace_kernel(field).span():
        if x:
            return x
    raise RuntimeError("trace kernel of dimension >= 1 has nonzero elements")


def solve_gamma_system(field: TowerField, gamma1: FieldElement,
                       gamma2: FieldElement) -> GammaSystemSolution:
    """Solve, for each replacement node, the 2x2 linear system over B that
    makes the one-round exchange cancel its interference, subject to the
    strict inequality keeping its recovery basis full-rank.

    Underdetermined systems are resolved by scanning candidate solutions
    in canonical coefficient order; raises GammaSelectionError when some
    node has no admissible solution (the caller then tries other gammas).
    """
    if not gamma1 or not gamma2:
        raise ValueError("gammas must be nonzero")
    tr = lambda x: x.trace()
    g1, g2 = gamma1, gamma2
    g1i, g2i = g1.inverse(), g2.inverse()
    systems = [
        # (matrix, rhs, inequality coefficients): coeffs . (x, y) != 1
        (
            [[field.sub_one, tr(g1i * g2)], [tr(g1 * g2i), field.sub_one]],
            [tr(g1i), tr(g2i)],
            (tr(g1), tr(g2)),
        ),
        (
            [[field.sub_one, tr(g2)], [tr(g2i), field.sub_one]],
            [tr(g1), tr(g1 * g2i)],
            (tr(g1i), tr(g1i * g2)),
        ),
        (
            [[field.sub_one, tr(g1)], [tr(g1i), field.sub_one]],
            [tr(g2), tr(g1i * g2)],
            (tr(g2i), tr(g1 * g2i)),
        ),
    ]
    one = field.sub_one
    pairs = []
    for which, (matrix, rhs, ineq) in enumerate(systems, start=1):
        particular = solve_over_b(field, matrix, rhs)
        if particular is None:
            raise GammaSelectionError(
                f"node-{which} exchange system is inconsistent for "
                f"gammas ({gamma1}, {gamma2})"
            )
        null = nullspace_over_b(field, matrix)
        found = None
        for coeffs in product(field.subelements(), repeat=len(null)):
            x, y = particular
            for c, vec in zip(coeffs, null):
                x = x + c * vec[0]
                y = y + c * vec[1]
            if ineq[0] * x + ineq[1] * y != one:
                found = (x, y)
                break
        if found is None:
            raise GammaSelectionError(
                f"node-{which} system has no solution meeting the "
                f"inequality for gammas ({gamma1}, {gamma2})"
            )
        pairs.append(found)
    return GammaSystemSolution(tuple(pairs))


# -- classification ------------------------------------------------------


def classify(code: RSCode, pattern: FailurePattern | Sequence[int]) -> SchemeBranch:
    """Pick the scheme branch for a failure pattern; raises
    UnsupportedPatternError for the (deficient kernel, small t) gap."""
    if not isinstance(pattern, FailurePattern):
        pattern = FailurePattern.of(pattern, code)
    if not code.repair_feasible:
        raise InfeasibleCodeError(
            f"repair needs n - k >= |B|^(t-1) = {code.field.q ** (code.field.t - 1)}; "
            f"code has n - k = {code.n - code.k}"
        )
    field = code.field
    r = pattern.r
    if r == 1:
        return SchemeBranch(BRANCH_SINGLE)
    if r == 2:
        return SchemeBranch(BRANCH_TWO)
    a1, a2, a3 = (code.points[i] for i in pattern.erased)
    l = triple_kernel(a1, a2, a3).dim
    t = field.t
    if l == t - 1:
        if t >= 3:
            return SchemeBranch(BRANCH_THREE_L1_GENERAL, l)
        if field.p == 3:
            return SchemeBranch(BRANCH_THREE_L1_T2_CHAR3, l)
        return SchemeBranch(BRANCH_THREE_L1_T2_CHAR_NOT3, l)
    if t > 3:
        return SchemeBranch(BRANCH_THREE_L2, l)
    raise UnsupportedPatternError(l, t)


# -- shared plan machinery ------------------------------------------------


def _agg_weights(code: RSCode, position: int, rows, helpers):
    """Weights turning downloads into aggregates: the m-th aggregate is
    sum over helpers of -Tr(row_m * (alpha_helper - alpha_node)) times the
    downloaded subsymbol, which by the check equation equals the erased-
    side sum of traces."""
    field = code.field
    a_node = code.points[position]
    out = []
    for row in rows:
        out.append(
            tuple(-((row * (code.points[h] - a_node)).trace()) for h in helpers)
        )
    return tuple(out)


def _helper_instructions(code: RSCode, erased, helpers, factors):
    field = code.field
    instructions = []
    for pos, factor in zip(erased, factors):
        a_node = code.points[pos]
        for h in helpers:
            mu = factor * code.lambdas[h] * (code.points[h] - a_node).inverse()
            instructions.append(HelperInstruction(h, pos, mu))
    return tuple(instructions)


def _flatten(field: TowerField, combos) -> tuple[RecipeTerm, ...]:
    """Collapse scaled sub-recipes into one recipe, dropping zero terms."""
    acc: dict[Slot, SubElement] = {}
    for coeff, terms in combos:
        for term in terms:
            cur = acc.get(term.slot, field.sub_zero)
            acc[term.slot] = cur + coeff * term.coeff
    return tuple(
        RecipeTerm(c, s)
        for s, c in sorted(acc.items(), key=lambda kv: _slot_key(kv[0]))
        if c
    )


def _one_term(field: TowerField, slot: Slot) -> list[RecipeTerm]:
    return [RecipeTerm(field.sub_one, slot)]


def _validate_plan(plan: RepairPlan) -> None:
    """Static check: every recipe references only subsymbols its owner
    holds by then, and the recovery combinations evaluate (as linear
    functionals of the scaled unknowns) to exactly the claimed traces."""
    code = plan.code
    field = code.field
    erased = plan.erased
    r = len(erased)
    t = field.t

    meanings: dict[tuple[int, Slot], tuple[FieldElement, ...]] = {}
    for node in plan.nodes:
        if len(node.rows) != t:
            raise PlanValidationError(
                f"node {node.position} has {len(node.rows)} check rows, want {t}"
            )
        a_node = code.points[node.position]
        expected_weights = _agg_weights(code, node.position, node.rows, plan.helpers)
        if node.agg_weights != expected_weights:
            raise PlanValidationError(
                f"node {node.position} aggregation weights are inconsistent"
            )
        for m, row in enumerate(node.rows):
            meanings[(node.position, ("agg", m))] = tuple(
                node.factor * trace_quotient_eval(row, a_node, code.points[j])
                for j in erased
            )

    def combine(owner: int, terms, at_round: int, what: str):
        total = [field.zero] * r
        for term in terms:
            slot = term.slot
            if slot[0] == "recv":
                if slot[1] >= at_round:
                    raise PlanValidationError(
                        f"{what}: node {owner} uses round-{slot[1]} data "
                        f"at round {at_round}"
                    )
            key = (owner, slot)
            if key not in meanings:
                raise PlanValidationError(
                    f"{what}: node {owner} references unavailable slot "
                    f"{_slot_str(slot)}"
                )
            for j, c in enumerate(meanings[key]):
                total[j] = total[j] + term.coeff * c
        return tuple(total)

    seen_rounds = set()
    for msg in sorted(plan.messages, key=lambda m: (m.round, m.sender, m.receiver)):
        if msg.sender not in erased or msg.receiver not in erased:
            raise PlanValidationError("exchange between non-replacement nodes")
        if not 1 <= msg.round <= plan.rounds:
            raise PlanValidationError(f"message round {msg.round} out of range")
        seen_rounds.add(msg.round)
        meaning = combine(
            msg.sender, msg.terms, msg.round, f"round-{msg.round} message"
        )
        meanings[(msg.receiver, ("recv", msg.round, msg.sender))] = meaning
    if plan.rounds and seen_rounds != set(range(1, plan.rounds + 1)):
        raise PlanValidationError("empty exchange round in schedule")

    for i, node in enumerate(plan.nodes):
        if node.recovery_basis.rank != t:
            raise PlanValidationError(
                f"node {node.position} recovery basis has rank "
                f"{node.recovery_basis.rank}, want {t}"
            )
        if len(node.recovery_terms) != t:
            raise PlanValidationError("recovery recipe count != t")
        for m, terms in enumerate(node.recovery_terms):
            meaning = combine(
                node.position, terms, plan.rounds + 1, "recovery combination"
            )
            expected = tuple(
                node.recovery_basis[m] if j == i else field.zero
                for j in range(r)
            )
            if meaning != expected:
                raise PlanValidationError(
                    f"node {node.position} recovery trace {m} isolates "
                    f"{[str(x) for x in meaning]}, want "
                    f"{[str(x) for x in expected]}"
                )


def _finish(plan: RepairPlan) -> RepairPlan:
    _validate_plan(plan)
    return plan


# -- branch builders ------------------------------------------------------


def plan_single(code: RSCode, pattern: FailurePattern | Sequence[int]) -> RepairPlan:
    """One erasure: each helper sends one trace; the node reassembles its
    t traces against a canonical full basis.  Bandwidth n - 1, no exchange."""
    if not isinstance(pattern, FailurePattern):
        pattern = FailurePattern.of(pattern, code)
    branch = classify(code, pattern)
    if branch.tag != BRANCH_SINGLE:
        raise ValueError("pattern is not a single erasure")
    field = code.field
    pos = pattern.erased[0]
    helpers = tuple(i for i in range(code.n) if i != pos)
    full = extend_basis(BBasis(field, ()), field.t)
    node = NodePlan(
        position=pos,
        factor=field.one,
        rows=full.elements,
        agg_weights=_agg_weights(code, pos, full.elements, helpers),
        recovery_terms=tuple(
            tuple(_one_term(field, ("agg", m))) for m in range(field.t)
        ),
        recovery_basis=full,
    )
    plan = RepairPlan(
        code=code,
        branch=branch,
        erased=pattern.erased,
        helpers=helpers,
        delta=choose_delta(field),
        gammas=(),
        helper_instructions=_helper_instructions(
            code, pattern.erased, helpers, (field.one,)
        ),
        nodes=(node,),
        messages=(),
        rounds=0,
        coefficients={},
    )
    return _finish(plan)


def plan_two(code: RSCode, pattern: FailurePattern | Sequence[int]) -> RepairPlan:
    """Two erasures, one exchange round of one subsymbol each way.

    Both nodes run check equations against the same basis (pair kernel
    extended by delta/(a1-a2)); node 2's downloads carry an extra kernel
    factor gamma so that the interference trace node 2 needs removed is
    a combination of node 1's pure traces, while node 1's interference
    cancels through the expansion of 1/(a1-a2) in the gamma-scaled basis.
    """
    if not isinstance(pattern, FailurePattern):
        pattern = FailurePattern.of(pattern, code)
    branch = classify(code, pattern)
    if branch.tag != BRANCH_TWO:
        raise ValueError("pattern is not a two-erasure pattern")
    field = code.field
    t = field.t
    e1, e2 = pattern.erased
    a1, a2 = code.points[e1], code.points[e2]
    d = a1 - a2
    helpers = tuple(i for i in range(code.n) if i not in pattern.erased)
    k12 = pair_kernel(a1, a2)
    delta = choose_delta(field)
    gamma = choose_gamma_two(field)
    u_last = delta * d.inverse()
    rows = k12.basis.elements + (u_last,)
    full = BBasis(field, rows)  # u_last outside the pair kernel
    gamma_basis = full.scaled(gamma)

    a_vec = coords_in_basis(d.inverse(), gamma_basis)      # 1/(a1-a2) in gamma*rows
    c_vec = coords_in_basis(gamma * d.inverse(), k12.basis)  # gamma/(a1-a2) in kernel rows

    node1 = NodePlan(
        position=e1,
        factor=field.one,
        rows=rows,
        agg_weights=_agg_weights(code, e1, rows, helpers),
        recovery_terms=tuple(
            [tuple(_one_term(field, ("agg", m))) for m in range(t - 1)]
            + [
                tuple(
                    _one_term(field, ("agg", t - 1))
                    + [RecipeTerm(-field.sub_one, ("recv", 1, e2))]
                )
            ]
        ),
        recovery_basis=BBasis(
            field, k12.basis.elements + ((delta - a_vec[t - 1] * gamma) * d.inverse(),)
        ),
    )
    node2 = NodePlan(
        position=e2,
        factor=gamma,
        rows=rows,
        agg_weights=_agg_weights(code, e2, rows, helpers),
        recovery_terms=tuple(
            [tuple(_one_term(field, ("agg", m))) for m in range(t - 1)]
            + [
                tuple(
                    _one_term(field, ("agg", t - 1))
                    + [RecipeTerm(-field.sub_one, ("recv", 1, e1))]
                )
            ]
        ),
        recovery_basis=gamma_basis,
    )
    messages = (
        PlannedMessage(
            1,
            e1,
            e2,
            _flatten(
                field,
                [(c_vec[m], _one_term(field, ("agg", m))) for m in range(t - 1)],
            ),
        ),
        PlannedMessage(
            1,
            e2,
            e1,
            _flatten(
                field,
                [(a_vec[m], _one_term(field, ("agg", m))) for m in range(t)],
            ),
        ),
    )
    plan = RepairPlan(
        code=code,
        branch=branch,
        erased=pattern.erased,
        helpers=helpers,
        delta=delta,
        gammas=(gamma,),
        helper_instructions=_helper_instructions(
            code, pattern.erased, helpers, (field.one, gamma)
        ),
        nodes=(node1, node2),
        messages=messages,
        rounds=1,
        coefficients={
            "one_over_diff_in_gamma_basis": [str(c) for c in a_vec],
            "gamma_over_diff_in_kernel": [str(c) for c in c_vec],
        },
    )
    return _finish(plan)


def _gamma_pair_l1(field: TowerField):
    """Canonical (gamma1, gamma2) for the full-kernel three-erasure branch,
    with the per-node system solutions; falls back to an exhaustive scan
    of kernel pairs before giving up."""
    kernel = trace_kernel(field)
    kspan = kernel.span()
    if field.t >= 3:
        gamma1 = next(x for x in kspan if x)
        gamma2 = next(
            (x for x in kspan if x and kernel.contains(x * gamma1.inverse())), None
        )
        candidates = [(gamma1, gamma2)] if gamma2 is not None else []
    else:
        gamma = next(x for x in kspan if x)
        candidates = [(gamma, gamma)]
    for g1, g2 in candidates:
        try:
            return g1, g2, solve_gamma_system(field, g1, g2)
        except GammaSelectionError:
            pass
    for g1 in kspan:
        if not g1:
            continue
        for g2 in kspan:
            if not g2:
                continue
            try:
                return g1, g2, solve_gamma_system(field, g1, g2)
            except GammaSelectionError:
                continue
    raise GammaSelectionError(
        "no kernel pair admits the one-round exchange (unexpected)"
    )


def plan_three_l1(code: RSCode, pattern: FailurePattern | Sequence[int]) -> RepairPlan:
    """Three erasures with a full-dimensional triple kernel: one exchange
    round in which every node sends one subsymbol to each of the others.

    All three nodes share the kernel basis extended by delta/(a1-a2).
    For t >= 3 (and for t = 2 away from characteristic 3) the exchange
    combinations come from solving, per node, a 2x2 system over B; in
    characteristic 3 with t = 2 the mixed terms are exchanged verbatim
    and the 3x3 mixing matrix (all-ones plus identity) is inverted.
    """
    if not isinstance(pattern, FailurePattern):
        pattern = FailurePattern.of(pattern, code)
    branch = classify(code, pattern)
    if branch.tag not in (
        BRANCH_THREE_L1_GENERAL,
        BRANCH_THREE_L1_T2_CHAR_NOT3,
        BRANCH_THREE_L1_T2_CHAR3,
    ):
        raise ValueError("pattern does not have a full-dimensional triple kernel")
    field = code.field
    t = field.t
    e1, e2, e3 = pattern.erased
    a1, a2, a3 = (code.points[i] for i in pattern.erased)
    d = a1 - a2
    helpers = tuple(i for i in range(code.n) if i not in pattern.erased)
    kernel = triple_kernel(a1, a2, a3)  # equals every pair kernel here
    zbasis = kernel.basis

    if branch.tag == BRANCH_THREE_L1_T2_CHAR3:
        return _plan_three_char3(
            code, pattern, branch, helpers, d, zbasis
        )

    delta = choose_delta(field)
    u_last = delta * d.inverse()
    rows = zbasis.elements + (u_last,)
    BBasis(field, rows)  # rank check: u_last outside the kernel
    gamma1, gamma2, solution = _gamma_pair_l1(field)
    (at, bt), (ct, dt), (et, gt) = solution.pairs
    g1i, g2i = gamma1.inverse(), gamma2.inverse()
    di = d.inverse()

    a_vec = coords_in_basis((g1i - at * delta - bt * g1i * gamma2) * di, zbasis)
    b_vec = coords_in_basis((g2i - bt * delta - at * gamma1 * g2i) * di, zbasis)
    c_vec = coords_in_basis((gamma1 - ct * delta - dt * gamma2) * di, zbasis)
    d_vec = coords_in_basis((gamma1 * g2i - ct * g2i - dt * delta) * di, zbasis)
    e_vec = coords_in_basis((gamma2 - et * delta - gt * gamma1) * di, zbasis)
    g_vec = coords_in_basis((g1i * gamma2 - et * g1i - gt * delta) * di, zbasis)

    def exchange(vec, last):
        return _flatten(
            field,
            [(vec[m], _one_term(field, ("agg", m))) for m in range(t - 1)]
            + [(last, _one_term(field, ("agg", t - 1)))],
        )

    messages = (
        PlannedMessage(1, e1, e2, exchange(c_vec, ct)),
        PlannedMessage(1, e1, e3, exchange(e_vec, et)),
        PlannedMessage(1, e2, e1, exchange(a_vec, at)),
        PlannedMessage(1, e2, e3, exchange(g_vec, gt)),
        PlannedMessage(1, e3, e1, exchange(b_vec, bt)),
        PlannedMessage(1, e3, e2, exchange(d_vec, dt)),
    )

    def recovery(other_a, other_b):
        return tuple(
            [tuple(_one_term(field, ("agg", m))) for m in range(t - 1)]
            + [
                tuple(
                    _one_term(field, ("agg", t - 1))
                    + [
                        RecipeTerm(-field.sub_one, ("recv", 1, other_a)),
                        RecipeTerm(-field.sub_one, ("recv", 1, other_b)),
                    ]
                )
            ]
        )

    node1 = NodePlan(
        position=e1,
        factor=field.one,
        rows=rows,
        agg_weights=_agg_weights(code, e1, rows, helpers),
        recovery_terms=recovery(e2, e3),
        recovery_basis=BBasis(
            field,
            zbasis.elements + ((delta - at * gamma1 - bt * gamma2) * di,),
        ),
    )
    node2 = NodePlan(
        position=e2,
        factor=gamma1,
        rows=rows,
        agg_weights=_agg_weights(code, e2, rows, helpers),
        recovery_terms=recovery(e1, e3),
        recovery_basis=BBasis(
            field,
            tuple(gamma1 * z for z in zbasis)
            + ((gamma1 * delta - ct - dt * gamma2) * di,),
        ),
    )
    node3 = NodePlan(
        position=e3,
        factor=gamma2,
        rows=rows,
        agg_weights=_agg_weights(code, e3, rows, helpers),
        recovery_terms=recovery(e1, e2),
        recovery_basis=BBasis(
            field,
            tuple(gamma2 * z for z in zbasis)
            + ((gamma2 * delta - et - gt * gamma1) * di,),
        ),
    )
    plan = RepairPlan(
        code=code,
        branch=branch,
        erased=pattern.erased,
        helpers=helpers,
        delta=delta,
        gammas=(gamma1, gamma2),
        helper_instructions=_helper_instructions(
            code, pattern.erased, helpers, (field.one, gamma1, gamma2)
        ),
        nodes=(node1, node2, node3),
        messages=messages,
        rounds=1,
        coefficients={
            "system_solutions": [
                [str(x), str(y)] for x, y in solution.pairs
            ],
            "to_node1": [[str(c) for c in a_vec], [str(c) for c in b_vec]],
            "to_node2": [[str(c) for c in c_vec], [str(c) for c in d_vec]],
            "to_node3": [[str(c) for c in e_vec], [str(c) for c in g_vec]],
        },
    )
    return _finish(plan)


def _plan_three_char3(code, pattern, branch, helpers, d, zbasis):
    """t = 2, characteristic 3: exchange the mixed terms verbatim and
    invert the 3x3 mixing matrix (2 on the diagonal, 1 elsewhere)."""
    field = code.field
    e1, e2, e3 = pattern.erased
    two = field.sub_one + field.sub_one
    delta = two.lift()
    if delta.trace() != field.sub_one:  # trace(2) = 2t = 1 when t = 2, p = 3
        raise RuntimeError("trace(2) != 1 in a t=2 characteristic-3 tower")
    di = d.inverse()
    u_last = delta * di
    rows = zbasis.elements + (u_last,)
    gamma = field.one

    mix = [
        [two, field.sub_one, field.sub_one],
        [field.sub_one, two, field.sub_one],
        [field.sub_one, field.sub_one, two],
    ]
    inverse_rows = []
    for j in range(3):
        rhs = [field.sub_one if i == j else field.sub_zero for i in range(3)]
        col = solve_over_b(field, mix, rhs)
        if col is None:
            raise PlanValidationError("mixing matrix is singular (unexpected)")
        inverse_rows.append(col)
    # column solutions of M x = e_j assemble the inverse by columns
    inv = [[inverse_rows[j][i] for j in range(3)] for i in range(3)]

    positions = pattern.erased
    messages = tuple(
        PlannedMessage(1, s, r, tuple(_one_term(field, ("agg", 1))))
        for s in positions
        for r in positions
        if s != r
    )

    nodes = []
    for i, pos in enumerate(positions):
        combo = []
        for j, other in enumerate(positions):
            coeff = inv[i][j]
            if not coeff:
                continue
            slot = ("agg", 1) if other == pos else ("recv", 1, other)
            combo.append(RecipeTerm(coeff, slot))
        nodes.append(
            NodePlan(
                position=pos,
                factor=gamma,
                rows=rows,
                agg_weights=_agg_weights(code, pos, rows, helpers),
                recovery_terms=(
                    tuple(_one_term(field, ("agg", 0))),
                    tuple(combo),
                ),
                recovery_basis=BBasis(field, zbasis.elements + (di,)),
            )
        )
    plan = RepairPlan(
        code=code,
        branch=branch,
        erased=pattern.erased,
        helpers=helpers,
        delta=delta,
        gammas=(gamma, gamma),
        helper_instructions=_helper_instructions(
            code, pattern.erased, helpers, (field.one, gamma, gamma)
        ),
        nodes=tuple(nodes),
        messages=messages,
        rounds=1,
        coefficients={
            "mix_matrix": [[str(c) for c in row] for row in mix],
            "mix_inverse": [[str(c) for c in row] for row in inv],
        },
    )
    return _finish(plan)


def plan_three_l2(code: RSCode, pattern: FailurePattern | Sequence[int]) -> RepairPlan:
    """Three erasures with a deficient triple kernel (needs t > 3): a
    three-round exchange.

    Node 1 is cleaned first (its two mixed terms each carry a single
    interference trace that nodes 2 and 3 can assemble from pure kernel
    traces), recovers after round 1, then feeds nodes 2 and 3 their
    interference in round 2; nodes 2 and 3 finish with a final pairwise
    exchange that reuses the two-erasure cancellation through a kernel
    element gamma1^{-1} * gamma2.
    """
    if not isinstance(pattern, FailurePattern):
        pattern = FailurePattern.of(pattern, code)
    branch = classify(code, pattern)
    if branch.tag != BRANCH_THREE_L2:
        raise ValueError("pattern does not have a deficient triple kernel")
    field = code.field
    t = field.t
    e1, e2, e3 = pattern.erased
    a1, a2, a3 = (code.points[i] for i in pattern.erased)
    d12, d23, d31 = a1 - a2, a2 - a3, a3 - a1
    helpers = tuple(i for i in range(code.n) if i not in pattern.erased)
    kernel123 = triple_kernel(a1, a2, a3)
    z = kernel123.basis  # t - 2 shared rows

    one = field.sub_one
    zero_s = field.sub_zero

    def pick(cond_zero: FieldElement, cond_one: FieldElement) -> FieldElement:
        # first element killed by one difference and normalized against the other
        for x in field.elements():
            if (cond_zero * x).trace() == zero_s and (cond_one * x).trace() == one:
                return x
        raise RuntimeError("pair kernels coincide in the deficient branch")

    u_side = pick(d12, d23)   # in K(a1,a2) \ K(a2,a3), normalized
    v_side = pick(d23, d31)   # in K(a2,a3) \ K(a1,a3)
    w_side = pick(-d31, d12)  # in K(a1,a3) \ K(a1,a2)

    rows1 = z.elements + (u_side, w_side)
    rows2 = z.elements + (v_side, u_side)
    rows3 = z.elements + (w_side, v_side)
    basis1 = BBasis(field, rows1)

    gamma2 = next(
        x for x in field.elements()
        if x and kernel123.contains(x.inverse() * d31.inverse())
    )
    kernel = trace_kernel(field)
    scale = gamma2 * d12
    candidates = [
        x for x in (scale * y for y in kernel123.span())
        if x and kernel.contains(x)
    ]
    if not candidates:
        # dim(scale*K123 ∩ K) >= t-3 >= 1 once t > 3
        raise PlanValidationError("no kernel element in the scaled triple kernel")
    kappa = min(candidates, key=lambda x: x.index)
    gamma1 = gamma2 * kappa.inverse()

    c_r1_2 = coords_in_basis(gamma1.inverse() * d12.inverse(), z)
    c_r1_3 = coords_in_basis(gamma2.inverse() * d31.inverse(), z)

    # node 1's cleaned traces as slot recipes (valid after round 1)
    tau = [_one_term(field, ("agg", m)) for m in range(t - 2)]
    tau.append(
        _one_term(field, ("agg", t - 2)) + _one_term(field, ("recv", 1, e3))
    )
    tau.append(
        _one_term(field, ("agg", t - 1))
        + [RecipeTerm(-one, ("recv", 1, e2))]
    )

    r2_to2 = coords_in_basis(gamma1 * d12.inverse(), basis1)
    r2_to3 = coords_in_basis(gamma2 * d31.inverse(), basis1)

    k23_basis = BBasis(field, z.elements + (v_side,))
    c_r3_2 = coords_in_basis(gamma1.inverse() * gamma2 * d23.inverse(), k23_basis)
    w_full = BBasis(field, rows3)
    a_r3_3 = coords_in_basis(gamma1 * gamma2.inverse() * d23.inverse(), w_full)

    # node 2's recipe for Tr(gamma2 * F2 / d23): over pure z-traces and the
    # cleaned v-trace (available after round 2)
    clean_v2 = _one_term(field, ("agg", t - 2)) + _one_term(field, ("recv", 2, e1))
    send_2_to_3 = _flatten(
        field,
        [(c_r3_2[m], _one_term(field, ("agg", m))) for m in range(t - 2)]
        + [(c_r3_2[t - 2], clean_v2)],
    )
    # node 3's round-3 send: expansion of gamma1/d23 in its own rows, the
    # w-side row entering via the raw mixed aggregate (which carries the
    # -Tr(gamma2 F2/d23) correction visible in the schedule)
    clean_v3 = _one_term(field, ("agg", t - 1)) + [
        RecipeTerm(-one, ("recv", 2, e1))
    ]
    send_3_to_2 = _flatten(
        field,
        [(a_r3_3[m], _one_term(field, ("agg", m))) for m in range(t - 2)]
        + [(a_r3_3[t - 2], _one_term(field, ("agg", t - 2)))]
        + [(a_r3_3[t - 1], clean_v3)],
    )

    messages = (
        PlannedMessage(
            1, e2, e1,
            _flatten(field, [(c_r1_2[m], _one_term(field, ("agg", m)))
                             for m in range(t - 2)]),
        ),
        PlannedMessage(
            1, e3, e1,
            _flatten(field, [(c_r1_3[m], _one_term(field, ("agg", m)))
                             for m in range(t - 2)]),
        ),
        PlannedMessage(
            2, e1, e2,
            _flatten(field, [(r2_to2[m], tau[m]) for m in range(t)]),
        ),
        PlannedMessage(
            2, e1, e3,
            _flatten(field, [(r2_to3[m], tau[m]) for m in range(t)]),
        ),
        PlannedMessage(3, e2, e3, send_2_to_3),
        PlannedMessage(3, e3, e2, send_3_to_2),
    )

    node1 = NodePlan(
        position=e1,
        factor=field.one,
        rows=rows1,
        agg_weights=_agg_weights(code, e1, rows1, helpers),
        recovery_terms=tuple(tuple(terms) for terms in tau),
        recovery_basis=basis1,
    )
    # node 2 recovery: pure z-traces, cleaned v-trace, then the u-side
    # trace from its mixed aggregate minus the round-3 receipt and its
    # own interference combination
    u_trace_2 = _flatten(
        field,
        [(one, _one_term(field, ("agg", t - 1)))]
        + [(-one, _one_term(field, ("recv", 3, e3)))]
        + [(-a_r3_3[t - 2] * c_r3_2[m], _one_term(field, ("agg", m)))
           for m in range(t - 2)]
        + [(-a_r3_3[t - 2] * c_r3_2[t - 2], clean_v2)],
    )
    node2 = NodePlan(
        position=e2,
        factor=gamma1,
        rows=rows2,
        agg_weights=_agg_weights(code, e2, rows2, helpers),
        recovery_terms=tuple(
            [tuple(_one_term(field, ("agg", m))) for m in range(t - 2)]
            + [tuple(clean_v2), u_trace_2]
        ),
        recovery_basis=BBasis(
            field, tuple(gamma1 * x for x in z.elements + (v_side, u_side))
        ),
    )
    node3 = NodePlan(
        position=e3,
        factor=gamma2,
        rows=rows3,
        agg_weights=_agg_weights(code, e3, rows3, helpers),
        recovery_terms=tuple(
            [tuple(_one_term(field, ("agg", m))) for m in range(t - 2)]
            + [
                tuple(
                    _one_term(field, ("agg", t - 2))
                    + _one_term(field, ("recv", 3, e2))
                ),
                tuple(clean_v3),
            ]
        ),
        recovery_basis=BBasis(
            field, tuple(gamma2 * x for x in z.elements + (w_side, v_side))
        ),
    )
    plan = RepairPlan(
        code=code,
        branch=branch,
        erased=pattern.erased,
        helpers=helpers,
        delta=choose_delta(field),
        gammas=(gamma1, gamma2),
        helper_instructions=_helper_instructions(
            code, pattern.erased, helpers, (field.one, gamma1, gamma2)
        ),
        nodes=(node1, node2, node3),
        messages=messages,
        rounds=3,
        coefficients={
            "kappa": str(kappa),
            "round1_from_node2": [str(c) for c in c_r1_2],
            "round1_from_node3": [str(c) for c in c_r1_3],
            "round2_to_node2": [str(c) for c in r2_to2],
            "round2_to_node3": [str(c) for c in r2_to3],
            "round3_from_node2": [str(c) for c in c_r3_2],
            "round3_from_node3": [str(c) for c in a_r3_3],
        },
    )
    return _finish(plan)


def build_plan(code: RSCode, positions: Sequence[int]) -> RepairPlan:
    """Classify and build the plan for a failure pattern."""
    pattern = FailurePattern.of(positions, code)
    branch = classify(code, pattern)
    if branch.tag == BRANCH_SINGLE:
        return plan_single(code, pattern)
    if branch.tag == BRANCH_TWO:
        return plan_two(code, pattern)
    if branch.tag == BRANCH_THREE_L2:
        return plan_three_l2(code, pattern)
    return plan_three_l1(code, pattern)
