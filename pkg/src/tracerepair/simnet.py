"""Synchronous execution of repair plans on simulated storage nodes.

Helpers are stateless: each one computes a single trace of a fixed
multiple of its own stored symbol.  Replacement nodes own all the
combination logic.  Exchange rounds run under a two-sub-step barrier:
every message of a round is computed from the sender's state before the
round (phase-1 aggregates plus receipts from strictly earlier rounds),
then all messages are delivered at once.  A node's symbol materializes
exactly once, as soon as the traces its recovery recipe needs are all
present.

Every transmitted subsymbol lands in a ledger entry; the executed
totals must equal the plan's static bandwidth count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from itertools import combinations
from typing import Optional, Sequence

from tracerepair.fieldcore import FieldElement, SubElement
from tracerepair.rscode import RSCode, poly_eval
from tracerepair.repair import (
    RepairPlan,
    UnsupportedPatternError,
    build_plan,
    classify,
    plan_bandwidth,
)
from tracerepair.sublinalg import recover_from_traces


class SimulationError(Exception):
    """A plan referenced data its owner does not hold (dataflow bug)."""


@dataclass
class NodeState:
    """A replacement node mid-repair."""

    position: int
    stored: Optional[FieldElement]          # None while erased
    downloads: dict = dc_field(default_factory=dict)    # helper -> subsymbol
    aggregates: list = dc_field(default_factory=list)
    inbox: dict = dc_field(default_factory=dict)        # (round, sender) -> subsymbol
    recovered_at: Optional[int] = None      # exchange round after which it recovered

    def resolve(self, slot, before_round: int) -> SubElement:
        if slot[0] == "agg":
            return self.aggregates[slot[1]]
        _, rnd, sender = slot
        if rnd >= before_round:
            raise SimulationError(
                f"node {self.position} needs round-{rnd} data during round "
                f"{before_round} (causality violation)"
            )
        try:
            return self.inbox[(rnd, sender)]
        except KeyError:
            raise SimulationError(
                f"node {self.position} never received round-{rnd} message "
                f"from node {sender}"
            ) from None

    def can_resolve(self, slot) -> bool:
        if slot[0] == "agg":
            return True
        return (slot[1], slot[2]) in self.inbox


class BandwidthLedger:
    """Every transmitted subsymbol: (phase, round, sender, receiver, count)."""

    def __init__(self):
        self.entries: list[tuple[int, int, int, int, int]] = []

    def record(self, phase: int, rnd: int, sender: int, receiver: int,
               count: int = 1):
        self.entries.append((phase, rnd, sender, receiver, count))

    def phase_total(self, phase: int) -> int:
        return sum(e[4] for e in self.entries if e[0] == phase)

    @property
    def rounds(self) -> int:
        return max((e[1] for e in self.entries if e[0] == 2), default=0)

    def totals(self) -> tuple[int, int, int]:
        return (self.phase_total(1), self.phase_total(2), self.rounds)

    def per_link_uniform(self, phase: int) -> Optional[int]:
        """The common per-link subsymbol count for a phase, or None if the
        links are not uniformly loaded."""
        links: dict[tuple[int, int], int] = {}
        for p, _, s, r, c in self.entries:
            if p == phase:
                links[(s, r)] = links.get((s, r), 0) + c
        if not links:
            return None
        counts = set(links.values())
        return counts.pop() if len(counts) == 1 else None


@dataclass
class Transcript:
    """Everything a repair execution produced, replayable and serializable."""

    erased: tuple[int, ...]
    branch: str
    ledger: BandwidthLedger
    downloads: dict                       # (node, helper) -> subsymbol
    messages: dict                        # (round, sender, receiver) -> subsymbol
    recovered: dict                       # position -> FieldElement
    recovered_at: dict                    # position -> round index

    def to_dict(self) -> dict:
        return {
            "erased": list(self.erased),
            "branch": self.branch,
            "ledger": {
                "entries": [list(e) for e in self.ledger.entries],
                "phase1": self.ledger.phase_total(1),
                "phase2": self.ledger.phase_total(2),
                "rounds": self.ledger.rounds,
            },
            "downloads": [
                [n, h, str(v)]
                for (n, h), v in sorted(self.downloads.items())
            ],
            "messages": [
                [r, s, d, str(v)]
                for (r, s, d), v in sorted(self.messages.items())
            ],
            "recovered": {
                str(pos): str(val) for pos, val in sorted(self.recovered.items())
            },
            "recovered_after_round": {
                str(pos): rnd for pos, rnd in sorted(self.recovered_at.items())
            },
        }


def run_repair(code: RSCode, codeword: Sequence[FieldElement],
               plan: RepairPlan) -> Transcript:
    """Execute a plan against a codeword.  Helpers read only their own
    symbol; rounds are simultaneous; the ledger must match the plan's
    static bandwidth exactly."""
    if len(codeword) != code.n:
        raise ValueError("codeword length mismatch")
    field = code.field
    ledger = BandwidthLedger()
    states = {
        node.position: NodeState(position=node.position, stored=None)
        for node in plan.nodes
    }
    downloads = {}

    # Phase 1: one subsymbol per (helper, replacement node) link.
    for inst in plan.helper_instructions:
        value = (inst.multiplier * codeword[inst.helper]).trace()
        states[inst.node].downloads[inst.helper] = value
        downloads[(inst.node, inst.helper)] = value
        ledger.record(1, 0, inst.helper, inst.node)

    for node in plan.nodes:
        st = states[node.position]
        aggs = []
        for weights in node.agg_weights:
            acc = field.sub_zero
            for w, h in zip(weights, plan.helpers):
                acc = acc + w * st.downloads[h]
            aggs.append(acc)
        st.aggregates = aggs

    recovered: dict[int, FieldElement] = {}
    recovered_at: dict[int, int] = {}

    def try_recover(after_round: int):
        for node in plan.nodes:
            st = states[node.position]
            if st.stored is not None:
                continue
            if not all(
                st.can_resolve(term.slot)
                for combo in node.recovery_terms
                for term in combo
            ):
                continue
            traces = []
            for combo in node.recovery_terms:
                acc = field.sub_zero
                for term in combo:
                    acc = acc + term.coeff * st.resolve(term.slot, after_round + 1)
                traces.append(acc)
            scaled = recover_from_traces(node.recovery_basis, traces)
            st.stored = scaled * code.lambdas[node.position].inverse()
            st.recovered_at = after_round
            recovered[node.position] = st.stored
            recovered_at[node.position] = after_round

    try_recover(0)

    messages = {}
    for rnd in range(1, plan.rounds + 1):
        outgoing = []
        for msg in plan.messages:
            if msg.round != rnd:
                continue
            st = states[msg.sender]
            acc = field.sub_zero
            for term in msg.terms:
                acc = acc + term.coeff * st.resolve(term.slot, rnd)
            outgoing.append((msg, acc))
        for msg, value in outgoing:  # barrier: deliver only after all sends
            states[msg.receiver].inbox[(rnd, msg.sender)] = value
            messages[(rnd, msg.sender, msg.receiver)] = value
            ledger.record(2, rnd, msg.sender, msg.receiver)
        try_recover(rnd)

    missing = [n.position for n in plan.nodes if states[n.position].stored is None]
    if missing:
        raise SimulationError(f"nodes {missing} never recovered (plan bug)")
    if ledger.totals() != plan_bandwidth(plan):
        raise SimulationError(
            f"executed bandwidth {ledger.totals()} != planned "
            f"{plan_bandwidth(plan)}"
        )
    return Transcript(
        erased=plan.erased,
        branch=plan.branch.tag,
        ledger=ledger,
        downloads=downloads,
        messages=messages,
        recovered=recovered,
        recovered_at=recovered_at,
    )


def subsymbol_bits(code: RSCode) -> float:
    return code.field.s * math.log2(code.field.p)


def naive_subsymbols_per_node(code: RSCode) -> int:
    """Downloading any k symbols and re-interpolating costs k*t subsymbols
    per replacement node."""
    return code.k * code.field.t


def verify_against_oracle(code: RSCode, codeword: Sequence[FieldElement],
                          transcript: Transcript) -> dict:
    """Recompute each erased symbol by Lagrange interpolation over the
    first k surviving positions and compare with the transcript."""
    erased = set(transcript.erased)
    surviving = [i for i in range(code.n) if i not in erased][: code.k]
    message = code.lagrange_decode(surviving, [codeword[i] for i in surviving])
    rows = []
    all_ok = True
    for pos in transcript.erased:
        oracle_value = poly_eval(message, code.points[pos])
        got = transcript.recovered.get(pos)
        ok = got == oracle_value
        all_ok = all_ok and ok
        rows.append(
            {
                "position": pos,
                "recovered": str(got) if got is not None else None,
                "oracle": str(oracle_value),
                "ok": ok,
            }
        )
    bits = subsymbol_bits(code)
    scheme_total = transcript.ledger.phase_total(1) + transcript.ledger.phase_total(2)
    naive_per_node = naive_subsymbols_per_node(code)
    return {
        "ok": all_ok,
        "per_node": rows,
        "scheme_subsymbols": scheme_total,
        "scheme_bits": scheme_total * bits,
        "naive_subsymbols_per_node": naive_per_node,
        "naive_subsymbols_total": naive_per_node * len(transcript.erased),
        "naive_bits_per_node": naive_per_node * bits,
        "subsymbol_bits": bits,
        "rounds": transcript.ledger.rounds,
    }


def sweep(code: RSCode, r: int, messages: Sequence[Sequence[FieldElement]]) -> dict:
    """Plan, execute, and verify every size-r failure pattern against every
    message; unsupported patterns are tallied, not fatal."""
    if r not in (1, 2, 3):
        raise ValueError("sweep supports r in {1, 2, 3}")
    codewords = [code.encode(tuple(m)) for m in messages]
    rows = []
    branch_counts: dict[str, int] = {}
    unsupported = 0
    all_ok = True
    naive_per_node = naive_subsymbols_per_node(code)
    for pattern in combinations(range(code.n), r):
        try:
            plan = build_plan(code, pattern)
        except UnsupportedPatternError as err:
            unsupported += 1
            branch_counts["unsupported"] = branch_counts.get("unsupported", 0) + 1
            rows.append(
                {
                    "pattern": list(pattern),
                    "branch": "unsupported",
                    "l": err.l,
                    "t": err.t,
                    "phase1": None,
                    "phase2": None,
                    "rounds": None,
                    "ok": None,
                    "naive_subsymbols": naive_per_node * r,
                }
            )
            continue
        phase1, phase2, rounds = plan_bandwidth(plan)
        ok = True
        for cw in codewords:
            transcript = run_repair(code, cw, plan)
            report = verify_against_oracle(code, cw, transcript)
            ok = ok and report["ok"]
        all_ok = all_ok and ok
        branch_counts[plan.branch.tag] = branch_counts.get(plan.branch.tag, 0) + 1
        rows.append(
            {
                "pattern": list(pattern),
                "branch": plan.branch.tag,
                "l": plan.branch.l,
                "t": code.field.t,
                "phase1": phase1,
                "phase2": phase2,
                "rounds": rounds,
                "ok": ok,
                "naive_subsymbols": naive_per_node * r,
            }
        )
    supported = [row for row in rows if row["branch"] != "unsupported"]
    uniform = lambda key: (
        sorted({row[key] for row in supported}) if supported else []
    )
    return {
        "field": code.field.spec_string(),
        "n": code.n,
        "k": code.k,
        "r": r,
        "messages": len(messages),
        "patterns": rows,
        "summary": {
            "total_patterns": len(rows),
            "supported": len(supported),
            "unsupported": unsupported,
            "all_supported_ok": all_ok,
            "branches": dict(sorted(branch_counts.items())),
            "phase1_values": uniform("phase1"),
            "phase2_values": uniform("phase2"),
            "round_values": uniform("rounds"),
            "naive_subsymbols_per_node": naive_per_node,
        },
    }
