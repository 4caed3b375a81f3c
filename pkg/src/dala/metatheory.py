"""Executable store typing and configuration well-formedness: the
environment inferred from a heap, the per-entry store checks, run-time
term well-formedness, and the thread-locality and object-isolation
predicates. Used as a per-step preservation oracle.

The thread-locality check treats reachability, not dereferenceability:
a local object in the reachable object graph of two threads with
distinct ids is reported, which is the reading under which the
hand-buildable negative cases are detectable. The isolation census
counts reference sites: heap fields, channel payloads, free variables
of live terms, and per-thread embedded term locations; an isolated
object with more than one incoming site must have all of them on a
single thread's stack (borrowing) and none in the heap.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Iterable

from .state import (
    Absent,
    Capability,
    Channel,
    Configuration,
    EmptyChan,
    Heap,
    HeapObject,
    Loc,
    Thread,
    Value,
    ok_field,
    rog,
)
from .syntax import (
    SELF,
    Blocked,
    Call,
    Cast,
    Consume,
    CopyExpr,
    Expression,
    FieldRead,
    FieldWrite,
    LetIn,
    Lit,
    NestedTerm,
    ObjectLit,
    Recv,
    Send,
    Spawn,
    Term,
    VarUse,
    embedded_locations,
    free_vars,
)

__all__ = [
    "StoreType",
    "WfReport",
    "check_configuration",
    "check_isolated",
    "check_local",
    "check_store",
    "check_term",
    "incoming_references",
    "infer_gamma",
]

Key = str | int  # variable name or location id


@dataclass(frozen=True)
class Violation:
    rule: str
    subject: str
    detail: str


@dataclass
class WfReport:
    violations: list[Violation] = dc_field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, rule: str, subject: object, detail: str) -> None:
        self.violations.append(Violation(rule, str(subject), detail))

    def extend(self, other: "WfReport") -> None:
        self.violations.extend(other.violations)

    def render(self) -> str:
        if self.ok:
            return "well-formed"
        return "\n".join(f"{v.rule}: {v.subject}: {v.detail}" for v in self.violations)


@dataclass
class StoreType:
    """The environment mapping variables and locations to capabilities.
    Channel-typed keys are tracked separately: channels are typed local
    and stay local under safe erasure. Duplicate entries (possible only
    in hand-built environments) are recorded for WF-Env checks."""

    entries: dict[Key, Capability] = dc_field(default_factory=dict)
    channel_like: frozenset[Key] = frozenset()
    duplicates: tuple[Key, ...] = ()

    @classmethod
    def from_entries(cls, pairs: Iterable[tuple[Key, Capability]]) -> "StoreType":
        entries: dict[Key, Capability] = {}
        dups: list[Key] = []
        for key, cap in pairs:
            if key in entries:
                dups.append(key)
            entries[key] = cap
        return cls(entries=entries, duplicates=tuple(dups))

    def __contains__(self, key: Key) -> bool:
        return key in self.entries

    def get(self, key: Key) -> Capability | None:
        return self.entries.get(key)

    def domain(self) -> set[Key]:
        return set(self.entries)


def infer_gamma(h: Heap) -> StoreType:
    """Capability extraction over a heap: object locations map to their
    tag, channel locations to local, variables to the capability of
    what they hold, and absent-token variables to the capability
    recorded at consume time."""
    entries: dict[Key, Capability] = {}
    channel_like: set[Key] = set()
    for ident, entry in h.locs.items():
        if isinstance(entry, HeapObject):
            entries[ident] = entry.cap
        else:
            entries[ident] = Capability.LOCAL
            channel_like.add(ident)
    for name, v in h.vars.items():
        cap = h.cap_of(v)
        if cap is not None:
            entries[name] = cap
            if isinstance(v, Loc) and isinstance(h.locs.get(v.ident), Channel):
                channel_like.add(name)
            elif isinstance(v, Absent) and v.channel:
                channel_like.add(name)
    return StoreType(entries=entries, channel_like=frozenset(channel_like))


def check_store(gamma: StoreType, h: Heap) -> WfReport:
    """The WF-H-* judgment: environment sanity, capability agreement
    for variables, field compatibility for every object, and channel
    payload constraints."""
    report = WfReport()
    for key in gamma.duplicates:
        rule = "WF-Env-Loc" if isinstance(key, int) else "WF-Env-Var"
        report.add(rule, key, "duplicate environment entry")
    for name, v in h.vars.items():
        if isinstance(v, Absent):
            if name not in gamma:
                report.add("WF-H-Absent", name, "absent-bound variable missing from the environment")
        elif isinstance(v, Loc):
            if v.ident not in h.locs:
                report.add("WF-H-Var", name, f"dangling location {v.ident}")
            elif gamma.get(name) != gamma.get(v.ident):
                report.add(
                    "WF-H-Var", name,
                    f"capability {gamma.get(name)} disagrees with location {v.ident} "
                    f"({gamma.get(v.ident)})",
                )
        else:
            report.add("WF-H-Var", name, "variable bound to the empty-channel token")
    for ident, entry in h.locs.items():
        if isinstance(entry, HeapObject):
            if gamma.get(ident) != entry.cap:
                report.add("WF-H-Object", ident, "environment capability disagrees with tag")
            for fname, v in entry.fields.items():
                if isinstance(v, EmptyChan):
                    report.add("WF-H-Object", ident, f"field {fname} holds the empty-channel token")
                elif not isinstance(v, Loc):
                    report.add("WF-H-Object", ident, f"field {fname} holds a non-location")
                else:
                    member = gamma.get(v.ident)
                    if member is None:
                        report.add("WF-H-Object", ident, f"field {fname} dangles ({v.ident})")
                    elif not ok_field(entry.cap, member):
                        report.add(
                            "WF-H-Object", ident,
                            f"field {fname}: {member.value} under {entry.cap.value}",
                        )
        else:
            if isinstance(entry.payload, Absent):
                report.add("WF-H-Chan", ident, "channel payload is the absent token")
            if gamma.get(ident) is not Capability.LOCAL:
                report.add("WF-H-Chan", ident, "channel not typed local")
            if isinstance(entry.payload, Loc) and gamma.get(entry.payload.ident) is Capability.LOCAL:
                report.add("WF-H-Chan", ident, "channel payload typed local")
    return report


# ------------------------------------------------------------------
# Run-time term well-formedness (the declaration judgment under Γ)
# ------------------------------------------------------------------


def check_term(gamma: StoreType, t: Term, report: WfReport | None = None) -> WfReport:
    if report is None:
        report = WfReport()
    _wf_term(t, set(), gamma, report)
    return report


def _defined(name: str, locals_: set[str], gamma: StoreType) -> bool:
    return name in locals_ or name in gamma


def _wf_atom(a: Expression, locals_: set[str], gamma: StoreType, report: WfReport) -> None:
    if isinstance(a, VarUse):
        if not _defined(a.name, locals_, gamma):
            report.add("WF-Var", a.name, "unbound variable")
    elif isinstance(a, Consume):
        if a.name == SELF:
            report.add("WF-Consume", a.name, "cannot consume 'self'")
        elif not _defined(a.name, locals_, gamma):
            report.add("WF-Var", a.name, "unbound variable")
    elif isinstance(a, Lit):
        if isinstance(a.value, Loc) and a.value.ident not in gamma:
            report.add("WF-Loc", a.value.ident, "location not in the environment")
        elif isinstance(a.value, EmptyChan):
            report.add("WF-Loc", "<empty>", "empty-channel token embedded in a term")


def _wf_term(t: Term, locals_: set[str], gamma: StoreType, report: WfReport) -> None:
    if isinstance(t, LetIn):
        if t.binder in locals_ or t.binder in gamma:
            report.add("WF-Let", t.binder, "binder not fresh")
        _wf_expr(t.expr, locals_, gamma, report)
        _wf_term(t.rest, locals_ | {t.binder}, gamma, report)
    else:
        _wf_atom(t, locals_, gamma, report)


def _wf_expr(e: Expression, locals_: set[str], gamma: StoreType, report: WfReport) -> None:
    if isinstance(e, (VarUse, Consume, Lit)):
        _wf_atom(e, locals_, gamma, report)
    elif isinstance(e, FieldRead):
        if not _defined(e.target, locals_, gamma):
            report.add("WF-Field", e.target, "unbound variable")
    elif isinstance(e, FieldWrite):
        if not _defined(e.target, locals_, gamma):
            report.add("WF-Assignment", e.target, "unbound variable")
        _wf_atom(e.value, locals_, gamma, report)
    elif isinstance(e, Call):
        if not _defined(e.target, locals_, gamma):
            report.add("WF-MethodCall", e.target, "unbound variable")
        _wf_atom(e.arg, locals_, gamma, report)
    elif isinstance(e, Send):
        _wf_atom(e.target, locals_, gamma, report)
        _wf_atom(e.payload, locals_, gamma, report)
    elif isinstance(e, Recv):
        _wf_atom(e.target, locals_, gamma, report)
    elif isinstance(e, Spawn):
        if e.binder in locals_ or e.binder in gamma:
            report.add("WF-Spawn", e.binder, "binder not fresh")
        leaked = free_vars(e.body) - {e.binder}
        if leaked:
            report.add("WF-Spawn", e.binder, f"spawn body not closed: {sorted(leaked)}")
        _wf_term(e.body, {e.binder}, StoreType(), report)
    elif isinstance(e, Blocked):
        if e.chan.ident not in gamma:
            report.add("WF-Unblock", e.chan.ident, "marker channel not in the environment")
    elif isinstance(e, CopyExpr):
        if e.cap is Capability.ISO:
            report.add("WF-Copy", e.source, "copy at iso capability")
        if not _defined(e.source, locals_, gamma):
            report.add("WF-Var", e.source, "unbound variable")
    elif isinstance(e, Cast):
        _wf_atom(e.value, locals_, gamma, report)
    elif isinstance(e, ObjectLit):
        for _, value in e.fields:
            _wf_atom(value, locals_, gamma, report)
        for m in e.methods:
            _wf_term(m.body, {SELF, m.param}, StoreType(), report)
    elif isinstance(e, NestedTerm):
        _wf_term(e.term, locals_, gamma, report)
    else:
        raise TypeError(e)


# ------------------------------------------------------------------
# Thread locality
# ------------------------------------------------------------------


def check_local(h: Heap, threads: list[Thread]) -> WfReport:
    """No local-capability object may sit in the reachable object graph
    of two threads with distinct ids."""
    report = WfReport()
    graphs = [(th.owner, rog(h, th.term)) for th in threads]
    for i in range(len(graphs)):
        for j in range(i + 1, len(graphs)):
            tid_a, rog_a = graphs[i]
            tid_b, rog_b = graphs[j]
            if tid_a == tid_b:
                continue
            for ident in sorted(rog_a & rog_b):
                obj = h.object_at(ident)
                if obj is not None and obj.cap is Capability.LOCAL:
                    report.add(
                        "Local", ident,
                        f"local object (owner {obj.owner}) reachable from "
                        f"threads {tid_a} and {tid_b}",
                    )
    return report


# ------------------------------------------------------------------
# Object isolation
# ------------------------------------------------------------------


def incoming_references(h: Heap, threads: list[Thread], ident: int) -> tuple[set, set]:
    """The incoming-reference census of a location: heap sites (fields
    and channel payload slots) and stack sites (free variables of live
    terms holding it, plus per-thread embedded occurrences)."""
    heap_sites: set = set()
    stack_sites: set = set()
    target = Loc(ident)
    for src, entry in h.locs.items():
        if isinstance(entry, HeapObject):
            for fname, v in entry.fields.items():
                if v == target:
                    heap_sites.add(("field", src, fname))
        elif entry.payload == target:
            heap_sites.add(("chan", src))
    for th in threads:
        for name in free_vars(th.term):
            if h.vars.get(name) == target:
                stack_sites.add(("var", th.owner, name))
        if ident in embedded_locations(th.term):
            stack_sites.add(("lit", th.owner))
    return heap_sites, stack_sites


def check_isolated(h: Heap, threads: list[Thread]) -> WfReport:
    """Every isolated object with more than one incoming reference has
    all of them on a single thread's stack and none in the heap (the
    borrowing exception)."""
    report = WfReport()
    for ident, entry in h.locs.items():
        if not (isinstance(entry, HeapObject) and entry.cap is Capability.ISO):
            continue
        heap_sites, stack_sites = incoming_references(h, threads, ident)
        if len(heap_sites) + len(stack_sites) <= 1:
            continue
        owners = {site[1] for site in stack_sites}
        if heap_sites or len(owners) != 1:
            report.add(
                "Isolated", ident,
                f"{len(heap_sites)} heap + {len(stack_sites)} stack incoming references",
            )
    return report


# ------------------------------------------------------------------
# Configuration well-formedness
# ------------------------------------------------------------------


def check_configuration(cfg: Configuration) -> WfReport:
    """WF-Configuration: environment/store agreement, the store checks,
    per-thread term well-formedness, thread locality, and object
    isolation."""
    report = WfReport()
    gamma = infer_gamma(cfg.heap)
    dom_h = set(cfg.heap.vars) | set(cfg.heap.locs)
    missing = dom_h - gamma.domain()
    for key in sorted(missing, key=str):
        report.add("WF-Configuration", key, "heap entry with no environment capability")
    report.extend(check_store(gamma, cfg.heap))
    for th in cfg.threads:
        check_term(gamma, th.term, report)
    report.extend(check_local(cfg.heap, cfg.threads))
    report.extend(check_isolated(cfg.heap, cfg.threads))
    return report
