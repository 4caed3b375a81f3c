"""Run-time state: capabilities and their order, values, heap entries,
configurations, reachability, and ownership predicates.

The heap is a single logical store mutated only by the reducer under
the scheduler's control; the engine is a single-threaded simulation of
concurrency. Allocation counters live on the heap so that cloning a
configuration (for exploration or differential runs) carries the
freshness state with it, which is what makes trace replay and lockstep
execution reproduce identical ids.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field as dc_field
from typing import TYPE_CHECKING, Iterable, Union

if TYPE_CHECKING:
    from .syntax import Method, Term

__all__ = [
    "Absent",
    "AllocState",
    "Capability",
    "Channel",
    "Configuration",
    "EmptyChan",
    "ErrorKind",
    "Heap",
    "HeapObject",
    "Loc",
    "Thread",
    "Value",
    "cap_le",
    "ok_field",
    "rog",
    "local_owner",
    "is_owner",
]


class Capability(str, enum.Enum):
    IMM = "imm"
    ISO = "iso"
    LOCAL = "local"
    UNSAFE = "unsafe"

    def __str__(self) -> str:  # pragma: no cover - repr convenience
        return self.value


SAFE_CAPS = (Capability.IMM, Capability.ISO, Capability.LOCAL)

# unsafe <= local <= iso <= imm, reflexive-transitive.
_CAP_RANK = {
    Capability.UNSAFE: 0,
    Capability.LOCAL: 1,
    Capability.ISO: 2,
    Capability.IMM: 3,
}


def cap_le(a: Capability, b: Capability) -> bool:
    """The capability order: a <= b."""
    return _CAP_RANK[a] <= _CAP_RANK[b]


# Structural restrictions: which member capability may sit in a field
# of a container capability. Row = container, entries = allowed members.
_OK_FIELD = {
    Capability.IMM: {Capability.IMM},
    Capability.ISO: {Capability.IMM, Capability.ISO},
    Capability.LOCAL: {Capability.IMM, Capability.ISO, Capability.LOCAL},
    Capability.UNSAFE: {Capability.IMM, Capability.ISO, Capability.LOCAL, Capability.UNSAFE},
}


def ok_field(container: Capability, member: Capability) -> bool:
    """True iff an object with capability `container` may hold a field
    of capability `member`."""
    return member in _OK_FIELD[container]


class ErrorKind(str, enum.Enum):
    """The four run-time error kinds."""

    NORMAL = "ErrN"
    ABSENT = "ErrA"
    PERMISSION = "ErrP"
    CAST = "ErrC"

    def __str__(self) -> str:  # pragma: no cover
        return self.value


# ------------------------------------------------------------------
# Values
# ------------------------------------------------------------------


@dataclass(frozen=True)
class Loc:
    ident: int


@dataclass(frozen=True)
class Absent:
    """The token left behind by a destructive read. Carries the
    capability the variable held at consume time, which is what makes
    store typing of consumed variables deterministic; channel-typed
    tokens stay local under safe erasure."""

    cap: Capability
    channel: bool = False


@dataclass(frozen=True)
class EmptyChan:
    """The free-channel token; only ever a channel payload."""


Value = Union[Loc, Absent, EmptyChan]


def value_to_json(v: Value) -> object:
    if isinstance(v, Loc):
        return {"loc": v.ident}
    if isinstance(v, Absent):
        out: dict[str, object] = {"absent": v.cap.value}
        if v.channel:
            out["channel"] = True
        return out
    if isinstance(v, EmptyChan):
        return {"empty": True}
    raise TypeError(v)


# ------------------------------------------------------------------
# Heap entries
# ------------------------------------------------------------------


@dataclass
class HeapObject:
    """An allocated object. cap and owner are fixed for life; only the
    field map is mutated (by field assignment's swap)."""

    cap: Capability
    owner: int
    fields: dict[str, Value]
    methods: dict[str, "Method"]

    def clone(self) -> "HeapObject":
        return HeapObject(self.cap, self.owner, dict(self.fields), self.methods)


@dataclass
class Channel:
    """An unbuffered channel: one message id and one payload slot.
    EmptyChan in the slot means the channel is free."""

    msg_id: int
    payload: Value

    def clone(self) -> "Channel":
        return Channel(self.msg_id, self.payload)


@dataclass
class AllocState:
    """Monotone per-run counters; ids are never reused."""

    next_loc: int = 1
    next_thread: int = 1
    next_msg: int = 1
    next_var: int = 1

    def fresh_location(self) -> int:
        out = self.next_loc
        self.next_loc += 1
        return out

    def fresh_thread_id(self) -> int:
        out = self.next_thread
        self.next_thread += 1
        return out

    def fresh_msg_id(self) -> int:
        out = self.next_msg
        self.next_msg += 1
        return out

    def fresh_var(self) -> str:
        out = f"${self.next_var}"
        self.next_var += 1
        return out

    def clone(self) -> "AllocState":
        return AllocState(self.next_loc, self.next_thread, self.next_msg, self.next_var)


@dataclass
class Heap:
    """Finite maps from variables to values and from locations to
    objects or channels. Stack variables are never removed, matching
    the retention of old bindings; liveness is decided by the free
    variables of live terms, not by the heap domain."""

    vars: dict[str, Value] = dc_field(default_factory=dict)
    locs: dict[int, HeapObject | Channel] = dc_field(default_factory=dict)
    alloc: AllocState = dc_field(default_factory=AllocState)

    def clone(self) -> "Heap":
        return Heap(
            vars=dict(self.vars),
            locs={i: entry.clone() for i, entry in self.locs.items()},
            alloc=self.alloc.clone(),
        )

    # -- lookups ----------------------------------------------------

    def object_at(self, ident: int) -> HeapObject | None:
        entry = self.locs.get(ident)
        return entry if isinstance(entry, HeapObject) else None

    def channel_at(self, ident: int) -> Channel | None:
        entry = self.locs.get(ident)
        return entry if isinstance(entry, Channel) else None

    def cap_of(self, v: Value) -> Capability | None:
        """Capability extraction for a value: an object's tag, local
        for channels, the recorded capability for absent tokens."""
        if isinstance(v, Loc):
            entry = self.locs.get(v.ident)
            if isinstance(entry, HeapObject):
                return entry.cap
            if isinstance(entry, Channel):
                return Capability.LOCAL
            return None
        if isinstance(v, Absent):
            return v.cap
        return None

    def is_iso(self, v: Value) -> bool:
        return isinstance(v, Loc) and (obj := self.object_at(v.ident)) is not None \
            and obj.cap is Capability.ISO

    def is_imm(self, v: Value) -> bool:
        return isinstance(v, Loc) and (obj := self.object_at(v.ident)) is not None \
            and obj.cap is Capability.IMM

    def is_local(self, v: Value) -> bool:
        return isinstance(v, Loc) and (obj := self.object_at(v.ident)) is not None \
            and obj.cap is Capability.LOCAL

    def ok_ref(self, container: Capability, v: Value) -> bool:
        """True iff v is a location whose extracted capability may sit
        in a field of a `container`-capability object. Channels extract
        as local, matching the environment-level check, so they can
        only sit under local and unsafe containers."""
        if not isinstance(v, Loc):
            return False
        cap = self.cap_of(v)
        return cap is not None and ok_field(container, cap)

    # -- snapshots ---------------------------------------------------

    def to_snapshot(self) -> dict:
        locs: dict[str, object] = {}
        for ident in sorted(self.locs):
            entry = self.locs[ident]
            if isinstance(entry, HeapObject):
                locs[str(ident)] = {
                    "kind": "object",
                    "cap": entry.cap.value,
                    "owner": entry.owner,
                    "fields": {f: value_to_json(v) for f, v in entry.fields.items()},
                    "methods": sorted(entry.methods),
                }
            else:
                locs[str(ident)] = {
                    "kind": "channel",
                    "msg": entry.msg_id,
                    "payload": value_to_json(entry.payload),
                }
        return {
            "vars": {x: value_to_json(v) for x, v in sorted(self.vars.items())},
            "locs": locs,
            "alloc": [self.alloc.next_loc, self.alloc.next_thread,
                      self.alloc.next_msg, self.alloc.next_var],
        }

    def snapshot_json(self) -> str:
        return json.dumps(self.to_snapshot(), sort_keys=True)


def is_owner(h: Heap, tid: int, v: Value) -> bool:
    """True iff v is an object location owned by thread tid."""
    if not isinstance(v, Loc):
        return False
    obj = h.object_at(v.ident)
    return obj is not None and obj.owner == tid


def local_owner(h: Heap, tid: int, v: Value) -> bool:
    """isLocal(H, v) implies isOwner(H, tid, v): vacuous for anything
    that is not a local object."""
    return not h.is_local(v) or is_owner(h, tid, v)


def not_local_owner(h: Heap, tid: int, v: Value) -> bool:
    return h.is_local(v) and not is_owner(h, tid, v)


# ------------------------------------------------------------------
# Reachable object graph
# ------------------------------------------------------------------


def _rog_value(h: Heap, v: Value, out: set[int]) -> None:
    if not isinstance(v, Loc):
        return
    stack = [v.ident]
    while stack:
        ident = stack.pop()
        if ident in out:
            continue
        obj = h.object_at(ident)
        if obj is None:
            continue  # channels and dangling ids fall outside the graph
        out.add(ident)
        for fv in obj.fields.values():
            if isinstance(fv, Loc) and fv.ident not in out:
                stack.append(fv.ident)


def rog(h: Heap, root: "Term | Value") -> set[int]:
    """Reachable object graph: the transitive closure of objects
    reachable from a value or from a term's heap-bound variables and
    embedded locations. Channels are neither traversed nor included."""
    from .syntax import embedded_locations, free_vars

    out: set[int] = set()
    if isinstance(root, (Loc, Absent, EmptyChan)):
        _rog_value(h, root, out)
        return out
    for name in free_vars(root):
        bound = h.vars.get(name)
        if bound is not None:
            _rog_value(h, bound, out)
    for ident in embedded_locations(root):
        _rog_value(h, Loc(ident), out)
    return out


# ------------------------------------------------------------------
# Threads and configurations
# ------------------------------------------------------------------


@dataclass
class Thread:
    owner: int
    term: "Term"


@dataclass(frozen=True)
class GlobalError:
    kind: ErrorKind
    rule: str


RUNNING = "running"


@dataclass
class Configuration:
    """A heap plus an ordered collection of threads, or a collapsed
    global error. Thread owner ids are pairwise distinct; the main
    thread has id 0."""

    heap: Heap
    threads: list[Thread]
    status: GlobalError | None = None

    @classmethod
    def initial(cls, body: "Term") -> "Configuration":
        return cls(heap=Heap(), threads=[Thread(0, body)])

    @property
    def running(self) -> bool:
        return self.status is None

    def thread(self, tid: int) -> Thread | None:
        for th in self.threads:
            if th.owner == tid:
                return th
        return None

    def clone(self) -> "Configuration":
        return Configuration(
            heap=self.heap.clone(),
            threads=[Thread(th.owner, th.term) for th in self.threads],
            status=self.status,
        )

    def to_snapshot(self) -> dict:
        from .syntax import pretty, Program

        threads = [
            {"id": th.owner, "term": _term_sexp(th.term)}
            for th in self.threads
        ]
        return {
            "heap": self.heap.to_snapshot(),
            "threads": threads,
            "status": None if self.status is None
            else {"kind": self.status.kind.value, "rule": self.status.rule},
        }

    def snapshot_json(self) -> str:
        return json.dumps(self.to_snapshot(), sort_keys=True)


def _term_sexp(t: object) -> str:
    """Deterministic compact rendering of run-time terms for snapshots."""
    from . import syntax as s

    if isinstance(t, s.LetIn):
        return f"(let {t.binder} {_term_sexp(t.expr)} {_term_sexp(t.rest)})"
    if isinstance(t, s.VarUse):
        return t.name
    if isinstance(t, s.Consume):
        return f"(consume {t.name})"
    if isinstance(t, s.Lit):
        v = t.value
        if isinstance(v, Loc):
            return f"#{v.ident}"
        if isinstance(v, Absent):
            return f"(absent {v.cap.value})"
        return "(empty)"
    if isinstance(t, s.FieldRead):
        return f"(get {t.target} {t.field})"
    if isinstance(t, s.FieldWrite):
        return f"(set {t.target} {t.field} {_term_sexp(t.value)})"
    if isinstance(t, s.Call):
        return f"(call {t.target} {t.method} {_term_sexp(t.arg)})"
    if isinstance(t, s.Send):
        return f"(send {_term_sexp(t.target)} {_term_sexp(t.payload)})"
    if isinstance(t, s.Recv):
        return f"(recv {_term_sexp(t.target)})"
    if isinstance(t, s.Spawn):
        return f"(spawn {t.binder} {_term_sexp(t.body)})"
    if isinstance(t, s.Blocked):
        return f"(pending {t.msg_id} #{t.chan.ident})"
    if isinstance(t, s.CopyExpr):
        return f"(copy {t.cap.value} {t.source})"
    if isinstance(t, s.Cast):
        return f"(cast {t.cap.value} {_term_sexp(t.value)})"
    if isinstance(t, s.ObjectLit):
        fields = " ".join(f"({n} {_term_sexp(v)})" for n, v in t.fields)
        methods = " ".join(
            f"(method {m.name} {m.param} {_term_sexp(m.body)})" for m in t.methods
        )
        return f"(object {t.cap.value} ({fields}) ({methods}))"
    if isinstance(t, s.NestedTerm):
        return f"(splice {_term_sexp(t.term)})"
    raise TypeError(t)
