"""Data-race detection over recorded traces and bounded exhaustive
interleaving exploration.

A race witness is a field write followed by a conflicting access to the
same field of the same object from a different thread, with no
interposed transfer of the object from the writer to the second
accessor. A transfer is a send whose payload graph contains the object,
followed by a matching receive, possibly chained through stop-over
threads. The reachable object graph of a payload is evaluated against
the heap at the event's step. Only traces that do not end in a
permission or cast error are analyzed.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

from .reducer import BlockedThread, Erred, Finished, Stepped, step_thread
from .scheduler import (
    ErrorTerminal,
    TerminalKind,
    classify_terminal,
    terminal_name,
)
from .state import Capability, Configuration, ErrorKind, GlobalError, rog
from .syntax import Program

__all__ = [
    "AccessEvent",
    "ExplorationReport",
    "RaceWitness",
    "TransferEvent",
    "detect_races",
    "explore",
]


@dataclass(frozen=True)
class AccessEvent:
    step: int
    thread: int
    kind: str  # "FieldRead" | "FieldWrite"
    loc: int
    field: str
    cap: Capability


@dataclass(frozen=True)
class TransferEvent:
    step: int
    thread: int
    direction: str  # "Send" | "Recv"
    payload_rog: frozenset[int]


Event = AccessEvent | TransferEvent


@dataclass(frozen=True)
class RaceWitness:
    loc: int
    field: str
    first: AccessEvent
    second: AccessEvent
    involves_unsafe: bool


def _transferred(
    events: list[Event], loc: int, src: int, dst: int, lo: int, hi: int
) -> bool:
    """True iff the object was handed from thread src to thread dst
    strictly between steps lo and hi, possibly via stop-overs: a send
    of a graph containing loc by the current holder, received later by
    the next holder."""
    sends = [
        e for e in events
        if isinstance(e, TransferEvent) and e.direction == "Send"
        and lo < e.step < hi and loc in e.payload_rog
    ]
    recvs = [
        e for e in events
        if isinstance(e, TransferEvent) and e.direction == "Recv"
        and lo < e.step < hi and loc in e.payload_rog
    ]
    # Earliest step at which each thread can have received the object.
    arrival: dict[int, int] = {src: lo}
    frontier = [src]
    while frontier:
        holder = frontier.pop()
        for send in sends:
            if send.thread != holder or send.step <= arrival[holder]:
                continue
            for recv in recvs:
                if recv.step <= send.step:
                    continue
                if recv.thread not in arrival or recv.step < arrival[recv.thread]:
                    arrival[recv.thread] = recv.step
                    frontier.append(recv.thread)
    return dst in arrival


def detect_races(events: list[Event]) -> list[RaceWitness]:
    """All write/access pairs on the same field of the same object from
    different threads that lack an interposed transfer from the writer
    to the second accessor."""
    accesses = sorted(
        (e for e in events if isinstance(e, AccessEvent)), key=lambda e: e.step
    )
    witnesses: list[RaceWitness] = []
    for i, first in enumerate(accesses):
        if first.kind != "FieldWrite":
            continue
        for second in accesses[i + 1:]:
            if (
                second.loc != first.loc
                or second.field != first.field
                or second.thread == first.thread
            ):
                continue
            if _transferred(events, first.loc, first.thread, second.thread,
                            first.step, second.step):
                continue
            witnesses.append(
                RaceWitness(
                    loc=first.loc,
                    field=first.field,
                    first=first,
                    second=second,
                    involves_unsafe=first.cap is Capability.UNSAFE,
                )
            )
    return witnesses


# ------------------------------------------------------------------
# Bounded exhaustive interleaving exploration
# ------------------------------------------------------------------


@dataclass
class ExplorationReport:
    total_traces: int = 0
    racy_traces: int = 0
    witnesses: list[RaceWitness] = dc_field(default_factory=list)
    terminals: dict[str, int] = dc_field(default_factory=dict)
    bound_exceeded: int = 0
    schedules_truncated: bool = False

    @property
    def all_witnesses_unsafe(self) -> bool:
        return all(w.involves_unsafe for w in self.witnesses)

    def to_json(self) -> dict:
        return {
            "total_traces": self.total_traces,
            "racy_traces": self.racy_traces,
            "witness_count": len(self.witnesses),
            "witnesses": [
                {
                    "loc": w.loc,
                    "field": w.field,
                    "first": {"step": w.first.step, "thread": w.first.thread,
                              "kind": w.first.kind},
                    "second": {"step": w.second.step, "thread": w.second.thread,
                               "kind": w.second.kind},
                    "capability": w.first.cap.value,
                    "involves_unsafe": w.involves_unsafe,
                }
                for w in self.witnesses
            ],
            "terminals": dict(sorted(self.terminals.items())),
            "bound_exceeded": self.bound_exceeded,
            "schedules_truncated": self.schedules_truncated,
        }


def _event_of(cfg: Configuration, tid: int, step: int, outcome: Stepped) -> Event | None:
    access = outcome.access
    if access is None:
        return None
    kind = access[0]
    if kind in ("read", "write"):
        _, ident, fname = access
        obj = cfg.heap.object_at(ident)
        assert obj is not None
        return AccessEvent(
            step=step,
            thread=tid,
            kind="FieldWrite" if kind == "write" else "FieldRead",
            loc=ident,
            field=fname,
            cap=obj.cap,
        )
    _, payload = access
    graph = frozenset(rog(cfg.heap, payload))
    return TransferEvent(
        step=step,
        thread=tid,
        direction="Send" if kind == "send" else "Recv",
        payload_rog=graph,
    )


def _apply(cfg: Configuration, tid: int, outcome: Stepped) -> Configuration:
    from .scheduler import _apply_outcome

    return _apply_outcome(cfg, tid, outcome)


def explore(
    program: Program,
    max_steps: int = 40,
    max_schedules: int = 100_000,
) -> ExplorationReport:
    """Depth-first enumeration of schedules (the choice at every step
    is which enabled thread runs) up to the bounds. Every complete
    trace not ending in a permission or cast error is scanned for race
    witnesses."""
    report = ExplorationReport()
    root = Configuration.initial(program.body)
    events: list[Event] = []

    def record_terminal(kind: TerminalKind) -> None:
        report.total_traces += 1
        name = terminal_name(kind)
        report.terminals[name] = report.terminals.get(name, 0) + 1
        if isinstance(kind, ErrorTerminal) and kind.kind in (
            ErrorKind.PERMISSION, ErrorKind.CAST
        ):
            return
        found = detect_races(events)
        if found:
            report.racy_traces += 1
            report.witnesses.extend(found)

    def walk(cfg: Configuration, depth: int) -> None:
        if report.total_traces >= max_schedules:
            report.schedules_truncated = True
            return
        if cfg.status is not None:
            record_terminal(ErrorTerminal(cfg.status.kind, cfg.status.rule))
            return
        if not cfg.threads:
            record_terminal(classify_terminal(cfg))
            return
        if depth >= max_steps:
            report.bound_exceeded += 1
            return
        progressed = False
        for th in cfg.threads:
            outcome = step_thread(cfg.heap, th)
            if isinstance(outcome, BlockedThread):
                continue
            assert not isinstance(outcome, Finished), \
                "bare-value threads are removed eagerly"
            progressed = True
            if isinstance(outcome, Erred):
                nxt = Configuration(
                    heap=cfg.heap,
                    threads=[],
                    status=GlobalError(outcome.kind, outcome.rule),
                )
                walk(nxt, depth + 1)
            else:
                event = _event_of(cfg, th.owner, depth, outcome)
                if event is not None:
                    events.append(event)
                walk(_apply(cfg, th.owner, outcome), depth + 1)
                if event is not None:
                    events.pop()
            if report.schedules_truncated:
                return
        if not progressed:
            record_terminal(classify_terminal(cfg))

    walk(root, 0)
    return report
