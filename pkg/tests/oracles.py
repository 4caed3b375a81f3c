"""Independent brute-force reimplementations used to cross-check the
optimized analyses. These follow the definitions as direct
comprehensions/recursions and share no code with the implementations
they check."""

from __future__ import annotations

from dala.racecheck import AccessEvent, TransferEvent
from dala.state import Capability, Heap, HeapObject, Loc, Thread
from dala.syntax import embedded_locations, free_vars


def brute_reachable(h: Heap, th: Thread) -> set[int]:
    """Reachability by repeated single-step expansion to a fixpoint."""
    roots: set[int] = set()
    for name in free_vars(th.term):
        v = h.vars.get(name)
        if isinstance(v, Loc):
            roots.add(v.ident)
    roots |= embedded_locations(th.term)
    reached = {i for i in roots if isinstance(h.locs.get(i), HeapObject)}
    changed = True
    while changed:
        changed = False
        for ident in list(reached):
            obj = h.locs.get(ident)
            if not isinstance(obj, HeapObject):
                continue
            for v in obj.fields.values():
                if (
                    isinstance(v, Loc)
                    and isinstance(h.locs.get(v.ident), HeapObject)
                    and v.ident not in reached
                ):
                    reached.add(v.ident)
                    changed = True
    return reached


def brute_local_violations(h: Heap, threads: list[Thread]) -> set[int]:
    """Locations of local objects reachable from two threads with
    distinct ids, one ordered pair at a time."""
    bad: set[int] = set()
    for a in threads:
        for b in threads:
            if a is b or a.owner == b.owner:
                continue
            for ident in brute_reachable(h, a) & brute_reachable(h, b):
                obj = h.locs.get(ident)
                if isinstance(obj, HeapObject) and obj.cap is Capability.LOCAL:
                    # the ordered disjunct isOwner(first) and not
                    # isOwner(second) cannot hold for both orderings
                    if not (obj.owner == a.owner and obj.owner != b.owner):
                        bad.add(ident)
    return bad


def brute_isolated_violations(h: Heap, threads: list[Thread]) -> set[int]:
    bad: set[int] = set()
    for ident, entry in h.locs.items():
        if not (isinstance(entry, HeapObject) and entry.cap is Capability.ISO):
            continue
        heap_in = [
            ("f", src, fname)
            for src, e in h.locs.items()
            if isinstance(e, HeapObject)
            for fname, v in e.fields.items()
            if v == Loc(ident)
        ] + [
            ("c", src)
            for src, e in h.locs.items()
            if not isinstance(e, HeapObject) and e.payload == Loc(ident)
        ]
        stack_in = [
            ("v", th.owner, name)
            for th in threads
            for name in free_vars(th.term)
            if h.vars.get(name) == Loc(ident)
        ] + [
            ("l", th.owner)
            for th in threads
            if ident in embedded_locations(th.term)
        ]
        if len(heap_in) + len(stack_in) <= 1:
            continue
        single_thread = len({site[1] for site in stack_in}) == 1
        if heap_in or not single_thread:
            bad.add(ident)
    return bad


def brute_transfer(events, loc: int, src: int, dst: int, lo: int, hi: int) -> bool:
    for send in events:
        if not (
            isinstance(send, TransferEvent)
            and send.direction == "Send"
            and send.thread == src
            and lo < send.step < hi
            and loc in send.payload_rog
        ):
            continue
        for recv in events:
            if not (
                isinstance(recv, TransferEvent)
                and recv.direction == "Recv"
                and send.step < recv.step < hi
                and loc in recv.payload_rog
            ):
                continue
            if recv.thread == dst or brute_transfer(events, loc, recv.thread,
                                                    dst, recv.step, hi):
                return True
    return False


def brute_races(events) -> set[tuple[int, int]]:
    """(first step, second step) pairs of racing accesses."""
    accesses = [e for e in events if isinstance(e, AccessEvent)]
    out: set[tuple[int, int]] = set()
    for e1 in accesses:
        for e2 in accesses:
            if not (
                e1.step < e2.step
                and e1.kind == "FieldWrite"
                and (e2.loc, e2.field) == (e1.loc, e1.field)
                and e1.thread != e2.thread
            ):
                continue
            if not brute_transfer(events, e1.loc, e1.thread, e2.thread,
                                  e1.step, e2.step):
                out.add((e1.step, e2.step))
    return out
