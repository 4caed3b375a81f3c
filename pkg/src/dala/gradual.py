"""The safe-erasure transform and differential execution harnesses.

Erasure replaces every safe capability annotation with unsafe: object
literals, casts, copies, heap tags, recorded consume capabilities, and
environment entries (channel-typed entries stay local, since channels
are typed local by construction). All other structure is identical, so
an annotated run and its erased twin allocate identical fresh ids in
lockstep, and "same configuration modulo erasure" is plain structural
equality of snapshots.

The differ steps two configurations on the same thread and classifies
the outcome; the multistep harness replays a recorded schedule on the
other side in both directions, asserting divergence only through
permission or cast errors on the annotated side.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import syntax as s
from .reducer import ERROR_RULE_KINDS
from .scheduler import (
    NOT_ENABLED,
    ErrorTerminal,
    RunResult,
    Seeded,
    TerminalKind,
    classify_terminal,
    global_step,
    run,
)
from .state import (
    Absent,
    Capability,
    Channel,
    Configuration,
    ErrorKind,
    Heap,
    HeapObject,
    Thread,
    Value,
)
from .metatheory import StoreType

__all__ = [
    "BothErred",
    "DiffRunReport",
    "DiffVerdict",
    "Mismatch",
    "SafeErred",
    "SameStep",
    "TheoremViolation",
    "diff_run",
    "diff_step",
    "erase",
]

SAFE_ERRORS = (ErrorKind.PERMISSION, ErrorKind.CAST)


# ------------------------------------------------------------------
# Safe erasure
# ------------------------------------------------------------------


def _erase_value(v: Value) -> Value:
    if isinstance(v, Absent):
        if v.channel:
            return v  # channels stay local under erasure
        return Absent(Capability.UNSAFE)
    return v


def _erase_atom(a: s.Expression) -> s.Expression:
    if isinstance(a, s.Lit):
        return s.Lit(_erase_value(a.value))
    return a


def _erase_method(m: s.Method) -> s.Method:
    return s.Method(m.name, m.param, _erase_term(m.body))


def _erase_term(t: s.Term) -> s.Term:
    if isinstance(t, s.LetIn):
        return s.LetIn(t.binder, _erase_expr(t.expr), _erase_term(t.rest))
    return _erase_atom(t)  # type: ignore[return-value]


def _erase_expr(e: s.Expression) -> s.Expression:
    if isinstance(e, (s.VarUse, s.Consume, s.Lit)):
        return _erase_atom(e)
    if isinstance(e, s.ObjectLit):
        return s.ObjectLit(
            Capability.UNSAFE,
            tuple((n, _erase_atom(v)) for n, v in e.fields),
            tuple(_erase_method(m) for m in e.methods),
        )
    if isinstance(e, s.Cast):
        return s.Cast(Capability.UNSAFE, _erase_atom(e.value))
    if isinstance(e, s.CopyExpr):
        return s.CopyExpr(Capability.UNSAFE, e.source)
    if isinstance(e, s.Spawn):
        return s.Spawn(e.binder, _erase_term(e.body))
    if isinstance(e, s.FieldWrite):
        return s.FieldWrite(e.target, e.field, _erase_atom(e.value))
    if isinstance(e, s.Call):
        return s.Call(e.target, e.method, _erase_atom(e.arg))
    if isinstance(e, s.Send):
        return s.Send(_erase_atom(e.target), _erase_atom(e.payload))
    if isinstance(e, s.Recv):
        return s.Recv(_erase_atom(e.target))
    if isinstance(e, s.NestedTerm):
        return s.NestedTerm(_erase_term(e.term))
    # FieldRead, Blocked: capability-free
    return e


def _erase_heap(h: Heap) -> Heap:
    out = Heap(alloc=h.alloc.clone())
    for name, v in h.vars.items():
        out.vars[name] = _erase_value(v)
    for ident, entry in h.locs.items():
        if isinstance(entry, HeapObject):
            out.locs[ident] = HeapObject(
                Capability.UNSAFE,
                entry.owner,
                {f: _erase_value(v) for f, v in entry.fields.items()},
                {name: _erase_method(m) for name, m in entry.methods.items()},
            )
        else:
            out.locs[ident] = Channel(entry.msg_id, entry.payload)
    return out


def _erase_configuration(cfg: Configuration) -> Configuration:
    return Configuration(
        heap=_erase_heap(cfg.heap),
        threads=[Thread(th.owner, _erase_term(th.term)) for th in cfg.threads],
        status=cfg.status,
    )


def _erase_gamma(gamma: StoreType) -> StoreType:
    entries = {
        key: Capability.LOCAL if key in gamma.channel_like else Capability.UNSAFE
        for key in gamma.entries
    }
    return StoreType(entries=entries, channel_like=gamma.channel_like,
                     duplicates=gamma.duplicates)


_EXPR_TYPES = (
    s.VarUse, s.Consume, s.Lit, s.FieldRead, s.FieldWrite, s.Call, s.Send,
    s.Recv, s.Spawn, s.Blocked, s.CopyExpr, s.ObjectLit, s.Cast, s.NestedTerm,
)


def erase(subject):
    """Replace every safe capability with unsafe; structure preserved.
    Accepts a Program, Term, Expression, Method, Heap, Configuration,
    StoreType, or Value."""
    if isinstance(subject, s.Program):
        return s.Program(_erase_term(subject.body))
    if isinstance(subject, Configuration):
        return _erase_configuration(subject)
    if isinstance(subject, Heap):
        return _erase_heap(subject)
    if isinstance(subject, StoreType):
        return _erase_gamma(subject)
    if isinstance(subject, s.Method):
        return _erase_method(subject)
    if isinstance(subject, s.LetIn):
        return _erase_term(subject)
    if isinstance(subject, _EXPR_TYPES):
        return _erase_expr(subject)
    if isinstance(subject, (Absent,)):
        return _erase_value(subject)
    raise TypeError(f"cannot erase {type(subject).__name__}")


# ------------------------------------------------------------------
# Single-step differential check
# ------------------------------------------------------------------


@dataclass(frozen=True)
class SameStep:
    rule: str | None


@dataclass(frozen=True)
class SafeErred:
    kind: ErrorKind
    rule: str


@dataclass(frozen=True)
class BothErred:
    kind: ErrorKind
    rule: str


@dataclass(frozen=True)
class Mismatch:
    detail: str


DiffVerdict = SameStep | SafeErred | BothErred | Mismatch


def _rule_error_kind(rule: str | None) -> ErrorKind | None:
    if rule is None:
        return None
    return ERROR_RULE_KINDS.get(rule)


def diff_step(cfg: Configuration, tid: int) -> DiffVerdict:
    """Step the configuration and its erased twin on the same thread
    and classify the pair of outcomes."""
    erased = _erase_configuration(cfg)
    res_a = global_step(cfg, tid)
    res_e = global_step(erased, tid)
    a_blocked = res_a == NOT_ENABLED
    e_blocked = res_e == NOT_ENABLED
    if a_blocked or e_blocked:
        if a_blocked and e_blocked:
            return SameStep(None)
        return Mismatch(f"thread {tid} blocked on one side only")
    cfg_a, rule_a = res_a  # type: ignore[misc]
    cfg_e, rule_e = res_e  # type: ignore[misc]
    kind_a = _rule_error_kind(rule_a)
    kind_e = _rule_error_kind(rule_e)
    if kind_e in SAFE_ERRORS:
        return Mismatch(f"erased side raised {kind_e.value} via {rule_e}")
    if kind_a in SAFE_ERRORS:
        if kind_e is None:
            return SafeErred(kind_a, rule_a)
        return Mismatch(
            f"annotated {rule_a} ({kind_a.value}) but erased erred {rule_e}"
        )
    if kind_a is not None or kind_e is not None:
        if kind_a == kind_e:
            return BothErred(kind_a, rule_a)
        return Mismatch(
            f"error kinds differ: annotated {rule_a}, erased {rule_e}"
        )
    if rule_a != rule_e:
        return Mismatch(f"rules differ: annotated {rule_a}, erased {rule_e}")
    if _erase_configuration(cfg_a).snapshot_json() != cfg_e.snapshot_json():
        return Mismatch(f"successors differ modulo erasure after {rule_a}")
    return SameStep(rule_a)


# ------------------------------------------------------------------
# Multistep differential check
# ------------------------------------------------------------------


class TheoremViolation(Exception):
    def __init__(self, direction: str, step: int, detail: str) -> None:
        super().__init__(f"{direction} step {step}: {detail}")
        self.direction = direction
        self.step = step
        self.detail = detail


@dataclass
class DiffRunReport:
    seed: int
    annotated_terminal: str
    erased_terminal: str
    annotated_steps: int
    erased_steps: int
    forward_diverged_at: int | None  # annotated ErrP/ErrC: erased continues
    backward_diverged_at: int | None  # annotated replay errs ErrP/ErrC early
    verdicts: dict[str, int]

    @property
    def ok(self) -> bool:
        return True  # violations raise; a report means both directions held


def _terminal_error_kind(kind: TerminalKind) -> ErrorKind | None:
    return kind.kind if isinstance(kind, ErrorTerminal) else None


def _replay_threads(
    direction: str,
    cfg: Configuration,
    recorded: list[tuple[str, int]],
    allow_safe_divergence: bool,
) -> tuple[Configuration, int | None, int]:
    """Drive cfg by the recorded thread ids. Rules must match entry for
    entry, except that (when allowed) the driven side may diverge by
    raising a permission or cast error; returns (final configuration,
    divergence step, steps taken)."""
    for i, (rule, tid) in enumerate(recorded):
        res = global_step(cfg, tid)
        if res == NOT_ENABLED:
            raise TheoremViolation(direction, i, f"thread {tid} not enabled")
        cfg, fired = res  # type: ignore[misc]
        if fired is None:
            raise TheoremViolation(direction, i, "value thread where a rule was recorded")
        if fired == rule:
            continue
        kind = _rule_error_kind(fired)
        if allow_safe_divergence and kind in SAFE_ERRORS:
            return cfg, i, i + 1
        raise TheoremViolation(direction, i, f"expected {rule}, fired {fired}")
    return cfg, None, len(recorded)


def diff_run(program: s.Program, seed: int, max_steps: int | None = 100_000) -> DiffRunReport:
    """Run the annotated program to a terminal under the seed, replay
    its schedule on the erased program, and assert the multistep
    guarantee; then symmetrically run the erased program first and
    replay on the annotated one."""
    erased_program = erase(program)
    verdicts = {"SameStep": 0, "SafeErred": 0, "BothErred": 0}

    # Direction 1: annotated first, erased replays.
    res_a = run(program, Seeded(seed), max_steps=max_steps)
    kind_a = _terminal_error_kind(res_a.terminal)
    cfg_e = Configuration.initial(erased_program.body)
    forward_diverged: int | None = None
    if kind_a in SAFE_ERRORS:
        prefix = res_a.trace[:-1]
        cfg_e, div, _ = _replay_threads("annotated->erased", cfg_e, prefix, False)
        verdicts["SameStep"] += len(prefix)
        final_rule, final_tid = res_a.trace[-1]
        res = global_step(cfg_e, final_tid)
        if res == NOT_ENABLED:
            raise TheoremViolation("annotated->erased", len(prefix),
                                   f"thread {final_tid} not enabled at the divergence point")
        cfg_e, fired = res  # type: ignore[misc]
        fired_kind = _rule_error_kind(fired)
        if fired_kind in SAFE_ERRORS:
            raise TheoremViolation(
                "annotated->erased", len(prefix),
                f"erased side raised {fired} at the divergence point",
            )
        forward_diverged = len(prefix)
        verdicts["SafeErred"] += 1
    else:
        cfg_e, div, _ = _replay_threads("annotated->erased", cfg_e, res_a.trace, False)
        verdicts["SameStep"] += len(res_a.trace)
        terminal_e = classify_terminal(cfg_e)
        if terminal_e is None:
            raise TheoremViolation("annotated->erased", len(res_a.trace),
                                   "erased side is not terminal after the full schedule")
        if _terminal_error_kind(terminal_e) != kind_a or (
            type(terminal_e) is not type(res_a.terminal)
        ):
            raise TheoremViolation(
                "annotated->erased", len(res_a.trace),
                f"terminals differ: {res_a.terminal} vs {terminal_e}",
            )
        if kind_a is not None:
            verdicts["BothErred"] += 1
        if _erase_heap(res_a.config.heap).snapshot_json() != cfg_e.heap.snapshot_json():
            raise TheoremViolation("annotated->erased", len(res_a.trace),
                                   "terminal heaps differ modulo erasure")

    # Direction 2: erased first, annotated replays.
    res_e = run(erased_program, Seeded(seed), max_steps=max_steps)
    kind_e = _terminal_error_kind(res_e.terminal)
    if kind_e in SAFE_ERRORS:
        raise TheoremViolation("erased", len(res_e.trace),
                               f"erased run terminated with {kind_e.value}")
    cfg_a = Configuration.initial(program.body)
    cfg_a, backward_diverged, taken = _replay_threads(
        "erased->annotated", cfg_a, res_e.trace, True
    )
    if backward_diverged is None:
        terminal_a = classify_terminal(cfg_a)
        if terminal_a is None:
            raise TheoremViolation("erased->annotated", len(res_e.trace),
                                   "annotated side is not terminal after the full schedule")
        if type(terminal_a) is not type(res_e.terminal) or (
            _terminal_error_kind(terminal_a) != kind_e
        ):
            raise TheoremViolation(
                "erased->annotated", len(res_e.trace),
                f"terminals differ: {res_e.terminal} vs {terminal_a}",
            )
        if _erase_heap(cfg_a.heap).snapshot_json() != res_e.config.heap.snapshot_json():
            raise TheoremViolation("erased->annotated", len(res_e.trace),
                                   "terminal heaps differ modulo erasure")

    from .scheduler import terminal_name

    return DiffRunReport(
        seed=seed,
        annotated_terminal=terminal_name(res_a.terminal),
        erased_terminal=terminal_name(res_e.terminal),
        annotated_steps=len(res_a.trace),
        erased_steps=len(res_e.trace),
        forward_diverged_at=forward_diverged,
        backward_diverged_at=backward_diverged,
        verdicts=verdicts,
    )
