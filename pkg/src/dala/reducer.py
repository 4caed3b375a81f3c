"""Single-thread small-step reduction: evaluation-context decomposition,
every reduction rule, every error rule, and the deep-copy helper.

step_thread is a pure transition function: it never mutates the input
heap. Rule selection is deterministic; for a fixed heap and thread at
most one rule applies. Error classification is checked in the order
absent (ErrA), existence (ErrN), permission (ErrP), mirroring the
premise order of the rules.

A handful of states have no applicable rule (field/method/copy/cast
operations on a channel-valued target, re-binding a let or spawn binder
that is already in the heap after re-entering a method body, reading an
unbound variable). These raise StuckThreadError loudly: they are
progress violations, not classifiable errors, and well-formed programs
produced by the corpus and the random generator never reach them.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

from .state import (
    Absent,
    Capability,
    Channel,
    EmptyChan,
    ErrorKind,
    Heap,
    HeapObject,
    Loc,
    Thread,
    Value,
    is_owner,
    local_owner,
    not_local_owner,
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
    Method,
    NestedTerm,
    ObjectLit,
    Recv,
    Send,
    Spawn,
    Term,
    VarUse,
)

__all__ = [
    "ALL_ERROR_RULES",
    "ALL_REDUCTION_RULES",
    "AlreadyValue",
    "BlockedThread",
    "Erred",
    "EvalContext",
    "Finished",
    "StepOutcome",
    "Stepped",
    "StuckThreadError",
    "decompose",
    "deep_copy",
    "plug",
    "step_thread",
    "substitute",
]


class StuckThreadError(Exception):
    """No rule applies: a progress violation surfaced loudly."""


# Rule labels, exactly as the rules name them.
R_LET = "R-Let"
R_VAR = "R-Var"
R_CONSUME = "R-Consume"
R_FIELD = "R-Field"
R_FIELD_ASSIGN = "R-FieldAssign"
R_NEW = "R-New"
R_CALL = "R-Call"
R_CAST_LOC = "R-CastLoc"
R_SPAWN = "R-Spawn"
R_RECV = "R-Recv"
R_SEND_BLOCK = "R-SendBlock"
R_SEND_UNBLOCK = "R-SendUnblock"
R_COPY = "R-Copy"

E_NO_SUCH_FIELD = "E-NoSuchField"
E_NO_SUCH_METHOD = "E-NoSuchMethod"
E_NO_SUCH_FIELD_ASSIGN = "E-NoSuchFieldAssign"
E_SEND_BAD = "E-SendBadTargetOrArgument"
E_RECV_BAD = "E-RecvBadTarget"
E_CAST_ERROR = "E-CastError"
E_ABSENT_VAR = "E-AbsentVar"
E_CONSUME = "E-Consume"
E_ABSENT_TARGET = "E-AbsentTarget"
E_ABSENT_TARGET_ACCESS = "E-AbsentTargetAccess"
E_ABSENT_FIELD_ASSIGN = "E-AbsentFieldAssign"
E_ABSENT_COPY_TARGET = "E-AbsentCopyTarget"
E_ALIAS_ISO = "E-AliasIso"
E_ISO_FIELD = "E-IsoField"
E_BAD_INSTANTIATION = "E-BadInstantiation"
E_BAD_FIELD_ASSIGN = "E-BadFieldAssign"
E_COPY_TARGET = "E-CopyTarget"
E_LOCAL_FIELD = "E-LocalField"
E_SENDING_LOCAL = "E-SendingLocal"

ALL_REDUCTION_RULES = (
    R_LET, R_VAR, R_CONSUME, R_FIELD, R_FIELD_ASSIGN, R_NEW, R_CALL,
    R_CAST_LOC, R_SPAWN, R_RECV, R_SEND_BLOCK, R_SEND_UNBLOCK, R_COPY,
)
ALL_ERROR_RULES = (
    E_NO_SUCH_FIELD, E_NO_SUCH_METHOD, E_NO_SUCH_FIELD_ASSIGN, E_SEND_BAD,
    E_RECV_BAD, E_CAST_ERROR, E_ABSENT_VAR, E_CONSUME, E_ABSENT_TARGET,
    E_ABSENT_TARGET_ACCESS, E_ABSENT_FIELD_ASSIGN, E_ABSENT_COPY_TARGET,
    E_ALIAS_ISO, E_ISO_FIELD, E_BAD_INSTANTIATION, E_BAD_FIELD_ASSIGN,
    E_COPY_TARGET, E_LOCAL_FIELD, E_SENDING_LOCAL,
)

ERROR_RULE_KINDS = {
    E_NO_SUCH_FIELD: ErrorKind.NORMAL,
    E_NO_SUCH_METHOD: ErrorKind.NORMAL,
    E_NO_SUCH_FIELD_ASSIGN: ErrorKind.NORMAL,
    E_SEND_BAD: ErrorKind.NORMAL,
    E_RECV_BAD: ErrorKind.NORMAL,
    E_CAST_ERROR: ErrorKind.CAST,
    E_ABSENT_VAR: ErrorKind.ABSENT,
    E_CONSUME: ErrorKind.ABSENT,
    E_ABSENT_TARGET: ErrorKind.ABSENT,
    E_ABSENT_TARGET_ACCESS: ErrorKind.ABSENT,
    E_ABSENT_FIELD_ASSIGN: ErrorKind.ABSENT,
    E_ABSENT_COPY_TARGET: ErrorKind.ABSENT,
    E_ALIAS_ISO: ErrorKind.PERMISSION,
    E_ISO_FIELD: ErrorKind.PERMISSION,
    E_BAD_INSTANTIATION: ErrorKind.PERMISSION,
    E_BAD_FIELD_ASSIGN: ErrorKind.PERMISSION,
    E_COPY_TARGET: ErrorKind.PERMISSION,
    E_LOCAL_FIELD: ErrorKind.PERMISSION,
    E_SENDING_LOCAL: ErrorKind.PERMISSION,
}

WAITING_RECV = "WaitingRecv"
WAITING_SEND_FREE = "WaitingSendFree"
WAITING_SEND_ACK = "WaitingSendAck"


# ------------------------------------------------------------------
# Step outcomes
# ------------------------------------------------------------------


@dataclass(frozen=True)
class Stepped:
    """One rule fired. `threads` carries exactly one (tid, term) pair,
    except R-Spawn which carries two. `access` reports field and
    channel traffic for race analysis: ("read"|"write", loc, field) or
    ("send"|"recv", payload value)."""

    heap: Heap
    threads: tuple[tuple[int, Term], ...]
    rule: str
    access: tuple | None = None


@dataclass(frozen=True)
class BlockedThread:
    reason: str  # WaitingRecv | WaitingSendFree | WaitingSendAck


@dataclass(frozen=True)
class Finished:
    value: Value


@dataclass(frozen=True)
class Erred:
    kind: ErrorKind
    rule: str


StepOutcome = Stepped | BlockedThread | Finished | Erred


# ------------------------------------------------------------------
# Evaluation contexts
# ------------------------------------------------------------------


@dataclass(frozen=True)
class FLet:
    binder: str
    rest: Term


@dataclass(frozen=True)
class FNested:
    pass


@dataclass(frozen=True)
class FAssignValue:
    target: str
    field: str


@dataclass(frozen=True)
class FCallArg:
    target: str
    method: str


@dataclass(frozen=True)
class FSendTarget:
    payload: Expression


@dataclass(frozen=True)
class FSendPayload:
    target: Lit


@dataclass(frozen=True)
class FRecvTarget:
    pass


@dataclass(frozen=True)
class FCastValue:
    cap: Capability


@dataclass(frozen=True)
class FObjField:
    cap: Capability
    fields: tuple[tuple[str, Expression], ...]
    index: int
    methods: tuple[Method, ...]


Frame = (
    FLet | FNested | FAssignValue | FCallArg | FSendTarget | FSendPayload
    | FRecvTarget | FCastValue | FObjField
)


@dataclass(frozen=True)
class EvalContext:
    """A term with a hole, as a stack of frames, outermost first."""

    frames: tuple[Frame, ...]


@dataclass(frozen=True)
class AlreadyValue:
    value: Value


Redex = Expression | LetIn


def _is_value(e: object) -> bool:
    return isinstance(e, Lit)


def decompose(t: Term) -> tuple[EvalContext, Redex] | AlreadyValue:
    """Unique decomposition into an evaluation context and the redex,
    or AlreadyValue for a bare value term."""
    frames: list[Frame] = []
    redex = _decompose_term(t, frames)
    if redex is None:
        assert isinstance(t, Lit)
        return AlreadyValue(t.value)
    return EvalContext(tuple(frames)), redex


def _decompose_term(t: Term, frames: list[Frame]) -> Redex | None:
    if isinstance(t, Lit):
        return None
    if isinstance(t, (VarUse, Consume)):
        return t
    assert isinstance(t, LetIn)
    inner = _decompose_expr(t.expr, frames, FLet(t.binder, t.rest))
    if inner is None:
        return t  # the let itself reduces (R-Let)
    return inner


def _decompose_expr(e: Expression, frames: list[Frame], outer: Frame) -> Redex | None:
    """Returns None when e is already a value (so `outer`'s construct
    is the redex); otherwise pushes frames and returns the redex."""
    if isinstance(e, Lit):
        return None
    frames.append(outer)
    if isinstance(e, (VarUse, Consume)):
        return e
    if isinstance(e, FieldRead):
        return e
    if isinstance(e, FieldWrite):
        if _is_value(e.value):
            return e
        frames.append(FAssignValue(e.target, e.field))
        return e.value
    if isinstance(e, Call):
        if _is_value(e.arg):
            return e
        frames.append(FCallArg(e.target, e.method))
        return e.arg
    if isinstance(e, Send):
        if not _is_value(e.target):
            frames.append(FSendTarget(e.payload))
            return e.target
        if not _is_value(e.payload):
            frames.append(FSendPayload(e.target))
            return e.payload
        return e
    if isinstance(e, Recv):
        if not _is_value(e.target):
            frames.append(FRecvTarget())
            return e.target
        return e
    if isinstance(e, Spawn):
        return e
    if isinstance(e, Blocked):
        return e
    if isinstance(e, CopyExpr):
        return e
    if isinstance(e, Cast):
        if not _is_value(e.value):
            frames.append(FCastValue(e.cap))
            return e.value
        return e
    if isinstance(e, ObjectLit):
        for i, (_, value) in enumerate(e.fields):
            if not _is_value(value):
                frames.append(FObjField(e.cap, e.fields, i, e.methods))
                return value
        return e
    if isinstance(e, NestedTerm):
        frames.pop()  # re-push via the nested walk
        frames.append(outer)
        frames.append(FNested())
        inner = _decompose_term(e.term, frames)
        assert inner is not None, "NestedTerm never wraps a bare value"
        return inner
    raise TypeError(e)


def _as_expr(cur: Term | Expression) -> Expression:
    return NestedTerm(cur) if isinstance(cur, LetIn) else cur


def plug(ctx: EvalContext, filler: Term | Expression) -> Term:
    """Plugging the filler back into the context reproduces a term."""
    cur: Term | Expression = filler
    for frame in reversed(ctx.frames):
        if isinstance(frame, FLet):
            cur = LetIn(frame.binder, _as_expr(cur), frame.rest)
        elif isinstance(frame, FNested):
            cur = _as_expr(cur)
        elif isinstance(frame, FAssignValue):
            cur = FieldWrite(frame.target, frame.field, cur)
        elif isinstance(frame, FCallArg):
            cur = Call(frame.target, frame.method, cur)
        elif isinstance(frame, FSendTarget):
            cur = Send(cur, frame.payload)
        elif isinstance(frame, FSendPayload):
            cur = Send(frame.target, cur)
        elif isinstance(frame, FRecvTarget):
            cur = Recv(cur)
        elif isinstance(frame, FCastValue):
            cur = Cast(frame.cap, cur)
        elif isinstance(frame, FObjField):
            fields = (
                frame.fields[: frame.index]
                + ((frame.fields[frame.index][0], cur),)
                + frame.fields[frame.index + 1:]
            )
            cur = ObjectLit(frame.cap, fields, frame.methods)
        else:
            raise TypeError(frame)
    if isinstance(cur, (LetIn, VarUse, Consume, Lit)):
        return cur
    raise StuckThreadError(f"context plug produced a non-term: {cur!r}")


# ------------------------------------------------------------------
# Substitution (capture-avoiding renaming of free names)
# ------------------------------------------------------------------


def substitute(t: Term, mapping: dict[str, str]) -> Term:
    """Rename free occurrences of the mapped names, respecting let,
    spawn, and method binders. Used by R-Call for self and the
    parameter; the fresh targets cannot be captured."""
    return _subst_term(t, mapping)


def _lookup(mapping: dict[str, str], name: str) -> str:
    return mapping.get(name, name)


def _subst_term(t: Term, m: dict[str, str]) -> Term:
    if not m:
        return t
    if isinstance(t, VarUse):
        return VarUse(_lookup(m, t.name)) if t.name in m else t
    if isinstance(t, Consume):
        return Consume(_lookup(m, t.name)) if t.name in m else t
    if isinstance(t, Lit):
        return t
    assert isinstance(t, LetIn)
    inner = {k: v for k, v in m.items() if k != t.binder}
    return LetIn(t.binder, _subst_expr(t.expr, m), _subst_term(t.rest, inner))


def _subst_expr(e: Expression, m: dict[str, str]) -> Expression:
    if not m:
        return e
    if isinstance(e, (VarUse, Consume, Lit)):
        return _subst_term(e, m)  # type: ignore[return-value]
    if isinstance(e, FieldRead):
        return FieldRead(_lookup(m, e.target), e.field)
    if isinstance(e, FieldWrite):
        return FieldWrite(_lookup(m, e.target), e.field, _subst_term(e.value, m))
    if isinstance(e, Call):
        return Call(_lookup(m, e.target), e.method, _subst_term(e.arg, m))
    if isinstance(e, Send):
        return Send(_subst_term(e.target, m), _subst_term(e.payload, m))
    if isinstance(e, Recv):
        return Recv(_subst_term(e.target, m))
    if isinstance(e, Spawn):
        inner = {k: v for k, v in m.items() if k != e.binder}
        return Spawn(e.binder, _subst_term(e.body, inner))
    if isinstance(e, Blocked):
        return e
    if isinstance(e, CopyExpr):
        return CopyExpr(e.cap, _lookup(m, e.source))
    if isinstance(e, Cast):
        return Cast(e.cap, _subst_term(e.value, m))
    if isinstance(e, ObjectLit):
        fields = tuple((n, _subst_term(v, m)) for n, v in e.fields)
        methods = tuple(
            Method(
                meth.name,
                meth.param,
                _subst_term(
                    meth.body,
                    {k: v for k, v in m.items() if k not in (SELF, meth.param)},
                ),
            )
            for meth in e.methods
        )
        return ObjectLit(e.cap, fields, methods)
    if isinstance(e, NestedTerm):
        return NestedTerm(_subst_term(e.term, m))
    raise TypeError(e)


# ------------------------------------------------------------------
# Deep copy (the OkDup helper)
# ------------------------------------------------------------------


def deep_copy(h: Heap, cap: Capability, root: int, owner: int) -> tuple[Heap, int]:
    """Structure-isomorphic copy of the object graph rooted at `root`,
    every copy tagged `cap` and owned by `owner`. Shared substructure
    is copied once; the original graph is untouched. Fields are visited
    in declaration order and fresh ids assigned in visit order."""
    h2 = h.clone()
    return h2, _deep_copy_into(h2, cap, root, owner)


def _deep_copy_into(h: Heap, cap: Capability, root: int, owner: int) -> int:
    copies: dict[int, int] = {}

    def copy_of(ident: int) -> int:
        if ident in copies:
            return copies[ident]
        obj = h.object_at(ident)
        assert obj is not None, "the reachable object graph excludes channels"
        fresh = h.alloc.fresh_location()
        assert fresh not in h.locs, "allocator behind the heap domain"
        copies[ident] = fresh
        fields: dict[str, Value] = {}
        h.locs[fresh] = HeapObject(cap, owner, fields, obj.methods)
        for name, v in obj.fields.items():
            fields[name] = Loc(copy_of(v.ident)) if isinstance(v, Loc) else v
        return fresh

    return copy_of(root)


# ------------------------------------------------------------------
# step_thread: one rule per (heap, thread)
# ------------------------------------------------------------------


def step_thread(h: Heap, th: Thread) -> StepOutcome:
    """Apply the single applicable rule to the thread, returning the
    new heap and thread terms, a blocking reason, a finished value, or
    an error. Never mutates its inputs."""
    d = decompose(th.term)
    if isinstance(d, AlreadyValue):
        return Finished(d.value)
    ctx, redex = d
    return _dispatch(h, th.owner, ctx, redex)


def _stepped(
    h: Heap,
    tid: int,
    ctx: EvalContext,
    filler: Term | Expression,
    rule: str,
    extra: tuple[tuple[int, Term], ...] = (),
    access: tuple | None = None,
) -> Stepped:
    term = plug(ctx, filler)
    return Stepped(h, ((tid, term),) + extra, rule, access)


def _dispatch(h: Heap, tid: int, ctx: EvalContext, redex: Redex) -> StepOutcome:
    if isinstance(redex, LetIn):
        return _step_let(h, tid, ctx, redex)
    if isinstance(redex, VarUse):
        return _step_var(h, tid, ctx, redex)
    if isinstance(redex, Consume):
        return _step_consume(h, tid, ctx, redex)
    if isinstance(redex, FieldRead):
        return _step_field(h, tid, ctx, redex)
    if isinstance(redex, FieldWrite):
        return _step_assign(h, tid, ctx, redex)
    if isinstance(redex, Call):
        return _step_call(h, tid, ctx, redex)
    if isinstance(redex, ObjectLit):
        return _step_new(h, tid, ctx, redex)
    if isinstance(redex, Cast):
        return _step_cast(h, tid, ctx, redex)
    if isinstance(redex, Spawn):
        return _step_spawn(h, tid, ctx, redex)
    if isinstance(redex, Send):
        return _step_send(h, tid, ctx, redex)
    if isinstance(redex, Recv):
        return _step_recv(h, tid, ctx, redex)
    if isinstance(redex, Blocked):
        return _step_unblock(h, tid, ctx, redex)
    if isinstance(redex, CopyExpr):
        return _step_copy(h, tid, ctx, redex)
    raise StuckThreadError(f"no rule for redex {redex!r}")


def _step_let(h: Heap, tid: int, ctx: EvalContext, redex: LetIn) -> StepOutcome:
    assert isinstance(redex.expr, Lit)
    if redex.binder in h.vars:
        raise StuckThreadError(
            f"let binder {redex.binder!r} already bound in the heap "
            "(method body re-entered?)"
        )
    h2 = h.clone()
    h2.vars[redex.binder] = redex.expr.value
    return _stepped(h2, tid, ctx, redex.rest, R_LET)


def _step_var(h: Heap, tid: int, ctx: EvalContext, redex: VarUse) -> StepOutcome:
    v = h.vars.get(redex.name)
    if v is None:
        raise StuckThreadError(f"unbound variable {redex.name!r}")
    if isinstance(v, Absent):
        return Erred(ErrorKind.ABSENT, E_ABSENT_VAR)
    if h.is_iso(v):
        return Erred(ErrorKind.PERMISSION, E_ALIAS_ISO)
    return _stepped(h, tid, ctx, Lit(v), R_VAR)


def _step_consume(h: Heap, tid: int, ctx: EvalContext, redex: Consume) -> StepOutcome:
    v = h.vars.get(redex.name)
    if v is None:
        raise StuckThreadError(f"unbound variable {redex.name!r}")
    if isinstance(v, Absent):
        return Erred(ErrorKind.ABSENT, E_CONSUME)
    cap = h.cap_of(v)
    if cap is None:
        raise StuckThreadError(f"consume of a dangling value {v!r}")
    was_channel = isinstance(v, Loc) and h.channel_at(v.ident) is not None
    h2 = h.clone()
    h2.vars[redex.name] = Absent(cap, channel=was_channel)
    return _stepped(h2, tid, ctx, Lit(v), R_CONSUME)


def _resolve_object_target(
    h: Heap, name: str, absent_rule: str, op: str
) -> HeapObject | Erred:
    v = h.vars.get(name)
    if v is None:
        raise StuckThreadError(f"unbound variable {name!r}")
    if isinstance(v, Absent):
        return Erred(ErrorKind.ABSENT, absent_rule)
    assert isinstance(v, Loc)
    obj = h.object_at(v.ident)
    if obj is None:
        raise StuckThreadError(f"{op} on a channel target {name!r}")
    return obj


def _step_field(h: Heap, tid: int, ctx: EvalContext, redex: FieldRead) -> StepOutcome:
    obj = _resolve_object_target(h, redex.target, E_ABSENT_TARGET_ACCESS, "field read")
    if isinstance(obj, Erred):
        return obj
    target = h.vars[redex.target]
    assert isinstance(target, Loc)
    if redex.field not in obj.fields:
        return Erred(ErrorKind.NORMAL, E_NO_SUCH_FIELD)
    if not_local_owner(h, tid, target):
        return Erred(ErrorKind.PERMISSION, E_LOCAL_FIELD)
    v = obj.fields[redex.field]
    if h.is_iso(v):
        return Erred(ErrorKind.PERMISSION, E_ISO_FIELD)
    return _stepped(h, tid, ctx, Lit(v), R_FIELD,
                    access=("read", target.ident, redex.field))


def _step_assign(h: Heap, tid: int, ctx: EvalContext, redex: FieldWrite) -> StepOutcome:
    obj = _resolve_object_target(h, redex.target, E_ABSENT_FIELD_ASSIGN, "field write")
    if isinstance(obj, Erred):
        return obj
    target = h.vars[redex.target]
    assert isinstance(target, Loc)
    if redex.field not in obj.fields:
        return Erred(ErrorKind.NORMAL, E_NO_SUCH_FIELD_ASSIGN)
    assert isinstance(redex.value, Lit)
    v = redex.value.value
    bad = (
        obj.cap is Capability.IMM
        or not h.ok_ref(obj.cap, v)
        or not_local_owner(h, tid, target)
        or (h.is_local(target) and is_owner(h, tid, target) and not_local_owner(h, tid, v))
    )
    if bad:
        return Erred(ErrorKind.PERMISSION, E_BAD_FIELD_ASSIGN)
    h2 = h.clone()
    obj2 = h2.object_at(target.ident)
    assert obj2 is not None
    old = obj2.fields[redex.field]
    obj2.fields[redex.field] = v
    return _stepped(h2, tid, ctx, Lit(old), R_FIELD_ASSIGN,
                    access=("write", target.ident, redex.field))


def _step_call(h: Heap, tid: int, ctx: EvalContext, redex: Call) -> StepOutcome:
    obj = _resolve_object_target(h, redex.target, E_ABSENT_TARGET, "method call")
    if isinstance(obj, Erred):
        return obj
    target = h.vars[redex.target]
    if redex.method not in obj.methods:
        return Erred(ErrorKind.NORMAL, E_NO_SUCH_METHOD)
    assert isinstance(redex.arg, Lit)
    meth = obj.methods[redex.method]
    h2 = h.clone()
    self_var = h2.alloc.fresh_var()
    arg_var = h2.alloc.fresh_var()
    h2.vars[self_var] = target
    h2.vars[arg_var] = redex.arg.value
    body = substitute(meth.body, {SELF: self_var, meth.param: arg_var})
    return _stepped(h2, tid, ctx, body, R_CALL)


def _step_new(h: Heap, tid: int, ctx: EvalContext, redex: ObjectLit) -> StepOutcome:
    values: list[tuple[str, Value]] = []
    for name, atom in redex.fields:
        assert isinstance(atom, Lit)
        values.append((name, atom.value))
    bad = any(not h.ok_ref(redex.cap, v) for _, v in values) or (
        redex.cap is Capability.LOCAL
        and any(not_local_owner(h, tid, v) for _, v in values)
    )
    if bad:
        return Erred(ErrorKind.PERMISSION, E_BAD_INSTANTIATION)
    h2 = h.clone()
    ident = h2.alloc.fresh_location()
    h2.locs[ident] = HeapObject(
        redex.cap, tid, dict(values), {m.name: m for m in redex.methods}
    )
    return _stepped(h2, tid, ctx, Lit(Loc(ident)), R_NEW)


def _step_cast(h: Heap, tid: int, ctx: EvalContext, redex: Cast) -> StepOutcome:
    assert isinstance(redex.value, Lit)
    v = redex.value.value
    assert isinstance(v, Loc), "cast operands evaluate to locations"
    obj = h.object_at(v.ident)
    if obj is None:
        raise StuckThreadError("cast on a channel target")
    if obj.cap is redex.cap:
        return _stepped(h, tid, ctx, Lit(v), R_CAST_LOC)
    return Erred(ErrorKind.CAST, E_CAST_ERROR)


def _step_spawn(h: Heap, tid: int, ctx: EvalContext, redex: Spawn) -> StepOutcome:
    if redex.binder in h.vars:
        raise StuckThreadError(
            f"spawn binder {redex.binder!r} already bound in the heap"
        )
    h2 = h.clone()
    ident = h2.alloc.fresh_location()
    msg = h2.alloc.fresh_msg_id()
    child = h2.alloc.fresh_thread_id()
    h2.vars[redex.binder] = Loc(ident)
    h2.locs[ident] = Channel(msg, EmptyChan())
    return _stepped(
        h2, tid, ctx, Lit(Loc(ident)), R_SPAWN, extra=((child, redex.body),)
    )


def _step_send(h: Heap, tid: int, ctx: EvalContext, redex: Send) -> StepOutcome:
    assert isinstance(redex.target, Lit) and isinstance(redex.payload, Lit)
    target = redex.target.value
    payload = redex.payload.value
    assert isinstance(target, Loc), "send targets evaluate to locations"
    chan = h.channel_at(target.ident)
    payload_is_chan = isinstance(payload, Loc) and h.channel_at(payload.ident) is not None
    if chan is None or payload_is_chan:
        return Erred(ErrorKind.NORMAL, E_SEND_BAD)
    if h.is_local(payload):
        return Erred(ErrorKind.PERMISSION, E_SENDING_LOCAL)
    if not isinstance(chan.payload, EmptyChan):
        return BlockedThread(WAITING_SEND_FREE)
    h2 = h.clone()
    chan2 = h2.channel_at(target.ident)
    assert chan2 is not None
    msg = h2.alloc.fresh_msg_id()
    chan2.msg_id = msg
    chan2.payload = payload
    return _stepped(h2, tid, ctx, Blocked(msg, target), R_SEND_BLOCK,
                    access=("send", payload))


def _step_recv(h: Heap, tid: int, ctx: EvalContext, redex: Recv) -> StepOutcome:
    assert isinstance(redex.target, Lit)
    target = redex.target.value
    assert isinstance(target, Loc), "recv targets evaluate to locations"
    chan = h.channel_at(target.ident)
    if chan is None:
        return Erred(ErrorKind.NORMAL, E_RECV_BAD)
    if isinstance(chan.payload, EmptyChan):
        return BlockedThread(WAITING_RECV)
    payload = chan.payload
    h2 = h.clone()
    chan2 = h2.channel_at(target.ident)
    assert chan2 is not None
    chan2.payload = EmptyChan()
    return _stepped(h2, tid, ctx, Lit(payload), R_RECV, access=("recv", payload))


def _step_unblock(h: Heap, tid: int, ctx: EvalContext, redex: Blocked) -> StepOutcome:
    chan = h.channel_at(redex.chan.ident)
    if chan is None:
        raise StuckThreadError("pending-send marker on a non-channel")
    if isinstance(chan.payload, EmptyChan) or chan.msg_id != redex.msg_id:
        return _stepped(h, tid, ctx, Lit(redex.chan), R_SEND_UNBLOCK)
    return BlockedThread(WAITING_SEND_ACK)


def _step_copy(h: Heap, tid: int, ctx: EvalContext, redex: CopyExpr) -> StepOutcome:
    if redex.cap is Capability.ISO:
        raise StuckThreadError("copy at iso capability (rejected statically)")
    v = h.vars.get(redex.source)
    if v is None:
        raise StuckThreadError(f"unbound variable {redex.source!r}")
    if isinstance(v, Absent):
        return Erred(ErrorKind.ABSENT, E_ABSENT_COPY_TARGET)
    assert isinstance(v, Loc)
    if not_local_owner(h, tid, v):
        return Erred(ErrorKind.PERMISSION, E_COPY_TARGET)
    if h.object_at(v.ident) is None:
        raise StuckThreadError("copy of a channel target")
    h2 = h.clone()
    ident = _deep_copy_into(h2, redex.cap, v.ident, tid)
    return _stepped(h2, tid, ctx, Lit(Loc(ident)), R_COPY)
