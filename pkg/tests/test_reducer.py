import pytest

from dala.reducer import (
    AlreadyValue,
    BlockedThread,
    Erred,
    Finished,
    Stepped,
    StuckThreadError,
    decompose,
    deep_copy,
    plug,
    step_thread,
    substitute,
)
from dala.state import (
    Absent,
    Capability,
    Channel,
    EmptyChan,
    ErrorKind,
    Heap,
    HeapObject,
    Loc,
    Thread,
)
from dala.syntax import (
    Blocked,
    Call,
    Cast,
    Consume,
    CopyExpr,
    FieldRead,
    FieldWrite,
    LetIn,
    Lit,
    Method,
    ObjectLit,
    Recv,
    Send,
    Spawn,
    VarUse,
    parse,
)

IMM, ISO, LOCAL, UNSAFE = (
    Capability.IMM, Capability.ISO, Capability.LOCAL, Capability.UNSAFE
)


def _obj(cap, owner=0, fields=None, methods=None):
    return HeapObject(cap, owner, dict(fields or {}), dict(methods or {}))


def _heap(**vars_):
    h = Heap()
    h.vars.update(vars_)
    h.alloc.next_loc = 100  # hand-chosen ids stay below the allocator
    return h


# ------------------------------------------------------------------
# Decomposition
# ------------------------------------------------------------------


def test_decompose_let_hole():
    t = LetIn("x", VarUse("y"), VarUse("x"))
    ctx, redex = decompose(t)
    assert redex == VarUse("y")
    assert plug(ctx, redex) == t


def test_decompose_object_fields_left_to_right():
    lit = ObjectLit(UNSAFE, (("f1", Lit(Loc(7))), ("f2", VarUse("y"))), ())
    t = LetIn("x", lit, VarUse("x"))
    ctx, redex = decompose(t)
    assert redex == VarUse("y")
    assert plug(ctx, redex) == t


def test_decompose_bare_value():
    assert decompose(Lit(Loc(3))) == AlreadyValue(Loc(3))


def test_decompose_send_target_before_payload():
    t = LetIn("x", Send(VarUse("c"), VarUse("p")), VarUse("x"))
    _, redex = decompose(t)
    assert redex == VarUse("c")
    t2 = LetIn("x", Send(Lit(Loc(1)), VarUse("p")), VarUse("x"))
    _, redex2 = decompose(t2)
    assert redex2 == VarUse("p")


def test_decompose_let_with_value_is_the_redex():
    t = LetIn("x", Lit(Loc(1)), VarUse("x"))
    ctx, redex = decompose(t)
    assert redex is t and ctx.frames == ()


def test_plug_roundtrip_on_program_states():
    # plug(decompose(t)) == t along a real reduction sequence
    h = Heap()
    th = Thread(0, parse("let a = object imm { } in let b = a in b").body)
    for _ in range(4):
        d = decompose(th.term)
        if isinstance(d, AlreadyValue):
            break
        ctx, redex = d
        assert plug(ctx, redex) == th.term
        out = step_thread(h, th)
        if not isinstance(out, Stepped):
            break
        h = out.heap
        th = Thread(0, out.threads[0][1])


# ------------------------------------------------------------------
# Variable reads, consume
# ------------------------------------------------------------------


def test_r_var_reads_non_iso_location():
    h = _heap(x=Loc(1))
    h.locs[1] = _obj(UNSAFE)
    out = step_thread(h, Thread(0, LetIn("y", VarUse("x"), VarUse("y"))))
    assert isinstance(out, Stepped) and out.rule == "R-Var"
    assert out.threads[0][1] == LetIn("y", Lit(Loc(1)), VarUse("y"))


def test_e_alias_iso_on_iso_variable_read():
    h = _heap(x=Loc(1))
    h.locs[1] = _obj(ISO)
    out = step_thread(h, Thread(0, LetIn("y", VarUse("x"), VarUse("y"))))
    assert out == Erred(ErrorKind.PERMISSION, "E-AliasIso")


def test_e_absent_var():
    h = _heap(x=Absent(ISO))
    out = step_thread(h, Thread(0, LetIn("y", VarUse("x"), VarUse("y"))))
    assert out == Erred(ErrorKind.ABSENT, "E-AbsentVar")


def test_r_consume_leaves_absent_token_with_recorded_cap():
    h = _heap(x=Loc(1))
    h.locs[1] = _obj(ISO)
    out = step_thread(h, Thread(0, LetIn("y", Consume("x"), VarUse("y"))))
    assert isinstance(out, Stepped) and out.rule == "R-Consume"
    assert out.heap.vars["x"] == Absent(ISO)
    assert out.threads[0][1] == LetIn("y", Lit(Loc(1)), VarUse("y"))


def test_e_consume_on_absent():
    h = _heap(x=Absent(UNSAFE))
    out = step_thread(h, Thread(0, LetIn("y", Consume("x"), VarUse("y"))))
    assert out == Erred(ErrorKind.ABSENT, "E-Consume")


def test_consume_of_channel_records_channel_provenance():
    h = _heap(x=Loc(1))
    h.locs[1] = Channel(1, EmptyChan())
    out = step_thread(h, Thread(0, LetIn("y", Consume("x"), VarUse("y"))))
    assert out.heap.vars["x"] == Absent(LOCAL, channel=True)


# ------------------------------------------------------------------
# Field read
# ------------------------------------------------------------------


def test_r_field_reduces_to_stored_value():
    h = _heap(x=Loc(1))
    h.locs[1] = _obj(UNSAFE, fields={"f": Loc(2)})
    h.locs[2] = _obj(IMM)
    out = step_thread(h, Thread(0, LetIn("y", FieldRead("x", "f"), VarUse("y"))))
    assert isinstance(out, Stepped) and out.rule == "R-Field"
    assert out.access == ("read", 1, "f")
    assert out.threads[0][1].expr == Lit(Loc(2))


def test_e_iso_field_screens_iso_reads():
    h = _heap(x=Loc(1))
    h.locs[1] = _obj(UNSAFE, fields={"f": Loc(2)})
    h.locs[2] = _obj(ISO)
    out = step_thread(h, Thread(0, LetIn("y", FieldRead("x", "f"), VarUse("y"))))
    assert out == Erred(ErrorKind.PERMISSION, "E-IsoField")


def test_e_local_field_for_unowned_target():
    h = _heap(x=Loc(1))
    h.locs[1] = _obj(LOCAL, owner=5, fields={"f": Loc(2)})
    h.locs[2] = _obj(IMM)
    out = step_thread(h, Thread(0, LetIn("y", FieldRead("x", "f"), VarUse("y"))))
    assert out == Erred(ErrorKind.PERMISSION, "E-LocalField")


def test_e_no_such_field_before_permission():
    # missing field on an unowned local is ErrN, not ErrP
    h = _heap(x=Loc(1))
    h.locs[1] = _obj(LOCAL, owner=5)
    out = step_thread(h, Thread(0, LetIn("y", FieldRead("x", "f"), VarUse("y"))))
    assert out == Erred(ErrorKind.NORMAL, "E-NoSuchField")


def test_e_absent_target_access_before_existence():
    h = _heap(x=Absent(UNSAFE))
    out = step_thread(h, Thread(0, LetIn("y", FieldRead("x", "f"), VarUse("y"))))
    assert out == Erred(ErrorKind.ABSENT, "E-AbsentTargetAccess")


# ------------------------------------------------------------------
# Field assignment (swap semantics)
# ------------------------------------------------------------------


def test_r_field_assign_swaps_and_returns_old_value():
    h = _heap(x=Loc(1))
    h.locs[1] = _obj(UNSAFE, fields={"f": Loc(2)})
    h.locs[2] = _obj(UNSAFE)
    h.locs[3] = _obj(UNSAFE)
    t = LetIn("y", FieldWrite("x", "f", Lit(Loc(3))), VarUse("y"))
    out = step_thread(h, Thread(0, t))
    assert isinstance(out, Stepped) and out.rule == "R-FieldAssign"
    assert out.heap.locs[1].fields["f"] == Loc(3)
    assert out.threads[0][1].expr == Lit(Loc(2))
    assert out.access == ("write", 1, "f")
    # input heap untouched
    assert h.locs[1].fields["f"] == Loc(2)


def test_e_bad_field_assign_on_immutable():
    h = _heap(x=Loc(1))
    h.locs[1] = _obj(IMM, fields={"f": Loc(2)})
    h.locs[2] = _obj(IMM)
    t = LetIn("y", FieldWrite("x", "f", Lit(Loc(2))), VarUse("y"))
    out = step_thread(h, Thread(0, t))
    assert out == Erred(ErrorKind.PERMISSION, "E-BadFieldAssign")


def test_e_bad_field_assign_on_structural_violation():
    h = _heap(x=Loc(1))
    h.locs[1] = _obj(ISO, fields={"f": Loc(2)})
    h.locs[2] = _obj(IMM)
    h.locs[3] = _obj(UNSAFE)
    t = LetIn("y", FieldWrite("x", "f", Lit(Loc(3))), VarUse("y"))
    out = step_thread(h, Thread(0, t))
    assert out == Erred(ErrorKind.PERMISSION, "E-BadFieldAssign")


def test_e_bad_field_assign_foreign_local_source():
    # owned local target, local source owned elsewhere
    h = _heap(x=Loc(1))
    h.locs[1] = _obj(LOCAL, owner=0, fields={"f": Loc(2)})
    h.locs[2] = _obj(IMM)
    h.locs[3] = _obj(LOCAL, owner=9)
    t = LetIn("y", FieldWrite("x", "f", Lit(Loc(3))), VarUse("y"))
    out = step_thread(h, Thread(0, t))
    assert out == Erred(ErrorKind.PERMISSION, "E-BadFieldAssign")


def test_e_no_such_field_assign():
    h = _heap(x=Loc(1))
    h.locs[1] = _obj(UNSAFE)
    t = LetIn("y", FieldWrite("x", "g", Lit(Loc(1))), VarUse("y"))
    assert step_thread(h, Thread(0, t)) == Erred(ErrorKind.NORMAL, "E-NoSuchFieldAssign")


# ------------------------------------------------------------------
# Object literals, casts, calls
# ------------------------------------------------------------------


def test_r_new_tags_owner_and_returns_fresh_location():
    h = Heap()
    t = LetIn("x", ObjectLit(LOCAL, (), ()), VarUse("x"))
    out = step_thread(h, Thread(7, t))
    assert out.rule == "R-New"
    loc = out.threads[0][1].expr.value
    obj = out.heap.locs[loc.ident]
    assert obj.cap is LOCAL and obj.owner == 7


def test_e_bad_instantiation_structural():
    h = _heap(u=Loc(1))
    h.locs[1] = _obj(UNSAFE)
    t = LetIn("x", ObjectLit(IMM, (("f", Lit(Loc(1))),), ()), VarUse("x"))
    assert step_thread(h, Thread(0, t)) == Erred(ErrorKind.PERMISSION, "E-BadInstantiation")


def test_e_bad_instantiation_foreign_local_in_local_literal():
    h = Heap()
    h.locs[1] = _obj(LOCAL, owner=9)
    t = LetIn("x", ObjectLit(LOCAL, (("f", Lit(Loc(1))),), ()), VarUse("x"))
    assert step_thread(h, Thread(0, t)) == Erred(ErrorKind.PERMISSION, "E-BadInstantiation")


def test_r_new_unsafe_literal_may_hold_foreign_local():
    # the owner check applies to local literals only
    h = Heap()
    h.locs[1] = _obj(LOCAL, owner=9)
    t = LetIn("x", ObjectLit(UNSAFE, (("f", Lit(Loc(1))),), ()), VarUse("x"))
    assert step_thread(h, Thread(0, t)).rule == "R-New"


def test_r_cast_loc_and_e_cast_error():
    h = _heap(x=Loc(1))
    h.locs[1] = _obj(IMM)
    ok = step_thread(h, Thread(0, LetIn("y", Cast(IMM, Lit(Loc(1))), VarUse("y"))))
    assert ok.rule == "R-CastLoc"
    bad = step_thread(h, Thread(0, LetIn("y", Cast(ISO, Lit(Loc(1))), VarUse("y"))))
    assert bad == Erred(ErrorKind.CAST, "E-CastError")


def test_r_call_binds_fresh_self_and_param():
    body = LetIn("r", FieldRead("self", "f"), VarUse("r"))
    h = _heap(x=Loc(1))
    h.locs[1] = _obj(UNSAFE, fields={"f": Loc(1)},
                     methods={"m": Method("m", "a", body)})
    t = LetIn("y", Call("x", "m", Lit(Loc(1))), VarUse("y"))
    out = step_thread(h, Thread(0, t))
    assert out.rule == "R-Call"
    new_vars = set(out.heap.vars) - set(h.vars)
    assert len(new_vars) == 2 and all(v.startswith("$") for v in new_vars)
    assert all(out.heap.vars[v] == Loc(1) for v in new_vars)
    # the spliced body references the fresh names, not self/param
    spliced = out.threads[0][1].expr
    assert "self" not in str(spliced)


def test_e_no_such_method_and_absent_target():
    h = _heap(x=Loc(1), gone=Absent(UNSAFE))
    h.locs[1] = _obj(UNSAFE)
    t = LetIn("y", Call("x", "m", Lit(Loc(1))), VarUse("y"))
    assert step_thread(h, Thread(0, t)) == Erred(ErrorKind.NORMAL, "E-NoSuchMethod")
    t2 = LetIn("y", Call("gone", "m", Lit(Loc(1))), VarUse("y"))
    assert step_thread(h, Thread(0, t2)) == Erred(ErrorKind.ABSENT, "E-AbsentTarget")


def test_method_reinvocation_is_a_loud_stuck_state():
    body = LetIn("zz", FieldRead("self", "f"), VarUse("zz"))
    h = _heap(x=Loc(1), zz=Loc(1))  # binder already bound: second entry
    h.locs[1] = _obj(UNSAFE, fields={"f": Loc(1)},
                     methods={"m": Method("m", "a", body)})
    out = step_thread(h, Thread(0, LetIn("y", Call("x", "m", Lit(Loc(1))), VarUse("y"))))
    assert out.rule == "R-Call"
    h2 = out.heap
    th = Thread(0, out.threads[0][1])
    out2 = step_thread(h2, th)  # field read inside the body
    th2 = Thread(0, out2.threads[0][1])
    with pytest.raises(StuckThreadError):
        step_thread(out2.heap, th2)  # let zz = ... with zz already bound


# ------------------------------------------------------------------
# Spawn, send, recv, unblock
# ------------------------------------------------------------------


def test_r_spawn_allocates_channel_and_second_thread():
    body = LetIn("g", Recv(VarUse("ch")), VarUse("g"))
    t = LetIn("c", Spawn("ch", body), VarUse("c"))
    out = step_thread(Heap(), Thread(0, t))
    assert out.rule == "R-Spawn"
    assert len(out.threads) == 2
    (tid0, t0), (tid1, t1) = out.threads
    assert tid0 == 0 and tid1 == 1 and t1 == body
    chan_loc = out.heap.vars["ch"]
    chan = out.heap.locs[chan_loc.ident]
    assert isinstance(chan, Channel) and chan.payload == EmptyChan()
    assert t0.expr == Lit(chan_loc)


def test_r_send_block_installs_message_and_marker():
    h = Heap()
    h.locs[1] = Channel(41, EmptyChan())
    h.locs[2] = _obj(IMM)
    t = LetIn("s", Send(Lit(Loc(1)), Lit(Loc(2))), VarUse("s"))
    out = step_thread(h, Thread(0, t))
    assert out.rule == "R-SendBlock"
    chan = out.heap.locs[1]
    assert chan.payload == Loc(2) and chan.msg_id != 41
    marker = out.threads[0][1].expr
    assert marker == Blocked(chan.msg_id, Loc(1))
    assert out.access == ("send", Loc(2))


def test_send_blocks_while_channel_full():
    h = Heap()
    h.locs[1] = Channel(4, Loc(2))
    h.locs[2] = _obj(IMM)
    t = LetIn("s", Send(Lit(Loc(1)), Lit(Loc(2))), VarUse("s"))
    assert step_thread(h, Thread(0, t)) == BlockedThread("WaitingSendFree")


def test_e_sending_local_payload():
    h = Heap()
    h.locs[1] = Channel(1, EmptyChan())
    h.locs[2] = _obj(LOCAL, owner=0)
    t = LetIn("s", Send(Lit(Loc(1)), Lit(Loc(2))), VarUse("s"))
    assert step_thread(h, Thread(0, t)) == Erred(ErrorKind.PERMISSION, "E-SendingLocal")


def test_e_send_bad_target_or_argument():
    h = Heap()
    h.locs[1] = _obj(UNSAFE)
    h.locs[2] = Channel(1, EmptyChan())
    t = LetIn("s", Send(Lit(Loc(1)), Lit(Loc(1))), VarUse("s"))
    assert step_thread(h, Thread(0, t)) == Erred(ErrorKind.NORMAL, "E-SendBadTargetOrArgument")
    t2 = LetIn("s", Send(Lit(Loc(2)), Lit(Loc(2))), VarUse("s"))
    assert step_thread(h, Thread(0, t2)) == Erred(ErrorKind.NORMAL, "E-SendBadTargetOrArgument")


def test_r_recv_takes_payload_and_keeps_msg_id():
    h = Heap()
    h.locs[1] = Channel(6, Loc(2))
    h.locs[2] = _obj(IMM)
    t = LetIn("g", Recv(Lit(Loc(1))), VarUse("g"))
    out = step_thread(h, Thread(0, t))
    assert out.rule == "R-Recv"
    chan = out.heap.locs[1]
    assert chan.payload == EmptyChan() and chan.msg_id == 6
    assert out.access == ("recv", Loc(2))


def test_recv_blocks_on_empty_channel():
    h = Heap()
    h.locs[1] = Channel(1, EmptyChan())
    t = LetIn("g", Recv(Lit(Loc(1))), VarUse("g"))
    assert step_thread(h, Thread(0, t)) == BlockedThread("WaitingRecv")


def test_e_recv_bad_target():
    h = Heap()
    h.locs[1] = _obj(UNSAFE)
    t = LetIn("g", Recv(Lit(Loc(1))), VarUse("g"))
    assert step_thread(h, Thread(0, t)) == Erred(ErrorKind.NORMAL, "E-RecvBadTarget")


def test_r_send_unblock_when_taken_or_overwritten():
    h = Heap()
    h.locs[1] = Channel(3, EmptyChan())  # taken: payload cleared
    t = LetIn("s", Blocked(3, Loc(1)), VarUse("s"))
    assert step_thread(h, Thread(0, t)).rule == "R-SendUnblock"
    h2 = Heap()
    h2.locs[1] = Channel(9, Loc(2))  # different message id
    h2.locs[2] = _obj(IMM)
    assert step_thread(h2, Thread(0, t)).rule == "R-SendUnblock"
    h3 = Heap()
    h3.locs[1] = Channel(3, Loc(2))  # own message still pending
    h3.locs[2] = _obj(IMM)
    assert step_thread(h3, Thread(0, t)) == BlockedThread("WaitingSendAck")


# ------------------------------------------------------------------
# Copy
# ------------------------------------------------------------------


def test_r_copy_single_object():
    h = _heap(x=Loc(1))
    h.locs[1] = _obj(UNSAFE, fields={"f": Loc(1)})
    t = LetIn("y", CopyExpr(IMM, "x"), VarUse("y"))
    out = step_thread(h, Thread(3, t))
    assert out.rule == "R-Copy"
    new = out.threads[0][1].expr.value
    copy = out.heap.locs[new.ident]
    assert copy.cap is IMM and copy.owner == 3
    assert copy.fields["f"] == Loc(new.ident)  # self-cycle preserved
    assert h.locs[1].fields["f"] == Loc(1)  # original untouched


def _canonical_shape(h, root):
    """Graph canonicalization: BFS numbering from the root."""
    order = {root: 0}
    queue = [root]
    shape = []
    while queue:
        ident = queue.pop(0)
        obj = h.locs[ident]
        row = []
        for fname, v in obj.fields.items():
            if v.ident not in order:
                order[v.ident] = len(order)
                queue.append(v.ident)
            row.append((fname, order[v.ident]))
        shape.append((order[ident], obj.cap, tuple(row)))
    return tuple(shape)


def test_r_copy_diamond_preserves_internal_aliasing():
    h = _heap(a=Loc(1))
    h.locs[4] = _obj(UNSAFE)
    h.locs[2] = _obj(UNSAFE, fields={"d": Loc(4)})
    h.locs[3] = _obj(UNSAFE, fields={"d": Loc(4)})
    h.locs[1] = _obj(UNSAFE, fields={"b": Loc(2), "c": Loc(3)})
    t = LetIn("y", CopyExpr(LOCAL, "a"), VarUse("y"))
    out = step_thread(h, Thread(0, t))
    new_root = out.threads[0][1].expr.value.ident
    new_ids = set(out.heap.locs) - set(h.locs)
    assert len(new_ids) == 4  # shared d copied once
    copied_b = out.heap.locs[new_root].fields["b"].ident
    copied_c = out.heap.locs[new_root].fields["c"].ident
    assert out.heap.locs[copied_b].fields["d"] == out.heap.locs[copied_c].fields["d"]
    # structure isomorphism modulo the capability retag
    original = _canonical_shape(h, 1)
    retagged = tuple((i, LOCAL, row) for i, _, row in original)
    assert _canonical_shape(out.heap, new_root) == retagged


def test_r_copy_twice_yields_disjoint_copies():
    h = _heap(x=Loc(1))
    h.locs[1] = _obj(UNSAFE)
    t = LetIn("y", CopyExpr(IMM, "x"), VarUse("y"))
    out1 = step_thread(h, Thread(0, t))
    out2 = step_thread(out1.heap, Thread(0, t))
    l1 = out1.threads[0][1].expr.value.ident
    l2 = out2.threads[0][1].expr.value.ident
    assert l1 != l2 != 1


def test_deep_copy_api_is_pure():
    h = _heap(x=Loc(1))
    h.locs[1] = _obj(UNSAFE)
    h2, new = deep_copy(h, IMM, 1, owner=5)
    assert new not in h.locs and new in h2.locs
    assert h2.locs[new].cap is IMM and h2.locs[new].owner == 5


def test_e_copy_target_and_absent():
    h = _heap(x=Loc(1), gone=Absent(UNSAFE))
    h.locs[1] = _obj(LOCAL, owner=9)
    t = LetIn("y", CopyExpr(UNSAFE, "x"), VarUse("y"))
    assert step_thread(h, Thread(0, t)) == Erred(ErrorKind.PERMISSION, "E-CopyTarget")
    t2 = LetIn("y", CopyExpr(UNSAFE, "gone"), VarUse("y"))
    assert step_thread(h, Thread(0, t2)) == Erred(ErrorKind.ABSENT, "E-AbsentCopyTarget")


# ------------------------------------------------------------------
# Determinism, totality, misc
# ------------------------------------------------------------------


def test_step_thread_is_deterministic():
    h = _heap(x=Loc(1))
    h.locs[1] = _obj(UNSAFE, fields={"f": Loc(1)})
    th = Thread(0, LetIn("y", FieldRead("x", "f"), VarUse("y")))
    a, b = step_thread(h, th), step_thread(h, th)
    assert a.rule == b.rule
    assert a.threads == b.threads
    assert a.heap.snapshot_json() == b.heap.snapshot_json()


def test_finished_on_bare_value():
    assert step_thread(Heap(), Thread(0, Lit(Loc(1)))) == Finished(Loc(1))


def test_channel_target_field_ops_are_stuck_not_misclassified():
    h = _heap(x=Loc(1))
    h.locs[1] = Channel(1, EmptyChan())
    with pytest.raises(StuckThreadError):
        step_thread(h, Thread(0, LetIn("y", FieldRead("x", "f"), VarUse("y"))))
    with pytest.raises(StuckThreadError):
        step_thread(h, Thread(0, LetIn("y", Call("x", "m", Lit(Loc(1))), VarUse("y"))))
    with pytest.raises(StuckThreadError):
        step_thread(h, Thread(0, LetIn("y", CopyExpr(UNSAFE, "x"), VarUse("y"))))


def test_substitute_respects_binders():
    body = LetIn(
        "a",
        ObjectLit(UNSAFE, (("f", VarUse("p")),),
                  (Method("m", "p", VarUse("p")),)),
        VarUse("p"),
    )
    renamed = substitute(body, {"p": "$9"})
    lit = renamed.expr
    assert lit.fields[0][1] == VarUse("$9")  # field init renamed
    assert lit.methods[0].body == VarUse("p")  # inner param shadows
    assert renamed.rest == VarUse("$9")


def test_substitute_self_shadowed_in_nested_methods():
    inner = LetIn("r", FieldRead("self", "f"), VarUse("r"))
    body = LetIn(
        "b",
        ObjectLit(UNSAFE, (), (Method("m", "q", inner),)),
        VarUse("self"),
    )
    renamed = substitute(body, {"self": "$1"})
    assert renamed.expr.methods[0].body == inner  # inner self untouched
    assert renamed.rest == VarUse("$1")
