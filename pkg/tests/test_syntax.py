import pytest
from hypothesis import given, settings, strategies as st

from dala.corpus import generate_random
from dala.state import Capability
from dala.syntax import (
    Consume,
    LetIn,
    ObjectLit,
    ParseError,
    Program,
    Recv,
    Spawn,
    VarUse,
    check_program,
    free_vars,
    parse,
    pretty,
)


def test_parse_smallest_object_program():
    p = parse("let x = object unsafe { } in x")
    assert p == Program(LetIn("x", ObjectLit(Capability.UNSAFE, (), ()), VarUse("x")))


def test_parse_defaults_to_unsafe():
    p = parse("let x = object { } in x")
    assert p.body.expr.cap is Capability.UNSAFE


def test_parse_spawn_body_closed_over_channel():
    p = parse("let c = spawn ch { let y = recv(ch) in y } in c")
    spawn = p.body.expr
    assert isinstance(spawn, Spawn)
    assert spawn.body == LetIn("y", Recv(VarUse("ch")), VarUse("y"))
    assert free_vars(spawn) == set()


def test_parse_rejects_consume_self():
    with pytest.raises(ParseError):
        parse("let x = consume self in x")


def test_parse_rejects_self_binder():
    with pytest.raises(ParseError):
        parse("let self = object { } in self")
    with pytest.raises(ParseError):
        parse("let c = spawn self { self } in c")


def test_parse_rejects_nested_expressions():
    # A-normal form is validated, not inferred.
    with pytest.raises(ParseError):
        parse("let x = y.f.g in x")
    with pytest.raises(ParseError):
        parse("let x = send(c, recv(d)) in x")


def test_parse_rejects_runtime_forms():
    with pytest.raises(ParseError):
        parse("let x = <loc 1> in x")


def test_freeze_sugar_expands_to_copy_imm():
    p = parse("let a = object { } in let b = freeze(a) in b")
    copy = p.body.rest.expr
    assert copy.cap is Capability.IMM
    assert copy.source == "a"


def test_parse_error_carries_position():
    with pytest.raises(ParseError) as exc:
        parse("let x = object { }\nin let = y in x")
    assert exc.value.line == 2


def test_check_duplicate_binder():
    p = parse("let x = object imm { } in let x = x in x")
    diags = check_program(p)
    assert any(d.rule == "WF-Let" and "x" in d.message for d in diags)


def test_check_copy_iso_rejected():
    p = parse("let y = object { } in let x = copy iso y in x")
    diags = check_program(p)
    assert any(d.rule == "WF-Copy" for d in diags)


def test_check_accepts_single_closed_binding():
    assert check_program(parse("let x = object imm { } in x")) == []


def test_check_unbound_variable():
    diags = check_program(parse("let x = y in x"))
    assert any(d.rule == "WF-Var" for d in diags)


def test_check_spawn_body_must_be_closed():
    src = "let a = object { } in let c = spawn ch { a } in c"
    diags = check_program(parse(src))
    assert any(d.rule == "WF-Spawn" and "not closed" in d.message for d in diags)


def test_check_duplicate_binder_across_scopes():
    # A method-body binder may not collide with an outer let binder.
    src = (
        "let z = object imm { } in "
        "let x = object { method m(p) { let z = p in z } } in x"
    )
    diags = check_program(parse(src))
    assert diags and all("z" in d.message for d in diags)


def test_diagnostic_render_format():
    diags = check_program(parse("let x = y in x"))
    var_diag = next(d for d in diags if d.rule == "WF-Var")
    rendered = var_diag.render("prog.dala")
    assert rendered.startswith("prog.dala:") and ": WF-Var: " in rendered


def test_free_vars_examples():
    assert free_vars(VarUse("x")) == {"x"}
    assert free_vars(LetIn("x", VarUse("y"), VarUse("x"))) == {"y"}
    assert free_vars(Spawn("c", LetIn("v", Recv(VarUse("c")), VarUse("v")))) == set()
    assert free_vars(Consume("x")) == {"x"}


@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=0, max_value=10_000))
def test_parse_is_left_inverse_of_pretty(seed):
    program = generate_random(seed, size_budget=18)
    assert parse(pretty(program)) == program


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=0, max_value=10_000))
def test_accepted_programs_have_distinct_binders(seed):
    program = generate_random(seed, size_budget=18)
    assert check_program(program) == []
    binders: list[str] = []

    def walk(t):
        from dala import syntax as s

        if isinstance(t, s.LetIn):
            binders.append(t.binder)
            walk(t.expr)
            walk(t.rest)
        elif isinstance(t, s.Spawn):
            binders.append(t.binder)
            walk(t.body)
        elif isinstance(t, s.ObjectLit):
            for m in t.methods:
                binders.append(m.param)
                walk(m.body)
        elif isinstance(t, (s.FieldWrite, s.Call, s.Send, s.Recv, s.Cast)):
            pass

    walk(program.body)
    assert len(binders) == len(set(binders))
    assert "self" not in binders
