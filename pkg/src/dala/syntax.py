"""Surface syntax of Dala: AST, parser, pretty-printer, and the static
well-formedness judgment.

Programs are A-normal form let-chains. The parser validates ANF rather
than normalizing: operand positions only admit a name or ``consume x``,
so nested expressions are rejected outright. Run-time-only forms
(embedded values, blocked send markers, spliced method bodies) never
parse; they are produced by the reducer.

Concrete grammar (one token per abstract production)::

    program  := term
    term     := "let" IDENT "=" expr "in" term | w
    w        := IDENT | "consume" IDENT
    expr     := w
              | IDENT "." IDENT                 field read
              | IDENT "." IDENT "=" w           field write (swap semantics)
              | IDENT "." IDENT "(" w ")"       method call
              | "send" "(" IDENT "," w ")"
              | "recv" "(" IDENT ")"
              | "spawn" IDENT "{" term "}"
              | "copy" CAP IDENT
              | "cast" CAP w
              | "freeze" "(" IDENT ")"          sugar for copy imm
              | "object" CAP? "{" (IDENT "=" w ";")* method* "}"
    method   := "method" IDENT "(" IDENT ")" "{" term "}"
    CAP      := "imm" | "iso" | "local" | "unsafe"

An object literal with no capability keyword defaults to unsafe.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field as dc_field

from .state import Absent, Capability, EmptyChan, Loc, Value

__all__ = [
    "Blocked",
    "Call",
    "Cast",
    "Consume",
    "CopyExpr",
    "Diagnostic",
    "Expression",
    "FieldRead",
    "FieldWrite",
    "LetIn",
    "Lit",
    "Method",
    "NestedTerm",
    "ObjectLit",
    "ParseError",
    "Program",
    "Recv",
    "Send",
    "Spawn",
    "Term",
    "VarUse",
    "check_program",
    "embedded_locations",
    "free_vars",
    "parse",
    "pretty",
]

SELF = "self"


class ParseError(Exception):
    """Raised on any token or structure violation, with position."""

    def __init__(self, message: str, line: int, col: int) -> None:
        super().__init__(f"{line}:{col}: {message}")
        self.message = message
        self.line = line
        self.col = col


# ------------------------------------------------------------------
# AST
#
# All nodes are frozen; positions are carried for diagnostics but do
# not participate in equality, so parse(pretty(p)) == p structurally.
# ------------------------------------------------------------------

Pos = tuple[int, int]


@dataclass(frozen=True)
class VarUse:
    name: str
    pos: Pos | None = dc_field(default=None, compare=False)


@dataclass(frozen=True)
class Consume:
    name: str
    pos: Pos | None = dc_field(default=None, compare=False)


@dataclass(frozen=True)
class Lit:
    """An embedded run-time value; never produced by the parser."""

    value: Value


Atom = VarUse | Consume | Lit


@dataclass(frozen=True)
class Method:
    name: str
    param: str
    body: "Term"
    pos: Pos | None = dc_field(default=None, compare=False)


@dataclass(frozen=True)
class FieldRead:
    target: str
    field: str
    pos: Pos | None = dc_field(default=None, compare=False)


@dataclass(frozen=True)
class FieldWrite:
    target: str
    field: str
    value: Atom
    pos: Pos | None = dc_field(default=None, compare=False)


@dataclass(frozen=True)
class Call:
    target: str
    method: str
    arg: Atom
    pos: Pos | None = dc_field(default=None, compare=False)


@dataclass(frozen=True)
class Send:
    target: Atom
    payload: Atom
    pos: Pos | None = dc_field(default=None, compare=False)


@dataclass(frozen=True)
class Recv:
    target: Atom
    pos: Pos | None = dc_field(default=None, compare=False)


@dataclass(frozen=True)
class Spawn:
    binder: str
    body: "Term"
    pos: Pos | None = dc_field(default=None, compare=False)


@dataclass(frozen=True)
class Blocked:
    """Pending send marker; run-time only."""

    msg_id: int
    chan: Loc


@dataclass(frozen=True)
class CopyExpr:
    cap: Capability
    source: str
    pos: Pos | None = dc_field(default=None, compare=False)


@dataclass(frozen=True)
class ObjectLit:
    cap: Capability
    fields: tuple[tuple[str, Atom], ...]
    methods: tuple[Method, ...]
    pos: Pos | None = dc_field(default=None, compare=False)


@dataclass(frozen=True)
class Cast:
    cap: Capability
    value: Atom
    pos: Pos | None = dc_field(default=None, compare=False)


@dataclass(frozen=True)
class NestedTerm:
    """A term spliced into expression position by a method call;
    run-time only."""

    term: "Term"


Expression = (
    Atom
    | FieldRead
    | FieldWrite
    | Call
    | Send
    | Recv
    | Spawn
    | Blocked
    | CopyExpr
    | ObjectLit
    | Cast
    | NestedTerm
)


@dataclass(frozen=True)
class LetIn:
    binder: str
    expr: Expression
    rest: "Term"
    pos: Pos | None = dc_field(default=None, compare=False)


Term = LetIn | VarUse | Consume | Lit


@dataclass(frozen=True)
class Program:
    body: Term


# ------------------------------------------------------------------
# Lexer
# ------------------------------------------------------------------

KEYWORDS = {
    "let", "in", "consume", "send", "recv", "spawn", "copy", "cast",
    "object", "method", "freeze", "imm", "iso", "local", "unsafe",
}
CAP_KEYWORDS = {
    "imm": Capability.IMM,
    "iso": Capability.ISO,
    "local": Capability.LOCAL,
    "unsafe": Capability.UNSAFE,
}

_TOKEN_RE = re.compile(
    r"""(?P<ws>[ \t\r\n]+)
      | (?P<comment>//[^\n]*)
      | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
      | (?P<punct>[(){}=.,;])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str  # "ident", "keyword", or the punctuation character
    text: str
    line: int
    col: int


def _lex(source: str) -> list[Token]:
    tokens: list[Token] = []
    line, col = 1, 1
    i = 0
    while i < len(source):
        m = _TOKEN_RE.match(source, i)
        if m is None:
            raise ParseError(f"unexpected character {source[i]!r}", line, col)
        text = m.group(0)
        if m.lastgroup == "ident":
            kind = "keyword" if text in KEYWORDS else "ident"
            tokens.append(Token(kind, text, line, col))
        elif m.lastgroup == "punct":
            tokens.append(Token(text, text, line, col))
        nl = text.count("\n")
        if nl:
            line += nl
            col = len(text) - text.rfind("\n")
        else:
            col += len(text)
        i = m.end()
    tokens.append(Token("eof", "", line, col))
    return tokens


# ------------------------------------------------------------------
# Parser
# ------------------------------------------------------------------


class _Parser:
    def __init__(self, tokens: list[Token]) -> None:
        self.tokens = tokens
        self.idx = 0

    def peek(self, ahead: int = 0) -> Token:
        return self.tokens[min(self.idx + ahead, len(self.tokens) - 1)]

    def advance(self) -> Token:
        tok = self.tokens[self.idx]
        if tok.kind != "eof":
            self.idx += 1
        return tok

    def err(self, message: str, tok: Token | None = None) -> ParseError:
        tok = tok or self.peek()
        return ParseError(message, tok.line, tok.col)

    def expect(self, kind: str, what: str | None = None) -> Token:
        tok = self.peek()
        if tok.kind != kind and not (kind == "keyword" and tok.text == what):
            raise self.err(f"expected {what or kind}, found {tok.text or 'end of input'!r}")
        if what is not None and tok.text != what:
            raise self.err(f"expected {what!r}, found {tok.text or 'end of input'!r}")
        return self.advance()

    def expect_kw(self, word: str) -> Token:
        return self.expect("keyword", word)

    def ident(self, role: str, allow_self: bool = False) -> Token:
        tok = self.peek()
        if tok.kind != "ident":
            if tok.kind == "keyword" and tok.text == SELF:
                raise self.err("'self' reserved", tok)  # unreachable: self lexes as ident
            raise self.err(f"expected {role}, found {tok.text or 'end of input'!r}")
        if tok.text == SELF and not allow_self:
            raise self.err(f"'self' cannot be used as {role}", tok)
        return self.advance()

    # -- grammar -----------------------------------------------------

    def program(self) -> Program:
        body = self.term()
        tok = self.peek()
        if tok.kind != "eof":
            raise self.err(f"trailing input {tok.text!r}")
        return Program(body)

    def term(self) -> Term:
        tok = self.peek()
        if tok.kind == "keyword" and tok.text == "let":
            self.advance()
            binder = self.ident("let binder")
            self.expect("=", "=")
            expr = self.expression()
            self.expect_kw("in")
            rest = self.term()
            return LetIn(binder.text, expr, rest, (tok.line, tok.col))
        return self.atom()

    def atom(self) -> Atom:
        tok = self.peek()
        if tok.kind == "keyword" and tok.text == "consume":
            self.advance()
            name = self.peek()
            if name.kind == "ident" and name.text == SELF:
                raise self.err("cannot consume 'self'", name)
            name = self.ident("consume operand")
            return Consume(name.text, (tok.line, tok.col))
        name = self.ident("variable", allow_self=True)
        return VarUse(name.text, (name.line, name.col))

    def capability(self, default: Capability | None = None) -> Capability:
        tok = self.peek()
        if tok.kind == "keyword" and tok.text in CAP_KEYWORDS:
            self.advance()
            return CAP_KEYWORDS[tok.text]
        if default is not None:
            return default
        raise self.err(f"expected capability, found {tok.text or 'end of input'!r}")

    def expression(self) -> Expression:
        tok = self.peek()
        if tok.kind == "keyword":
            if tok.text == "consume":
                return self.atom()
            if tok.text == "send":
                self.advance()
                self.expect("(", "(")
                target = self.ident("send target", allow_self=True)
                self.expect(",", ",")
                payload = self.atom()
                self.expect(")", ")")
                return Send(VarUse(target.text, (target.line, target.col)), payload,
                            (tok.line, tok.col))
            if tok.text == "recv":
                self.advance()
                self.expect("(", "(")
                target = self.ident("recv target", allow_self=True)
                self.expect(")", ")")
                return Recv(VarUse(target.text, (target.line, target.col)),
                            (tok.line, tok.col))
            if tok.text == "spawn":
                self.advance()
                binder = self.ident("spawn binder")
                self.expect("{", "{")
                body = self.term()
                self.expect("}", "}")
                return Spawn(binder.text, body, (tok.line, tok.col))
            if tok.text == "copy":
                self.advance()
                cap = self.capability()
                source = self.ident("copy source", allow_self=True)
                return CopyExpr(cap, source.text, (tok.line, tok.col))
            if tok.text == "freeze":
                self.advance()
                self.expect("(", "(")
                source = self.ident("freeze operand", allow_self=True)
                self.expect(")", ")")
                return CopyExpr(Capability.IMM, source.text, (tok.line, tok.col))
            if tok.text == "cast":
                self.advance()
                cap = self.capability()
                value = self.atom()
                return Cast(cap, value, (tok.line, tok.col))
            if tok.text == "object":
                return self.object_literal()
            raise self.err(f"unexpected keyword {tok.text!r}")
        if tok.kind == "ident":
            if self.peek(1).kind == ".":
                target = self.advance()
                self.expect(".", ".")
                member = self.ident("field or method name")
                nxt = self.peek()
                if nxt.kind == "=":
                    self.advance()
                    value = self.atom()
                    return FieldWrite(target.text, member.text, value,
                                      (tok.line, tok.col))
                if nxt.kind == "(":
                    self.advance()
                    arg = self.atom()
                    self.expect(")", ")")
                    return Call(target.text, member.text, arg, (tok.line, tok.col))
                return FieldRead(target.text, member.text, (tok.line, tok.col))
            return self.atom()
        raise self.err(f"expected expression, found {tok.text or 'end of input'!r}")

    def object_literal(self) -> ObjectLit:
        tok = self.expect_kw("object")
        cap = self.capability(default=Capability.UNSAFE)
        self.expect("{", "{")
        fields: list[tuple[str, Atom]] = []
        seen_fields: set[str] = set()
        while self.peek().kind == "ident":
            fname = self.ident("field name")
            if fname.text in seen_fields:
                raise self.err(f"duplicate field {fname.text!r}", fname)
            seen_fields.add(fname.text)
            self.expect("=", "=")
            value = self.atom()
            self.expect(";", ";")
            fields.append((fname.text, value))
        methods: list[Method] = []
        seen_methods: set[str] = set()
        while self.peek().kind == "keyword" and self.peek().text == "method":
            mtok = self.advance()
            mname = self.ident("method name")
            if mname.text in seen_methods:
                raise self.err(f"duplicate method {mname.text!r}", mname)
            seen_methods.add(mname.text)
            self.expect("(", "(")
            param = self.peek()
            if param.kind == "ident" and param.text == SELF:
                raise self.err("method parameter cannot be 'self'", param)
            param = self.ident("method parameter")
            self.expect(")", ")")
            self.expect("{", "{")
            body = self.term()
            self.expect("}", "}")
            methods.append(Method(mname.text, param.text, body, (mtok.line, mtok.col)))
        self.expect("}", "}")
        return ObjectLit(cap, tuple(fields), tuple(methods), (tok.line, tok.col))


def parse(source: str) -> Program:
    """Parse source text into a Program, or raise ParseError."""
    return _Parser(_lex(source)).program()


# ------------------------------------------------------------------
# Pretty-printer (left inverse of parse on source-only programs)
# ------------------------------------------------------------------


def _pp_atom(a: Atom) -> str:
    if isinstance(a, VarUse):
        return a.name
    if isinstance(a, Consume):
        return f"consume {a.name}"
    if isinstance(a, Lit):
        return _pp_value(a.value)
    raise TypeError(a)


def _pp_value(v: Value) -> str:
    # Run-time forms; not re-parseable.
    if isinstance(v, Loc):
        return f"<loc {v.ident}>"
    if isinstance(v, Absent):
        return "<absent>"
    if isinstance(v, EmptyChan):
        return "<empty>"
    raise TypeError(v)


def _pp_expr(e: Expression, indent: int) -> str:
    if isinstance(e, (VarUse, Consume, Lit)):
        return _pp_atom(e)
    if isinstance(e, FieldRead):
        return f"{e.target}.{e.field}"
    if isinstance(e, FieldWrite):
        return f"{e.target}.{e.field} = {_pp_atom(e.value)}"
    if isinstance(e, Call):
        return f"{e.target}.{e.method}({_pp_atom(e.arg)})"
    if isinstance(e, Send):
        return f"send({_pp_atom(e.target)}, {_pp_atom(e.payload)})"
    if isinstance(e, Recv):
        return f"recv({_pp_atom(e.target)})"
    if isinstance(e, Spawn):
        body = _pp_term(e.body, indent + 1)
        pad = "  " * indent
        return f"spawn {e.binder} {{\n{body}\n{pad}}}"
    if isinstance(e, CopyExpr):
        return f"copy {e.cap.value} {e.source}"
    if isinstance(e, Cast):
        return f"cast {e.cap.value} {_pp_atom(e.value)}"
    if isinstance(e, ObjectLit):
        pad = "  " * indent
        inner = "  " * (indent + 1)
        parts = [f"{inner}{name} = {_pp_atom(value)};" for name, value in e.fields]
        for m in e.methods:
            body = _pp_term(m.body, indent + 2)
            parts.append(f"{inner}method {m.name}({m.param}) {{\n{body}\n{inner}}}")
        if not parts:
            return f"object {e.cap.value} {{ }}"
        joined = "\n".join(parts)
        return f"object {e.cap.value} {{\n{joined}\n{pad}}}"
    if isinstance(e, Blocked):
        return f"<pending-send {e.msg_id} on {e.chan.ident}>"
    if isinstance(e, NestedTerm):
        return f"<spliced {_pp_term(e.term, indent)}>"
    raise TypeError(e)


def _pp_term(t: Term, indent: int) -> str:
    pad = "  " * indent
    if isinstance(t, LetIn):
        return f"{pad}let {t.binder} = {_pp_expr(t.expr, indent)} in\n{_pp_term(t.rest, indent)}"
    return pad + _pp_atom(t)


def pretty(p: Program) -> str:
    """Render a Program back to concrete syntax."""
    return _pp_term(p.body, 0) + "\n"


# ------------------------------------------------------------------
# Free variables and embedded locations
# ------------------------------------------------------------------


def free_vars(t: Term | Expression | Method) -> set[str]:
    """Free variables of a term or expression.

    consume x contributes x; a method body contributes its free
    variables minus self and its parameter; a spawn body contributes
    its free variables minus the channel binder.
    """
    if isinstance(t, (VarUse, Consume)):
        return {t.name}
    if isinstance(t, Lit):
        return set()
    if isinstance(t, LetIn):
        return free_vars(t.expr) | (free_vars(t.rest) - {t.binder})
    if isinstance(t, FieldRead):
        return {t.target}
    if isinstance(t, FieldWrite):
        return {t.target} | free_vars(t.value)
    if isinstance(t, Call):
        return {t.target} | free_vars(t.arg)
    if isinstance(t, Send):
        return free_vars(t.target) | free_vars(t.payload)
    if isinstance(t, Recv):
        return free_vars(t.target)
    if isinstance(t, Spawn):
        return free_vars(t.body) - {t.binder}
    if isinstance(t, Blocked):
        return set()
    if isinstance(t, CopyExpr):
        return {t.source}
    if isinstance(t, Cast):
        return free_vars(t.value)
    if isinstance(t, ObjectLit):
        out: set[str] = set()
        for _, value in t.fields:
            out |= free_vars(value)
        for m in t.methods:
            out |= free_vars(m)
        return out
    if isinstance(t, Method):
        return free_vars(t.body) - {SELF, t.param}
    if isinstance(t, NestedTerm):
        return free_vars(t.term)
    raise TypeError(t)


def embedded_locations(t: Term | Expression | Method) -> set[int]:
    """Location ids literally occurring in a run-time term (Lit values,
    object-literal field slots, pending-send markers)."""
    if isinstance(t, Lit):
        return {t.value.ident} if isinstance(t.value, Loc) else set()
    if isinstance(t, (VarUse, Consume)):
        return set()
    if isinstance(t, LetIn):
        return embedded_locations(t.expr) | embedded_locations(t.rest)
    if isinstance(t, FieldRead):
        return set()
    if isinstance(t, FieldWrite):
        return embedded_locations(t.value)
    if isinstance(t, Call):
        return embedded_locations(t.arg)
    if isinstance(t, Send):
        return embedded_locations(t.target) | embedded_locations(t.payload)
    if isinstance(t, Recv):
        return embedded_locations(t.target)
    if isinstance(t, Spawn):
        return embedded_locations(t.body)
    if isinstance(t, Blocked):
        return {t.chan.ident}
    if isinstance(t, CopyExpr):
        return set()
    if isinstance(t, Cast):
        return embedded_locations(t.value)
    if isinstance(t, ObjectLit):
        out: set[int] = set()
        for _, value in t.fields:
            out |= embedded_locations(value)
        for m in t.methods:
            out |= embedded_locations(m)
        return out
    if isinstance(t, Method):
        return embedded_locations(t.body)
    if isinstance(t, NestedTerm):
        return embedded_locations(t.term)
    raise TypeError(t)


# ------------------------------------------------------------------
# Static well-formedness (checked from the empty environment)
# ------------------------------------------------------------------


@dataclass(frozen=True)
class Diagnostic:
    rule: str
    message: str
    pos: Pos | None = None

    def render(self, filename: str = "<input>") -> str:
        line, col = self.pos or (0, 0)
        return f"{filename}:{line}:{col}: {self.rule}: {self.message}"


class _Checker:
    """Scope checking plus the global single-assignment discipline:
    every let/spawn binder and method parameter is unique program-wide
    and distinct from self."""

    def __init__(self) -> None:
        self.diags: list[Diagnostic] = []
        self.binders: dict[str, str] = {}  # name -> binder kind

    def bind(self, name: str, kind: str, rule: str, pos: Pos | None) -> None:
        if name == SELF:
            self.diags.append(Diagnostic(rule, f"'{SELF}' cannot be a {kind}", pos))
            return
        if name in self.binders:
            self.diags.append(
                Diagnostic(rule, f"duplicate binder {name!r} (already a {self.binders[name]})", pos)
            )
        self.binders[name] = kind

    def use(self, name: str, scope: set[str], pos: Pos | None) -> None:
        if name not in scope:
            self.diags.append(Diagnostic("WF-Var", f"unbound variable {name!r}", pos))

    def atom(self, a: Atom, scope: set[str], pos: Pos | None = None) -> None:
        if isinstance(a, VarUse):
            self.use(a.name, scope, a.pos or pos)
        elif isinstance(a, Consume):
            if a.name == SELF:
                self.diags.append(Diagnostic("WF-Consume", "cannot consume 'self'", a.pos or pos))
            else:
                self.use(a.name, scope, a.pos or pos)
        elif isinstance(a, Lit):
            self.diags.append(Diagnostic("WF-Loc", "embedded value in source program", pos))

    def term(self, t: Term, scope: set[str]) -> None:
        if isinstance(t, LetIn):
            if t.binder in scope:
                self.diags.append(
                    Diagnostic("WF-Let", f"duplicate binder {t.binder!r}", t.pos)
                )
            else:
                self.bind(t.binder, "let binder", "WF-Let", t.pos)
            self.expr(t.expr, scope)
            self.term(t.rest, scope | {t.binder})
        else:
            self.atom(t, scope)

    def expr(self, e: Expression, scope: set[str]) -> None:
        if isinstance(e, (VarUse, Consume, Lit)):
            self.atom(e, scope)
        elif isinstance(e, FieldRead):
            self.use(e.target, scope, e.pos)
        elif isinstance(e, FieldWrite):
            self.use(e.target, scope, e.pos)
            self.atom(e.value, scope, e.pos)
        elif isinstance(e, Call):
            self.use(e.target, scope, e.pos)
            self.atom(e.arg, scope, e.pos)
        elif isinstance(e, Send):
            self.atom(e.target, scope, e.pos)
            self.atom(e.payload, scope, e.pos)
        elif isinstance(e, Recv):
            self.atom(e.target, scope, e.pos)
        elif isinstance(e, Spawn):
            if e.binder in scope:
                self.diags.append(
                    Diagnostic("WF-Spawn", f"duplicate binder {e.binder!r}", e.pos)
                )
            else:
                self.bind(e.binder, "spawn binder", "WF-Spawn", e.pos)
            leaked = free_vars(e.body) - {e.binder}
            if leaked:
                names = ", ".join(sorted(leaked))
                self.diags.append(
                    Diagnostic("WF-Spawn", f"spawn body not closed: free {names}", e.pos)
                )
            self.term(e.body, {e.binder})
        elif isinstance(e, CopyExpr):
            if e.cap is Capability.ISO:
                self.diags.append(Diagnostic("WF-Copy", "copy at iso capability", e.pos))
            self.use(e.source, scope, e.pos)
        elif isinstance(e, Cast):
            self.atom(e.value, scope, e.pos)
        elif isinstance(e, ObjectLit):
            for _, value in e.fields:
                self.atom(value, scope, e.pos)
            for m in e.methods:
                self.bind(m.param, "method parameter", "WF-Method", m.pos)
                self.term(m.body, {SELF, m.param})
        elif isinstance(e, Blocked):
            self.diags.append(Diagnostic("WF-Unblock", "pending-send marker in source program", None))
        elif isinstance(e, NestedTerm):
            self.diags.append(Diagnostic("WF-Term", "spliced term in source program", None))
        else:
            raise TypeError(e)


def check_program(p: Program) -> list[Diagnostic]:
    """The well-formedness judgment from the empty environment.

    Returns the empty list iff the program is well-formed; otherwise
    one Diagnostic per violated rule.
    """
    checker = _Checker()
    fv = free_vars(p.body)
    if fv - {SELF}:
        names = ", ".join(sorted(fv - {SELF}))
        checker.diags.append(Diagnostic("WF-Program", f"program not closed: free {names}"))
    if SELF in fv:
        checker.diags.append(Diagnostic("WF-Var", "'self' used outside a method body"))
    checker.term(p.body, set())
    return checker.diags
