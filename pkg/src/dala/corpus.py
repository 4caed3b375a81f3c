"""Curated example programs with pinned expected outcomes, and a
seed-deterministic random program generator.

Corpus entries live in the repository's `corpus/` directory as `.dala`
sources with golden outcomes in `corpus/expected/*.json` (terminal
kind, trace, final heap snapshot under the pinned seed). Since the
calculus has no output primitive, those triples are the observation
protocol.

The generator builds well-formed ANF programs by construction: globally
fresh binders, closed spawn bodies, matched send/receive protocols, no
recursion, each method invoked at most once, and channel-valued
variables never used where an object is required. Local-capability
objects are kept out of non-local containers and out of send payloads,
so they stay confined to their creating thread. Deliberate "chaos"
moves inject classifiable run-time errors (double consume, iso alias,
immutable write, wrong cast, missing field) at low probability.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field as dc_field
from pathlib import Path

from .scheduler import Seeded, run, terminal_name
from .state import Capability, cap_le, ok_field
from .syntax import (
    Atom,
    Call,
    Cast,
    Consume,
    CopyExpr,
    Expression,
    FieldRead,
    FieldWrite,
    LetIn,
    Method,
    ObjectLit,
    Program,
    Recv,
    Send,
    Spawn,
    Term,
    VarUse,
    check_program,
    parse,
)

__all__ = [
    "CorpusDrift",
    "CorpusEntry",
    "PINNED_SEED",
    "corpus_root",
    "generate_random",
    "load_corpus",
]

PINNED_SEED = 0


class CorpusDrift(Exception):
    """A corpus entry's pinned outcome no longer matches."""


@dataclass(frozen=True)
class CorpusEntry:
    name: str
    path: Path
    expected_terminal: str
    tags: tuple[str, ...]
    program: Program
    expected_trace: tuple[tuple[str, int], ...]
    expected_heap: dict

    @property
    def safe_only(self) -> bool:
        return "safe-only" in self.tags


def corpus_root() -> Path:
    return Path(__file__).resolve().parents[2] / "corpus"


def load_corpus(root: Path | None = None) -> list[CorpusEntry]:
    """Parse and validate every corpus entry against its golden outcome
    under the pinned seed."""
    root = root or corpus_root()
    entries: list[CorpusEntry] = []
    for source_path in sorted(root.glob("*.dala")):
        name = source_path.stem
        golden_path = root / "expected" / f"{name}.json"
        if not golden_path.exists():
            raise CorpusDrift(f"{name}: missing golden file {golden_path}")
        golden = json.loads(golden_path.read_text())
        program = parse(source_path.read_text())
        diags = check_program(program)
        if diags:
            raise CorpusDrift(f"{name}: not well-formed: {diags[0].render()}")
        result = run(program, Seeded(PINNED_SEED))
        observed = {
            "terminal": terminal_name(result.terminal),
            "trace": [list(entry) for entry in result.trace],
            "heap": result.config.heap.to_snapshot(),
        }
        for key in ("terminal", "trace", "heap"):
            if observed[key] != golden[key]:
                raise CorpusDrift(f"{name}: pinned {key} drifted")
        entries.append(
            CorpusEntry(
                name=name,
                path=source_path,
                expected_terminal=golden["terminal"],
                tags=tuple(golden.get("tags", [])),
                program=program,
                expected_trace=tuple((r, t) for r, t in golden["trace"]),
                expected_heap=golden["heap"],
            )
        )
    if not entries:
        raise CorpusDrift(f"no corpus entries under {root}")
    return entries


# ------------------------------------------------------------------
# Random program generation
# ------------------------------------------------------------------


@dataclass
class _Desc:
    """Static description of what a variable holds. The generator's
    programs are straight-line, so shapes are exact unless the value
    crossed a channel or came out of a method (cap=None)."""

    cap: Capability | None
    site: int | None
    tainted: bool  # reachable graph may contain a local object

    @property
    def is_iso(self) -> bool:
        return self.cap is Capability.ISO


@dataclass
class _Var:
    name: str
    desc: _Desc
    kind: str  # "obj" | "chan"
    consumed: bool = False


@dataclass
class _Site:
    cap: Capability
    fields: dict[str, _Desc]
    methods: dict[str, str]  # name -> template tag
    called: set[str] = dc_field(default_factory=set)


class _Names:
    def __init__(self) -> None:
        self.counter = 0

    def fresh(self, prefix: str) -> str:
        self.counter += 1
        return f"{prefix}{self.counter}"


_SAFE_CAPS = (Capability.IMM, Capability.ISO, Capability.LOCAL)
_ALL_CAPS = (Capability.IMM, Capability.ISO, Capability.LOCAL, Capability.UNSAFE)


class _Generator:
    def __init__(self, seed: int, budget: int, safe_only: bool,
                 max_threads: int, chaos: float) -> None:
        self.rng = random.Random(seed)
        self.budget = budget
        self.initial_budget = budget
        self.safe_only = safe_only
        self.threads_left = max_threads - 1
        self.chaos = chaos
        self.names = _Names()
        self.sites: dict[int, _Site] = {}
        self.next_site = 0

    # -- helpers ------------------------------------------------------

    def spend(self, n: int = 1) -> bool:
        if self.budget < n:
            return False
        self.budget -= n
        return True

    def caps(self) -> tuple[Capability, ...]:
        return _SAFE_CAPS if self.safe_only else _ALL_CAPS

    def new_site(self, cap: Capability, fields: dict[str, _Desc],
                 methods: dict[str, str]) -> int:
        self.next_site += 1
        self.sites[self.next_site] = _Site(cap, fields, methods)
        return self.next_site

    def atom_for(self, var: _Var) -> Atom:
        """Iso-valued variables must be consumed to be read."""
        if var.desc.is_iso:
            var.consumed = True
            return Consume(var.name)
        return VarUse(var.name)

    def chaos_roll(self) -> bool:
        # A chaos error collapses the run, so only inject once most of
        # the program has had a chance to execute.
        if self.budget > self.initial_budget // 2:
            return False
        return self.rng.random() < self.chaos

    # -- object construction -------------------------------------------

    def usable(self, scope: list[_Var]) -> list[_Var]:
        return [v for v in scope if v.kind == "obj" and not v.consumed]

    def field_candidates(self, scope: list[_Var], cap: Capability) -> list[_Var]:
        out = []
        for v in self.usable(scope):
            if v.desc.cap is None:
                # Unknown capability: only the unrestricted container
                # is statically safe to hold it.
                if cap is Capability.UNSAFE and not v.desc.tainted:
                    out.append(v)
                continue
            if not ok_field(cap, v.desc.cap):
                continue
            if (v.desc.cap is Capability.LOCAL or v.desc.tainted) and cap is not Capability.LOCAL:
                continue  # keep locals confined to local containers
            out.append(v)
        return out

    def gen_object(self, code: list[tuple[str, Expression]], scope: list[_Var],
                   allow_methods: bool = True,
                   cap_choices: tuple[Capability, ...] | None = None) -> _Var:
        cap = self.rng.choice(cap_choices or self.caps())
        nfields = self.rng.randint(0, 2)
        fields: list[tuple[str, Atom]] = []
        descs: dict[str, _Desc] = {}
        for i in range(nfields):
            candidates = self.field_candidates(scope, cap)
            if not candidates:
                break
            pick = self.rng.choice(candidates)
            fname = f"f{i}"
            fields.append((fname, self.atom_for(pick)))
            descs[fname] = _Desc(pick.desc.cap, pick.desc.site, pick.desc.tainted)
        methods: list[Method] = []
        mtags: dict[str, str] = {}
        if allow_methods and self.rng.random() < 0.4:
            mname = "m0"
            tag, method = self.gen_method(mname, descs)
            methods.append(method)
            mtags[mname] = tag
        site = self.new_site(cap, descs, mtags)
        binder = self.names.fresh("v")
        code.append((binder, ObjectLit(cap, tuple(fields), tuple(methods))))
        var = _Var(binder, _Desc(cap, site, cap is Capability.LOCAL
                                 or any(d.tainted for d in descs.values())), "obj")
        scope.append(var)
        return var

    def gen_method(self, name: str, field_descs: dict[str, _Desc]) -> tuple[str, Method]:
        param = self.names.fresh("p")
        readable = [f for f, d in field_descs.items() if not d.is_iso]
        choices = ["return-param"]
        if readable:
            choices += ["read-field", "swap-field"]
        tag = self.rng.choice(choices)
        if tag == "return-param":
            body: Term = VarUse(param)
        elif tag == "read-field":
            binder = self.names.fresh("r")
            body = LetIn(binder, FieldRead("self", self.rng.choice(readable)),
                         VarUse(binder))
        else:
            binder = self.names.fresh("r")
            body = LetIn(binder, FieldWrite("self", self.rng.choice(readable),
                                            VarUse(param)), VarUse(binder))
        return tag, Method(name, param, body)

    # -- moves ----------------------------------------------------------

    def gen_field_read(self, code, scope) -> None:
        candidates = [
            v for v in self.usable(scope)
            if v.desc.site is not None and self.sites[v.desc.site].fields
        ]
        if not candidates:
            return
        target = self.rng.choice(candidates)
        site = self.sites[target.desc.site]
        fname = self.rng.choice(sorted(site.fields))
        desc = site.fields[fname]
        if desc.is_iso and not self.chaos_roll():
            return  # reading an iso-valued field raises; keep rare
        binder = self.names.fresh("v")
        code.append((binder, FieldRead(target.name, fname)))
        scope.append(_Var(binder, _Desc(desc.cap, desc.site, desc.tainted), "obj"))

    def gen_field_write(self, code, scope) -> None:
        candidates = [
            v for v in self.usable(scope)
            if v.desc.site is not None and self.sites[v.desc.site].fields
            and v.desc.cap is not Capability.IMM
        ]
        if not candidates:
            return
        target = self.rng.choice(candidates)
        site = self.sites[target.desc.site]
        fname = self.rng.choice(sorted(site.fields))
        values = self.field_candidates(scope, site.cap)
        values = [v for v in values if v.name != target.name]
        if not values:
            return
        value = self.rng.choice(values)
        old = site.fields[fname]
        if old.is_iso:
            return  # swapping an iso out is fine, but keep the result simple
        site.fields[fname] = _Desc(value.desc.cap, value.desc.site, value.desc.tainted)
        binder = self.names.fresh("v")
        code.append((binder, FieldWrite(target.name, fname, self.atom_for(value))))
        scope.append(_Var(binder, _Desc(old.cap, old.site, old.tainted), "obj"))

    def gen_call(self, code, scope) -> None:
        candidates = [
            v for v in self.usable(scope)
            if v.desc.site is not None
            and set(self.sites[v.desc.site].methods) - self.sites[v.desc.site].called
        ]
        if not candidates:
            return
        target = self.rng.choice(candidates)
        site = self.sites[target.desc.site]
        mname = sorted(set(site.methods) - site.called)[0]
        site.called.add(mname)
        # Arguments stay out of the local-confinement discipline's way:
        # a swap-template body may store the argument into the receiver.
        args = [
            v for v in self.usable(scope)
            if not v.desc.is_iso and not v.desc.tainted
            and v.desc.cap is not Capability.LOCAL
        ]
        if not args:
            return
        arg = self.rng.choice(args)
        binder = self.names.fresh("v")
        code.append((binder, Call(target.name, mname, self.atom_for(arg))))
        tainted = target.desc.tainted or arg.desc.tainted
        scope.append(_Var(binder, _Desc(None, None, tainted), "obj"))

    def gen_consume(self, code, scope) -> None:
        candidates = self.usable(scope)
        if not candidates:
            return
        source = self.rng.choice(candidates)
        binder = self.names.fresh("v")
        code.append((binder, Consume(source.name)))
        source.consumed = True
        scope.append(_Var(binder, _Desc(source.desc.cap, source.desc.site,
                                        source.desc.tainted), "obj"))

    def gen_copy(self, code, scope) -> None:
        candidates = [v for v in self.usable(scope) if v.desc.cap is not None]
        if not candidates:
            return
        source = self.rng.choice(candidates)
        cap = self.rng.choice([c for c in self.caps() if c is not Capability.ISO])
        src_site = self.sites.get(source.desc.site) if source.desc.site else None
        fields = (
            {f: _Desc(cap, None, cap is Capability.LOCAL) for f in src_site.fields}
            if src_site else {}
        )
        # Copies share the source's method bodies; never invoke them a
        # second time, so the copy's site advertises no methods.
        site = self.new_site(cap, fields, {})
        binder = self.names.fresh("v")
        code.append((binder, CopyExpr(cap, source.name)))
        scope.append(_Var(binder, _Desc(cap, site, cap is Capability.LOCAL), "obj"))

    def gen_cast(self, code, scope) -> None:
        candidates = [v for v in self.usable(scope) if v.desc.cap is not None
                      and not v.desc.is_iso]
        if not candidates:
            return
        source = self.rng.choice(candidates)
        cap = source.desc.cap
        if self.chaos_roll():
            others = [c for c in self.caps() if c is not cap]
            cap = self.rng.choice(others) if others else cap
        binder = self.names.fresh("v")
        code.append((binder, Cast(cap, VarUse(source.name))))
        scope.append(_Var(binder, _Desc(source.desc.cap, source.desc.site,
                                        source.desc.tainted), "obj"))

    def gen_chaos(self, code, scope) -> None:
        """Inject one classifiable run-time error."""
        candidates = self.usable(scope)
        move = self.rng.choice(["double-consume", "missing-field", "imm-write",
                                "absent-read"])
        binder = self.names.fresh("v")
        if move == "double-consume":
            consumed = [v for v in scope if v.kind == "obj" and v.consumed]
            if not consumed:
                return
            code.append((binder, Consume(self.rng.choice(consumed).name)))
        elif move == "missing-field":
            if not candidates:
                return
            code.append((binder, FieldRead(self.rng.choice(candidates).name, "nofield")))
        elif move == "imm-write":
            imms = [v for v in candidates if v.desc.cap is Capability.IMM
                    and v.desc.site is not None and self.sites[v.desc.site].fields]
            if not imms:
                return
            target = self.rng.choice(imms)
            fname = sorted(self.sites[target.desc.site].fields)[0]
            value = self.rng.choice(candidates)
            code.append((binder, FieldWrite(target.name, fname, self.atom_for(value))))
        else:
            consumed = [v for v in scope if v.kind == "obj" and v.consumed]
            if not consumed:
                return
            code.append((binder, VarUse(self.rng.choice(consumed).name)))
        scope.append(_Var(binder, _Desc(None, None, False), "obj"))

    # -- channels ---------------------------------------------------------

    def sendable(self, scope: list[_Var]) -> list[_Var]:
        return [
            v for v in self.usable(scope)
            if not v.desc.tainted and v.desc.cap is not Capability.LOCAL
        ]

    def gen_spawn(self, code, scope, depth: int) -> None:
        if self.threads_left <= 0 or not self.spend(4):
            return
        self.threads_left -= 1
        chan = self.names.fresh("ch")
        n_msgs = self.rng.randint(0, 2)
        parent_to_child = self.rng.random() < 0.6

        transferable = tuple(c for c in self.caps() if c is not Capability.LOCAL)
        if parent_to_child:
            payloads: list[_Var] = []
            for _ in range(n_msgs):
                options = self.sendable(scope)
                if not options or self.rng.random() < 0.5:
                    payloads.append(self.gen_object(code, scope, allow_methods=False,
                                                    cap_choices=transferable))
                else:
                    payloads.append(self.rng.choice(options))
            recv_count = n_msgs
            if n_msgs and self.chaos_roll():
                recv_count += 1  # one receive too many: deadlock
            child_body = self.gen_child_body(chan, recv_count, reply=0, depth=depth)
            binder = self.names.fresh("c")
            code.append((binder, Spawn(chan, child_body)))
            scope.append(_Var(binder, _Desc(None, None, False), "chan"))
            for payload in payloads:
                step = self.names.fresh("s")
                code.append((step, Send(VarUse(binder), self.atom_for(payload))))
                # A completed send evaluates to the channel location.
                scope.append(_Var(step, _Desc(None, None, False), "chan"))
        else:
            reply = max(1, n_msgs)
            child_body = self.gen_child_body(chan, 0, reply=reply, depth=depth)
            binder = self.names.fresh("c")
            code.append((binder, Spawn(chan, child_body)))
            scope.append(_Var(binder, _Desc(None, None, False), "chan"))
            for _ in range(reply):
                got = self.names.fresh("u")
                code.append((got, Recv(VarUse(binder))))
                scope.append(_Var(got, _Desc(None, None, False), "obj"))

    def gen_child_body(self, chan: str, recv_count: int, reply: int, depth: int) -> Term:
        code: list[tuple[str, Expression]] = []
        scope: list[_Var] = []
        for _ in range(recv_count):
            binder = self.names.fresh("u")
            code.append((binder, Recv(VarUse(chan))))
            scope.append(_Var(binder, _Desc(None, None, False), "obj"))
        steps = self.rng.randint(0, 3) if self.budget > 0 else 0
        for _ in range(steps):
            if not self.spend():
                break
            self.gen_move(code, scope, depth + 1)
        for _ in range(reply):
            options = self.sendable(scope)
            if not options:
                transferable = tuple(c for c in self.caps()
                                     if c is not Capability.LOCAL)
                options = [self.gen_object(code, scope, allow_methods=False,
                                           cap_choices=transferable)]
            payload = self.rng.choice(options)
            step = self.names.fresh("s")
            code.append((step, Send(VarUse(chan), self.atom_for(payload))))
            scope.append(_Var(step, _Desc(None, None, False), "chan"))
        return self.assemble(code, scope)

    # -- assembly -----------------------------------------------------------

    def gen_move(self, code, scope, depth: int) -> None:
        if self.chaos_roll():
            self.gen_chaos(code, scope)
            return
        moves = ["object", "object", "read", "write", "call", "consume",
                 "copy", "cast"]
        if depth < 2:
            moves.append("spawn")
        move = self.rng.choice(moves)
        if move == "object":
            self.gen_object(code, scope)
        elif move == "read":
            self.gen_field_read(code, scope)
        elif move == "write":
            self.gen_field_write(code, scope)
        elif move == "call":
            self.gen_call(code, scope)
        elif move == "consume":
            self.gen_consume(code, scope)
        elif move == "copy":
            self.gen_copy(code, scope)
        elif move == "cast":
            self.gen_cast(code, scope)
        elif move == "spawn":
            self.gen_spawn(code, scope, depth)

    def assemble(self, code: list[tuple[str, Expression]], scope: list[_Var]) -> Term:
        live = [v for v in scope if v.kind == "obj" and not v.consumed]
        plain = [v for v in live if not v.desc.is_iso]
        if plain:
            final: Term = VarUse(self.rng.choice(plain).name)
        elif live:
            final = Consume(self.rng.choice(live).name)
        elif code:
            final = VarUse(code[-1][0])
        else:
            binder = self.names.fresh("v")
            code.append((binder, ObjectLit(
                Capability.IMM if self.safe_only else Capability.UNSAFE, (), ())))
            final = VarUse(binder)
        term = final
        for binder, expr in reversed(code):
            term = LetIn(binder, expr, term)
        return term

    def generate(self) -> Program:
        code: list[tuple[str, Expression]] = []
        scope: list[_Var] = []
        self.gen_object(code, scope)
        while self.spend():
            self.gen_move(code, scope, depth=0)
        return Program(self.assemble(code, scope))


def generate_random(
    seed: int,
    size_budget: int = 30,
    safe_only: bool = False,
    max_threads: int = 3,
    chaos: float = 0.04,
) -> Program:
    """A well-formed ANF program sampled from the grammar, by
    construction acceptable to check_program; deterministic in seed."""
    gen = _Generator(seed, size_budget, safe_only, max_threads, chaos)
    program = gen.generate()
    diags = check_program(program)
    assert not diags, f"generator produced an ill-formed program: {diags[0]}"
    return program
