"""Regenerate corpus golden files under the pinned seed.

Each entry declares its intended terminal (and final rule for erring
entries); pinning aborts if the observed run disagrees, so goldens can
never silently encode a wrong expectation.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from dala.corpus import PINNED_SEED, corpus_root
from dala.scheduler import Seeded, run, terminal_name
from dala.state import Capability
from dala.syntax import ObjectLit, check_program, parse
from dala import syntax as s

# entry -> (terminal, final rule or None, extra tags)
EXPECTED = {
    "imm_min": ("AllFinished", None, ()),
    "iso_transfer": ("AllFinished", None, ()),
    "local_graph": ("AllFinished", None, ()),
    "imm_write": ("Error(ErrP)", "E-BadFieldAssign", ("erring",)),
    "recv_forever": ("Deadlock", None, ("deadlock",)),
    "alias_iso": ("Error(ErrP)", "E-AliasIso", ("erring",)),
    "consume_twice": ("Error(ErrA)", "E-Consume", ("erring",)),
    "absent_var": ("Error(ErrA)", "E-AbsentVar", ("erring",)),
    "absent_field_read": ("Error(ErrA)", "E-AbsentTargetAccess", ("erring",)),
    "absent_field_write": ("Error(ErrA)", "E-AbsentFieldAssign", ("erring",)),
    "absent_call": ("Error(ErrA)", "E-AbsentTarget", ("erring",)),
    "absent_copy": ("Error(ErrA)", "E-AbsentCopyTarget", ("erring",)),
    "no_such_field": ("Error(ErrN)", "E-NoSuchField", ("erring",)),
    "no_such_method": ("Error(ErrN)", "E-NoSuchMethod", ("erring",)),
    "no_such_field_assign": ("Error(ErrN)", "E-NoSuchFieldAssign", ("erring",)),
    "send_to_object": ("Error(ErrN)", "E-SendBadTargetOrArgument", ("erring",)),
    "send_channel_payload": ("Error(ErrN)", "E-SendBadTargetOrArgument", ("erring",)),
    "recv_from_object": ("Error(ErrN)", "E-RecvBadTarget", ("erring",)),
    "cast_mismatch": ("Error(ErrC)", "E-CastError", ("erring",)),
    "iso_field_read": ("Error(ErrP)", "E-IsoField", ("erring",)),
    "bad_instantiation": ("Error(ErrP)", "E-BadInstantiation", ("erring",)),
    "sending_local": ("Error(ErrP)", "E-SendingLocal", ("erring",)),
    "local_field_foreign": ("Error(ErrP)", "E-LocalField", ("erring",)),
    "copy_foreign_local": ("Error(ErrP)", "E-CopyTarget", ("erring",)),
    "unsafe_race": ("AllFinished", None, ("racy",)),
}


def has_unsafe_literal(node) -> bool:
    if isinstance(node, ObjectLit):
        if node.cap is Capability.UNSAFE:
            return True
        return any(has_unsafe_literal(v) for _, v in node.fields) or any(
            has_unsafe_literal(m.body) for m in node.methods
        )
    if isinstance(node, s.LetIn):
        return has_unsafe_literal(node.expr) or has_unsafe_literal(node.rest)
    if isinstance(node, s.Spawn):
        return has_unsafe_literal(node.body)
    if isinstance(node, (s.FieldWrite,)):
        return has_unsafe_literal(node.value)
    if isinstance(node, s.Call):
        return has_unsafe_literal(node.arg)
    if isinstance(node, s.Send):
        return has_unsafe_literal(node.payload)
    return False


def main() -> int:
    root = corpus_root()
    expected_dir = root / "expected"
    expected_dir.mkdir(exist_ok=True)
    seen = set()
    for path in sorted(root.glob("*.dala")):
        name = path.stem
        seen.add(name)
        if name not in EXPECTED:
            print(f"FAIL {name}: no declared expectation")
            return 1
        terminal, final_rule, extra = EXPECTED[name]
        program = parse(path.read_text())
        diags = check_program(program)
        if diags:
            print(f"FAIL {name}: {diags[0].render(str(path))}")
            return 1
        result = run(program, Seeded(PINNED_SEED), max_steps=10_000)
        observed = terminal_name(result.terminal)
        if observed != terminal:
            print(f"FAIL {name}: expected {terminal}, observed {observed}")
            return 1
        if final_rule is not None and result.trace[-1][0] != final_rule:
            print(f"FAIL {name}: expected final {final_rule}, got {result.trace[-1][0]}")
            return 1
        tags = list(extra)
        if not has_unsafe_literal(program.body):
            tags.append("safe-only")
        else:
            tags.append("mixed")
        golden = {
            "terminal": observed,
            "tags": tags,
            "trace": [list(entry) for entry in result.trace],
            "heap": result.config.heap.to_snapshot(),
        }
        (expected_dir / f"{name}.json").write_text(json.dumps(golden, indent=1) + "\n")
        print(f"ok  {name}: {observed} ({len(result.trace)} steps) {tags}")
    missing = set(EXPECTED) - seen
    if missing:
        print(f"FAIL missing sources: {sorted(missing)}")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
