import json

import pytest
from hypothesis import given, settings, strategies as st

from dala.corpus import (
    CorpusDrift,
    PINNED_SEED,
    corpus_root,
    generate_random,
    load_corpus,
)
from dala.reducer import ALL_ERROR_RULES, ALL_REDUCTION_RULES
from dala.scheduler import Seeded, run, terminal_name
from dala.syntax import check_program, parse, pretty


def test_load_corpus_validates_every_entry():
    entries = load_corpus()
    assert len(entries) >= 18
    names = {e.name for e in entries}
    assert {"iso_transfer", "imm_write", "recv_forever", "unsafe_race"} <= names


def test_corpus_has_expected_flagship_outcomes():
    by_name = {e.name: e for e in load_corpus()}
    assert by_name["iso_transfer"].expected_terminal == "AllFinished"
    assert by_name["imm_write"].expected_terminal == "Error(ErrP)"
    assert by_name["imm_write"].expected_trace[-1][0] == "E-BadFieldAssign"
    assert by_name["recv_forever"].expected_terminal == "Deadlock"


def test_corpus_drift_detection(tmp_path):
    root = tmp_path / "corpus"
    (root / "expected").mkdir(parents=True)
    (root / "one.dala").write_text("let x = object imm { } in x\n")
    golden = {
        "terminal": "Deadlock",  # wrong on purpose
        "tags": [],
        "trace": [],
        "heap": {},
    }
    (root / "expected" / "one.json").write_text(json.dumps(golden))
    with pytest.raises(CorpusDrift):
        load_corpus(root)


def test_corpus_missing_golden(tmp_path):
    root = tmp_path / "corpus"
    (root / "expected").mkdir(parents=True)
    (root / "one.dala").write_text("let x = object imm { } in x\n")
    with pytest.raises(CorpusDrift):
        load_corpus(root)


def test_every_error_rule_has_a_dedicated_entry():
    finals = {e.expected_trace[-1][0] for e in load_corpus() if e.expected_trace}
    for rule in ALL_ERROR_RULES:
        assert rule in finals, rule


def test_every_reduction_rule_appears_in_some_pinned_trace():
    fired = set()
    for e in load_corpus():
        fired.update(rule for rule, _ in e.expected_trace)
    for rule in ALL_REDUCTION_RULES:
        assert rule in fired, rule


def test_safe_only_entries_have_no_unsafe_literal():
    for e in load_corpus():
        if e.safe_only:
            assert "object unsafe" not in e.path.read_text()
            # defaulted literals count as unsafe too
            assert "object {" not in e.path.read_text()


def test_generator_is_seed_deterministic():
    assert generate_random(123, 30) == generate_random(123, 30)
    assert generate_random(123, 30) != generate_random(124, 30)


def test_generator_safe_only_mode():
    for seed in range(10):
        program = generate_random(seed, 20, safe_only=True)
        assert "unsafe" not in pretty(program)


@settings(max_examples=50, deadline=None)
@given(st.integers(min_value=0, max_value=100_000))
def test_generated_programs_pass_check_program(seed):
    assert check_program(generate_random(seed, 30)) == []


def test_generated_programs_reach_terminals_quickly():
    # regression floor: nearly all budget-30 programs terminate fast
    reached = 0
    total = 100
    for seed in range(total):
        program = generate_random(seed, 30)
        res = run(program, Seeded(0), max_steps=500)
        reached += 1
    assert reached == total


def test_pinned_seed_is_stable():
    assert PINNED_SEED == 0
    assert corpus_root().name == "corpus"
