"""Global configuration stepping, scheduling policies, trace recording,
trace replay, and terminal/deadlock classification.

Thread selection realizes the nondeterminism of concurrent evaluation
as an explicit pluggable policy with a seeded PRNG default, so every
run is reproducible and replayable. The configuration equivalences are
applied eagerly: a thread whose term becomes a bare value is removed in
the same global step, and an erring thread collapses the whole
configuration to a global error.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Callable, Iterable

from .reducer import (
    BlockedThread,
    Erred,
    Finished,
    StepOutcome,
    Stepped,
    step_thread,
)
from .state import Configuration, ErrorKind, GlobalError, Thread
from .syntax import Lit, Program

__all__ = [
    "DEFAULT_SEED",
    "Deadlock",
    "Enumerate",
    "NOT_ENABLED",
    "Replay",
    "ReplayMismatch",
    "RoundRobin",
    "RunResult",
    "Seeded",
    "SchedulePolicy",
    "StepLimitExceeded",
    "TerminalKind",
    "Trace",
    "enabled_threads",
    "global_step",
    "read_trace",
    "run",
    "write_trace",
]

DEFAULT_SEED = 0

TraceEntry = tuple[str, int]
Trace = list[TraceEntry]


class ReplayMismatch(Exception):
    """A replayed trace named a thread or rule that does not fire."""


class StepLimitExceeded(Exception):
    """The scheduler hit its step bound before reaching a terminal."""


# ------------------------------------------------------------------
# Terminal classification
# ------------------------------------------------------------------


@dataclass(frozen=True)
class Deadlock:
    pass


@dataclass(frozen=True)
class AllFinished:
    pass


@dataclass(frozen=True)
class ErrorTerminal:
    kind: ErrorKind
    rule: str


TerminalKind = AllFinished | ErrorTerminal | Deadlock


def terminal_name(kind: TerminalKind) -> str:
    if isinstance(kind, AllFinished):
        return "AllFinished"
    if isinstance(kind, ErrorTerminal):
        return f"Error({kind.kind.value})"
    return "Deadlock"


# ------------------------------------------------------------------
# Policies
# ------------------------------------------------------------------


@dataclass
class Seeded:
    seed: int = DEFAULT_SEED

    def __post_init__(self) -> None:
        self._rng = random.Random(self.seed)

    def pick(self, enabled: list[int], trace: Trace) -> int:
        return self._rng.choice(enabled)


@dataclass
class RoundRobin:
    _cursor: int = dc_field(default=0, repr=False)

    def pick(self, enabled: list[int], trace: Trace) -> int:
        choice = min((t for t in enabled if t >= self._cursor), default=enabled[0])
        self._cursor = choice + 1
        return choice


@dataclass
class Replay:
    """Consumes exactly its trace: each step executes the recorded
    thread and must fire the recorded rule."""

    trace: Trace
    _cursor: int = dc_field(default=0, repr=False)

    def pick(self, enabled: list[int], trace: Trace) -> int:
        if self._cursor >= len(self.trace):
            raise ReplayMismatch(
                f"trace exhausted after {self._cursor} steps but threads remain enabled"
            )
        rule, tid = self.trace[self._cursor]
        if tid not in enabled:
            raise ReplayMismatch(f"step {self._cursor}: thread {tid} is not enabled")
        return tid

    def expect(self, fired: str) -> None:
        rule, _ = self.trace[self._cursor]
        if fired != rule:
            raise ReplayMismatch(
                f"step {self._cursor}: expected {rule}, fired {fired}"
            )
        self._cursor += 1

    def exhausted(self) -> bool:
        return self._cursor >= len(self.trace)


@dataclass
class Enumerate:
    """Exhaustive-exploration marker; consumed by racecheck.explore,
    not by run()."""

    bound: int


SchedulePolicy = Seeded | RoundRobin | Replay | Enumerate


# ------------------------------------------------------------------
# Global stepping
# ------------------------------------------------------------------

NOT_ENABLED = "not-enabled"


def _apply_outcome(cfg: Configuration, tid: int, outcome: Stepped) -> Configuration:
    threads: list[Thread] = []
    replaced = dict(outcome.threads)
    for th in cfg.threads:
        if th.owner == tid:
            new_term = replaced.pop(tid)
            if not isinstance(new_term, Lit):
                threads.append(Thread(tid, new_term))
        else:
            threads.append(th)
    for owner, term in outcome.threads:
        if owner in replaced and not isinstance(term, Lit):
            threads.append(Thread(owner, term))
    return Configuration(heap=outcome.heap, threads=threads, status=None)


def global_step(cfg: Configuration, tid: int) -> tuple[Configuration, str | None] | str:
    """Step one thread. Returns (new configuration, fired rule), or
    NOT_ENABLED without mutation when the thread is blocked. A bare
    value thread is removed (rule None); an error collapses the
    configuration."""
    if not cfg.running:
        return NOT_ENABLED
    th = cfg.thread(tid)
    if th is None:
        return NOT_ENABLED
    outcome = step_thread(cfg.heap, th)
    if isinstance(outcome, BlockedThread):
        return NOT_ENABLED
    if isinstance(outcome, Finished):
        remaining = [t for t in cfg.threads if t.owner != tid]
        return Configuration(cfg.heap, remaining, None), None
    if isinstance(outcome, Erred):
        collapsed = Configuration(
            heap=cfg.heap,
            threads=[],
            status=GlobalError(outcome.kind, outcome.rule),
        )
        return collapsed, outcome.rule
    return _apply_outcome(cfg, tid, outcome), outcome.rule


def enabled_threads(cfg: Configuration) -> list[int]:
    """Ids whose next step is not blocked, in ascending order; computed
    without mutating the configuration."""
    if not cfg.running:
        return []
    out = []
    for th in cfg.threads:
        outcome = step_thread(cfg.heap, th)
        if not isinstance(outcome, BlockedThread):
            out.append(th.owner)
    return sorted(out)


def classify_terminal(cfg: Configuration) -> TerminalKind | None:
    if cfg.status is not None:
        return ErrorTerminal(cfg.status.kind, cfg.status.rule)
    if not cfg.threads:
        return AllFinished()
    if not enabled_threads(cfg):
        return Deadlock()
    return None


# ------------------------------------------------------------------
# Driving a program to a terminal configuration
# ------------------------------------------------------------------


@dataclass
class RunResult:
    terminal: TerminalKind
    config: Configuration
    trace: Trace


StepObserver = Callable[[Configuration, str, int], None]


def run(
    program: Program,
    policy: SchedulePolicy | None = None,
    max_steps: int | None = None,
    observer: StepObserver | None = None,
) -> RunResult:
    """Iterate global steps from the initial configuration until a
    terminal, recording one (rule, thread) pair per step.

    The observer, when given, sees the configuration after every fired
    rule (the --check-every-step hook)."""
    if policy is None:
        policy = Seeded(DEFAULT_SEED)
    if isinstance(policy, Enumerate):
        raise ValueError("Enumerate drives racecheck.explore, not run()")
    cfg = Configuration.initial(program.body)
    trace: Trace = []
    while True:
        terminal = classify_terminal(cfg)
        if terminal is not None:
            if isinstance(policy, Replay) and not policy.exhausted():
                raise ReplayMismatch(
                    f"terminal after {len(trace)} steps with trace entries remaining"
                )
            return RunResult(terminal, cfg, trace)
        if max_steps is not None and len(trace) >= max_steps:
            raise StepLimitExceeded(f"no terminal within {max_steps} steps")
        enabled = enabled_threads(cfg)
        tid = policy.pick(enabled, trace)
        stepped = global_step(cfg, tid)
        if stepped == NOT_ENABLED:
            raise ReplayMismatch(f"thread {tid} was not enabled")
        assert not isinstance(stepped, str)
        cfg, rule = stepped
        if rule is None:
            continue
        if isinstance(policy, Replay):
            policy.expect(rule)
        trace.append((rule, tid))
        if observer is not None:
            observer(cfg, rule, tid)


# ------------------------------------------------------------------
# Trace files: JSON lines, one {"rule": ..., "thread": ...} per step
# ------------------------------------------------------------------


def write_trace(path: str | Path, trace: Iterable[TraceEntry]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rule, tid in trace:
            fh.write(json.dumps({"rule": rule, "thread": tid}) + "\n")


def read_trace(path: str | Path) -> Trace:
    out: Trace = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            entry = json.loads(line)
            out.append((entry["rule"], int(entry["thread"])))
    return out
