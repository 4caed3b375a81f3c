"""Dala: a reference interpreter, metatheory checker, and
concurrency-analysis toolkit for the Dala capability calculus."""

from .state import Capability, Configuration, ErrorKind, Heap
from .syntax import ParseError, Program, check_program, parse, pretty

__all__ = [
    "Capability",
    "Configuration",
    "ErrorKind",
    "Heap",
    "ParseError",
    "Program",
    "check_program",
    "parse",
    "pretty",
]
