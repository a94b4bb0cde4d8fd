"""The pluggable value/memory interface the interpreter executes against.

A context supplies register-variable storage, a memory model and the
semantics of every value operation.  The interpreter core never inspects
values directly; it only moves them between registers, memory and
operations of the active context.  Two implementations exist: explicit
bitvectors (:mod:`lodin.explicit`) and SMT terms (:mod:`lodin.symbolic`).
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Optional

from .ir import Register, Type


class ContextError(Exception):
    """Base for faults raised by context operations."""


class MemoryFault(ContextError):
    """Out-of-bounds or dead-block access, or an invalid free."""


class RegisterFault(ContextError):
    """Unallocated/unset register variable or a width mismatch."""


class SsaViolation(ContextError):
    """A register variable was assigned more than once in a symbolic state."""


@dataclass(frozen=True)
class FullDomain:
    """Marker for an operation whose result set is the entire type domain.

    Produced by division by zero, oversized shifts, loads through invalid
    pointers and the explicit context's nondet.  The engine decides whether
    to enumerate, sample or flag it, depending on the width and the query.
    """

    width: int


@dataclass(frozen=True)
class CmpOutcome:
    """One comparison outcome: successor state, i8 value, and its truth."""

    state: Any
    value: Any
    truth: bool


class Context(ABC):
    """Abstract context (state set, initial state, typed operations)."""

    name: str = "abstract"

    @abstractmethod
    def initial_state(self):
        ...

    @abstractmethod
    def make_reg(self, state, reg: Register) -> tuple[Any, int]:
        """Allocate the smallest unused register-variable id for ``reg``."""

    @abstractmethod
    def eval_reg(self, state, rid: int, ty: Type):
        ...

    @abstractmethod
    def set_reg(self, state, rid: int, value, ty: Type):
        ...

    @abstractmethod
    def const_value(self, state, literal: int, ty: Type):
        """The context representation of an integer literal of type ``ty``."""

    @abstractmethod
    def alloc(self, state, ty: Type) -> tuple[Any, Any]:
        """Allocate space for ``ty``; returns (state', pointer value)."""

    @abstractmethod
    def free(self, state, ptr):
        ...

    @abstractmethod
    def load(self, state, ptr, ty: Type):
        """Read a ``ty`` from memory; a set-valued result is a FullDomain."""

    @abstractmethod
    def store(self, state, value, ptr, ty: Type):
        ...

    @abstractmethod
    def nondet(self, state, ty: Type):
        """FullDomain (explicit) or [(state', fresh value)] (symbolic)."""

    @abstractmethod
    def binop(self, op: str, state, a, b, ty: Type):
        """Apply a binary operation; returns (state', value or FullDomain)."""

    @abstractmethod
    def cmp(self, op: str, state, a, b, ty: Type) -> list[CmpOutcome]:
        """Comparison outcomes; explicit contexts return exactly one."""

    @abstractmethod
    def ptr_add(self, ptr, nbytes: int):
        ...

    @abstractmethod
    def truth_split(self, state, value) -> list[tuple[Any, bool]]:
        """Branch-condition evaluation: [(state', taken?)] per feasible arm."""

    @abstractmethod
    def true_value(self, state):
        ...

    @abstractmethod
    def false_value(self, state):
        ...
