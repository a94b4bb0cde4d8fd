"""Explicit context: 2's-complement bitvectors over a block/offset memory.

Pointers are 64-bit values whose high 32 bits index a redirection table of
memory blocks and whose low 32 bits index bytes within a block.  Memory
blocks are allocated at the smallest unused index and zero-filled, which
keeps state serialization canonical for interleavings that allocate in the
same order.  Byte order within a block is little-endian (bit 0 is the least
significant bit of byte 0).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .context import CmpOutcome, Context, FullDomain, MemoryFault, RegisterFault
from .ir import IntType, PtrType, Register, StructType, Type, bitwidth

# ---------------------------------------------------------------------------
# Bitvectors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BitVec:
    """A fixed-width bitvector; ``val`` is the unsigned reading in [0, 2^width)."""

    width: int
    val: int

    def __post_init__(self):
        if not 0 <= self.val < (1 << self.width):
            raise ValueError(f"value {self.val} out of range for width {self.width}")

    @staticmethod
    def encode(width: int, k: int) -> "BitVec":
        """Encode an integer modulo 2^width (handles negative literals)."""
        return BitVec(width, k & ((1 << width) - 1))

    @property
    def unsigned(self) -> int:
        return self.val

    @property
    def signed(self) -> int:
        sign_bit = 1 << (self.width - 1)
        return self.val - (1 << self.width) if self.val & sign_bit else self.val

    def bit(self, i: int) -> int:
        return (self.val >> i) & 1

    def extract(self, lo: int, hi: int) -> "BitVec":
        """Bits [lo, hi) as a new vector (bit lo becomes bit 0)."""
        if not 0 <= lo < hi <= self.width:
            raise ValueError(f"extract [{lo},{hi}) out of range for width {self.width}")
        return BitVec(hi - lo, (self.val >> lo) & ((1 << (hi - lo)) - 1))

    def patch(self, lo: int, sub: "BitVec") -> "BitVec":
        """Replace bits [lo, lo+sub.width) with ``sub``."""
        hi = lo + sub.width
        if not 0 <= lo <= hi <= self.width:
            raise ValueError(f"patch [{lo},{hi}) out of range for width {self.width}")
        mask = ((1 << sub.width) - 1) << lo
        return BitVec(self.width, (self.val & ~mask) | (sub.val << lo))

    def __str__(self):
        return f"i{self.width} {self.val}"


TRUE_I8 = BitVec(8, 1)
FALSE_I8 = BitVec(8, 0)


def bv_binop(op: str, a: BitVec, b: BitVec):
    """One binary operation; FullDomain for divide-by-zero and oversized shifts."""
    if a.width != b.width:
        raise RegisterFault(f"width mismatch: {a.width} vs {b.width}")
    m = a.width
    mask = (1 << m) - 1
    if op == "add":
        return BitVec(m, (a.val + b.val) & mask)
    if op == "sub":
        return BitVec(m, (a.val - b.val) & mask)
    if op == "mul":
        return BitVec(m, (a.val * b.val) & mask)
    if op == "udiv":
        if b.val == 0:
            return FullDomain(m)
        return BitVec(m, a.val // b.val)
    if op == "urem":
        if b.val == 0:
            return FullDomain(m)
        return BitVec(m, a.val - b.val * (a.val // b.val))
    if op == "sdiv":
        if b.val == 0:
            return FullDomain(m)
        q = abs(a.signed) // abs(b.signed)
        if (a.signed < 0) != (b.signed < 0):
            q = -q
        return BitVec.encode(m, q)
    if op == "srem":
        if b.val == 0:
            return FullDomain(m)
        q = abs(a.signed) // abs(b.signed)
        if (a.signed < 0) != (b.signed < 0):
            q = -q
        return BitVec.encode(m, a.signed - b.signed * q)
    if op == "shl":
        if b.unsigned >= m:
            return FullDomain(m)
        return BitVec(m, (a.val << b.unsigned) & mask)
    if op == "lshr":
        if b.unsigned >= m:
            return FullDomain(m)
        return BitVec(m, a.val >> b.unsigned)
    if op == "ashr":
        d = b.unsigned
        if d >= m:
            return FullDomain(m)
        shifted = a.val >> d
        if a.bit(m - 1) and d:
            shifted |= ((1 << d) - 1) << (m - d)  # pad with the sign bit
        return BitVec(m, shifted)
    if op == "and":
        return BitVec(m, a.val & b.val)
    if op == "or":
        return BitVec(m, a.val | b.val)
    if op == "xor":
        return BitVec(m, a.val ^ b.val)
    raise RegisterFault(f"unknown binary operation {op!r}")


def bv_cmp(op: str, a: BitVec, b: BitVec) -> tuple[BitVec, bool]:
    if a.width != b.width:
        raise RegisterFault(f"width mismatch: {a.width} vs {b.width}")
    if op == "eq":
        t = a.val == b.val
    elif op == "ne":
        t = a.val != b.val
    elif op == "ugt":
        t = a.unsigned > b.unsigned
    elif op == "uge":
        t = a.unsigned >= b.unsigned
    elif op == "ult":
        t = a.unsigned < b.unsigned
    elif op == "ule":
        t = a.unsigned <= b.unsigned
    elif op == "sgt":
        t = a.signed > b.signed
    elif op == "sge":
        t = a.signed >= b.signed
    elif op == "slt":
        t = a.signed < b.signed
    elif op == "sle":
        t = a.signed <= b.signed
    else:
        raise RegisterFault(f"unknown comparison {op!r}")
    return (TRUE_I8 if t else FALSE_I8), t


# ---------------------------------------------------------------------------
# Memory
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MemState:
    """Live blocks only: index -> (size in bytes, content bits). Absent = unused."""

    blocks: tuple[tuple[int, int, int], ...] = ()

    def _as_dict(self) -> dict[int, tuple[int, int]]:
        return {i: (s, c) for i, s, c in self.blocks}

    @staticmethod
    def _from_dict(d: dict[int, tuple[int, int]]) -> "MemState":
        return MemState(tuple((i, s, c) for i, (s, c) in sorted(d.items())))

    def new(self, size_bytes: int) -> tuple["MemState", int]:
        d = self._as_dict()
        idx = 0
        while idx in d:
            idx += 1
        d[idx] = (size_bytes, 0)  # zero-filled
        return MemState._from_dict(d), idx

    def free(self, idx: int) -> "MemState":
        d = self._as_dict()
        if idx not in d:
            raise MemoryFault(f"free of unused block {idx}")
        del d[idx]
        return MemState._from_dict(d)

    def live(self, idx: int) -> Optional[tuple[int, int]]:
        for i, s, c in self.blocks:
            if i == idx:
                return s, c
        return None

    def read(self, idx: int, bit_off: int, bit_len: int) -> int:
        blk = self.live(idx)
        if blk is None:
            raise MemoryFault(f"read from unused block {idx}")
        size, content = blk
        if bit_off < 0 or bit_off + bit_len > 8 * size:
            raise MemoryFault(f"read [{bit_off},{bit_off+bit_len}) beyond block of {size} bytes")
        return (content >> bit_off) & ((1 << bit_len) - 1)

    def write(self, idx: int, bit_off: int, bits: int, bit_len: int) -> "MemState":
        blk = self.live(idx)
        if blk is None:
            raise MemoryFault(f"write to unused block {idx}")
        size, content = blk
        if bit_off < 0 or bit_off + bit_len > 8 * size:
            raise MemoryFault(f"write [{bit_off},{bit_off+bit_len}) beyond block of {size} bytes")
        mask = ((1 << bit_len) - 1) << bit_off
        new_content = (content & ~mask) | ((bits & ((1 << bit_len) - 1)) << bit_off)
        d = self._as_dict()
        d[idx] = (size, new_content)
        return MemState._from_dict(d)


def pack_ptr(block: int, offset: int) -> int:
    return ((block & 0xFFFFFFFF) << 32) | (offset & 0xFFFFFFFF)


def ptr_block(p: int) -> int:
    return (p >> 32) & 0xFFFFFFFF


def ptr_offset(p: int) -> int:
    return p & 0xFFFFFFFF


# ---------------------------------------------------------------------------
# The explicit context
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExplicitState:
    """Memory plus the register-variable store. Ids are dense: 0..n_regs-1."""

    mem: MemState = MemState()
    n_regs: int = 0
    regs: tuple[tuple[int, Optional[int]], ...] = ()  # (width, value) per id

    def reg_entry(self, rid: int) -> tuple[int, Optional[int]]:
        if not 0 <= rid < self.n_regs:
            raise RegisterFault(f"register variable {rid} is not allocated")
        return self.regs[rid]


class ExplicitContext(Context):
    name = "explicit"

    def initial_state(self) -> ExplicitState:
        return ExplicitState()

    def make_reg(self, state: ExplicitState, reg: Register) -> tuple[ExplicitState, int]:
        rid = state.n_regs
        entry = (bitwidth(reg.ty), None)
        return ExplicitState(state.mem, rid + 1, state.regs + (entry,)), rid

    def eval_reg(self, state: ExplicitState, rid: int, ty: Type) -> BitVec:
        width, val = state.reg_entry(rid)
        if val is None:
            raise RegisterFault(f"register variable {rid} is unset")
        if width != bitwidth(ty):
            raise RegisterFault(f"register variable {rid} has width {width}, wanted {bitwidth(ty)}")
        return BitVec(width, val)

    def set_reg(self, state: ExplicitState, rid: int, value: BitVec, ty: Type) -> ExplicitState:
        width, _ = state.reg_entry(rid)
        if value.width != width or value.width != bitwidth(ty):
            raise RegisterFault(f"cannot store i{value.width} into an i{width} slot")
        regs = state.regs[:rid] + ((width, value.val),) + state.regs[rid + 1:]
        return ExplicitState(state.mem, state.n_regs, regs)

    def const_value(self, state: ExplicitState, literal: int, ty: Type) -> BitVec:
        return BitVec.encode(bitwidth(ty), literal)

    def alloc(self, state: ExplicitState, ty: Type) -> tuple[ExplicitState, BitVec]:
        from .ir import bsize
        mem, idx = state.mem.new(bsize(ty))
        return (ExplicitState(mem, state.n_regs, state.regs),
                BitVec(64, pack_ptr(idx, 0)))

    def free(self, state: ExplicitState, ptr: BitVec) -> ExplicitState:
        if ptr_offset(ptr.val) != 0:
            raise MemoryFault("free of a pointer with nonzero offset")
        mem = state.mem.free(ptr_block(ptr.val))
        return ExplicitState(mem, state.n_regs, state.regs)

    def load(self, state: ExplicitState, ptr: BitVec, ty: Type):
        width = bitwidth(ty)
        blk, off = ptr_block(ptr.val), ptr_offset(ptr.val)
        live = state.mem.live(blk)
        if live is None or off * 8 + width > 8 * live[0]:
            return FullDomain(width)  # invalid load: whole domain per the semantics
        return BitVec(width, state.mem.read(blk, off * 8, width))

    def store(self, state: ExplicitState, value: BitVec, ptr: BitVec, ty: Type) -> ExplicitState:
        blk, off = ptr_block(ptr.val), ptr_offset(ptr.val)
        mem = state.mem.write(blk, off * 8, value.val, value.width)
        return ExplicitState(mem, state.n_regs, state.regs)

    def nondet(self, state: ExplicitState, ty: Type):
        return FullDomain(bitwidth(ty))

    def binop(self, op: str, state: ExplicitState, a: BitVec, b: BitVec, ty: Type):
        return state, bv_binop(op, a, b)

    def cmp(self, op: str, state: ExplicitState, a: BitVec, b: BitVec, ty: Type):
        value, truth = bv_cmp(op, a, b)
        return [CmpOutcome(state, value, truth)]

    def ptr_add(self, ptr: BitVec, nbytes: int) -> BitVec:
        blk = ptr_block(ptr.val)
        off = (ptr_offset(ptr.val) + nbytes) & 0xFFFFFFFF
        return BitVec(64, pack_ptr(blk, off))

    def truth_split(self, state: ExplicitState, value: BitVec):
        return [(state, value.val != FALSE_I8.val)]

    def true_value(self, state: ExplicitState) -> BitVec:
        return TRUE_I8

    def false_value(self, state: ExplicitState) -> BitVec:
        return FALSE_I8
