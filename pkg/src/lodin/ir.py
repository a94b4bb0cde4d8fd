"""Typed LLVM-subset IR: types, instructions, functions, modules and CFG analyses.

The in-memory representation mirrors the textual form produced by
:func:`lodin.parser.parse_module`: integer types of byte-multiple widths,
pointers (64 bit), structs, and void; instructions grouped into arithmetic,
logic, memory, compare, terminator, phi, call and the nondet extension.
Constants are interned as read-only registers so that every operand is a
register.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional, Union


class IrError(Exception):
    """Base class for IR construction and analysis errors."""


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IntType:
    bits: int

    def __post_init__(self):
        if self.bits <= 0 or self.bits % 8 != 0:
            raise IrError(f"integer width must be a positive multiple of 8, got {self.bits}")

    def __str__(self):
        return f"i{self.bits}"


@dataclass(frozen=True)
class PtrType:
    pointee: "Type"

    def __str__(self):
        return f"{self.pointee}*"


@dataclass(frozen=True)
class StructType:
    elements: tuple["Type", ...]

    def __str__(self):
        return "{" + ", ".join(str(e) for e in self.elements) + "}"


@dataclass(frozen=True)
class VoidType:
    def __str__(self):
        return "void"


Type = Union[IntType, PtrType, StructType, VoidType]

VOID = VoidType()
I8 = IntType(8)
I16 = IntType(16)
I32 = IntType(32)
I64 = IntType(64)

POINTER_BYTES = 8


def bsize(ty: Type) -> int:
    """Byte size of a type: n/8 for ints, 8 for pointers, field sum for structs."""
    if isinstance(ty, IntType):
        return ty.bits // 8
    if isinstance(ty, PtrType):
        return POINTER_BYTES
    if isinstance(ty, StructType):
        return sum(bsize(e) for e in ty.elements)
    raise IrError("bsize of void is undefined")


def bitwidth(ty: Type) -> int:
    return 8 * bsize(ty)


def project_type(ty: Type, path: tuple[int, ...]) -> Type:
    """Follow a struct element path; the empty path is the identity."""
    if not path:
        return ty
    if not isinstance(ty, StructType):
        raise IrError(f"cannot project into non-struct type {ty}")
    idx = path[0]
    if not 0 <= idx < len(ty.elements):
        raise IrError(f"struct index {idx} out of range for {ty}")
    return project_type(ty.elements[idx], path[1:])


def _inner_offset(ty: Type, path: tuple[int, ...]) -> int:
    if not path:
        return 0
    if not isinstance(ty, StructType):
        raise IrError(f"cannot index into non-struct type {ty}")
    idx = path[0]
    if not 0 <= idx < len(ty.elements):
        raise IrError(f"struct index {idx} out of range for {ty}")
    return sum(bsize(e) for e in ty.elements[:idx]) + _inner_offset(ty.elements[idx], path[1:])


def type_offset(ty: Type, indices: tuple[int, ...]) -> tuple[int, Type]:
    """Byte offset and element type for a gep-style index sequence.

    The first index scales strides of the whole type; the remaining indices
    select struct elements.
    """
    if not indices:
        raise IrError("type_offset requires at least one index")
    first, rest = indices[0], tuple(indices[1:])
    offset = first * bsize(ty) + _inner_offset(ty, rest)
    return offset, project_type(ty, rest)


# ---------------------------------------------------------------------------
# Registers and instructions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Register:
    """A typed SSA register, qualified by its owning function.

    Constants are modelled as read-only registers carrying their literal
    value in ``const`` (encoded modulo 2^width at use time).
    """

    func: str
    name: str
    ty: Type
    const: Optional[int] = None

    @property
    def qualified(self) -> str:
        return f"{self.func}.{self.name}"

    def __str__(self):
        if self.const is not None:
            return str(self.const)
        return self.name


@dataclass(frozen=True)
class ConstExpr:
    """A compound constant-expression operand, e.g. ``add (i32 2, i32 3)``.

    Only produced by the parser; the constant-lifting transform turns these
    into ordinary instructions before execution.
    """

    op: str
    ty: Type
    args: tuple["Operand", ...]
    func: str = ""
    const: Optional[int] = None  # always None; lets operand code treat it like a register

    @property
    def name(self) -> str:
        return f"{self.op}(...)"

    def __str__(self):
        inner = ", ".join(f"{a.ty} {a}" for a in self.args)
        return f"{self.op} ({inner})"


Operand = Union[Register, ConstExpr]

ARITH_OPS = ("add", "sub", "mul", "udiv", "sdiv", "urem", "srem")
LOGIC_OPS = ("shl", "lshr", "ashr", "and", "or", "xor")
BIN_OPS = ARITH_OPS + LOGIC_OPS
CMP_OPS = ("eq", "ne", "uge", "ugt", "ule", "ult", "sge", "sgt", "sle", "slt")
DIV_OPS = ("udiv", "sdiv", "urem", "srem")


@dataclass(frozen=True)
class BinInstr:
    op: str
    result: Register
    ty: Type
    lhs: Register
    rhs: Register


@dataclass(frozen=True)
class CmpInstr:
    op: str
    result: Register
    ty: Type
    lhs: Register
    rhs: Register


@dataclass(frozen=True)
class AllocaInstr:
    result: Register
    alloc_ty: Type


@dataclass(frozen=True)
class LoadInstr:
    result: Register
    ty: Type
    addr: Register


@dataclass(frozen=True)
class StoreInstr:
    ty: Type
    value: Register
    addr: Register


@dataclass(frozen=True)
class GepInstr:
    result: Register
    base_ty: Type
    base: Register
    indices: tuple[int, ...]


@dataclass(frozen=True)
class PhiInstr:
    result: Register
    ty: Type
    incomings: tuple[tuple[Register, str], ...]


@dataclass(frozen=True)
class CallInstr:
    result: Optional[Register]
    ret_ty: Type
    callee: str
    args: tuple[Register, ...]


@dataclass(frozen=True)
class RetInstr:
    value: Optional[Register]


@dataclass(frozen=True)
class BrInstr:
    target: str


@dataclass(frozen=True)
class CondBrInstr:
    cond: Register
    iftrue: str
    iffalse: str


@dataclass(frozen=True)
class NondetInstr:
    result: Register
    ty: Type


Instr = Union[
    BinInstr,
    CmpInstr,
    AllocaInstr,
    LoadInstr,
    StoreInstr,
    GepInstr,
    PhiInstr,
    CallInstr,
    RetInstr,
    BrInstr,
    CondBrInstr,
    NondetInstr,
]

TERMINATORS = (RetInstr, BrInstr, CondBrInstr)


def is_terminator(instr: Instr) -> bool:
    return isinstance(instr, TERMINATORS)


def result_of(instr: Instr) -> Optional[Register]:
    if isinstance(instr, (BinInstr, CmpInstr, AllocaInstr, LoadInstr, GepInstr, PhiInstr, NondetInstr)):
        return instr.result
    if isinstance(instr, CallInstr):
        return instr.result
    return None


def operands_of(instr: Instr) -> tuple[Register, ...]:
    """Registers read by an instruction (phi incomings included)."""
    if isinstance(instr, (BinInstr, CmpInstr)):
        return (instr.lhs, instr.rhs)
    if isinstance(instr, LoadInstr):
        return (instr.addr,)
    if isinstance(instr, StoreInstr):
        return (instr.value, instr.addr)
    if isinstance(instr, GepInstr):
        return (instr.base,)
    if isinstance(instr, PhiInstr):
        return tuple(v for v, _ in instr.incomings)
    if isinstance(instr, CallInstr):
        return instr.args
    if isinstance(instr, RetInstr):
        return (instr.value,) if instr.value is not None else ()
    if isinstance(instr, CondBrInstr):
        return (instr.cond,)
    return ()


def branch_targets(instr: Instr) -> tuple[str, ...]:
    if isinstance(instr, BrInstr):
        return (instr.target,)
    if isinstance(instr, CondBrInstr):
        return (instr.iftrue, instr.iffalse)
    return ()


# ---------------------------------------------------------------------------
# Blocks, functions, modules
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Block:
    label: str
    instrs: tuple[Instr, ...]

    def __post_init__(self):
        if not self.instrs:
            raise IrError(f"block {self.label} is empty")
        if not is_terminator(self.instrs[-1]):
            raise IrError(f"block {self.label} does not end in a terminator")
        for i, ins in enumerate(self.instrs[:-1]):
            if is_terminator(ins):
                raise IrError(f"block {self.label} has a terminator before its end")
        seen_non_phi = False
        for ins in self.instrs:
            if isinstance(ins, PhiInstr):
                if seen_non_phi:
                    raise IrError(f"phi after non-phi instruction in block {self.label}")
            else:
                seen_non_phi = True

    @property
    def phi_prefix_len(self) -> int:
        n = 0
        for ins in self.instrs:
            if isinstance(ins, PhiInstr):
                n += 1
            else:
                break
        return n


ENTRY_LABEL = "init"


@dataclass
class Func:
    name: str
    params: tuple[Register, ...]
    blocks: dict[str, Block]
    block_order: tuple[str, ...]
    ret_ty: Type

    def __post_init__(self):
        if ENTRY_LABEL not in self.blocks:
            raise IrError(f"function @{self.name} has no '{ENTRY_LABEL}' block")
        if set(self.block_order) != set(self.blocks):
            raise IrError(f"block order of @{self.name} does not cover its blocks")

    def instructions(self) -> Iterator[tuple[str, int, Instr]]:
        for label in self.block_order:
            for pc, ins in enumerate(self.blocks[label].instrs):
                yield label, pc, ins

    def defined_registers(self) -> list[Register]:
        out = []
        for _, _, ins in self.instructions():
            r = result_of(ins)
            if r is not None:
                out.append(r)
        return out

    def constant_registers(self) -> list[Register]:
        seen: dict[Register, None] = {}
        for _, _, ins in self.instructions():
            for r in operands_of(ins):
                if r.const is not None:
                    seen.setdefault(r)
        return list(seen)

    def register_order(self) -> list[Register]:
        """All registers of the function in a stable order: params, defs, constants."""
        out = list(self.params)
        seen = set(out)
        for r in self.defined_registers():
            if r not in seen:
                out.append(r)
                seen.add(r)
        for r in sorted(self.constant_registers(), key=lambda c: (str(c.ty), c.const)):
            if r not in seen:
                out.append(r)
                seen.add(r)
        return out


@dataclass
class IrModule:
    functions: list[Func]
    entry_points: list[int] = field(default_factory=list)

    def function(self, name: str) -> Func:
        for f in self.functions:
            if f.name == name:
                return f
        raise KeyError(name)

    def has_function(self, name: str) -> bool:
        return any(f.name == name for f in self.functions)

    def with_entry_points(self, names: list[str]) -> "IrModule":
        idx = []
        for n in names:
            for i, f in enumerate(self.functions):
                if f.name == n:
                    idx.append(i)
                    break
            else:
                raise IrError(f"entry point @{n} is not defined")
        return IrModule(self.functions, idx)


# ---------------------------------------------------------------------------
# Type checking
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TypeIssue:
    func: str
    label: str
    pc: int
    rule: str
    message: str

    def __str__(self):
        return f"@{self.func}:{self.label}[{self.pc}]: {self.rule}: {self.message}"


def _check_instr(f: Func, ins: Instr, issues: list[TypeIssue], label: str, pc: int):
    def bad(rule, msg):
        issues.append(TypeIssue(f.name, label, pc, rule, msg))

    if isinstance(ins, BinInstr):
        if not isinstance(ins.ty, IntType):
            bad("Binary", f"operand type {ins.ty} is not an integer type")
        elif not (ins.result.ty == ins.lhs.ty == ins.rhs.ty == ins.ty):
            bad("Binary", f"operands of {ins.op} must all have type {ins.ty}")
    elif isinstance(ins, CmpInstr):
        if not isinstance(ins.ty, IntType):
            bad("Compare", f"compared type {ins.ty} is not an integer type")
        elif ins.lhs.ty != ins.ty or ins.rhs.ty != ins.ty:
            bad("Compare", f"operands of icmp {ins.op} must have type {ins.ty}")
        if ins.result.ty != I8:
            bad("Compare", f"icmp result must be i8, got {ins.result.ty}")
    elif isinstance(ins, AllocaInstr):
        if ins.result.ty != PtrType(ins.alloc_ty):
            bad("Alloca", f"alloca {ins.alloc_ty} result must be {PtrType(ins.alloc_ty)}")
        if isinstance(ins.alloc_ty, VoidType):
            bad("Alloca", "cannot allocate void")
    elif isinstance(ins, LoadInstr):
        if ins.addr.ty != PtrType(ins.ty):
            bad("Load", f"load {ins.ty} requires a {PtrType(ins.ty)} address")
        if ins.result.ty != ins.ty:
            bad("Load", f"load result must be {ins.ty}")
    elif isinstance(ins, StoreInstr):
        if ins.value.ty != ins.ty:
            bad("Store", f"stored value must be {ins.ty}")
        if ins.addr.ty != PtrType(ins.ty):
            bad("Store", f"store {ins.ty} requires a {PtrType(ins.ty)} address")
    elif isinstance(ins, GepInstr):
        if ins.base.ty != PtrType(ins.base_ty):
            bad("GEP", f"base pointer must be {PtrType(ins.base_ty)}")
        try:
            elem = project_type(ins.base_ty, ins.indices[1:])
        except IrError as e:
            bad("GEP", str(e))
            return
        if ins.result.ty != PtrType(elem):
            bad("GEP", f"result must be {PtrType(elem)}, got {ins.result.ty}")
    elif isinstance(ins, PhiInstr):
        if ins.result.ty != ins.ty:
            bad("Phi", f"phi result must be {ins.ty}")
        for v, lab in ins.incomings:
            if v.ty != ins.ty:
                bad("Phi", f"incoming {v} from {lab} must have type {ins.ty}")
            if lab not in f.blocks:
                bad("Phi", f"incoming label {lab} does not exist")
    elif isinstance(ins, CallInstr):
        if ins.result is not None and ins.result.ty != ins.ret_ty:
            bad("Call", f"call result must have type {ins.ret_ty}")
        if ins.result is None and not isinstance(ins.ret_ty, VoidType):
            bad("Call", "non-void call must bind its result")
    elif isinstance(ins, RetInstr):
        if ins.value is None:
            if not isinstance(f.ret_ty, VoidType):
                bad("Ret", f"ret void in function returning {f.ret_ty}")
        else:
            if ins.value.ty != f.ret_ty:
                bad("Ret", f"returned {ins.value.ty}, function returns {f.ret_ty}")
    elif isinstance(ins, CondBrInstr):
        if ins.cond.ty != I8:
            bad("Branch", f"branch condition must be i8, got {ins.cond.ty}")
        for t in (ins.iftrue, ins.iffalse):
            if t not in f.blocks:
                bad("Branch", f"target {t} does not exist")
    elif isinstance(ins, BrInstr):
        if ins.target not in f.blocks:
            bad("Branch", f"target {ins.target} does not exist")
    elif isinstance(ins, NondetInstr):
        if ins.result.ty != ins.ty:
            bad("NonDet", f"nondet result must be {ins.ty}")


def _check_call_signatures(m: IrModule, f: Func, issues: list[TypeIssue]):
    for label, pc, ins in f.instructions():
        if not isinstance(ins, CallInstr):
            continue
        if not m.has_function(ins.callee):
            continue  # external: resolved by a platform plugin at run time
        callee = m.function(ins.callee)
        if callee.ret_ty != ins.ret_ty:
            issues.append(TypeIssue(f.name, label, pc, "Call",
                                    f"@{ins.callee} returns {callee.ret_ty}, call expects {ins.ret_ty}"))
        if len(callee.params) != len(ins.args):
            issues.append(TypeIssue(f.name, label, pc, "Call",
                                    f"@{ins.callee} takes {len(callee.params)} arguments"))
        else:
            for p, a in zip(callee.params, ins.args):
                if p.ty != a.ty:
                    issues.append(TypeIssue(f.name, label, pc, "Call",
                                            f"argument {a} must have type {p.ty}"))


def type_check(m: IrModule) -> list[TypeIssue]:
    """Check well-typedness of every instruction, SSA form and entry-point shape."""
    issues: list[TypeIssue] = []
    for f in m.functions:
        defined: dict[Register, tuple[str, int]] = {}
        for label, pc, ins in f.instructions():
            r = result_of(ins)
            if r is not None:
                if r in defined:
                    issues.append(TypeIssue(f.name, label, pc, "SSA",
                                            f"register {r.name} already defined"))
                else:
                    defined[r] = (label, pc)
            _check_instr(f, ins, issues, label, pc)
        known = set(f.params) | set(defined)
        for label, pc, ins in f.instructions():
            for r in operands_of(ins):
                if r.const is None and r not in known:
                    issues.append(TypeIssue(f.name, label, pc, "Use",
                                            f"register {r.name} is never defined"))
        _check_call_signatures(m, f, issues)
    for i in m.entry_points:
        f = m.functions[i]
        if f.params:
            issues.append(TypeIssue(f.name, ENTRY_LABEL, 0, "EntryPoint",
                                    "entry points take no parameters"))
        if not isinstance(f.ret_ty, VoidType):
            issues.append(TypeIssue(f.name, ENTRY_LABEL, 0, "EntryPoint",
                                    "entry points must return void"))
    return issues


# ---------------------------------------------------------------------------
# CFG analysis
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NaturalLoop:
    header: str
    body: frozenset[str]
    back_edges: tuple[tuple[str, str], ...]


@dataclass
class CfgInfo:
    predecessors: dict[str, set[str]]
    dominators: dict[str, set[str]]
    natural_loops: list[NaturalLoop]
    unreachable: set[str]

    def in_set(self, label: str) -> set[str]:
        return self.predecessors.get(label, set())

    def is_converging(self, label: str) -> bool:
        return len(self.in_set(label)) > 1


def successors_of(f: Func, label: str) -> tuple[str, ...]:
    return branch_targets(f.blocks[label].instrs[-1])


def cfg_analysis(f: Func, ignore_labels: frozenset[str] = frozenset()) -> CfgInfo:
    """Predecessor sets, dominators and natural loops of a function's CFG.

    ``ignore_labels`` excludes synthetic labels (unroll trap blocks) from
    loop detection.
    """
    preds: dict[str, set[str]] = {l: set() for l in f.block_order}
    for l in f.block_order:
        for t in successors_of(f, l):
            preds[t].add(l)

    # Reachability from the entry block.
    reach = {ENTRY_LABEL}
    work = [ENTRY_LABEL]
    while work:
        l = work.pop()
        for t in successors_of(f, l):
            if t not in reach:
                reach.add(t)
                work.append(t)
    unreachable = set(f.block_order) - reach

    # Iterative dominator computation over reachable blocks.
    dom: dict[str, set[str]] = {ENTRY_LABEL: {ENTRY_LABEL}}
    for l in reach - {ENTRY_LABEL}:
        dom[l] = set(reach)
    changed = True
    while changed:
        changed = False
        for l in f.block_order:
            if l not in reach or l == ENTRY_LABEL:
                continue
            ps = [p for p in preds[l] if p in reach]
            new = set.intersection(*(dom[p] for p in ps)) | {l} if ps else {l}
            if new != dom[l]:
                dom[l] = new
                changed = True

    back: dict[str, list[str]] = {}
    for l in reach:
        if l in ignore_labels:
            continue
        for t in successors_of(f, l):
            if t in ignore_labels:
                continue
            if t in dom.get(l, set()):
                back.setdefault(t, []).append(l)

    loops = []
    for header in sorted(back):
        sources = sorted(back[header])
        body = {header}
        work = [s for s in sources if s != header]
        for s in sources:
            body.add(s)
        while work:
            n = work.pop()
            for p in preds[n]:
                if p not in body and p in reach:
                    body.add(p)
                    work.append(p)
        loops.append(NaturalLoop(header, frozenset(body),
                                 tuple((s, header) for s in sources)))
    return CfgInfo(preds, dom, loops, unreachable)


# ---------------------------------------------------------------------------
# Printing
# ---------------------------------------------------------------------------


def _fmt_operand(r: Register, with_ty: bool = False) -> str:
    s = str(r)
    return f"{r.ty} {s}" if with_ty else s


def print_instr(ins: Instr) -> str:
    if isinstance(ins, BinInstr):
        return f"{ins.result} = {ins.op} {ins.ty} {ins.lhs}, {ins.rhs}"
    if isinstance(ins, CmpInstr):
        return f"{ins.result} = icmp {ins.op} {ins.ty} {ins.lhs}, {ins.rhs}"
    if isinstance(ins, AllocaInstr):
        return f"{ins.result} = alloca {ins.alloc_ty}"
    if isinstance(ins, LoadInstr):
        return f"{ins.result} = load {ins.ty}, {ins.ty}* {ins.addr}"
    if isinstance(ins, StoreInstr):
        return f"store {ins.ty} {ins.value}, {ins.ty}* {ins.addr}"
    if isinstance(ins, GepInstr):
        idx = ", ".join(f"i32 {i}" for i in ins.indices)
        return (f"{ins.result} = getelementptr {ins.base_ty}, "
                f"{ins.base_ty}* {ins.base}, {idx}")
    if isinstance(ins, PhiInstr):
        inc = ", ".join(f"[ {v}, %{l} ]" for v, l in ins.incomings)
        return f"{ins.result} = phi {ins.ty} {inc}"
    if isinstance(ins, CallInstr):
        args = ", ".join(_fmt_operand(a, with_ty=True) for a in ins.args)
        call = f"call {ins.ret_ty} @{ins.callee}({args})"
        return f"{ins.result} = {call}" if ins.result is not None else call
    if isinstance(ins, RetInstr):
        return "ret void" if ins.value is None else f"ret {ins.value.ty} {ins.value}"
    if isinstance(ins, BrInstr):
        return f"br label %{ins.target}"
    if isinstance(ins, CondBrInstr):
        return f"br i8 {ins.cond}, label %{ins.iftrue}, label %{ins.iffalse}"
    if isinstance(ins, NondetInstr):
        return f"{ins.result} = nondet {ins.ty}"
    raise IrError(f"cannot print {ins!r}")


def print_module(m: IrModule) -> str:
    out = []
    for f in m.functions:
        params = ", ".join(f"{p.ty} {p.name}" for p in f.params)
        out.append(f"define {f.ret_ty} @{f.name}({params}) {{")
        for label in f.block_order:
            out.append(f"{label}:")
            for ins in f.blocks[label].instrs:
                out.append(f"  {print_instr(ins)}")
        out.append("}")
        out.append("")
    return "\n".join(out)
