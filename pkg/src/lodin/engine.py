"""Interpreter core: activation records, transition rules and successor generators.

A network state holds one process (a stack of activation records) per entry
point plus a shared context state.  Every entry point is wrapped in a
synthetic stub that calls it and then spins in a self-loop, so processes
never disappear and their indices stay stable.  The engine is written
purely against the context interface; the same transition code drives the
explicit and the symbolic semantics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Any, Callable, Optional

from .context import CmpOutcome, Context, ContextError, FullDomain, MemoryFault, SsaViolation
from .ir import (
    AllocaInstr,
    BinInstr,
    Block,
    BrInstr,
    CallInstr,
    CmpInstr,
    CondBrInstr,
    ConstExpr,
    DIV_OPS,
    Func,
    GepInstr,
    Instr,
    IrModule,
    LoadInstr,
    NondetInstr,
    PhiInstr,
    Register,
    RetInstr,
    StoreInstr,
    VOID,
    print_instr,
    type_offset,
)


class EngineError(Exception):
    pass


STUB_PREFIX = "__stub."


def make_stub(entry_name: str) -> Func:
    """Stub wrapper: call the entry point, then self-loop forever."""
    init = Block("init", (CallInstr(None, VOID, entry_name, ()), BrInstr("loop")))
    loop = Block("loop", (BrInstr("loop"),))
    return Func(STUB_PREFIX + entry_name, (), {"init": init, "loop": loop},
                ("init", "loop"), VOID)


@dataclass(frozen=True)
class Frame:
    func: Func
    prev: str
    cur: str
    pc: int
    reg_map: dict[Register, int]
    frees: tuple[Any, ...]

    def block(self) -> Block:
        return self.func.blocks[self.cur]

    def instr(self) -> Instr:
        return self.block().instrs[self.pc]


Stack = tuple[Frame, ...]  # head = executing frame; empty = terminated


@dataclass(frozen=True)
class ErrorFlag:
    kind: str  # DivByZero | MemoryError | UndefinedResult | EngineError | SsaViolation
    proc: int
    detail: str


@dataclass(frozen=True)
class NetState:
    procs: tuple[Stack, ...]
    ctx_state: Any
    flag: Optional[ErrorFlag] = None


@dataclass
class PlatformPlugin:
    """Named table of atomic native implementations for external functions."""

    name: str
    table: dict[str, Callable]

    def with_function(self, fname: str, fn: Callable) -> "PlatformPlugin":
        t = dict(self.table)
        t[fname] = fn
        return PlatformPlugin(self.name, t)


def _noop(ctx: Context, ctx_state, args, ret_ty):
    return ctx_state, None


def _shared_block(ctx: Context, ctx_state, args, ret_ty):
    """Idempotent shared-memory primitive: block 0 of the given byte size.

    Lets hand-written multi-process programs share one memory block (the
    role module-level globals play in compiled code).  Explicit context
    only.
    """
    from .explicit import BitVec, ExplicitState, pack_ptr
    if not isinstance(ctx_state, ExplicitState):
        raise EngineError("@__shared_block is only available in the explicit context")
    size = args[0].unsigned if args else 4
    live = ctx_state.mem.live(0)
    if live is None:
        mem, idx = ctx_state.mem.new(size)
        if idx != 0:
            raise MemoryFault("@__shared_block must be called before any alloca")
        ctx_state = ExplicitState(mem, ctx_state.n_regs, ctx_state.regs)
    elif live[0] != size:
        raise MemoryFault(f"@__shared_block size mismatch: {live[0]} vs {size}")
    return ctx_state, BitVec(64, pack_ptr(0, 0))


def default_platform() -> PlatformPlugin:
    return PlatformPlugin("Default", {
        "error": _noop,
        "__lodin_unroll_bound": _noop,
        "__shared_block": _shared_block,
    })


def is_visible(instr: Instr) -> bool:
    """Visible steps can affect or observe other processes."""
    return isinstance(instr, (LoadInstr, StoreInstr, CallInstr, NondetInstr))


class Engine:
    """Successor generation for one module under one context."""

    def __init__(self, module: IrModule, context: Context,
                 plugin: Optional[PlatformPlugin] = None, nondet_cap: int = 256):
        if not module.entry_points:
            raise EngineError("module has no entry points")
        self.module = module
        self.ctx = context
        self.plugin = plugin or default_platform()
        self.nondet_cap = nondet_cap
        self.stubs = {i: make_stub(module.functions[i].name) for i in module.entry_points}

    # -- state construction -------------------------------------------------

    def _make_frame(self, ctx_state, func: Func, args: list = ()) -> tuple[Any, Frame]:
        reg_map: dict[Register, int] = {}
        order = func.register_order()
        for r in order:
            ctx_state, rid = self.ctx.make_reg(ctx_state, r)
            reg_map[r] = rid
        for r in order:
            if r.const is not None:
                val = self.ctx.const_value(ctx_state, r.const, r.ty)
                ctx_state = self.ctx.set_reg(ctx_state, reg_map[r], val, r.ty)
        for p, v in zip(func.params, args):
            ctx_state = self.ctx.set_reg(ctx_state, reg_map[p], v, p.ty)
        return ctx_state, Frame(func, "init", "init", 0, reg_map, ())

    def initial_state(self) -> NetState:
        ctx_state = self.ctx.initial_state()
        procs = []
        for i in self.module.entry_points:
            ctx_state, frame = self._make_frame(ctx_state, self.stubs[i])
            procs.append((frame,))
        return NetState(tuple(procs), ctx_state)

    # -- single-instruction transitions -------------------------------------

    def enabled(self, s: NetState, i: int) -> bool:
        return s.flag is None and bool(s.procs[i])

    def enabled_procs(self, s: NetState) -> list[int]:
        return [i for i in range(len(s.procs)) if self.enabled(s, i)]

    def next_instr(self, s: NetState, i: int) -> Instr:
        return s.procs[i][0].instr()

    def _eval_operand(self, ctx_state, frame: Frame, reg: Register):
        if isinstance(reg, ConstExpr):
            raise EngineError("unlifted constant expression operand; run the lifting transform")
        return self.ctx.eval_reg(ctx_state, frame.reg_map[reg], reg.ty)

    def _with_proc(self, s: NetState, i: int, stack: Stack, ctx_state) -> NetState:
        procs = s.procs[:i] + (stack,) + s.procs[i + 1:]
        return NetState(procs, ctx_state)

    def _error(self, s: NetState, i: int, kind: str, detail: str) -> NetState:
        return NetState(s.procs, s.ctx_state, ErrorFlag(kind, i, detail))

    def _advance(self, frame: Frame, pc: Optional[int] = None, **kw) -> Frame:
        return replace(frame, pc=frame.pc + 1 if pc is None else pc, **kw)

    def _materialize(self, s, i, frame, fd: FullDomain, ty, result: Register, kind: str,
                     detail: str) -> list[tuple[NetState, str]]:
        if 2 ** fd.width > self.nondet_cap:
            return [(self._error(s, i, kind, detail), detail)]
        out = []
        stack_tail = s.procs[i][1:]
        for v in range(2 ** fd.width):
            value = self.ctx.const_value(s.ctx_state, v, ty)
            st = self.ctx.set_reg(s.ctx_state, frame.reg_map[result], value, ty)
            ns = self._with_proc(s, i, (self._advance(frame),) + stack_tail, st)
            out.append((ns, f"{detail}={v}"))
        return out

    def step(self, s: NetState, i: int) -> list[tuple[NetState, str]]:
        """All single-transition successors of process ``i`` (absorbing on errors)."""
        if not self.enabled(s, i):
            return []
        frame = s.procs[i][0]
        tail = s.procs[i][1:]
        instr = frame.instr()
        desc = f"p{i}: {print_instr(instr)}"
        try:
            return self._dispatch(s, i, frame, tail, instr, desc)
        except MemoryFault as e:
            return [(self._error(s, i, "MemoryError", str(e)), desc)]
        except SsaViolation as e:
            return [(self._error(s, i, "SsaViolation", str(e)), desc)]
        except (ContextError, EngineError) as e:
            return [(self._error(s, i, "EngineError", str(e)), desc)]

    def _dispatch(self, s, i, frame: Frame, tail: Stack, instr: Instr, desc: str):
        ctx = self.ctx
        st = s.ctx_state

        if isinstance(instr, BinInstr):
            a = self._eval_operand(st, frame, instr.lhs)
            b = self._eval_operand(st, frame, instr.rhs)
            st, res = ctx.binop(instr.op, st, a, b, instr.ty)
            if isinstance(res, FullDomain):
                kind = "DivByZero" if instr.op in DIV_OPS else "UndefinedResult"
                return self._materialize(NetState(s.procs, st, s.flag), i, frame, res,
                                         instr.ty, instr.result, kind, desc)
            st = ctx.set_reg(st, frame.reg_map[instr.result], res, instr.ty)
            return [(self._with_proc(s, i, (self._advance(frame),) + tail, st), desc)]

        if isinstance(instr, CmpInstr):
            a = self._eval_operand(st, frame, instr.lhs)
            b = self._eval_operand(st, frame, instr.rhs)
            out = []
            for oc in ctx.cmp(instr.op, st, a, b, instr.ty):
                st2 = ctx.set_reg(oc.state, frame.reg_map[instr.result], oc.value, instr.result.ty)
                ns = self._with_proc(s, i, (self._advance(frame),) + tail, st2)
                out.append((ns, desc))
            return out

        if isinstance(instr, AllocaInstr):
            st, ptr = ctx.alloc(st, instr.alloc_ty)
            st = ctx.set_reg(st, frame.reg_map[instr.result], ptr, instr.result.ty)
            nf = self._advance(frame, frees=frame.frees + (ptr,))
            return [(self._with_proc(s, i, (nf,) + tail, st), desc)]

        if isinstance(instr, LoadInstr):
            addr = self._eval_operand(st, frame, instr.addr)
            res = ctx.load(st, addr, instr.ty)
            if isinstance(res, FullDomain):
                return [(self._error(s, i, "MemoryError", f"invalid load: {desc}"), desc)]
            st = ctx.set_reg(st, frame.reg_map[instr.result], res, instr.ty)
            return [(self._with_proc(s, i, (self._advance(frame),) + tail, st), desc)]

        if isinstance(instr, StoreInstr):
            val = self._eval_operand(st, frame, instr.value)
            addr = self._eval_operand(st, frame, instr.addr)
            st = ctx.store(st, val, addr, instr.ty)
            return [(self._with_proc(s, i, (self._advance(frame),) + tail, st), desc)]

        if isinstance(instr, GepInstr):
            base = self._eval_operand(st, frame, instr.base)
            offset, _elem = type_offset(instr.base_ty, instr.indices)
            ptr = ctx.ptr_add(base, offset)
            st = ctx.set_reg(st, frame.reg_map[instr.result], ptr, instr.result.ty)
            return [(self._with_proc(s, i, (self._advance(frame),) + tail, st), desc)]

        if isinstance(instr, BrInstr):
            nf = replace(frame, prev=frame.cur, cur=instr.target, pc=0)
            return [(self._with_proc(s, i, (nf,) + tail, st), desc)]

        if isinstance(instr, CondBrInstr):
            v = self._eval_operand(st, frame, instr.cond)
            out = []
            for st2, taken in ctx.truth_split(st, v):
                target = instr.iftrue if taken else instr.iffalse
                nf = replace(frame, prev=frame.cur, cur=target, pc=0)
                out.append((self._with_proc(s, i, (nf,) + tail, st2), desc))
            return out

        if isinstance(instr, PhiInstr):
            block = frame.block()
            prefix = block.phi_prefix_len
            phis = block.instrs[:prefix]
            values = []
            for phi in phis:
                chosen = None
                for val, lab in phi.incomings:
                    if lab == frame.prev:
                        chosen = val
                        break
                if chosen is None:
                    raise EngineError(f"phi in {frame.cur} has no incoming for {frame.prev}")
                values.append(self._eval_operand(st, frame, chosen))
            for phi, v in zip(phis, values):  # simultaneous: all reads before writes
                st = ctx.set_reg(st, frame.reg_map[phi.result], v, phi.ty)
            nf = self._advance(frame, pc=prefix)
            return [(self._with_proc(s, i, (nf,) + tail, st), desc)]

        if isinstance(instr, CallInstr):
            args = [self._eval_operand(st, frame, a) for a in instr.args]
            if instr.callee in self.plugin.table:
                st, ret = self.plugin.table[instr.callee](self.ctx, st, args, instr.ret_ty)
                if instr.result is not None:
                    if ret is None:
                        raise EngineError(f"plugin @{instr.callee} returned no value")
                    st = ctx.set_reg(st, frame.reg_map[instr.result], ret, instr.result.ty)
                return [(self._with_proc(s, i, (self._advance(frame),) + tail, st), desc)]
            if not self.module.has_function(instr.callee):
                raise EngineError(f"call to unknown external function @{instr.callee}")
            callee = self.module.function(instr.callee)
            st, new_frame = self._make_frame(st, callee, args)
            return [(self._with_proc(s, i, (new_frame, frame) + tail, st), desc)]

        if isinstance(instr, RetInstr):
            value = self._eval_operand(st, frame, instr.value) if instr.value is not None else None
            for ptr in frame.frees:
                st = ctx.free(st, ptr)
            if not tail:
                return [(self._with_proc(s, i, (), st), desc)]
            caller = tail[0]
            call = caller.instr()
            if isinstance(call, CallInstr) and call.result is not None:
                if value is None:
                    raise EngineError("void return into a value-binding call")
                st = ctx.set_reg(st, caller.reg_map[call.result], value, call.result.ty)
            nc = self._advance(caller)
            return [(self._with_proc(s, i, (nc,) + tail[1:], st), desc)]

        if isinstance(instr, NondetInstr):
            res = ctx.nondet(st, instr.ty)
            if isinstance(res, FullDomain):
                return self._materialize(s, i, frame, res, instr.ty, instr.result,
                                         "UndefinedResult", desc)
            out = []
            for st2, value in res:
                st3 = ctx.set_reg(st2, frame.reg_map[instr.result], value, instr.ty)
                out.append((self._with_proc(s, i, (self._advance(frame),) + tail, st3), desc))
            return out

        raise EngineError(f"cannot execute {instr!r}")

    # -- successor generators ------------------------------------------------

    def successors_naive(self, s: NetState) -> list[tuple[NetState, str]]:
        out = []
        for i in self.enabled_procs(s):
            out.extend(self.step(s, i))
        return out

    def successors_bicycle(self, s: NetState) -> list[tuple[NetState, str]]:
        """Per process: one transition, then greedily chain invisible
        deterministic transitions of the same process (stopping on cycles)."""
        out = []
        for i in self.enabled_procs(s):
            for first, lbl in self.step(s, i):
                cur, labels = first, [lbl]
                seen = {self.canonical_key(s), self.canonical_key(first)}
                while self.enabled(cur, i):
                    if is_visible(self.next_instr(cur, i)):
                        break
                    succs = self.step(cur, i)
                    if len(succs) != 1:
                        break
                    nxt, nlbl = succs[0]
                    k = self.canonical_key(nxt)
                    if k in seen:
                        break
                    seen.add(k)
                    cur = nxt
                    labels.append(nlbl)
                out.append((cur, " ; ".join(labels)))
        return out

    def successors_binoculars(self, s: NetState) -> list[tuple[NetState, str]]:
        """Rule 1: all invisible-next processes advance one step together
        (ascending order).  Rule 2: visible-next processes step individually."""
        out = []
        internal = [i for i in self.enabled_procs(s) if not is_visible(self.next_instr(s, i))]
        visible = [i for i in self.enabled_procs(s) if is_visible(self.next_instr(s, i))]
        if internal:
            cur = s
            labels = []
            deferred = []
            for i in internal:
                if cur.flag is not None:
                    break
                succs = self.step(cur, i)
                if len(succs) == 1:
                    cur, lbl = succs[0][0], succs[0][1]
                    labels.append(lbl)
                else:
                    deferred.append(i)
            if labels:
                out.append((cur, " || ".join(labels)))
            for i in deferred:
                out.extend(self.step(s, i))
        for i in visible:
            out.extend(self.step(s, i))
        return out

    def generator(self, name: str):
        return {
            "naive": self.successors_naive,
            "bicycle": self.successors_bicycle,
            "binoculars": self.successors_binoculars,
        }[name]

    # -- probabilistic semantics ---------------------------------------------

    def sample_step(self, s: NetState, rng) -> tuple[NetState, float, str]:
        """One uniformly selected transition; returns the log trace-probability
        increment.  Absorbing self-loop (probability 1) when nothing is enabled."""
        enabled = self.enabled_procs(s)
        if not enabled:
            return s, 0.0, "absorbing"
        i = enabled[rng.randrange(len(enabled))]
        logp = -math.log(len(enabled))
        frame = s.procs[i][0]
        instr = frame.instr()
        if isinstance(instr, NondetInstr):
            from .ir import bitwidth
            width = bitwidth(instr.ty)
            v = rng.randrange(1 << width)
            value = self.ctx.const_value(s.ctx_state, v, instr.ty)
            st = self.ctx.set_reg(s.ctx_state, frame.reg_map[instr.result], value, instr.ty)
            ns = self._with_proc(s, i, (self._advance(frame),) + s.procs[i][1:], st)
            return ns, logp - width * math.log(2), f"p{i}: {print_instr(instr)}={v}"
        if isinstance(instr, BinInstr):
            try:
                a = self._eval_operand(s.ctx_state, frame, instr.lhs)
                b = self._eval_operand(s.ctx_state, frame, instr.rhs)
                st, res = self.ctx.binop(instr.op, s.ctx_state, a, b, instr.ty)
                if isinstance(res, FullDomain):
                    v = rng.randrange(1 << res.width)
                    value = self.ctx.const_value(st, v, instr.ty)
                    st = self.ctx.set_reg(st, frame.reg_map[instr.result], value, instr.ty)
                    ns = self._with_proc(s, i, (self._advance(frame),) + s.procs[i][1:], st)
                    return ns, logp - res.width * math.log(2), f"p{i}: {print_instr(instr)}={v}"
            except (ContextError, EngineError):
                pass  # fall through to step(), which flags the error state
        succs = self.step(s, i)
        if not succs:
            return s, logp, "stuck"
        k = rng.randrange(len(succs))
        ns, lbl = succs[k]
        return ns, logp - math.log(len(succs)), lbl

    # -- canonical serialization ----------------------------------------------

    def canonical_key(self, s: NetState):
        """Content key identifying states up to register-variable renaming."""
        pi: dict[int, int] = {}
        frames_part = []
        for stack in s.procs:
            stack_part = []
            for frame in reversed(stack):  # oldest first: chronological id order
                ids = []
                for r in frame.func.register_order():
                    rid = frame.reg_map[r]
                    if rid not in pi:
                        pi[rid] = len(pi)
                    ids.append(pi[rid])
                frees = tuple(sorted(v.val for v in frame.frees))
                stack_part.append((frame.func.name, frame.prev, frame.cur, frame.pc,
                                   tuple(ids), frees))
            frames_part.append(tuple(stack_part))
        ctx_part = self._ctx_fingerprint(s.ctx_state, pi)
        flag_part = (s.flag.kind, s.flag.proc) if s.flag else None
        return (tuple(frames_part), ctx_part, flag_part)

    def _ctx_fingerprint(self, ctx_state, pi: dict[int, int]):
        from .explicit import ExplicitState
        if not isinstance(ctx_state, ExplicitState):
            raise EngineError("canonical keys require the explicit context")
        values = [None] * len(pi)
        for rid, canon in pi.items():
            width, val = ctx_state.regs[rid]
            values[canon] = (width, val)
        return (tuple(values), ctx_state.mem.blocks)
