"""The verification query language: parsing and evaluation of propositions.

Atoms are register comparisons (``@0.main.%x;ui32 == 5;ui32``), the built-in
error detectors ``DataRace``/``DivZero``/``Overflows`` and call-site checks
``[0.error]``; they combine with ``&&``, ``||`` and ``!``.  Top-level query
forms select the verification procedure (reachability, estimation,
hypothesis test, state enumeration).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Optional, Union

from .context import ContextError, RegisterFault
from .engine import Engine, NetState
from .explicit import ExplicitState, ptr_block, ptr_offset
from .ir import BinInstr, CallInstr, DIV_OPS, LoadInstr, StoreInstr, bsize


class QueryParseError(Exception):
    pass


class UnsupportedInSymbolic(Exception):
    """Raised when a proposition needs concrete registers or memory."""


QueryType = tuple[str, int]  # ('ui' | 'si', width)


@dataclass(frozen=True)
class Number:
    value: int
    qtype: QueryType

    def __str__(self):
        return f"{self.value};{self.qtype[0]}{self.qtype[1]}"


@dataclass(frozen=True)
class RegisterRef:
    proc: int
    func: str
    reg: str  # local name, with % prefix
    qtype: QueryType

    def __str__(self):
        return f"@{self.proc}.{self.func}.{self.reg};{self.qtype[0]}{self.qtype[1]}"


Comparand = Union[Number, RegisterRef]


@dataclass(frozen=True)
class Compare:
    lhs: Comparand
    op: str
    rhs: Comparand


@dataclass(frozen=True)
class Simple:
    kind: str  # DataRace | DivZero | Overflows


@dataclass(frozen=True)
class CallSite:
    proc: int
    func: str


@dataclass(frozen=True)
class Not:
    arg: "Prop"


@dataclass(frozen=True)
class And:
    lhs: "Prop"
    rhs: "Prop"


@dataclass(frozen=True)
class Or:
    lhs: "Prop"
    rhs: "Prop"


Prop = Union[Compare, Simple, CallSite, Not, And, Or]


@dataclass(frozen=True)
class EReach:
    prop: Prop


@dataclass(frozen=True)
class PrEstimate:
    step_bound: int
    prop: Prop
    alpha: float = 0.05
    epsilon: float = 0.01


@dataclass(frozen=True)
class PrTest:
    step_bound: int
    prop: Prop
    theta: float
    alpha: float = 0.05
    beta: float = 0.05
    delta: float = 0.01


@dataclass(frozen=True)
class EnumStates:
    pass


@dataclass(frozen=True)
class EnumStatesSMC:
    step_bound: int
    runs: int


Query = Union[EReach, PrEstimate, PrTest, EnumStates, EnumStatesSMC]


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_QTOKEN = re.compile(
    r"""\s*(?:
          (?P<float>\d+\.\d+)
        | (?P<int>-?\d+)
        | (?P<id>[A-Za-z_][A-Za-z0-9_]*)
        | (?P<reg>%[A-Za-z0-9_.$\-]+)
        | (?P<op><=|>=|==|!=|<>|&&|\|\||[@.;(){}\[\],<>!=])
        )""",
    re.X,
)


def _tokenize_query(text: str) -> list[str]:
    toks = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _QTOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise QueryParseError(f"unexpected character {text[pos]!r} at column {pos + 1}")
        pos = m.end()
        toks.append(m.group(m.lastgroup))
    return toks


class _QCursor:
    def __init__(self, toks: list[str]):
        self.toks = toks
        self.i = 0

    def peek(self) -> Optional[str]:
        return self.toks[self.i] if self.i < len(self.toks) else None

    def take(self, expected: Optional[str] = None) -> str:
        t = self.peek()
        if t is None:
            raise QueryParseError(f"unexpected end of query, expected {expected!r}")
        if expected is not None and t != expected:
            raise QueryParseError(f"expected {expected!r}, got {t!r}")
        self.i += 1
        return t

    def done(self) -> bool:
        return self.i >= len(self.toks)


_CMP_OPS = ("<", "<=", ">=", ">", "==", "!=")


def _parse_qtype(c: _QCursor) -> QueryType:
    t = c.take()
    m = re.fullmatch(r"(ui|si)(8|16|32|64)", t)
    if not m:
        raise QueryParseError(f"unknown query type {t!r} (expected ui/si 8|16|32|64)")
    return m.group(1), int(m.group(2))


def _parse_comparand(c: _QCursor) -> Comparand:
    t = c.peek()
    if t == "@":
        c.take("@")
        proc = int(c.take())
        c.take(".")
        func = c.take()
        c.take(".")
        reg = c.take()
        if not reg.startswith("%"):
            raise QueryParseError(f"expected a %register, got {reg!r}")
        c.take(";")
        return RegisterRef(proc, func, reg, _parse_qtype(c))
    if t is not None and re.fullmatch(r"-?\d+", t):
        value = int(c.take())
        c.take(";")
        return Number(value, _parse_qtype(c))
    raise QueryParseError(f"expected a register path or number, got {t!r}")


def _parse_atom(c: _QCursor) -> Prop:
    t = c.peek()
    if t in ("DataRace", "DivZero", "Overflows"):
        c.take()
        return Simple(t)
    if t == "[":
        c.take("[")
        proc = int(c.take())
        c.take(".")
        func = c.take()
        c.take("]")
        return CallSite(proc, func)
    if t == "!":
        c.take("!")
        return Not(_parse_atom(c))
    if t == "(":
        c.take("(")
        nxt = c.peek()
        if nxt == "@" or (nxt is not None and re.fullmatch(r"-?\d+", nxt)):
            lhs = _parse_comparand(c)
            op = c.take()
            if op not in _CMP_OPS:
                raise QueryParseError(f"unknown comparison operator {op!r}")
            rhs = _parse_comparand(c)
            if lhs.qtype != rhs.qtype:
                raise QueryParseError(
                    f"type mismatch: {lhs.qtype[0]}{lhs.qtype[1]} vs {rhs.qtype[0]}{rhs.qtype[1]}")
            c.take(")")
            return Compare(lhs, op, rhs)
        p = _parse_or(c)
        c.take(")")
        return p
    raise QueryParseError(f"expected a proposition, got {t!r}")


def _parse_and(c: _QCursor) -> Prop:
    p = _parse_atom(c)
    while c.peek() == "&&":
        c.take("&&")
        p = And(p, _parse_atom(c))
    return p


def _parse_or(c: _QCursor) -> Prop:
    p = _parse_and(c)
    while c.peek() == "||":
        c.take("||")
        p = Or(p, _parse_and(c))
    return p


def parse_prop(text: str) -> Prop:
    c = _QCursor(_tokenize_query(text))
    p = _parse_or(c)
    if not c.done():
        raise QueryParseError(f"trailing input after proposition: {c.peek()!r}")
    return p


_PARAM_KEYS = {"Alpha": "alpha", "Epsilon": "epsilon", "Beta": "beta", "Delta": "delta"}


def _parse_params(c: _QCursor) -> dict[str, float]:
    params = {}
    c.take("{")
    while True:
        key = c.take()
        if key not in _PARAM_KEYS:
            raise QueryParseError(f"unknown parameter {key!r}")
        c.take("=")
        params[_PARAM_KEYS[key]] = float(c.take())
        if c.peek() == ",":
            c.take(",")
            continue
        break
    c.take("}")
    return params


def parse_query(text: str) -> Query:
    """Parse one query line into its structured form."""
    c = _QCursor(_tokenize_query(text))
    t = c.peek()
    if t == "E":
        c.take("E")
        c.take("<>")
        c.take("(")
        prop = _parse_or(c)
        c.take(")")
        if not c.done():
            raise QueryParseError(f"trailing input: {c.peek()!r}")
        return EReach(prop)
    if t == "EnumStates":
        c.take()
        if not c.done():
            raise QueryParseError("EnumStates takes no arguments")
        return EnumStates()
    if t == "EnumStatesSMC":
        c.take()
        c.take("<=")
        bound = int(c.take())
        runs = int(c.take())
        if bound < 1 or runs < 1:
            raise QueryParseError("EnumStatesSMC bounds must be >= 1")
        if not c.done():
            raise QueryParseError(f"trailing input: {c.peek()!r}")
        return EnumStatesSMC(bound, runs)
    if t == "Pr":
        c.take("Pr")
        c.take("[")
        c.take("<=")
        bound = int(c.take())
        if bound < 1:
            raise QueryParseError("step bound must be >= 1")
        c.take("]")
        c.take("(")
        c.take("<>")
        prop = _parse_or(c)
        c.take(")")
        if c.peek() == ">=":
            c.take(">=")
            theta = float(c.take())
            params = _parse_params(c) if c.peek() == "{" else {}
            if not c.done():
                raise QueryParseError(f"trailing input: {c.peek()!r}")
            bad = set(params) - {"alpha", "beta", "delta"}
            if bad:
                raise QueryParseError(f"unknown parameters for a hypothesis test: {bad}")
            return PrTest(bound, prop, theta, **params)
        params = _parse_params(c) if c.peek() == "{" else {}
        if not c.done():
            raise QueryParseError(f"trailing input: {c.peek()!r}")
        bad = set(params) - {"alpha", "epsilon"}
        if bad:
            raise QueryParseError(f"unknown parameters for an estimation: {bad}")
        return PrEstimate(bound, prop, **params)
    raise QueryParseError(f"unknown query form starting with {t!r}")


def parse_query_file(text: str) -> list[tuple[int, Union[Query, QueryParseError], str]]:
    """One query per line; '#' starts a comment. Bad lines parse to the error."""
    out = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            out.append((lineno, parse_query(line), line))
        except QueryParseError as e:
            out.append((lineno, e, line))
    return out


# ---------------------------------------------------------------------------
# Evaluation (explicit states; CallSite also works symbolically)
# ---------------------------------------------------------------------------


def _cast_bits(raw: int, from_width: int, qtype: QueryType) -> int:
    su, w = qtype
    if from_width < w and su == "si" and raw & (1 << (from_width - 1)):
        raw |= ((1 << (w - from_width)) - 1) << from_width  # sign-extend
    bits = raw & ((1 << w) - 1)
    if su == "si" and bits & (1 << (w - 1)):
        return bits - (1 << w)
    return bits


def _read_comparand(c: Comparand, s: NetState, engine: Engine,
                    warn: Optional[Callable[[str], None]]) -> int:
    su, w = c.qtype
    if isinstance(c, Number):
        bits = c.value & ((1 << w) - 1)
        if su == "si" and bits & (1 << (w - 1)):
            return bits - (1 << w)
        return bits
    if c.proc >= len(s.procs) or not s.procs[c.proc]:
        return 0
    frame = s.procs[c.proc][0]
    if frame.func.name != c.func:
        return 0
    target = None
    for r in frame.reg_map:
        if r.name == c.reg and r.const is None:
            target = r
            break
    if target is None:
        return 0
    try:
        bv = engine.ctx.eval_reg(s.ctx_state, frame.reg_map[target], target.ty)
    except RegisterFault:
        return 0  # unset registers read as the default zero
    if not hasattr(bv, "width"):
        raise UnsupportedInSymbolic("register comparisons need the explicit context")
    if bv.width != w and warn is not None:
        warn(f"Casting register {c.func}.{c.reg.lstrip('%')} to integer type "
             f"{su.upper()}{w} - can't guarantee LLVM uses this register as such")
    return _cast_bits(bv.val, bv.width, c.qtype)


def _mem_accesses(s: NetState) -> list[tuple[int, str, int, int, int]]:
    """(proc, kind, block, offset, length-bytes) for each process's next load/store."""
    out = []
    for i, stack in enumerate(s.procs):
        if not stack:
            continue
        instr = stack[0].instr()
        if isinstance(instr, LoadInstr):
            kind, reg, ty = "r", instr.addr, instr.ty
        elif isinstance(instr, StoreInstr):
            kind, reg, ty = "w", instr.addr, instr.ty
        else:
            continue
        try:
            ptr = _read_ptr(s, i, reg)
        except (ContextError, KeyError):
            continue
        if ptr is None:
            continue
        out.append((i, kind, ptr_block(ptr), ptr_offset(ptr), bsize(ty)))
    return out


def _read_ptr(s: NetState, i: int, reg) -> Optional[int]:
    frame = s.procs[i][0]
    if reg not in frame.reg_map:
        return None
    width, val = s.ctx_state.reg_entry(frame.reg_map[reg])
    return val


def eval_prop(p: Prop, s: NetState, engine: Engine,
              warn: Optional[Callable[[str], None]] = None) -> bool:
    """Evaluate a proposition on a network state (pure; explicit context)."""
    if isinstance(p, CallSite):
        if p.proc >= len(s.procs) or not s.procs[p.proc]:
            return False
        instr = s.procs[p.proc][0].instr()
        return isinstance(instr, CallInstr) and instr.callee == p.func
    if isinstance(p, Not):
        return not eval_prop(p.arg, s, engine, warn)
    if isinstance(p, And):
        return eval_prop(p.lhs, s, engine, warn) and eval_prop(p.rhs, s, engine, warn)
    if isinstance(p, Or):
        return eval_prop(p.lhs, s, engine, warn) or eval_prop(p.rhs, s, engine, warn)
    if not isinstance(s.ctx_state, ExplicitState):
        raise UnsupportedInSymbolic(f"{type(p).__name__} is not supported symbolically")
    if isinstance(p, Compare):
        lhs = _read_comparand(p.lhs, s, engine, warn)
        rhs = _read_comparand(p.rhs, s, engine, warn)
        return {
            "<": lhs < rhs, "<=": lhs <= rhs, ">": lhs > rhs,
            ">=": lhs >= rhs, "==": lhs == rhs, "!=": lhs != rhs,
        }[p.op]
    if isinstance(p, Simple) and p.kind == "DivZero":
        for i, stack in enumerate(s.procs):
            if not stack:
                continue
            instr = stack[0].instr()
            if isinstance(instr, BinInstr) and instr.op in DIV_OPS:
                try:
                    divisor = engine.ctx.eval_reg(
                        s.ctx_state, stack[0].reg_map[instr.rhs], instr.ty)
                except (ContextError, KeyError):
                    continue
                if divisor.unsigned == 0:
                    return True
        return False
    if isinstance(p, Simple) and p.kind == "Overflows":
        for _, _, block, offset, nbytes in _mem_accesses(s):
            live = s.ctx_state.mem.live(block)
            if live is None or offset + nbytes > live[0]:
                return True
        return False
    if isinstance(p, Simple) and p.kind == "DataRace":
        acc = _mem_accesses(s)
        for a in range(len(acc)):
            for b in range(a + 1, len(acc)):
                pi, ki, bi, oi, ni = acc[a]
                pj, kj, bj, oj, nj = acc[b]
                if pi == pj or (ki == "r" and kj == "r") or bi != bj:
                    continue
                if max(oi, oj) < min(oi + ni, oj + nj):
                    return True
        return False
    raise QueryParseError(f"cannot evaluate {p!r}")
