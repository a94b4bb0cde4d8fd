"""Symbolic context: SMT bitvector/array terms and an external-solver client.

Values are SMT expressions; memory is one byte array (``Array (BitVec 64)
(BitVec 8)``) with a bump-pointer allocator; every assignment and branch
conjoins a constraint onto the path formula.  Satisfiability is decided by
a child process speaking SMT-LIB v2 over pipes (``z3 -in`` when available,
otherwise the bundled ``python -m lodin.smtsolver``).
"""

from __future__ import annotations

import os
import select
import shlex
import shutil
import subprocess
import sys
import time
from dataclasses import dataclass, field
from typing import Optional, Union

from .context import CmpOutcome, Context, ContextError, RegisterFault, SsaViolation
from .ir import Register, Type, bitwidth

# ---------------------------------------------------------------------------
# Sorts and terms
# ---------------------------------------------------------------------------

BOOL = "bool"
ARRAY = "arr"  # Array (BitVec 64) (BitVec 8)


def bv(width: int) -> tuple[str, int]:
    return ("bv", width)


Sort = Union[str, tuple[str, int]]


@dataclass(frozen=True)
class BvConst:
    width: int
    val: int

    @property
    def sort(self) -> Sort:
        return ("bv", self.width)


@dataclass(frozen=True)
class Var:
    vname: str
    sort: Sort


@dataclass(frozen=True)
class App:
    op: str
    args: tuple["SmtExpr", ...]
    sort: Sort
    params: tuple[int, ...] = ()


SmtExpr = Union[BvConst, Var, App]

TRUE = App("true", (), BOOL)
FALSE = App("false", (), BOOL)

_BV_BINOPS = {
    "bvadd", "bvsub", "bvmul", "bvudiv", "bvsdiv", "bvurem", "bvsrem",
    "bvshl", "bvlshr", "bvashr", "bvand", "bvor", "bvxor",
}
_BV_CMPS = {"bvult", "bvule", "bvugt", "bvuge", "bvslt", "bvsle", "bvsgt", "bvsge"}

IR_TO_SMT_BINOP = {
    "add": "bvadd", "sub": "bvsub", "mul": "bvmul",
    "udiv": "bvudiv", "sdiv": "bvsdiv", "urem": "bvurem", "srem": "bvsrem",
    "shl": "bvshl", "lshr": "bvlshr", "ashr": "bvashr",
    "and": "bvand", "or": "bvor", "xor": "bvxor",
}
IR_TO_SMT_CMP = {
    "ugt": "bvugt", "uge": "bvuge", "ult": "bvult", "ule": "bvule",
    "sgt": "bvsgt", "sge": "bvsge", "slt": "bvslt", "sle": "bvsle",
}


class SortError(ContextError):
    pass


def _bv_width(e: SmtExpr) -> int:
    if not (isinstance(e.sort, tuple) and e.sort[0] == "bv"):
        raise SortError(f"expected a bitvector, got sort {e.sort}")
    return e.sort[1]


def bv_binop_expr(smt_op: str, a: SmtExpr, b: SmtExpr) -> SmtExpr:
    w = _bv_width(a)
    if _bv_width(b) != w:
        raise SortError(f"width mismatch in {smt_op}: {a.sort} vs {b.sort}")
    return App(smt_op, (a, b), ("bv", w))


def bv_cmp_expr(smt_op: str, a: SmtExpr, b: SmtExpr) -> SmtExpr:
    w = _bv_width(a)
    if _bv_width(b) != w:
        raise SortError(f"width mismatch in {smt_op}: {a.sort} vs {b.sort}")
    return App(smt_op, (a, b), BOOL)


def eq(a: SmtExpr, b: SmtExpr) -> SmtExpr:
    if a.sort != b.sort:
        raise SortError(f"cannot equate sorts {a.sort} and {b.sort}")
    return App("=", (a, b), BOOL)


def not_(a: SmtExpr) -> SmtExpr:
    if a.sort != BOOL:
        raise SortError("not expects a boolean")
    return App("not", (a,), BOOL)


def and_(*args: SmtExpr) -> SmtExpr:
    if not args:
        return TRUE
    if len(args) == 1:
        return args[0]
    if any(a.sort != BOOL for a in args):
        raise SortError("and expects booleans")
    return App("and", tuple(args), BOOL)


def or_(*args: SmtExpr) -> SmtExpr:
    if not args:
        return FALSE
    if len(args) == 1:
        return args[0]
    if any(a.sort != BOOL for a in args):
        raise SortError("or expects booleans")
    return App("or", tuple(args), BOOL)


def ite(cond: SmtExpr, a: SmtExpr, b: SmtExpr) -> SmtExpr:
    if cond.sort != BOOL or a.sort != b.sort:
        raise SortError("ill-sorted ite")
    return App("ite", (cond, a, b), a.sort)


def concat(hi: SmtExpr, lo: SmtExpr) -> SmtExpr:
    return App("concat", (hi, lo), ("bv", _bv_width(hi) + _bv_width(lo)))


def extract(e: SmtExpr, lo: int, hi: int) -> SmtExpr:
    """Bits [lo, hi) of a bitvector term."""
    w = _bv_width(e)
    if not 0 <= lo < hi <= w:
        raise SortError(f"extract [{lo},{hi}) out of range for width {w}")
    return App("extract", (e,), ("bv", hi - lo), (hi - 1, lo))


def select(arr: SmtExpr, idx: SmtExpr) -> SmtExpr:
    if arr.sort != ARRAY or idx.sort != ("bv", 64):
        raise SortError("ill-sorted select")
    return App("select", (arr, idx), ("bv", 8))


def store(arr: SmtExpr, idx: SmtExpr, val: SmtExpr) -> SmtExpr:
    if arr.sort != ARRAY or idx.sort != ("bv", 64) or val.sort != ("bv", 8):
        raise SortError("ill-sorted store")
    return App("store", (arr, idx, val), ARRAY)


def free_vars(e: SmtExpr) -> set[Var]:
    out: set[Var] = set()
    stack = [e]
    seen: set[int] = set()
    while stack:
        t = stack.pop()
        if id(t) in seen:
            continue
        seen.add(id(t))
        if isinstance(t, Var):
            out.add(t)
        elif isinstance(t, App):
            stack.extend(t.args)
    return out


# ---------------------------------------------------------------------------
# SMT-LIB serialization
# ---------------------------------------------------------------------------


def sort_to_smtlib(s: Sort) -> str:
    if s == BOOL:
        return "Bool"
    if s == ARRAY:
        return "(Array (_ BitVec 64) (_ BitVec 8))"
    return f"(_ BitVec {s[1]})"


def to_smtlib(e: SmtExpr) -> str:
    parts: list[str] = []
    _serialize(e, parts)
    return "".join(parts)


def _serialize(e: SmtExpr, parts: list[str]):
    # Iterative to keep deep concat/store chains off the Python stack.
    stack: list[Union[SmtExpr, str]] = [e]
    while stack:
        t = stack.pop()
        if isinstance(t, str):
            parts.append(t)
            continue
        if isinstance(t, BvConst):
            if t.width % 4 == 0:
                parts.append(f"#x{t.val:0{t.width // 4}x}")
            else:
                parts.append("#b" + format(t.val, f"0{t.width}b"))
            continue
        if isinstance(t, Var):
            parts.append(t.vname)
            continue
        if not t.args:
            parts.append(t.op)
            continue
        if t.op == "extract":
            hi, lo = t.params
            parts.append(f"((_ extract {hi} {lo}) ")
        else:
            parts.append(f"({t.op} ")
        stack.append(")")
        for a in reversed(t.args):
            stack.append(a)
            stack.append(" ")
        stack.pop()  # no space before the first argument


# ---------------------------------------------------------------------------
# The symbolic state and context
# ---------------------------------------------------------------------------


class MergeError(ContextError):
    pass


@dataclass(frozen=True)
class SymbolicState:
    mem: SmtExpr
    fptr: SmtExpr
    regs: tuple[Optional[Var], ...]  # register-variable id -> its SMT variable
    path: tuple[SmtExpr, ...]  # conjunction of constraints
    used_vars: frozenset[Var]
    assigned: frozenset[int] = frozenset()

    @property
    def n_regs(self) -> int:
        return len(self.regs)

    def path_formula(self) -> SmtExpr:
        return and_(*self.path)


class SymbolicContext(Context):
    """Factory/namespace for symbolic states; owns the fresh-name counter."""

    name = "symbolic"

    def __init__(self):
        self._counter = 0

    def _fresh(self, stem: str, sort: Sort) -> Var:
        v = Var(f"{stem}{self._counter}", sort)
        self._counter += 1
        return v

    def initial_state(self) -> SymbolicState:
        mem = self._fresh("m", ARRAY)
        return SymbolicState(mem, BvConst(64, 0), (), (), frozenset({mem}))

    def make_reg(self, state: SymbolicState, reg: Register) -> tuple[SymbolicState, int]:
        rid = state.n_regs
        v = self._fresh("v", ("bv", bitwidth(reg.ty)))
        st = SymbolicState(state.mem, state.fptr, state.regs + (v,), state.path,
                           state.used_vars | {v}, state.assigned)
        return st, rid

    def _reg_var(self, state: SymbolicState, rid: int) -> Var:
        if not 0 <= rid < state.n_regs or state.regs[rid] is None:
            raise RegisterFault(f"register variable {rid} is not allocated")
        return state.regs[rid]

    def eval_reg(self, state: SymbolicState, rid: int, ty: Type) -> SmtExpr:
        v = self._reg_var(state, rid)
        if v.sort != ("bv", bitwidth(ty)):
            raise RegisterFault(f"register variable {rid} has sort {v.sort}, wanted i{bitwidth(ty)}")
        return v

    def set_reg(self, state: SymbolicState, rid: int, value: SmtExpr, ty: Type) -> SymbolicState:
        v = self._reg_var(state, rid)
        if value.sort != v.sort:
            raise RegisterFault(f"sort mismatch assigning register variable {rid}")
        if rid in state.assigned:
            raise SsaViolation(f"register variable {rid} assigned twice")
        return SymbolicState(state.mem, state.fptr, state.regs,
                             state.path + (eq(v, value),),
                             state.used_vars, state.assigned | {rid})

    def const_value(self, state: SymbolicState, literal: int, ty: Type) -> BvConst:
        w = bitwidth(ty)
        return BvConst(w, literal & ((1 << w) - 1))

    def alloc(self, state: SymbolicState, ty: Type) -> tuple[SymbolicState, SmtExpr]:
        from .ir import bsize
        ptr = state.fptr
        f2 = self._fresh("f", ("bv", 64))
        constraint = eq(f2, bv_binop_expr("bvadd", ptr, BvConst(64, bsize(ty))))
        st = SymbolicState(state.mem, f2, state.regs, state.path + (constraint,),
                           state.used_vars | {f2}, state.assigned)
        return st, ptr

    def free(self, state: SymbolicState, ptr: SmtExpr) -> SymbolicState:
        return state  # bump allocator; nothing is reclaimed

    def load(self, state: SymbolicState, ptr: SmtExpr, ty: Type) -> SmtExpr:
        return self._symb_load(state.mem, ptr, bitwidth(ty))

    def _symb_load(self, mem: SmtExpr, addr: SmtExpr, width: int) -> SmtExpr:
        byte = select(mem, addr)
        if width == 8:
            return byte
        rest = self._symb_load(mem, bv_binop_expr("bvadd", addr, BvConst(64, 1)), width - 8)
        return concat(rest, byte)  # byte at the lowest address is least significant

    def store(self, state: SymbolicState, value: SmtExpr, ptr: SmtExpr, ty: Type) -> SymbolicState:
        m2 = self._fresh("m", ARRAY)
        stored = self._symb_store(state.mem, value, ptr)
        st = SymbolicState(m2, state.fptr, state.regs,
                           state.path + (eq(m2, stored),),
                           state.used_vars | {m2}, state.assigned)
        return st

    def _symb_store(self, mem: SmtExpr, value: SmtExpr, addr: SmtExpr) -> SmtExpr:
        w = _bv_width(value)
        if w == 8:
            return store(mem, addr, value)
        low, rest = extract(value, 0, 8), extract(value, 8, w)
        return self._symb_store(store(mem, addr, low),
                                rest, bv_binop_expr("bvadd", addr, BvConst(64, 1)))

    def nondet(self, state: SymbolicState, ty: Type):
        v = self._fresh("v", ("bv", bitwidth(ty)))
        st = SymbolicState(state.mem, state.fptr, state.regs, state.path,
                           state.used_vars | {v}, state.assigned)
        return [(st, v)]

    def binop(self, op: str, state: SymbolicState, a: SmtExpr, b: SmtExpr, ty: Type):
        return state, bv_binop_expr(IR_TO_SMT_BINOP[op], a, b)

    def cmp(self, op: str, state: SymbolicState, a: SmtExpr, b: SmtExpr, ty: Type):
        if op == "eq":
            cond = eq(a, b)
        elif op == "ne":
            cond = not_(eq(a, b))
        else:
            cond = bv_cmp_expr(IR_TO_SMT_CMP[op], a, b)
        s_true = SymbolicState(state.mem, state.fptr, state.regs, state.path + (cond,),
                               state.used_vars, state.assigned)
        s_false = SymbolicState(state.mem, state.fptr, state.regs, state.path + (not_(cond),),
                                state.used_vars, state.assigned)
        return [CmpOutcome(s_true, BvConst(8, 1), True),
                CmpOutcome(s_false, BvConst(8, 0), False)]

    def ptr_add(self, ptr: SmtExpr, nbytes: int) -> SmtExpr:
        return bv_binop_expr("bvadd", ptr, BvConst(64, nbytes & ((1 << 64) - 1)))

    def truth_split(self, state: SymbolicState, value: SmtExpr):
        if isinstance(value, BvConst):
            return [(state, value.val != 0)]
        w = _bv_width(value)
        zero = BvConst(w, 0)
        s_t = SymbolicState(state.mem, state.fptr, state.regs,
                            state.path + (not_(eq(value, zero)),),
                            state.used_vars, state.assigned)
        s_f = SymbolicState(state.mem, state.fptr, state.regs,
                            state.path + (eq(value, zero),),
                            state.used_vars, state.assigned)
        return [(s_t, True), (s_f, False)]

    def true_value(self, state: SymbolicState) -> BvConst:
        return BvConst(8, 1)

    def false_value(self, state: SymbolicState) -> BvConst:
        return BvConst(8, 0)

    def merge(self, s1: SymbolicState, s2: SymbolicState) -> SymbolicState:
        """Merge two states whose shared register variables coincide.

        A fresh i8 guard selects between the two memories and allocation
        pointers; each original path formula is tied to its side of the
        guard so models cannot mix one path's registers with the other's
        memory.
        """
        n = min(s1.n_regs, s2.n_regs)
        for rid in range(n):
            if s1.regs[rid] is not None and s2.regs[rid] is not None \
                    and s1.regs[rid] != s2.regs[rid]:
                raise MergeError(f"conflicting variables for register id {rid}")
        m2 = self._fresh("m", ARRAY)
        f2 = self._fresh("f", ("bv", 64))
        guard = self._fresh("p", ("bv", 8))
        taken = not_(eq(guard, BvConst(8, 0)))
        psi = or_(and_(taken, *s1.path), and_(not_(taken), *s2.path))
        regs = list(s1.regs) + [None] * (max(0, s2.n_regs - s1.n_regs))
        for rid in range(s2.n_regs):
            if regs[rid] is None:
                regs[rid] = s2.regs[rid]
        return SymbolicState(
            m2, f2, tuple(regs),
            (psi, eq(m2, ite(taken, s1.mem, s2.mem)), eq(f2, ite(taken, s1.fptr, s2.fptr))),
            s1.used_vars | s2.used_vars | {m2, f2, guard},
            s1.assigned | s2.assigned,
        )


# ---------------------------------------------------------------------------
# Ground evaluation (testing oracle)
# ---------------------------------------------------------------------------


def mini_eval(e: SmtExpr, assignment: dict):
    """Evaluate a formula under a full assignment.

    Bitvector variables map to unsigned ints, booleans to bools, arrays to
    ``dict`` address->byte (missing entries read 0).  Independent of the
    solver pipeline; used to cross-check it on enumerable formulas.
    """
    if isinstance(e, BvConst):
        return e.val
    if isinstance(e, Var):
        if e.vname not in assignment:
            raise KeyError(f"no value for {e.vname}")
        return assignment[e.vname]
    op = e.op
    if op == "true":
        return True
    if op == "false":
        return False
    if op == "and":
        return all(mini_eval(a, assignment) for a in e.args)
    if op == "or":
        return any(mini_eval(a, assignment) for a in e.args)
    if op == "not":
        return not mini_eval(e.args[0], assignment)
    if op == "ite":
        return mini_eval(e.args[1 if mini_eval(e.args[0], assignment) else 2], assignment)
    if op == "=":
        a, b = (mini_eval(x, assignment) for x in e.args)
        if isinstance(a, dict) or isinstance(b, dict):
            keys = set(a) | set(b)
            return all(a.get(k, 0) == b.get(k, 0) for k in keys)
        return a == b
    if op == "select":
        arr = mini_eval(e.args[0], assignment)
        return arr.get(mini_eval(e.args[1], assignment), 0)
    if op == "store":
        arr = dict(mini_eval(e.args[0], assignment))
        arr[mini_eval(e.args[1], assignment)] = mini_eval(e.args[2], assignment)
        return arr
    if op == "concat":
        hi, lo = (mini_eval(x, assignment) for x in e.args)
        return (hi << _bv_width(e.args[1])) | lo
    if op == "extract":
        hi_bit, lo_bit = e.params
        v = mini_eval(e.args[0], assignment)
        return (v >> lo_bit) & ((1 << (hi_bit - lo_bit + 1)) - 1)

    w = _bv_width(e.args[0])
    mask = (1 << w) - 1
    a = mini_eval(e.args[0], assignment)
    b = mini_eval(e.args[1], assignment)

    def signed(x):
        return x - (1 << w) if x & (1 << (w - 1)) else x

    if op == "bvadd":
        return (a + b) & mask
    if op == "bvsub":
        return (a - b) & mask
    if op == "bvmul":
        return (a * b) & mask
    if op == "bvudiv":
        return mask if b == 0 else a // b
    if op == "bvurem":
        return a if b == 0 else a % b
    if op == "bvsdiv":
        if b == 0:
            return 1 if signed(a) < 0 else mask
        q = abs(signed(a)) // abs(signed(b))
        if (signed(a) < 0) != (signed(b) < 0):
            q = -q
        return q & mask
    if op == "bvsrem":
        if b == 0:
            return a
        q = abs(signed(a)) // abs(signed(b))
        if (signed(a) < 0) != (signed(b) < 0):
            q = -q
        return (signed(a) - signed(b) * q) & mask
    if op == "bvshl":
        return (a << b) & mask if b < w else 0
    if op == "bvlshr":
        return (a >> b) if b < w else 0
    if op == "bvashr":
        if b >= w:
            return mask if a & (1 << (w - 1)) else 0
        r = a >> b
        if a & (1 << (w - 1)) and b:
            r |= ((1 << b) - 1) << (w - b)
        return r & mask
    if op == "bvand":
        return a & b
    if op == "bvor":
        return a | b
    if op == "bvxor":
        return a ^ b
    if op == "bvult":
        return a < b
    if op == "bvule":
        return a <= b
    if op == "bvugt":
        return a > b
    if op == "bvuge":
        return a >= b
    if op == "bvslt":
        return signed(a) < signed(b)
    if op == "bvsle":
        return signed(a) <= signed(b)
    if op == "bvsgt":
        return signed(a) > signed(b)
    if op == "bvsge":
        return signed(a) >= signed(b)
    raise ValueError(f"mini_eval cannot handle {op!r}")


# ---------------------------------------------------------------------------
# Solver subprocess client
# ---------------------------------------------------------------------------


@dataclass
class SolverVerdict:
    status: str  # sat | unsat | unknown
    model: Optional[dict[str, int]] = None
    diagnostic: str = ""


def default_solver_cmd() -> list[str]:
    env = os.environ.get("LODIN_SMT_CMD")
    if env:
        return shlex.split(env)
    if shutil.which("z3"):
        return ["z3", "-in"]
    return [sys.executable, "-m", "lodin.smtsolver"]


class SolverClient:
    """One solver child process per verification run, reset between queries."""

    def __init__(self, cmd: Optional[list[str]] = None, timeout_ms: int = 10000):
        self.cmd = cmd or default_solver_cmd()
        self.timeout_ms = timeout_ms
        self._proc: Optional[subprocess.Popen] = None
        self._buf = b""
        self._dirty = False

    def _spawn(self):
        self._proc = subprocess.Popen(
            self.cmd, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL)
        self._buf = b""
        self._dirty = False

    def close(self):
        if self._proc is not None:
            try:
                self._proc.stdin.close()
            except Exception:
                pass
            self._proc.kill()
            self._proc.wait()
            self._proc = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _write(self, text: str):
        self._proc.stdin.write(text.encode())
        self._proc.stdin.flush()

    def _read_line(self, deadline: float) -> Optional[str]:
        while b"\n" not in self._buf:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                return None
            r, _, _ = select.select([self._proc.stdout], [], [], remaining)
            if not r:
                return None
            chunk = os.read(self._proc.stdout.fileno(), 65536)
            if not chunk:
                return None
            self._buf += chunk
        line, self._buf = self._buf.split(b"\n", 1)
        return line.decode().strip()

    def _read_sexpr(self, deadline: float) -> Optional[str]:
        depth = 0
        out = []
        started = False
        while True:
            line = self._read_line(deadline)
            if line is None:
                return None
            out.append(line)
            for ch in line:
                if ch == "(":
                    depth += 1
                    started = True
                elif ch == ")":
                    depth -= 1
            if started and depth <= 0:
                return "\n".join(out)

    def check_sat(self, formula: SmtExpr, variables: set[Var],
                  want_model: bool = False) -> SolverVerdict:
        """Serialize, ship to the solver, parse sat/unsat/unknown and a model."""
        if self._proc is None or self._proc.poll() is not None:
            self._spawn()
        deadline = time.monotonic() + self.timeout_ms / 1000.0
        try:
            if self._dirty:
                self._write("(reset)\n")
            self._dirty = True
            script = ["(set-logic QF_ABV)"]
            for v in sorted(variables, key=lambda v: v.vname):
                script.append(f"(declare-fun {v.vname} () {sort_to_smtlib(v.sort)})")
            script.append(f"(assert {to_smtlib(formula)})")
            script.append("(check-sat)")
            self._write("\n".join(script) + "\n")
            status = self._read_line(deadline)
            if status is None:
                self.close()
                return SolverVerdict("unknown", diagnostic="solver timeout")
            if status not in ("sat", "unsat", "unknown"):
                self.close()
                return SolverVerdict("unknown", diagnostic=f"solver said {status!r}")
            verdict = SolverVerdict(status)
            if status == "sat" and want_model:
                self._write("(get-model)\n")
                text = self._read_sexpr(deadline)
                if text is None:
                    self.close()
                    return SolverVerdict("unknown", diagnostic="timeout reading model")
                verdict.model = parse_model(text)
            return verdict
        except (BrokenPipeError, OSError) as e:
            self.close()
            return SolverVerdict("unknown", diagnostic=f"solver process failed: {e}")

    def check_state(self, state: SymbolicState, want_model: bool = False) -> SolverVerdict:
        return self.check_sat(state.path_formula(), set(state.used_vars), want_model)


def _tokenize_sexpr(text: str) -> list[str]:
    return text.replace("(", " ( ").replace(")", " ) ").split()


def _parse_sexpr(tokens: list[str], pos: int):
    if tokens[pos] == "(":
        out = []
        pos += 1
        while tokens[pos] != ")":
            node, pos = _parse_sexpr(tokens, pos)
            out.append(node)
        return out, pos + 1
    return tokens[pos], pos + 1


def parse_model(text: str) -> dict[str, int]:
    """Extract variable values from a ``(get-model)`` response.

    Accepts ``(define-fun v () (_ BitVec n) #x..)``, ``#b..`` literals,
    ``(_ bvN w)`` applications and booleans; non-constant definitions
    (arrays) are skipped.
    """
    tokens = _tokenize_sexpr(text)
    tree, _ = _parse_sexpr(tokens, 0)
    if isinstance(tree, list) and tree and tree[0] == "model":
        tree = tree[1:]
    model: dict[str, int] = {}
    for entry in tree if isinstance(tree, list) else []:
        if not (isinstance(entry, list) and len(entry) >= 5 and entry[0] == "define-fun"):
            continue
        name, value = entry[1], entry[-1]
        parsed = _parse_value(value)
        if parsed is not None:
            model[name] = parsed
    return model


def _parse_value(node) -> Optional[int]:
    if isinstance(node, str):
        if node.startswith("#x"):
            return int(node[2:], 16)
        if node.startswith("#b"):
            return int(node[2:], 2)
        if node == "true":
            return 1
        if node == "false":
            return 0
        return None
    if isinstance(node, list) and len(node) == 3 and node[0] == "_" \
            and isinstance(node[1], str) and node[1].startswith("bv"):
        return int(node[1][2:])
    return None
