"""Parser for the textual LLVM-subset accepted by the checker.

Line-oriented: one instruction, label or function header per line.
Attribute tokens (``#0``, ``dso_local``, ``nsw``, ``align`` suffixes),
comments and unknown top-level lines are accepted and ignored.  ``i1`` is
widened to ``i8`` and constants become read-only registers.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .ir import (
    ARITH_OPS,
    BIN_OPS,
    CMP_OPS,
    ConstExpr,
    AllocaInstr,
    BinInstr,
    Block,
    BrInstr,
    CallInstr,
    CmpInstr,
    CondBrInstr,
    Func,
    GepInstr,
    I8,
    IntType,
    IrModule,
    LoadInstr,
    NondetInstr,
    PhiInstr,
    PtrType,
    Register,
    RetInstr,
    StoreInstr,
    StructType,
    Type,
    VOID,
)


class ParseError(Exception):
    def __init__(self, message: str, line: int = 0, col: int = 0, filename: str = "<string>"):
        self.message = message
        self.line = line
        self.col = col
        self.filename = filename
        super().__init__(f"{filename}:{line}:{col}: error: {message}")


_TOKEN_RE = re.compile(
    r"""\s*(?:
          (?P<comment>;.*)
        | (?P<num>-?\d+)
        | (?P<attr>\#\d+)
        | (?P<gname>@[A-Za-z0-9_.$\-]+)
        | (?P<reg>%[A-Za-z0-9_.$\-]+)
        | (?P<id>[A-Za-z_][A-Za-z0-9_.$\-]*)
        | (?P<str>"[^"]*")
        | (?P<punct>\.\.\.|[(){}\[\],=*:!])
        )""",
    re.X,
)

_IGNORED_IDS = {
    "dso_local", "local_unnamed_addr", "unnamed_addr", "nsw", "nuw", "exact",
    "inbounds", "noundef", "nonnull", "volatile", "tail", "private", "internal",
    "external", "hidden", "protected", "fastcc",
}


@dataclass
class _Tok:
    kind: str
    text: str
    col: int


def _tokenize(line: str, lineno: int, filename: str) -> list[_Tok]:
    toks = []
    pos = 0
    while pos < len(line):
        m = _TOKEN_RE.match(line, pos)
        if not m or m.end() == pos:
            if line[pos:].strip() == "":
                break
            raise ParseError(f"unexpected character {line[pos]!r}", lineno, pos + 1, filename)
        pos = m.end()
        kind = m.lastgroup
        if kind in ("comment", "str"):
            if kind == "comment":
                break
            continue
        if kind == "attr":
            continue
        text = m.group(kind)
        if kind == "id" and text in _IGNORED_IDS:
            continue
        toks.append(_Tok(kind, text, m.start(kind) + 1))
    return toks


class _Cursor:
    def __init__(self, toks: list[_Tok], lineno: int, filename: str):
        self.toks = toks
        self.i = 0
        self.lineno = lineno
        self.filename = filename

    def error(self, msg: str):
        col = self.toks[self.i].col if self.i < len(self.toks) else (
            self.toks[-1].col if self.toks else 1)
        raise ParseError(msg, self.lineno, col, self.filename)

    def peek(self) -> _Tok | None:
        return self.toks[self.i] if self.i < len(self.toks) else None

    def at(self, kind: str, text: str | None = None) -> bool:
        t = self.peek()
        return t is not None and t.kind == kind and (text is None or t.text == text)

    def take(self, kind: str, text: str | None = None) -> _Tok:
        if not self.at(kind, text):
            want = text or kind
            got = self.peek().text if self.peek() else "end of line"
            self.error(f"expected {want!r}, got {got!r}")
        t = self.toks[self.i]
        self.i += 1
        return t

    def done(self) -> bool:
        return self.i >= len(self.toks)


def _parse_type(c: _Cursor) -> Type:
    t = c.peek()
    if t is None:
        c.error("expected a type")
    if t.kind == "id" and re.fullmatch(r"i\d+", t.text):
        c.take("id")
        bits = int(t.text[1:])
        if bits == 1:
            base: Type = I8  # no i1 in the type system; conditions are i8
        else:
            if bits % 8 != 0:
                c.error(f"unsupported integer width i{bits}")
            base = IntType(bits)
    elif t.kind == "id" and t.text == "void":
        c.take("id")
        base = VOID
    elif t.kind == "id" and t.text == "ptr":
        c.take("id")
        base = PtrType(VOID)  # opaque; resolved from context where possible
    elif t.kind == "punct" and t.text == "{":
        c.take("punct", "{")
        elems = [_parse_type(c)]
        while c.at("punct", ","):
            c.take("punct", ",")
            elems.append(_parse_type(c))
        c.take("punct", "}")
        base = StructType(tuple(elems))
    else:
        c.error(f"expected a type, got {t.text!r}")
    while c.at("punct", "*"):
        c.take("punct", "*")
        base = PtrType(base)
    return base


def _resolve_ptr(ty: Type, pointee: Type) -> Type:
    # Opaque `ptr` gets its pointee from the instruction context.
    if ty == PtrType(VOID):
        return PtrType(pointee)
    return ty


class _FuncBuilder:
    def __init__(self, name: str):
        self.name = name
        self.registers: dict[str, Register] = {}
        self.constants: dict[tuple[Type, int], Register] = {}

    def reg(self, name: str, ty: Type) -> Register:
        r = self.registers.get(name)
        if r is None:
            r = Register(self.name, name, ty)
            self.registers[name] = r
        return r

    def const(self, value: int, ty: Type) -> Register:
        key = (ty, value)
        r = self.constants.get(key)
        if r is None:
            r = Register(self.name, str(value), ty, const=value)
            self.constants[key] = r
        return r


def _parse_operand(c: _Cursor, fb: _FuncBuilder, ty: Type):
    t = c.peek()
    if t is None:
        c.error("expected an operand")
    if t.kind == "reg":
        c.take("reg")
        return fb.reg(t.text, ty)
    if t.kind == "num":
        c.take("num")
        return fb.const(int(t.text), ty)
    if t.kind == "id" and t.text in ("true", "false"):
        c.take("id")
        return fb.const(1 if t.text == "true" else 0, ty)
    if t.kind == "id" and t.text == "null":
        c.take("id")
        return fb.const(0, ty)
    if t.kind == "id" and t.text in BIN_OPS:
        op = c.take("id").text
        c.take("punct", "(")
        args = []
        while True:
            aty = _parse_type(c)
            args.append(_parse_operand(c, fb, aty))
            if c.at("punct", ","):
                c.take("punct", ",")
                continue
            break
        c.take("punct", ")")
        return ConstExpr(op, ty, tuple(args), fb.name)
    c.error(f"expected an operand, got {t.text!r}")


def _parse_rhs(c: _Cursor, fb: _FuncBuilder, result_name: str):
    op = c.take("id").text
    if op in BIN_OPS:
        ty = _parse_type(c)
        lhs = _parse_operand(c, fb, ty)
        c.take("punct", ",")
        rhs = _parse_operand(c, fb, ty)
        return BinInstr(op, fb.reg(result_name, ty), ty, lhs, rhs)
    if op == "icmp":
        cc = c.take("id").text
        if cc not in CMP_OPS:
            c.error(f"unknown comparison {cc!r}")
        ty = _parse_type(c)
        lhs = _parse_operand(c, fb, ty)
        c.take("punct", ",")
        rhs = _parse_operand(c, fb, ty)
        return CmpInstr(cc, fb.reg(result_name, I8), ty, lhs, rhs)
    if op == "alloca":
        ty = _parse_type(c)
        return AllocaInstr(fb.reg(result_name, PtrType(ty)), ty)
    if op == "load":
        ty = _parse_type(c)
        c.take("punct", ",")
        pty = _resolve_ptr(_parse_type(c), ty)
        addr = _parse_operand(c, fb, pty)
        return LoadInstr(fb.reg(result_name, ty), ty, addr)
    if op == "getelementptr":
        base_ty = _parse_type(c)
        c.take("punct", ",")
        pty = _resolve_ptr(_parse_type(c), base_ty)
        base = _parse_operand(c, fb, pty)
        indices = []
        while c.at("punct", ","):
            c.take("punct", ",")
            _parse_type(c)  # index type, unchecked
            sign = 1
            tok = c.take("num")
            indices.append(sign * int(tok.text))
        if not indices:
            c.error("getelementptr requires at least one index")
        from .ir import project_type
        elem = project_type(base_ty, tuple(indices[1:]))
        return GepInstr(fb.reg(result_name, PtrType(elem)), base_ty, base, tuple(indices))
    if op == "phi":
        ty = _parse_type(c)
        incomings = []
        while True:
            c.take("punct", "[")
            val = _parse_operand(c, fb, ty)
            c.take("punct", ",")
            lab = c.take("reg").text.lstrip("%") if c.at("reg") else c.take("id").text
            c.take("punct", "]")
            incomings.append((val, lab))
            if c.at("punct", ","):
                c.take("punct", ",")
                continue
            break
        return PhiInstr(fb.reg(result_name, ty), ty, tuple(incomings))
    if op == "call":
        return _parse_call(c, fb, result_name)
    if op == "nondet":
        ty = _parse_type(c)
        return NondetInstr(fb.reg(result_name, ty), ty)
    c.error(f"unknown opcode {op!r}")


def _parse_call(c: _Cursor, fb: _FuncBuilder, result_name: str | None):
    ret_ty = _parse_type(c)
    if c.at("punct", "("):  # varargs-style `(...)` signature decoration
        c.take("punct", "(")
        while not c.at("punct", ")"):
            c.i += 1
        c.take("punct", ")")
    callee = c.take("gname").text[1:]
    c.take("punct", "(")
    args = []
    while not c.at("punct", ")"):
        aty = _parse_type(c)
        args.append(_parse_operand(c, fb, aty))
        if c.at("punct", ","):
            c.take("punct", ",")
    c.take("punct", ")")
    result = fb.reg(result_name, ret_ty) if result_name is not None else None
    return CallInstr(result, ret_ty, callee, tuple(args))


def _parse_instr(c: _Cursor, fb: _FuncBuilder):
    t = c.peek()
    if t.kind == "reg":
        c.take("reg")
        c.take("punct", "=")
        return _parse_rhs(c, fb, t.text)
    if t.kind == "id" and t.text == "store":
        c.take("id")
        ty = _parse_type(c)
        val = _parse_operand(c, fb, ty)
        c.take("punct", ",")
        pty = _resolve_ptr(_parse_type(c), ty)
        addr = _parse_operand(c, fb, pty)
        return StoreInstr(ty, val, addr)
    if t.kind == "id" and t.text == "br":
        c.take("id")
        if c.at("id", "label"):
            c.take("id", "label")
            target = c.take("reg").text.lstrip("%") if c.at("reg") else c.take("id").text
            return BrInstr(target)
        ty = _parse_type(c)
        if ty != I8:
            c.error("branch condition must be i1 or i8")
        cond = _parse_operand(c, fb, I8)
        c.take("punct", ",")
        c.take("id", "label")
        t1 = c.take("reg").text.lstrip("%") if c.at("reg") else c.take("id").text
        c.take("punct", ",")
        c.take("id", "label")
        t2 = c.take("reg").text.lstrip("%") if c.at("reg") else c.take("id").text
        return CondBrInstr(cond, t1, t2)
    if t.kind == "id" and t.text == "ret":
        c.take("id")
        ty = _parse_type(c)
        if ty == VOID:
            return RetInstr(None)
        return RetInstr(_parse_operand(c, fb, ty))
    if t.kind == "id" and t.text == "call":
        c.take("id")
        return _parse_call(c, fb, None)
    c.error(f"unknown instruction {t.text!r}")


def _parse_define(c: _Cursor) -> tuple[str, Type, list[tuple[str, Type]]]:
    c.take("id", "define")
    ret_ty = _parse_type(c)
    while not c.at("gname"):
        if c.done():
            c.error("expected a function name")
        c.i += 1  # calling conventions / attributes
    name = c.take("gname").text[1:]
    c.take("punct", "(")
    params = []
    while not c.at("punct", ")"):
        pty = _parse_type(c)
        pname = c.take("reg").text
        params.append((pname, pty))
        if c.at("punct", ","):
            c.take("punct", ",")
    c.take("punct", ")")
    # trailing attribute junk before `{` is ignored
    while not c.at("punct", "{"):
        if c.done():
            c.error("expected '{'")
        c.i += 1
    c.take("punct", "{")
    return name, ret_ty, params


def parse_module(text: str, filename: str = "<string>") -> IrModule:
    """Parse textual IR into a module. Raises :class:`ParseError` on failure."""
    functions: list[Func] = []
    lines = text.splitlines()
    i = 0
    while i < len(lines):
        toks = _tokenize(lines[i], i + 1, filename)
        if not toks:
            i += 1
            continue
        if toks[0].kind == "id" and toks[0].text == "define":
            c = _Cursor(toks, i + 1, filename)
            fname, ret_ty, params = _parse_define(c)
            if any(f.name == fname for f in functions):
                raise ParseError(f"function @{fname} defined twice", i + 1, 1, filename)
            fb = _FuncBuilder(fname)
            param_regs = tuple(fb.reg(n, t) for n, t in params)
            i += 1
            blocks: dict[str, Block] = {}
            order: list[str] = []
            cur_label: str | None = None
            cur_instrs: list = []

            def finish_block(lineno: int):
                nonlocal cur_label, cur_instrs
                if cur_label is None:
                    return
                if not cur_instrs:
                    raise ParseError(f"block {cur_label} is empty", lineno, 1, filename)
                try:
                    blocks[cur_label] = Block(cur_label, tuple(cur_instrs))
                except Exception as e:
                    raise ParseError(str(e), lineno, 1, filename)
                order.append(cur_label)
                cur_label, cur_instrs = None, []

            while i < len(lines):
                toks = _tokenize(lines[i], i + 1, filename)
                if not toks:
                    i += 1
                    continue
                if toks[0].kind == "punct" and toks[0].text == "}":
                    finish_block(i + 1)
                    i += 1
                    break
                if len(toks) >= 2 and toks[0].kind == "id" and toks[1].kind == "punct" \
                        and toks[1].text == ":":
                    finish_block(i + 1)
                    label = toks[0].text
                    if label in blocks:
                        raise ParseError(f"duplicate label {label}", i + 1, toks[0].col, filename)
                    cur_label = label
                    i += 1
                    continue
                if cur_label is None:
                    raise ParseError("instruction outside a labelled block", i + 1,
                                     toks[0].col, filename)
                c = _Cursor(toks, i + 1, filename)
                cur_instrs.append(_parse_instr(c, fb))
                i += 1
            else:
                raise ParseError(f"unterminated function @{fname}", i, 1, filename)
            try:
                functions.append(Func(fname, param_regs, blocks, tuple(order), ret_ty))
            except Exception as e:
                raise ParseError(str(e), i, 1, filename)
        else:
            i += 1  # target lines, declares, metadata: ignored
    if not functions:
        raise ParseError("no module", 1, 1, filename)
    return IrModule(functions)
