"""Two-pass assembler for the micro-ISA.

Grammar (one statement per line, ``#`` or ``;`` start a comment):

    label:                     ; labels may share a line with a statement
        add  rd, rs1, rs2      ; R-type: add sub xor and or sll srl
        addi rd, rs1, imm      ; I-type: addi xori andi ori
        lui  rd, imm20
        lbu  rd, imm(rs1)      ; loads: lbu lw
        sb   rs2, imm(rs1)     ; stores: sb sw
        beq  rs1, rs2, target  ; branches: beq bne (label or byte offset)
        jal  rd, target
        halt
        .org  addr             ; move the emission address
        .byte v, v, ...        ; emit data bytes
        .word v, v, ...        ; emit 32-bit little-endian words

Immediate operands accept integer literals (decimal, hex, negative),
``label``, ``label+off``, ``label-off``, ``%hi(label)`` (address >> 12) and
``%lo(label)`` (address & 0xFFF).  I-type/load/store/branch immediates are
12-bit signed; LUI takes an unsigned 20-bit value; JAL offsets are 20-bit
signed.  Branch/JAL targets must be 4-byte aligned.
"""

from __future__ import annotations

import re

from .isa import Op, Instruction, Program, R_TYPE, I_TYPE, LOADS, STORES, BRANCHES


class AsmError(Exception):
    """Assembly failure; message carries the 1-based source line number."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


_LABEL_RE = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)\s*:\s*(.*)$")
_MEMREF_RE = re.compile(r"^(.*)\(\s*(x\d+)\s*\)$", re.IGNORECASE)
_HILO_RE = re.compile(r"^%(hi|lo)\(\s*([A-Za-z_][A-Za-z0-9_]*)\s*\)$")
_SYMOFF_RE = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)\s*([+-]\s*\d+|[+-]\s*0[xX][0-9a-fA-F]+)?$")

_MNEMONICS = {op.name.lower(): op for op in Op}


def _parse_reg(tok: str, line: int) -> int:
    tok = tok.strip().lower()
    if not tok.startswith("x"):
        raise AsmError(f"expected register, got {tok!r}", line)
    try:
        n = int(tok[1:])
    except ValueError:
        raise AsmError(f"expected register, got {tok!r}", line) from None
    if not 0 <= n < 32:
        raise AsmError(f"register index out of range: {tok}", line)
    return n


def _parse_int(tok: str, line: int) -> int:
    try:
        return int(tok, 0)
    except ValueError:
        raise AsmError(f"bad integer literal {tok!r}", line) from None


def _split_operands(rest: str) -> list[str]:
    return [p.strip() for p in rest.split(",")] if rest.strip() else []


class _Stmt:
    __slots__ = ("kind", "line", "addr", "mnemonic", "operands")

    def __init__(self, kind, line, addr, mnemonic, operands):
        self.kind = kind  # "ins" | "byte" | "word"
        self.line = line
        self.addr = addr
        self.mnemonic = mnemonic
        self.operands = operands


def assemble(source: str) -> Program:
    """Assemble source text into a validated Program."""
    # Pass 1: lay out addresses, collect labels and raw statements.
    symbols: dict[str, int] = {}
    stmts: list[_Stmt] = []
    addr = 0
    entry: int | None = None
    for lineno, raw in enumerate(source.splitlines(), start=1):
        text = raw.split("#", 1)[0].split(";", 1)[0].strip()
        while text:
            m = _LABEL_RE.match(text)
            if m:
                label, text = m.group(1), m.group(2).strip()
                if label in symbols:
                    raise AsmError(f"duplicate label {label!r}", lineno)
                symbols[label] = addr
                continue
            break
        if not text:
            continue
        parts = text.split(None, 1)
        head = parts[0].lower()
        rest = parts[1] if len(parts) > 1 else ""
        if head == ".org":
            target = _parse_int(rest.strip(), lineno)
            if target < 0:
                raise AsmError(".org address must be non-negative", lineno)
            addr = target
        elif head in (".byte", ".word"):
            vals = _split_operands(rest)
            if not vals:
                raise AsmError(f"{head} needs at least one value", lineno)
            stmts.append(_Stmt(head[1:], lineno, addr, None, vals))
            addr += len(vals) * (1 if head == ".byte" else 4)
        elif head in _MNEMONICS:
            if addr % 4 != 0:
                raise AsmError(f"instruction at unaligned address {addr:#x}", lineno)
            if entry is None:
                entry = addr
            stmts.append(_Stmt("ins", lineno, addr, head, _split_operands(rest)))
            addr += 4
        else:
            raise AsmError(f"unknown mnemonic or directive {head!r}", lineno)

    if entry is None:
        raise AsmError("no instructions in source")

    def resolve(tok: str, line: int) -> int:
        tok = tok.strip()
        m = _HILO_RE.match(tok)
        if m:
            which, sym = m.groups()
            if sym not in symbols:
                raise AsmError(f"undefined label {sym!r}", line)
            a = symbols[sym]
            return (a >> 12) if which == "hi" else (a & 0xFFF)
        m = _SYMOFF_RE.match(tok)
        if m and m.group(1) in symbols:
            base = symbols[m.group(1)]
            off = m.group(2)
            return base + (int(off.replace(" ", ""), 0) if off else 0)
        if m and not tok[0].isdigit() and tok[0] not in "+-":
            raise AsmError(f"undefined label {m.group(1)!r}", line)
        return _parse_int(tok, line)

    def check_signed(val: int, bits: int, what: str, line: int) -> int:
        lo, hi = -(1 << (bits - 1)), (1 << (bits - 1)) - 1
        if not lo <= val <= hi:
            raise AsmError(
                f"immediate overflow: {what} {val} does not fit "
                f"{bits}-bit signed field [{lo}, {hi}]",
                line,
            )
        return val

    # Pass 2: encode.
    instructions: list[Instruction] = []
    data_bytes: dict[int, int] = {}

    def emit_data(at: int, value: int, width: int, line: int) -> None:
        if width == 1 and not 0 <= value <= 0xFF:
            raise AsmError(f".byte value {value} out of range [0, 255]", line)
        if width == 4:
            value &= 0xFFFFFFFF
        for k in range(width):
            a = at + k
            if a in data_bytes:
                raise AsmError(f"data overlaps at address {a:#x}", line)
            data_bytes[a] = (value >> (8 * k)) & 0xFF

    for st in stmts:
        if st.kind == "byte":
            for i, tok in enumerate(st.operands):
                emit_data(st.addr + i, resolve(tok, st.line), 1, st.line)
            continue
        if st.kind == "word":
            for i, tok in enumerate(st.operands):
                emit_data(st.addr + 4 * i, resolve(tok, st.line), 4, st.line)
            continue

        op = _MNEMONICS[st.mnemonic]
        ops = st.operands
        line = st.line

        def need(n):
            if len(ops) != n:
                raise AsmError(
                    f"{st.mnemonic} expects {n} operand(s), got {len(ops)}", line
                )

        if op in R_TYPE:
            need(3)
            ins = Instruction(
                op,
                rd=_parse_reg(ops[0], line),
                rs1=_parse_reg(ops[1], line),
                rs2=_parse_reg(ops[2], line),
                pc=st.addr,
            )
        elif op in I_TYPE:
            need(3)
            imm = check_signed(resolve(ops[2], line), 12, "value", line)
            ins = Instruction(
                op,
                rd=_parse_reg(ops[0], line),
                rs1=_parse_reg(ops[1], line),
                imm=imm,
                pc=st.addr,
            )
        elif op is Op.LUI:
            need(2)
            imm = resolve(ops[1], line)
            if not 0 <= imm <= 0xFFFFF:
                raise AsmError(
                    f"immediate overflow: LUI value {imm} does not fit "
                    f"20-bit unsigned field [0, {0xFFFFF}]",
                    line,
                )
            ins = Instruction(op, rd=_parse_reg(ops[0], line), imm=imm, pc=st.addr)
        elif op in LOADS or op in STORES:
            need(2)
            m = _MEMREF_RE.match(ops[1])
            if not m:
                raise AsmError(f"expected imm(reg) operand, got {ops[1]!r}", line)
            imm = check_signed(resolve(m.group(1).strip() or "0", line), 12, "offset", line)
            base = _parse_reg(m.group(2), line)
            rv = _parse_reg(ops[0], line)
            if op in LOADS:
                ins = Instruction(op, rd=rv, rs1=base, imm=imm, pc=st.addr)
            else:
                ins = Instruction(op, rs1=base, rs2=rv, imm=imm, pc=st.addr)
        elif op in BRANCHES:
            need(3)
            tgt = resolve(ops[2], line)
            off = tgt - st.addr if ops[2].strip() in symbols else tgt
            if off % 4 != 0:
                raise AsmError(f"branch offset {off} not 4-byte aligned", line)
            check_signed(off, 12, "branch offset", line)
            ins = Instruction(
                op,
                rs1=_parse_reg(ops[0], line),
                rs2=_parse_reg(ops[1], line),
                imm=off,
                pc=st.addr,
            )
        elif op is Op.JAL:
            need(2)
            tgt = resolve(ops[1], line)
            off = tgt - st.addr if ops[1].strip() in symbols else tgt
            if off % 4 != 0:
                raise AsmError(f"jump offset {off} not 4-byte aligned", line)
            check_signed(off, 20, "jump offset", line)
            ins = Instruction(op, rd=_parse_reg(ops[0], line), imm=off, pc=st.addr)
        elif op is Op.HALT:
            need(0)
            ins = Instruction(op, pc=st.addr)
        else:  # pragma: no cover
            raise AsmError(f"unhandled opcode {op}", line)

        if instructions and st.addr != instructions[-1].pc + 4:
            raise AsmError(
                f"instructions must form one contiguous code segment; "
                f"gap before address {st.addr:#x}",
                line,
            )
        instructions.append(ins)

    # Merge data bytes into contiguous segments.
    data: dict[int, bytes] = {}
    run_start = None
    run: list[int] = []
    for a in sorted(data_bytes):
        if run_start is not None and a == run_start + len(run):
            run.append(data_bytes[a])
        else:
            if run_start is not None:
                data[run_start] = bytes(run)
            run_start, run = a, [data_bytes[a]]
    if run_start is not None:
        data[run_start] = bytes(run)

    try:
        return Program(instructions=instructions, data=data, entry=entry, symbols=symbols)
    except ValueError as e:
        raise AsmError(str(e)) from None
