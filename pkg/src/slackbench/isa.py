"""Micro-ISA: a 20-opcode RV32-flavoured integer subset.

32-bit registers x0..x31 with x0 hardwired to zero, byte-addressed
little-endian memory, 4-byte instructions.  Arithmetic wraps modulo 2**32.
Immediates are 12-bit signed except LUI (20-bit upper immediate) and JAL
(20-bit signed byte offset).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum


class Op(IntEnum):
    ADD = 0
    SUB = 1
    XOR = 2
    AND = 3
    OR = 4
    SLL = 5
    SRL = 6
    ADDI = 7
    XORI = 8
    ANDI = 9
    ORI = 10
    LUI = 11
    LBU = 12
    LW = 13
    SB = 14
    SW = 15
    BEQ = 16
    BNE = 17
    JAL = 18
    HALT = 19


N_OPS = len(Op)

R_TYPE = {Op.ADD, Op.SUB, Op.XOR, Op.AND, Op.OR, Op.SLL, Op.SRL}
I_TYPE = {Op.ADDI, Op.XORI, Op.ANDI, Op.ORI}
LOADS = {Op.LBU, Op.LW}
STORES = {Op.SB, Op.SW}
BRANCHES = {Op.BEQ, Op.BNE}

# Register-read behaviour per opcode.
READS_RS1 = R_TYPE | I_TYPE | LOADS | STORES | BRANCHES
READS_RS2 = R_TYPE | STORES | BRANCHES
WRITES_RD = R_TYPE | I_TYPE | LOADS | {Op.LUI, Op.JAL}

# Execution unit classes.
UNIT_ALU = 0
UNIT_MEM = 1
UNIT_FPU = 2


def unit_class(op: Op) -> int:
    if op in LOADS or op in STORES:
        return UNIT_MEM
    return UNIT_ALU  # no FPU opcodes in this subset


@dataclass(frozen=True)
class Instruction:
    """One decoded instruction at a fixed pc."""

    op: Op
    rd: int = 0
    rs1: int = 0
    rs2: int = 0
    imm: int = 0
    pc: int = 0

    def src_regs(self) -> tuple[int, ...]:
        """Register indices this instruction reads (by opcode semantics)."""
        srcs = []
        if self.op in READS_RS1:
            srcs.append(self.rs1)
        if self.op in READS_RS2:
            srcs.append(self.rs2)
        return tuple(srcs)

    def writes_reg(self) -> bool:
        return self.op in WRITES_RD and self.rd != 0


@dataclass
class Program:
    """An assembled program: one contiguous code segment plus data segments.

    Instruction pcs are unique and contiguous from ``entry`` in steps of 4.
    ``data`` maps segment base addresses to byte blobs; segments never
    overlap each other or the code.  ``symbols`` maps labels to addresses.
    """

    instructions: list[Instruction]
    data: dict[int, bytes] = field(default_factory=dict)
    entry: int = 0
    symbols: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not self.instructions:
            raise ValueError("program has no instructions")
        if self.entry % 4 != 0:
            raise ValueError("entry point must be 4-byte aligned")
        for i, ins in enumerate(self.instructions):
            if ins.pc != self.entry + 4 * i:
                raise ValueError(
                    f"instruction pcs must be contiguous from entry: "
                    f"index {i} has pc {ins.pc:#x}, expected "
                    f"{self.entry + 4 * i:#x}"
                )
            for r in (ins.rd, ins.rs1, ins.rs2):
                if not 0 <= r < 32:
                    raise ValueError(f"register index out of range at pc {ins.pc:#x}")
        code_lo = self.entry
        code_hi = self.entry + 4 * len(self.instructions)
        spans = [(code_lo, code_hi, "code")]
        for base, blob in sorted(self.data.items()):
            spans.append((base, base + len(blob), f"data@{base:#x}"))
        spans.sort()
        for (lo1, hi1, n1), (lo2, hi2, n2) in zip(spans, spans[1:]):
            if hi1 > lo2:
                raise ValueError(f"overlapping segments: {n1} and {n2}")

    @property
    def code_end(self) -> int:
        return self.entry + 4 * len(self.instructions)

    def instruction_at(self, pc: int) -> Instruction:
        idx = (pc - self.entry) >> 2
        if pc % 4 != 0 or not 0 <= idx < len(self.instructions):
            raise ValueError(f"no instruction at pc {pc:#x}")
        return self.instructions[idx]

    def initial_memory(self) -> dict[int, int]:
        """Sparse byte map of the data image."""
        mem: dict[int, int] = {}
        for base, blob in self.data.items():
            for off, b in enumerate(blob):
                mem[base + off] = b
        return mem
