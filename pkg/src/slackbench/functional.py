"""Functional (architectural) interpreter for the micro-ISA.

Executes a Program sequentially with no timing model and yields the retired
instruction stream.  This is the architectural reference the pipelined
engines are checked against: any scheduler, however aggressive, must retire
the same write-back stream.
"""

from __future__ import annotations

from dataclasses import dataclass

from .isa import Op, Instruction, Program

MASK32 = 0xFFFFFFFF


class SimError(Exception):
    """Base class for simulation failures."""


class UnalignedPcError(SimError):
    pass


class UnmappedAccessError(SimError):
    pass


class UnalignedAccessError(SimError):
    pass


class StepLimitError(SimError):
    pass


@dataclass(frozen=True)
class RetiredOp:
    """One retired dynamic instruction."""

    seq: int
    pc: int
    op: Op
    src_regs: tuple[int, ...]
    dst_reg: int | None  # None when nothing is architecturally written
    wb_value: int | None  # present iff dst_reg is present
    mem_addr: int | None = None


def _sext(val: int, bits: int) -> int:
    val &= (1 << bits) - 1
    if val & (1 << (bits - 1)):
        val -= 1 << bits
    return val


def run_functional(
    program: Program,
    regs: dict[int, int] | None = None,
    mem: dict[int, bytes] | None = None,
    max_steps: int = 1_000_000,
    final_mem: dict[int, int] | None = None,
) -> list[RetiredOp]:
    """Run a program to HALT and return the retired-op stream.

    ``regs`` maps register indices to initial 32-bit values; ``mem`` maps
    byte addresses to blobs laid over the program's data image (writing to
    an address also maps it).  Pass a dict as ``final_mem`` to receive the
    end-of-run memory contents (address -> byte).  Raises a SimError
    subclass on unaligned pcs, unmapped or unaligned data accesses, and
    step-limit overruns.
    """
    r = [0] * 32
    for idx, val in (regs or {}).items():
        if not 0 <= idx < 32:
            raise ValueError(f"register index out of range: {idx}")
        if idx != 0:
            r[idx] = val & MASK32
    memory = program.initial_memory()
    for base, blob in (mem or {}).items():
        for off, b in enumerate(bytes(blob)):
            memory[base + off] = b

    def load_byte(addr: int) -> int:
        if addr not in memory:
            raise UnmappedAccessError(f"load from unmapped address {addr:#x}")
        return memory[addr]

    def store_byte(addr: int, val: int) -> None:
        if addr not in memory:
            raise UnmappedAccessError(f"store to unmapped address {addr:#x}")
        memory[addr] = val & 0xFF

    retired: list[RetiredOp] = []
    pc = program.entry
    code_lo, code_hi = program.entry, program.code_end
    for seq in range(max_steps):
        if pc % 4 != 0:
            raise UnalignedPcError(f"pc {pc:#x} is not 4-byte aligned")
        if not code_lo <= pc < code_hi:
            raise UnmappedAccessError(f"pc {pc:#x} outside the code segment")
        ins: Instruction = program.instructions[(pc - code_lo) >> 2]
        op = ins.op
        a = r[ins.rs1]
        b = r[ins.rs2]
        next_pc = pc + 4
        result: int | None = None
        mem_addr: int | None = None

        if op is Op.ADD:
            result = (a + b) & MASK32
        elif op is Op.SUB:
            result = (a - b) & MASK32
        elif op is Op.XOR:
            result = a ^ b
        elif op is Op.AND:
            result = a & b
        elif op is Op.OR:
            result = a | b
        elif op is Op.SLL:
            result = (a << (b & 31)) & MASK32
        elif op is Op.SRL:
            result = a >> (b & 31)
        elif op is Op.ADDI:
            result = (a + ins.imm) & MASK32
        elif op is Op.XORI:
            result = (a ^ (ins.imm & MASK32)) & MASK32
        elif op is Op.ANDI:
            result = a & (ins.imm & MASK32)
        elif op is Op.ORI:
            result = (a | (ins.imm & MASK32)) & MASK32
        elif op is Op.LUI:
            result = (ins.imm << 12) & MASK32
        elif op is Op.LBU:
            mem_addr = (a + ins.imm) & MASK32
            result = load_byte(mem_addr)
        elif op is Op.LW:
            mem_addr = (a + ins.imm) & MASK32
            if mem_addr % 4 != 0:
                raise UnalignedAccessError(f"unaligned word load at {mem_addr:#x}")
            result = (
                load_byte(mem_addr)
                | (load_byte(mem_addr + 1) << 8)
                | (load_byte(mem_addr + 2) << 16)
                | (load_byte(mem_addr + 3) << 24)
            )
        elif op is Op.SB:
            mem_addr = (a + ins.imm) & MASK32
            store_byte(mem_addr, b)
        elif op is Op.SW:
            mem_addr = (a + ins.imm) & MASK32
            if mem_addr % 4 != 0:
                raise UnalignedAccessError(f"unaligned word store at {mem_addr:#x}")
            for k in range(4):
                store_byte(mem_addr + k, (b >> (8 * k)) & 0xFF)
        elif op is Op.BEQ:
            if a == b:
                next_pc = pc + ins.imm
        elif op is Op.BNE:
            if a != b:
                next_pc = pc + ins.imm
        elif op is Op.JAL:
            result = (pc + 4) & MASK32
            next_pc = pc + ins.imm
        elif op is Op.HALT:
            retired.append(RetiredOp(seq, pc, op, (), None, None))
            if final_mem is not None:
                final_mem.update(memory)
            return retired
        else:  # pragma: no cover
            raise SimError(f"unhandled opcode {op}")

        dst: int | None = None
        wb: int | None = None
        if result is not None and ins.writes_reg():
            r[ins.rd] = result
            dst, wb = ins.rd, result
        retired.append(RetiredOp(seq, pc, op, ins.src_regs(), dst, wb, mem_addr))
        pc = next_pc

    raise StepLimitError(f"no HALT within {max_steps} steps")
