"""Array encoding of programs for the cycle-level engines.

Both the pure-Python and the compiled kernel consume the same flat numpy
representation: one row per static instruction plus a dense little-endian
memory image with a mapped-byte mask.  Only data segments are mapped;
instruction fetch goes through the instruction array, not the image.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .isa import (
    Op,
    N_OPS,
    Program,
    READS_RS1,
    READS_RS2,
    WRITES_RD,
    LOADS,
    STORES,
    BRANCHES,
    unit_class,
)

MEM_SIZE = 1 << 16

# Per-opcode behaviour tables (shared by both kernels).
OPC_UNIT = np.array([unit_class(op) for op in Op], dtype=np.int32)
OPC_READS1 = np.array([1 if op in READS_RS1 else 0 for op in Op], dtype=np.int32)
OPC_READS2 = np.array([1 if op in READS_RS2 else 0 for op in Op], dtype=np.int32)
OPC_WRITES = np.array([1 if op in WRITES_RD else 0 for op in Op], dtype=np.int32)
OPC_IS_LOAD = np.array([1 if op in LOADS else 0 for op in Op], dtype=np.int32)
OPC_IS_STORE = np.array([1 if op in STORES else 0 for op in Op], dtype=np.int32)
OPC_IS_BRANCH = np.array(
    [1 if (op in BRANCHES or op is Op.JAL) else 0 for op in Op], dtype=np.int32
)


@dataclass
class EncodedProgram:
    n: int
    entry: int
    opc: np.ndarray  # int32[n]
    rd: np.ndarray  # int32[n]
    rs1: np.ndarray  # int32[n]
    rs2: np.ndarray  # int32[n]
    imm: np.ndarray  # int64[n]
    image: np.ndarray  # uint8[MEM_SIZE], initial data image
    mapped: np.ndarray  # uint8[MEM_SIZE], 1 where data is addressable

    @classmethod
    def from_program(cls, program: Program) -> "EncodedProgram":
        n = len(program.instructions)
        opc = np.empty(n, dtype=np.int32)
        rd = np.empty(n, dtype=np.int32)
        rs1 = np.empty(n, dtype=np.int32)
        rs2 = np.empty(n, dtype=np.int32)
        imm = np.empty(n, dtype=np.int64)
        for i, ins in enumerate(program.instructions):
            opc[i] = int(ins.op)
            rd[i] = ins.rd
            rs1[i] = ins.rs1
            rs2[i] = ins.rs2
            imm[i] = ins.imm
        image = np.zeros(MEM_SIZE, dtype=np.uint8)
        mapped = np.zeros(MEM_SIZE, dtype=np.uint8)
        for base, blob in program.data.items():
            if base < 0 or base + len(blob) > MEM_SIZE:
                raise ValueError(
                    f"data segment at {base:#x} exceeds the {MEM_SIZE:#x}-byte "
                    f"engine address space"
                )
            image[base : base + len(blob)] = np.frombuffer(blob, dtype=np.uint8)
            mapped[base : base + len(blob)] = 1
        if program.code_end > MEM_SIZE:
            raise ValueError("code segment exceeds the engine address space")
        return cls(
            n=n, entry=program.entry, opc=opc, rd=rd, rs1=rs1, rs2=rs2,
            imm=imm, image=image, mapped=mapped,
        )


# Kernel status codes (shared by both engines).
STATUS_OK = 0
STATUS_STEP_LIMIT = 1
STATUS_CYCLE_LIMIT = 2
STATUS_UNMAPPED = 3
STATUS_BAD_PC = 4
STATUS_UNALIGNED = 5

STATUS_NAMES = {
    STATUS_OK: "ok",
    STATUS_STEP_LIMIT: "step limit exceeded",
    STATUS_CYCLE_LIMIT: "cycle limit exceeded",
    STATUS_UNMAPPED: "unmapped data access",
    STATUS_BAD_PC: "pc outside the code segment",
    STATUS_UNALIGNED: "unaligned access",
}

# Scheduler mode encodings.
MODE_IN_ORDER = 0
MODE_OUT_OF_ORDER = 1
MODE_RANDOM = 2
MODE_SLACK = 3

# Dynamic-instruction flag bits.
FLAG_NCT_HIT = 1
FLAG_NCT_STABLE = 2

# Extra room past the cycle limit so completions near the end never
# overflow the sample buffer (bounded by the largest latency).
SAMPLE_HEADROOM = 64
