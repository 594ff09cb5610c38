"""Bundled AES-128 workload: loading, memory bindings, result extraction.

The package ships an AES-128 implementation written in the micro-ISA
(``assets/aes128.asm``): key schedule, nine full rounds and the final
round, all state kept in registers, with S-box/xtime lookups from data
memory.  The label ``round_mark`` sits on the loop-closing branch of the
encryption rounds, so truncating at it captures the key schedule plus the
first round -- the part targeted by first-round power analysis.
"""

from __future__ import annotations

import importlib.resources

from .assembler import assemble
from .functional import run_functional
from .isa import Program

_PROGRAM: Program | None = None

#: label marking the end of the first encryption round
FIRST_ROUND_MARK = "round_mark"


def load_program() -> Program:
    """Assemble and cache the bundled AES-128 program."""
    global _PROGRAM
    if _PROGRAM is None:
        src = (
            importlib.resources.files("slackbench") / "assets" / "aes128.asm"
        ).read_text()
        _PROGRAM = assemble(src)
    return _PROGRAM


def mem_bindings(plaintext: bytes, key: bytes) -> dict[int, bytes]:
    """Memory overlay placing a plaintext/key pair into the program's data."""
    if len(plaintext) != 16 or len(key) != 16:
        raise ValueError("plaintext and key must be 16 bytes")
    prog = load_program()
    return {
        prog.symbols["plaintext"]: bytes(plaintext),
        prog.symbols["key"]: bytes(key),
    }


def extract_ciphertext(read_mem) -> bytes:
    """Read the 16-byte ciphertext via a ``read_mem(addr, length)`` callable."""
    prog = load_program()
    return bytes(read_mem(prog.symbols["ciphertext"], 16))


def encrypt_functional(plaintext: bytes, key: bytes) -> bytes:
    """Encrypt one block with the architectural interpreter (no pipeline).

    This is the timing-free execution route; it shares no scheduling logic
    with the cycle-level engines, so it doubles as their correctness oracle.
    """
    prog = load_program()
    final: dict[int, int] = {}
    run_functional(prog, mem=mem_bindings(plaintext, key), final_mem=final)
    ct_base = prog.symbols["ciphertext"]
    return bytes(final[ct_base + k] for k in range(16))
