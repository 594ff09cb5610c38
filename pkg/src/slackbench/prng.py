"""64-bit Galois LFSR pseudorandom stream with counter-based seed splitting.

The generator is a right-shifting Galois LFSR over the maximal-length
polynomial x^64 + x^63 + x^61 + x^60 + 1.  One output draw advances the
register by 64 single-bit steps and returns the whole state, so successive
draws share no register bits.  Bounded draws use rejection sampling against
a power-of-two mask, which keeps every value in [0, bound] exactly
equiprobable.

Seed splitting derives pairwise-distinct child seeds from a master seed and
a stream index without advancing the master stream, so independent trace
collections can run in parallel and still be reproducible.
"""

from __future__ import annotations

MASK64 = (1 << 64) - 1
# Taps for x^64 + x^63 + x^61 + x^60 + 1 (right-shift form, maximal length).
LFSR_TAPS = 0xD800000000000000
# Fallback state used when a caller hands us seed 0 (the LFSR fixed point).
_ZERO_SEED_SUBSTITUTE = 0x9E3779B97F4A7C15

_GOLDEN64 = 0x9E3779B97F4A7C15


def lfsr_step(state: int) -> int:
    """Advance the Galois LFSR by a single bit step."""
    bit = state & 1
    state >>= 1
    if bit:
        state ^= LFSR_TAPS
    return state


def _build_jump_tables() -> list[list[int]]:
    # The 64-step jump is GF(2)-linear, so it decomposes into a XOR of
    # per-byte lookups: jump(s) = T[0][s & 0xFF] ^ T[1][(s >> 8) & 0xFF] ^ ...
    basis = []
    for i in range(64):
        s = 1 << i
        for _ in range(64):
            s = lfsr_step(s)
        basis.append(s)
    tables = []
    for byte_idx in range(8):
        table = []
        for byte_val in range(256):
            acc = 0
            for bit in range(8):
                if byte_val & (1 << bit):
                    acc ^= basis[8 * byte_idx + bit]
            table.append(acc)
        tables.append(table)
    return tables


_JUMP = _build_jump_tables()


def lfsr_next64(state: int) -> int:
    """Advance the LFSR by 64 bit steps (one full draw) via table lookup."""
    t = _JUMP
    return (
        t[0][state & 0xFF]
        ^ t[1][(state >> 8) & 0xFF]
        ^ t[2][(state >> 16) & 0xFF]
        ^ t[3][(state >> 24) & 0xFF]
        ^ t[4][(state >> 32) & 0xFF]
        ^ t[5][(state >> 40) & 0xFF]
        ^ t[6][(state >> 48) & 0xFF]
        ^ t[7][(state >> 56) & 0xFF]
    )


def derive_seed(master: int, index: int) -> int:
    """Derive a child seed from a master seed and a non-negative stream index.

    Distinct indices give distinct children (the mapping is injective per
    master: it is a bijective mixing of ``master ^ (GOLDEN * (index+1))``).
    The result is never 0, so it is always a valid LFSR state.
    """
    if index < 0:
        raise ValueError("stream index must be non-negative")
    z = (master ^ (_GOLDEN64 * (index + 1))) & MASK64
    # splitmix64-style finalizer: bijective on 64-bit words.
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    z ^= z >> 31
    if z == 0:
        z = _ZERO_SEED_SUBSTITUTE
    return z


class Prng:
    """Deterministic pseudorandom stream backed by the 64-bit Galois LFSR."""

    __slots__ = ("state", "split_count")

    def __init__(self, seed: int):
        seed &= MASK64
        if seed == 0:
            seed = _ZERO_SEED_SUBSTITUTE
        self.state = seed
        self.split_count = 0

    def next(self) -> int:
        """Return the next 64-bit draw."""
        self.state = lfsr_next64(self.state)
        return self.state

    def uniform(self, bound: int) -> int:
        """Draw uniformly from [0, bound] inclusive.

        bound == 0 returns 0 without consuming a draw.  Rejection sampling
        against the smallest covering power-of-two mask keeps the
        distribution exact.
        """
        if bound < 0:
            raise ValueError("bound must be non-negative")
        if bound == 0:
            return 0
        mask = (1 << bound.bit_length()) - 1
        while True:
            v = self.next() & mask
            if v <= bound:
                return v

    def bytes(self, n: int) -> bytes:
        """Return n pseudorandom bytes (little-endian draw packing)."""
        out = bytearray()
        while len(out) < n:
            out += self.next().to_bytes(8, "little")
        return bytes(out[:n])

    def split(self) -> "Prng":
        """Return a child stream; successive splits are pairwise distinct."""
        child = Prng(derive_seed(self.state, self.split_count))
        self.split_count += 1
        return child


def bernoulli_threshold(p: float) -> int:
    """Map a probability to a u64 comparison threshold (draw < threshold).

    p <= 0 maps to 0 (never) and p >= 1 maps to 2**64 (always); schedulers
    special-case the endpoints so the always/never paths consume no draws.
    """
    if p <= 0.0:
        return 0
    if p >= 1.0:
        return 1 << 64
    return int(p * float(1 << 64))
