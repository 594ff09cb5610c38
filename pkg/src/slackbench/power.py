"""Hamming-weight power traces: collection, containers, serialization.

A trace is the per-cycle sum of Hamming weights of all architectural
register write-backs produced by one (truncated) encryption on one core.
Collection is deterministic: every trace index derives its plaintext, key
and scheduler seeds from the set's master seed, and the table/cache state
each trace starts from is a clone of one shared warm snapshot.  Results
are therefore byte-identical no matter how many worker processes run the
collection.

Trace sets live in ``.ptrc`` files:

==============  ====================================================
field           encoding (little-endian)
==============  ====================================================
magic           4 bytes ``PTRC``
version         u16 (currently 1)
kind            u8 (0 = attack, 1 = profiling), u8 reserved
n_traces        u32
n_samples       u32
config id       u16 length + utf-8 bytes (core configuration name)
master seed     u64
records         n_traces x (16B plaintext, 16B key, n_samples u16)
==============  ====================================================
"""

from __future__ import annotations

import multiprocessing
import struct
from dataclasses import dataclass

import numpy as np

from . import aes
from .configs import get_core
from .isa import Program
from .prng import Prng, derive_seed
from .simulate import Simulator
from .slack_unit import SlackTables

PTRC_MAGIC = b"PTRC"
PTRC_VERSION = 1

KIND_ATTACK = "attack"
KIND_PROFILING = "profiling"
_KIND_CODES = {KIND_ATTACK: 0, KIND_PROFILING: 1}
_KIND_NAMES = {v: k for k, v in _KIND_CODES.items()}

#: number of sequential warm-up encryptions before any trace is recorded
DEFAULT_WARMUP = 32


class PtrcError(ValueError):
    """Raised for malformed or truncated .ptrc containers."""


@dataclass
class TraceSet:
    """A collected set of power traces plus the inputs that produced them."""

    kind: str
    config_id: str
    master_seed: int
    plaintexts: np.ndarray  # uint8 (n, 16)
    keys: np.ndarray  # uint8 (n, 16)
    traces: np.ndarray  # uint16 (n, n_samples)

    def __post_init__(self):
        if self.kind not in _KIND_CODES:
            raise ValueError(f"unknown trace-set kind {self.kind!r}")
        n = self.traces.shape[0]
        if self.plaintexts.shape != (n, 16) or self.keys.shape != (n, 16):
            raise ValueError("plaintext/key arrays must be (n_traces, 16)")

    @property
    def n_traces(self) -> int:
        return int(self.traces.shape[0])

    @property
    def n_samples(self) -> int:
        return int(self.traces.shape[1])

    def save(self, path) -> None:
        save_ptrc(self, path)

    @classmethod
    def load(cls, path) -> "TraceSet":
        return load_ptrc(path)


def save_ptrc(ts: TraceSet, path) -> None:
    """Write a trace set to a .ptrc container."""
    cid = ts.config_id.encode("utf-8")
    if len(cid) > 0xFFFF:
        raise ValueError("config id too long")
    n, m = ts.n_traces, ts.n_samples
    header = (
        PTRC_MAGIC
        + struct.pack(
            "<HBBII", PTRC_VERSION, _KIND_CODES[ts.kind], 0, n, m
        )
        + struct.pack("<H", len(cid))
        + cid
        + struct.pack("<Q", ts.master_seed & 0xFFFFFFFFFFFFFFFF)
    )
    # interleave records as one (n, 32 + 2m) byte matrix
    rows = np.empty((n, 32 + 2 * m), dtype=np.uint8)
    rows[:, :16] = ts.plaintexts
    rows[:, 16:32] = ts.keys
    rows[:, 32:] = (
        np.ascontiguousarray(ts.traces.astype("<u2", copy=False))
        .view(np.uint8)
        .reshape(n, 2 * m)
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(rows.tobytes())


def load_ptrc(path) -> TraceSet:
    """Read a trace set from a .ptrc container."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4 or blob[:4] != PTRC_MAGIC:
        raise PtrcError(f"{path}: not a PTRC trace container")
    if len(blob) < 16:
        raise PtrcError(f"{path}: truncated header")
    version, kind_code, _res, n, m = struct.unpack_from("<HBBII", blob, 4)
    if version != PTRC_VERSION:
        raise PtrcError(f"{path}: unsupported container version {version}")
    if kind_code not in _KIND_NAMES:
        raise PtrcError(f"{path}: unknown trace-set kind code {kind_code}")
    (cid_len,) = struct.unpack_from("<H", blob, 16)
    off = 18
    if len(blob) < off + cid_len + 8:
        raise PtrcError(f"{path}: truncated header")
    config_id = blob[off : off + cid_len].decode("utf-8")
    off += cid_len
    (master_seed,) = struct.unpack_from("<Q", blob, off)
    off += 8
    row_bytes = 32 + 2 * m
    expected = off + n * row_bytes
    if len(blob) != expected:
        raise PtrcError(
            f"{path}: container size mismatch "
            f"(expected {expected} bytes, found {len(blob)})"
        )
    rows = np.frombuffer(blob, dtype=np.uint8, offset=off).reshape(n, row_bytes)
    plaintexts = rows[:, :16].copy()
    keys = rows[:, 16:32].copy()
    traces = (
        np.ascontiguousarray(rows[:, 32:]).view("<u2").astype(np.uint16)
    )
    return TraceSet(
        kind=_KIND_NAMES[kind_code],
        config_id=config_id,
        master_seed=master_seed,
        plaintexts=plaintexts,
        keys=keys,
        traces=traces,
    )


# ---------------------------------------------------------------------------
# collection
# ---------------------------------------------------------------------------


def _trace_inputs(
    stream_master: int, index: int, kind: str,
    fixed_key: bytes | None, fixed_plaintext: bytes | None,
) -> tuple[bytes, bytes, int]:
    """Plaintext, key and scheduler seed for one trace index."""
    if fixed_plaintext is None:
        pt = Prng(derive_seed(stream_master, 4 * index)).bytes(16)
    else:
        pt = fixed_plaintext
    if kind == KIND_PROFILING:
        key = Prng(derive_seed(stream_master, 4 * index + 1)).bytes(16)
    else:
        key = fixed_key
    sim_seed = derive_seed(stream_master, 4 * index + 2)
    return pt, key, sim_seed


class _Collector:
    """Per-process collection context (shared warm state, one simulator)."""

    def __init__(self, program: Program, core_name: str, engine: str | None,
                 kind: str, fixed_key: bytes | None,
                 fixed_plaintext: bytes | None, stop_pc,
                 trace_master: int, warm_tables: SlackTables | None,
                 warm_cache: np.ndarray):
        self.sim = Simulator(program, get_core(core_name), engine=engine)
        self.kind = kind
        self.fixed_key = fixed_key
        self.fixed_plaintext = fixed_plaintext
        self.stop_pc = stop_pc
        self.trace_master = trace_master
        self.warm_tables = warm_tables
        self.warm_cache = warm_cache
        self.symbols = program.symbols

    def run_one(self, index: int) -> tuple[bytes, bytes, np.ndarray]:
        pt, key, sim_seed = _trace_inputs(
            self.trace_master, index, self.kind,
            self.fixed_key, self.fixed_plaintext,
        )
        tables = self.warm_tables.clone() if self.warm_tables is not None else None
        cache = self.warm_cache.copy()
        rec = self.sim.run(
            seed=sim_seed,
            mem={self.symbols["plaintext"]: pt, self.symbols["key"]: key},
            slack_tables=tables,
            cache_state=cache,
            stop_pc=self.stop_pc,
            record="samples",
        )
        samples = rec.samples
        if samples.max(initial=0) > 0xFFFF:
            raise OverflowError("per-cycle power exceeds the u16 trace range")
        return pt, key, samples.astype(np.uint16)


_WORKER: _Collector | None = None


def _init_worker(args):
    global _WORKER
    _WORKER = _Collector(*args)


def _run_chunk(indices):
    return [(i, *_WORKER.run_one(i)) for i in indices]


def collect_traces(
    core_name: str,
    kind: str,
    n_traces: int,
    master_seed: int,
    *,
    key: bytes | None = None,
    fixed_plaintext: bytes | None = None,
    n_warmup: int = DEFAULT_WARMUP,
    stop_pc=aes.FIRST_ROUND_MARK,
    processes: int = 1,
    engine: str | None = None,
    program: Program | None = None,
) -> TraceSet:
    """Collect a deterministic set of power traces on one core.

    ``kind="attack"`` uses the given fixed ``key`` for every trace and
    derives a fresh plaintext per index; ``kind="profiling"`` derives both
    key and plaintext per index.  ``fixed_plaintext`` pins the plaintext
    instead (for fixed-versus-random diagnostics).  The first
    ``n_warmup`` derived encryptions run sequentially (full program) to
    warm the delay tables and the cache; each recorded trace then starts
    from a clone of that warm state, so results do not depend on
    ``processes``.
    """
    if kind not in _KIND_CODES:
        raise ValueError(f"unknown trace-set kind {kind!r}")
    if kind == KIND_ATTACK:
        if key is None or len(key) != 16:
            raise ValueError("attack collection needs a 16-byte key")
        key = bytes(key)
    if fixed_plaintext is not None and len(fixed_plaintext) != 16:
        raise ValueError("fixed plaintext must be 16 bytes")
    if n_traces < 1:
        raise ValueError("n_traces must be positive")
    program = program or aes.load_program()
    core = get_core(core_name)

    warm_master = derive_seed(master_seed, 0)
    trace_master = derive_seed(master_seed, 1)

    # sequential warm-up: full encryptions with persistent state
    sim = Simulator(program, core, engine=engine)
    warm_tables = (
        SlackTables(sim.mode.slack_config) if sim.mode.kind == "slack" else None
    )
    warm_cache = sim.new_cache_state()
    for i in range(n_warmup):
        pt, wkey, wseed = _trace_inputs(
            warm_master, i, kind, key, fixed_plaintext
        )
        sim.run(
            seed=wseed,
            mem={program.symbols["plaintext"]: pt, program.symbols["key"]: wkey},
            slack_tables=warm_tables,
            cache_state=warm_cache,
            record="samples",
        )

    ctor_args = (
        program, core_name, engine, kind, key, fixed_plaintext,
        stop_pc, trace_master, warm_tables, warm_cache,
    )
    results: list[tuple[int, bytes, bytes, np.ndarray]] = []
    if processes <= 1:
        coll = _Collector(*ctor_args)
        for i in range(n_traces):
            results.append((i, *coll.run_one(i)))
    else:
        chunk = 512
        chunks = [
            range(lo, min(lo + chunk, n_traces))
            for lo in range(0, n_traces, chunk)
        ]
        with multiprocessing.Pool(
            processes, initializer=_init_worker, initargs=(ctor_args,)
        ) as pool:
            for part in pool.imap_unordered(_run_chunk, chunks):
                results.extend(part)

    results.sort(key=lambda r: r[0])
    n_samples = max(r[3].shape[0] for r in results)
    plaintexts = np.empty((n_traces, 16), dtype=np.uint8)
    keys = np.empty((n_traces, 16), dtype=np.uint8)
    traces = np.zeros((n_traces, n_samples), dtype=np.uint16)
    for i, pt, k, samp in results:
        plaintexts[i] = np.frombuffer(pt, dtype=np.uint8)
        keys[i] = np.frombuffer(k, dtype=np.uint8)
        traces[i, : samp.shape[0]] = samp

    return TraceSet(
        kind=kind,
        config_id=core_name,
        master_seed=master_seed,
        plaintexts=plaintexts,
        keys=keys,
        traces=traces,
    )
