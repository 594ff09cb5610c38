"""Public simulation interface: run programs on configured cores.

Two interchangeable kernels sit behind this module: a compiled Cython
engine (preferred) and a pure-Python reference.  They are maintained as
exact twins; `simulate(..., engine="python")` / `engine="cython"` selects
one explicitly, the SLACKBENCH_ENGINE environment variable overrides the
default, and otherwise the compiled kernel is used when importable.
"""

from __future__ import annotations

import os
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from . import engine_python
from .configs import CoreConfig, PipelineConfig, SchedulerMode, get_core
from .encode import (
    MEM_SIZE,
    MODE_IN_ORDER,
    MODE_OUT_OF_ORDER,
    MODE_RANDOM,
    MODE_SLACK,
    SAMPLE_HEADROOM,
    STATUS_BAD_PC,
    STATUS_CYCLE_LIMIT,
    STATUS_NAMES,
    STATUS_OK,
    STATUS_STEP_LIMIT,
    STATUS_UNALIGNED,
    STATUS_UNMAPPED,
    EncodedProgram,
)
from .functional import (
    SimError,
    StepLimitError,
    UnalignedAccessError,
    UnalignedPcError,
    UnmappedAccessError,
)
from .isa import Program
from .prng import bernoulli_threshold
from .slack_unit import SlackTables


class CycleLimitError(SimError):
    pass


_STATUS_EXC = {
    STATUS_STEP_LIMIT: StepLimitError,
    STATUS_CYCLE_LIMIT: CycleLimitError,
    STATUS_UNMAPPED: UnmappedAccessError,
    STATUS_BAD_PC: UnalignedPcError,
    STATUS_UNALIGNED: UnalignedAccessError,
}

_MODE_KINDS = {
    "in-order": MODE_IN_ORDER,
    "out-of-order": MODE_OUT_OF_ORDER,
    "random-delay": MODE_RANDOM,
    "slack": MODE_SLACK,
}


def _load_cython():
    try:
        from . import _engine_cy  # noqa: F401

        return _engine_cy
    except ImportError:
        return None


_CYTHON = _load_cython()


def available_engines() -> list[str]:
    return ["python"] + (["cython"] if _CYTHON is not None else [])


def default_engine() -> str:
    env = os.environ.get("SLACKBENCH_ENGINE")
    if env:
        if env not in ("python", "cython"):
            raise ValueError(f"SLACKBENCH_ENGINE must be python or cython, got {env!r}")
        if env == "cython" and _CYTHON is None:
            raise ImportError("compiled engine requested but not built")
        return env
    return "cython" if _CYTHON is not None else "python"


@dataclass
class ExecutionRecord:
    """Result of one simulation run."""

    core_name: str
    engine: str
    seed: int
    status: int
    truncated: bool
    n_dyn: int
    n_retired: int
    end_cycle: int
    n_injections: int
    n_unstable_injections: int
    samples: np.ndarray  # int64, power per cycle
    # per dynamic instruction (absent in record="samples" mode):
    pc: np.ndarray | None = None
    opcode: np.ndarray | None = None
    dispatch: np.ndarray | None = None
    issue: np.ndarray | None = None
    complete: np.ndarray | None = None
    extra_delay: np.ndarray | None = None
    wb_value: np.ndarray | None = None
    dst_reg: np.ndarray | None = None
    producer0: np.ndarray | None = None
    producer1: np.ndarray | None = None
    t0: np.ndarray | None = None
    t1: np.ndarray | None = None
    mem_addr: np.ndarray | None = None
    flags: np.ndarray | None = None
    final_mem: np.ndarray | None = None  # uint8[MEM_SIZE]

    @property
    def total_cycles(self) -> int:
        return self.end_cycle + 1

    @property
    def ipc(self) -> float:
        if self.total_cycles <= 0:
            raise ZeroDivisionError("empty execution")
        return self.n_retired / self.total_cycles

    def wb_multiset(self) -> Counter:
        """Multiset of (pc, value) architectural register write-backs."""
        assert self.pc is not None, "needs record='full'"
        sel = self.dst_reg >= 0
        return Counter(zip(self.pc[sel].tolist(), self.wb_value[sel].tolist()))

    def wb_events(self) -> dict[int, list[int]]:
        """Write-back cycle -> sorted list of written values."""
        assert self.pc is not None, "needs record='full'"
        out: dict[int, list[int]] = {}
        sel = self.dst_reg >= 0
        for c, v in zip(self.complete[sel].tolist(), self.wb_value[sel].tolist()):
            out.setdefault(c, []).append(v)
        for vs in out.values():
            vs.sort()
        return out

    def read_mem(self, addr: int, length: int) -> bytes:
        assert self.final_mem is not None, "needs record='full'"
        return bytes(self.final_mem[addr : addr + length])


def ipc_ratio(a: ExecutionRecord, b: ExecutionRecord) -> float:
    """IPC of `a` normalized to `b`."""
    return a.ipc / b.ipc


class Simulator:
    """Reusable simulation context for one (program, pipeline, mode) triple.

    Pre-encodes the program and keeps reusable buffers so repeated runs
    (trace collection) avoid per-run allocation.
    """

    def __init__(
        self,
        program: Program | EncodedProgram,
        core: CoreConfig | str | None = None,
        *,
        pipeline: PipelineConfig | None = None,
        mode: SchedulerMode | None = None,
        engine: str | None = None,
        max_steps: int | None = None,
        max_cycles: int | None = None,
    ):
        if isinstance(core, str):
            core = get_core(core)
        if core is not None:
            pipeline = pipeline or core.pipeline
            mode = mode or core.mode
            self.core_name = core.name
        else:
            self.core_name = "custom"
        self.pipeline = pipeline or PipelineConfig()
        self.mode = mode or SchedulerMode.out_of_order()
        if isinstance(program, EncodedProgram):
            self.program = None
            self.enc = program
        else:
            self.program = program
            self.enc = EncodedProgram.from_program(program)
        if engine is None:
            engine = default_engine()
        if engine not in available_engines():
            raise ValueError(f"engine {engine!r} not available")
        self.engine = engine
        self.max_steps = max_steps or max(10_000, 50 * self.enc.n)
        self.max_cycles = max_cycles or 8 * self.max_steps + 256
        line = self.pipeline.cache_line_bytes
        self.cache_line_shift = line.bit_length() - 1
        self.rand_thresh = bernoulli_threshold(self.mode.delay_probability)
        self.rand_always = int(self.mode.delay_probability >= 1.0)
        self.mode_kind = _MODE_KINDS[self.mode.kind]
        self._mem = np.empty(MEM_SIZE, dtype=np.uint8)
        self._regs = np.zeros(32, dtype=np.uint32)
        if self.engine == "cython":
            self._alloc_cy_buffers()

    def _alloc_cy_buffers(self):
        n, c = self.max_steps, self.max_cycles + SAMPLE_HEADROOM
        self._cols = {
            name: np.zeros(n, dtype=np.int64)
            for name in (
                "sidx", "dispatch", "issue", "complete", "extra", "wb",
                "dst", "p0", "p1", "t0", "t1", "addr", "flags",
            )
        }
        self._samples = np.zeros(c, dtype=np.int64)
        self._samples_hwm = c  # high-water mark to zero before each run
        self._cache = np.empty(self.pipeline.cache_lines, dtype=np.int64)
        self._scalars = np.zeros(8, dtype=np.int64)

    def _resolve_stop(self, stop_pc) -> int:
        if stop_pc is None:
            return -1
        if isinstance(stop_pc, str):
            if self.program is None or stop_pc not in self.program.symbols:
                raise KeyError(f"unknown label {stop_pc!r}")
            stop_pc = self.program.symbols[stop_pc]
        idx = (stop_pc - self.enc.entry) >> 2
        if stop_pc % 4 != 0 or not 0 <= idx < self.enc.n:
            raise ValueError(f"stop pc {stop_pc:#x} is not an instruction")
        return stop_pc

    def new_cache_state(self) -> np.ndarray:
        """A cold cache-tag array that `run(cache_state=...)` updates in place."""
        return np.full(self.pipeline.cache_lines, -1, dtype=np.int64)

    def run(
        self,
        *,
        seed: int = 1,
        regs: dict[int, int] | None = None,
        mem: dict[int, bytes] | None = None,
        slack_tables: SlackTables | None = None,
        cache_state: np.ndarray | None = None,
        stop_pc=None,
        record: str = "full",
        raise_on_error: bool = True,
    ) -> ExecutionRecord:
        if record not in ("full", "samples"):
            raise ValueError("record must be 'full' or 'samples'")
        if cache_state is not None and (
            cache_state.shape != (self.pipeline.cache_lines,)
            or cache_state.dtype != np.int64
        ):
            raise ValueError("cache_state must be int64 of length cache_lines")
        np.copyto(self._mem, self.enc.image)
        if mem:
            for base, blob in mem.items():
                blob = bytes(blob)
                if not self.enc.mapped[base : base + len(blob)].all():
                    raise UnmappedAccessError(
                        f"memory binding at {base:#x} touches unmapped bytes"
                    )
                self._mem[base : base + len(blob)] = np.frombuffer(
                    blob, dtype=np.uint8
                )
        self._regs[:] = 0
        if regs:
            for idx, val in regs.items():
                if not 0 <= idx < 32:
                    raise ValueError(f"register index out of range: {idx}")
                if idx:
                    self._regs[idx] = val & 0xFFFFFFFF

        stop = self._resolve_stop(stop_pc)
        if self.mode.kind == "slack" and slack_tables is None:
            slack_tables = SlackTables(self.mode.slack_config)

        if self.engine == "python":
            res = self._run_python(seed, slack_tables, stop, cache_state)
        else:
            res = self._run_cython(seed, slack_tables, stop, cache_state)

        if raise_on_error and res["status"] != STATUS_OK:
            exc = _STATUS_EXC.get(res["status"], SimError)
            raise exc(
                f"simulation failed: {STATUS_NAMES.get(res['status'], '?')} "
                f"(core={self.core_name}, seed={seed})"
            )

        rec = ExecutionRecord(
            core_name=self.core_name,
            engine=self.engine,
            seed=seed,
            status=res["status"],
            truncated=bool(res["truncated"]),
            n_dyn=res["n_dyn"],
            n_retired=res["retired"],
            end_cycle=res["end_cycle"],
            n_injections=res["n_injections"],
            n_unstable_injections=res["n_unstable_injections"],
            samples=res["samples"],
        )
        if record == "full":
            rec.pc = self.enc.entry + 4 * res["sidx"]
            rec.opcode = self.enc.opc[res["sidx"]].astype(np.int64)
            rec.dispatch = res["dispatch"]
            rec.issue = res["issue"]
            rec.complete = res["complete"]
            rec.extra_delay = res["extra"]
            rec.wb_value = res["wb"]
            rec.dst_reg = res["dst"]
            rec.producer0 = res["p0"]
            rec.producer1 = res["p1"]
            rec.t0 = res["t0"]
            rec.t1 = res["t1"]
            rec.mem_addr = res["addr"]
            rec.flags = res["flags"]
            rec.final_mem = self._mem.copy()
        return rec

    def _run_python(self, seed, slack_tables, stop, cache_state=None):
        p = self.pipeline
        return engine_python.run_kernel(
            self.enc,
            init_regs=self._regs,
            mem=self._mem,
            rob=p.rob_entries,
            fetch_buffer=p.fetch_buffer,
            iq_entries=p.iq_entries,
            mem_units=p.mem_units,
            alu_units=p.alu_units,
            fpu_units=p.fpu_units,
            dispatch_width=p.dispatch_width,
            issue_width=p.issue_width,
            lat_alu=p.alu_latency,
            lat_load_hit=p.load_hit_latency,
            lat_load_miss=p.load_miss_latency,
            lat_store=p.store_latency,
            lat_branch=p.branch_latency,
            branch_penalty=p.branch_penalty,
            cache_lines=p.cache_lines,
            cache_line_shift=self.cache_line_shift,
            mode_kind=self.mode_kind,
            rand_thresh=self.rand_thresh,
            rand_always=self.rand_always,
            rand_max_delay=self.mode.max_delay,
            slack=slack_tables,
            seed=seed,
            max_instr=self.max_steps,
            max_cycles=self.max_cycles,
            stop_pc=stop,
            cache_state=cache_state,
        )

    def _run_cython(self, seed, slack_tables, stop, cache_state=None):
        p = self.pipeline
        st = slack_tables
        if st is None:
            # dummy single-entry tables; the kernel will not touch them
            st = SlackTables.__new__(SlackTables)
            z = np.zeros((1, 1), dtype=np.int64)
            zc = np.zeros(1, dtype=np.int64)
            st.dt_tag = z
            st.dt_stamp = z.copy()
            st.dt_off = np.zeros((1, 1), dtype=np.int32)
            st.dt_ctr = zc
            st.nct_tag = z.copy()
            st.nct_stamp = z.copy()
            st.nct_slack = np.zeros((1, 1), dtype=np.int32)
            st.nct_stable = np.zeros((1, 1), dtype=np.uint8)
            st.nct_ctr = zc.copy()
            st.ct_tag = z.copy()
            st.ct_stamp = z.copy()
            st.ct_ctr = zc.copy()
            sc_sets, sc_ways, sc_max, off_min, off_max = 1, 1, 255, -128, 127
        else:
            sc = st.config
            sc_sets, sc_ways, sc_max = sc.sets, sc.ways, sc.slack_max
            off_min, off_max = sc.off_min, sc.off_max

        self._samples[: self._samples_hwm] = 0
        if cache_state is None:
            self._cache[:] = -1
        else:
            np.copyto(self._cache, cache_state)
        cfg = np.array(
            [
                p.rob_entries, p.fetch_buffer, p.iq_entries, p.mem_units,
                p.alu_units, p.fpu_units, p.dispatch_width, p.issue_width,
                p.alu_latency, p.load_hit_latency, p.load_miss_latency,
                p.store_latency, p.branch_latency, p.branch_penalty,
                p.cache_lines, self.cache_line_shift, self.mode_kind,
                self.rand_always, self.mode.max_delay, sc_sets, sc_ways,
                sc_max, off_min, off_max, self.max_steps, self.max_cycles,
                -1 if stop < 0 else (stop - self.enc.entry) >> 2,
            ],
            dtype=np.int64,
        )
        c = self._cols
        status = _CYTHON.run_kernel(
            self.enc.opc, self.enc.rd, self.enc.rs1, self.enc.rs2,
            self.enc.imm, self.enc.entry, self.enc.n,
            self._mem, self.enc.mapped, self._regs, cfg,
            int(seed), int(self.rand_thresh) & ((1 << 64) - 1),
            st.dt_tag, st.dt_stamp, st.dt_off, st.dt_ctr,
            st.nct_tag, st.nct_stamp, st.nct_slack, st.nct_stable, st.nct_ctr,
            st.ct_tag, st.ct_stamp, st.ct_ctr,
            c["sidx"], c["dispatch"], c["issue"], c["complete"], c["extra"],
            c["wb"], c["dst"], c["p0"], c["p1"], c["t0"], c["t1"], c["addr"],
            c["flags"], self._samples, self._cache, self._scalars,
        )
        if cache_state is not None:
            np.copyto(cache_state, self._cache)
        s = self._scalars
        n_dyn = int(s[0])
        end_cycle = int(s[1])
        n_keep = end_cycle + 1 if status == STATUS_OK else min(
            int(s[6]) + 1, self._samples.shape[0]
        )
        # s[7]: one past the highest cycle any completion could have touched
        self._samples_hwm = min(int(s[7]), self._samples.shape[0])
        return {
            "status": int(status),
            "n_dyn": n_dyn,
            "end_cycle": end_cycle,
            "truncated": bool(s[2]),
            "n_injections": int(s[3]),
            "n_unstable_injections": int(s[4]),
            "retired": int(s[5]),
            "samples": self._samples[:n_keep].copy(),
            **{
                k: c[k][:n_dyn].copy()
                for k in (
                    "sidx", "dispatch", "issue", "complete", "extra", "wb",
                    "dst", "p0", "p1", "t0", "t1", "addr", "flags",
                )
            },
        }


def simulate(
    program: Program | EncodedProgram,
    core: CoreConfig | str | None = None,
    *,
    pipeline: PipelineConfig | None = None,
    mode: SchedulerMode | None = None,
    seed: int = 1,
    regs: dict[int, int] | None = None,
    mem: dict[int, bytes] | None = None,
    slack_tables: SlackTables | None = None,
    cache_state: np.ndarray | None = None,
    stop_pc=None,
    max_steps: int | None = None,
    max_cycles: int | None = None,
    engine: str | None = None,
    record: str = "full",
    raise_on_error: bool = True,
) -> ExecutionRecord:
    """Run one program on one core configuration and return the record."""
    sim = Simulator(
        program, core, pipeline=pipeline, mode=mode, engine=engine,
        max_steps=max_steps, max_cycles=max_cycles,
    )
    return sim.run(
        seed=seed, regs=regs, mem=mem, slack_tables=slack_tables,
        cache_state=cache_state, stop_pc=stop_pc, record=record,
        raise_on_error=raise_on_error,
    )
