"""Pipeline/scheduler configurations and their text-file format.

Six named core configurations ship with the package:

==================  =========================================================
io-baseline         single-issue in-order pipeline
ooo-baseline        3-wide out-of-order pipeline, no delay injection
random-iso-perf     out-of-order + random delays (p=0.05, up to 8 cycles)
random-iso-security out-of-order + random delays (p=0.20, up to 8 cycles)
random-aggressive   out-of-order + random delays on every instruction
paradise            out-of-order + slack-directed delays (4-way x 16-set)
==================  =========================================================

Config files are INI-style; see ``dump_config`` for the exact keys.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, replace

from .slack_unit import SlackConfig


@dataclass(frozen=True)
class PipelineConfig:
    """Core geometry and latencies."""

    rob_entries: int = 96
    fetch_buffer: int = 24
    iq_entries: int = 8  # per queue; one queue per unit class (MEM/ALU/FPU)
    mem_units: int = 1
    alu_units: int = 3
    fpu_units: int = 1
    dispatch_width: int = 3
    issue_width: int = 3
    alu_latency: int = 1
    load_hit_latency: int = 3
    load_miss_latency: int = 20
    store_latency: int = 1
    branch_latency: int = 1
    branch_penalty: int = 3  # redirect bubble after a taken branch/jump
    cache_lines: int = 512  # 32 KiB direct-mapped, 64-byte lines
    cache_line_bytes: int = 64

    def __post_init__(self):
        for name in (
            "rob_entries", "fetch_buffer", "iq_entries", "mem_units",
            "alu_units", "fpu_units", "dispatch_width", "issue_width",
            "alu_latency", "load_hit_latency", "load_miss_latency",
            "store_latency", "branch_latency", "cache_lines",
            "cache_line_bytes",
        ):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.branch_penalty < 0:
            raise ValueError("branch_penalty must be >= 0")
        if self.cache_line_bytes & (self.cache_line_bytes - 1):
            raise ValueError("cache_line_bytes must be a power of two")


@dataclass(frozen=True)
class SchedulerMode:
    """Issue policy: which delays (if any) are injected and how."""

    kind: str  # "in-order" | "out-of-order" | "random-delay" | "slack"
    delay_probability: float = 0.0
    max_delay: int = 0
    slack_config: SlackConfig | None = None

    KINDS = ("in-order", "out-of-order", "random-delay", "slack")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown scheduler kind {self.kind!r}")
        if self.kind == "random-delay":
            if not 0.0 < self.delay_probability <= 1.0:
                raise ValueError("delay_probability must be in (0, 1]")
            if self.max_delay < 1:
                raise ValueError("max_delay must be >= 1")
        if self.kind == "slack" and self.slack_config is None:
            object.__setattr__(self, "slack_config", SlackConfig())

    @staticmethod
    def in_order() -> "SchedulerMode":
        return SchedulerMode("in-order")

    @staticmethod
    def out_of_order() -> "SchedulerMode":
        return SchedulerMode("out-of-order")

    @staticmethod
    def random_delay(probability: float, max_delay: int = 8) -> "SchedulerMode":
        return SchedulerMode(
            "random-delay", delay_probability=probability, max_delay=max_delay
        )

    @staticmethod
    def slack(config: SlackConfig | None = None) -> "SchedulerMode":
        return SchedulerMode("slack", slack_config=config or SlackConfig())


@dataclass(frozen=True)
class CoreConfig:
    """A named pipeline + scheduler pairing."""

    name: str
    pipeline: PipelineConfig
    mode: SchedulerMode


def core_configs() -> dict[str, CoreConfig]:
    """The six reference cores, keyed by name."""
    ooo = PipelineConfig()
    io = replace(ooo, dispatch_width=1, issue_width=1)
    return {
        "io-baseline": CoreConfig("io-baseline", io, SchedulerMode.in_order()),
        "ooo-baseline": CoreConfig("ooo-baseline", ooo, SchedulerMode.out_of_order()),
        "random-iso-perf": CoreConfig(
            "random-iso-perf", ooo, SchedulerMode.random_delay(0.05, 8)
        ),
        "random-iso-security": CoreConfig(
            "random-iso-security", ooo, SchedulerMode.random_delay(0.20, 8)
        ),
        "random-aggressive": CoreConfig(
            "random-aggressive", ooo, SchedulerMode.random_delay(1.0, 8)
        ),
        "paradise": CoreConfig("paradise", ooo, SchedulerMode.slack(SlackConfig())),
    }


def get_core(name: str) -> CoreConfig:
    cores = core_configs()
    if name not in cores:
        raise KeyError(
            f"unknown core {name!r}; available: {', '.join(sorted(cores))}"
        )
    return cores[name]


# -- text round-trip -------------------------------------------------------

_PIPELINE_KEYS = [
    "rob_entries", "fetch_buffer", "iq_entries", "mem_units", "alu_units",
    "fpu_units", "dispatch_width", "issue_width", "alu_latency",
    "load_hit_latency", "load_miss_latency", "store_latency",
    "branch_latency", "branch_penalty", "cache_lines", "cache_line_bytes",
]


def dump_config(core: CoreConfig) -> str:
    """Serialize a CoreConfig to INI text (parseable by load_config)."""
    cp = configparser.ConfigParser()
    cp["core"] = {"name": core.name, "scheduler": core.mode.kind}
    cp["pipeline"] = {k: str(getattr(core.pipeline, k)) for k in _PIPELINE_KEYS}
    if core.mode.kind == "random-delay":
        cp["random"] = {
            "delay_probability": repr(core.mode.delay_probability),
            "max_delay": str(core.mode.max_delay),
        }
    elif core.mode.kind == "slack":
        sc = core.mode.slack_config
        cp["slack"] = {
            "ways": str(sc.ways),
            "sets": str(sc.sets),
            "pc_offset_bits": str(sc.pc_offset_bits),
            "slack_bits": str(sc.slack_bits),
        }
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def load_config(text: str) -> CoreConfig:
    """Parse INI text produced by dump_config (or hand-written)."""
    cp = configparser.ConfigParser()
    cp.read_string(text)
    if "core" not in cp:
        raise ValueError("config needs a [core] section")
    name = cp["core"].get("name", "custom")
    kind = cp["core"].get("scheduler", "out-of-order")
    pipe_kwargs = {}
    if "pipeline" in cp:
        for key in cp["pipeline"]:
            if key not in _PIPELINE_KEYS:
                raise ValueError(f"unknown pipeline key {key!r}")
            pipe_kwargs[key] = cp["pipeline"].getint(key)
    pipeline = PipelineConfig(**pipe_kwargs)
    if kind == "in-order":
        mode = SchedulerMode.in_order()
    elif kind == "out-of-order":
        mode = SchedulerMode.out_of_order()
    elif kind == "random-delay":
        sec = cp["random"] if "random" in cp else {}
        mode = SchedulerMode.random_delay(
            float(sec.get("delay_probability", 0.05)),
            int(sec.get("max_delay", 8)),
        )
    elif kind == "slack":
        sec = cp["slack"] if "slack" in cp else {}
        mode = SchedulerMode.slack(
            SlackConfig(
                ways=int(sec.get("ways", 4)),
                sets=int(sec.get("sets", 16)),
                pc_offset_bits=int(sec.get("pc_offset_bits", 8)),
                slack_bits=int(sec.get("slack_bits", 8)),
            )
        )
    else:
        raise ValueError(f"unknown scheduler kind {kind!r}")
    return CoreConfig(name, pipeline, mode)
