"""Command-line interface: collect, attack, evaluate, perf, dump-config, bench.

Every subcommand exits 0 on success and nonzero with a message on error;
argument errors print usage.  ``--seed`` is accepted uniformly (attacks
are deterministic, so theirs is inert and documented as such).
"""

from __future__ import annotations

import argparse
import importlib.resources
import sys
import time

import numpy as np

from . import aes
from .configs import core_configs, dump_config, get_core
from .evaluate import (
    DEFAULT_ATTACK_KEY,
    load_plan_file,
    perf_table,
    run_perf_pipeline,
    run_security_pipeline,
)
from .power import (
    KIND_ATTACK,
    KIND_PROFILING,
    TraceSet,
    collect_traces,
)
from .prng import Prng, derive_seed
from .sca import (
    advanced_attack,
    cpa_attack,
    educated_attack,
)
from .simulate import Simulator, available_engines

BUNDLED_PLAN = "desk-scale.cfg"


def _hex_bytes(text: str, what: str) -> bytes:
    try:
        return bytes.fromhex(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{what} must be hex digits") from None


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slackbench",
        description=(
            "Workbench for randomized instruction scheduling: trace "
            "collection, side-channel attacks, security and performance "
            "pipelines."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("collect", help="collect a power trace set (.ptrc)")
    p.add_argument("--core", required=True, help="core configuration name")
    p.add_argument(
        "--kind", choices=(KIND_ATTACK, KIND_PROFILING), default=KIND_ATTACK
    )
    p.add_argument("-n", "--traces", type=int, required=True, metavar="N")
    p.add_argument("--seed", type=lambda s: int(s, 0), required=True)
    p.add_argument("--out", required=True, help="output .ptrc path")
    p.add_argument(
        "--key", type=lambda s: _hex_bytes(s, "--key"),
        default=DEFAULT_ATTACK_KEY,
        help="fixed key for attack sets (32 hex chars)",
    )
    p.add_argument(
        "--fixed-plaintext", type=lambda s: _hex_bytes(s, "--fixed-plaintext"),
        default=None, metavar="HEX",
        help="pin every plaintext (fixed-vs-random diagnostics)",
    )
    p.add_argument("--processes", type=int, default=1)
    p.add_argument("--engine", choices=("python", "cython"), default=None)

    p = sub.add_parser("attack", help="run one attack on a trace set")
    p.add_argument(
        "--method", choices=("basic", "educated", "advanced"), required=True
    )
    p.add_argument("--traces", required=True, help="attack-set .ptrc path")
    p.add_argument(
        "--profiling", default=None,
        help="profiling-set .ptrc path (advanced method)",
    )
    p.add_argument("--target-byte", type=int, default=0, metavar="0..15")
    p.add_argument("--out", required=True, help="score CSV path (guess,score)")
    p.add_argument(
        "--corr-out", default=None, metavar="CSV",
        help="also write per-sample correlation of the best guess",
    )
    p.add_argument(
        "--seed", type=lambda s: int(s, 0), default=0,
        help="accepted for uniformity; attacks are deterministic",
    )

    p = sub.add_parser(
        "evaluate", help="run the security pipeline from a plan file"
    )
    p.add_argument(
        "plan", nargs="?", default=None, help="experiment plan (INI)"
    )
    p.add_argument(
        "--show-bundled", action="store_true",
        help="print the bundled desk-scale plan and exit",
    )
    p.add_argument("--quiet", action="store_true", help="suppress progress")
    p.add_argument(
        "--seed", type=lambda s: int(s, 0), default=None,
        help="override both plan seeds (attack: seed, profiling: seed+1)",
    )

    p = sub.add_parser("perf", help="measure IPC across cores")
    p.add_argument(
        "--cores", default=",".join(core_configs()),
        help="comma-separated core names (default: all)",
    )
    p.add_argument("-n", "--plaintexts", type=int, default=2000)
    p.add_argument("--seed", type=lambda s: int(s, 0), default=0x5EED_0001)
    p.add_argument("--engine", choices=("python", "cython"), default=None)
    p.add_argument("--quiet", action="store_true", help="suppress progress")

    p = sub.add_parser(
        "dump-config", help="print core configurations as INI text"
    )
    p.add_argument(
        "cores", nargs="*", help="core names (default: all six)"
    )
    p.add_argument(
        "--seed", type=lambda s: int(s, 0), default=0,
        help="accepted for uniformity; unused",
    )

    p = sub.add_parser(
        "bench", help="compare the compiled and pure-Python engines"
    )
    p.add_argument("-n", "--encryptions", type=int, default=3)
    p.add_argument("--core", default="paradise")
    p.add_argument("--seed", type=lambda s: int(s, 0), default=0xBE7C_0001)

    return parser


def _cmd_collect(args) -> int:
    ts = collect_traces(
        args.core, args.kind, args.traces, args.seed,
        key=args.key, fixed_plaintext=args.fixed_plaintext,
        processes=args.processes, engine=args.engine,
    )
    ts.save(args.out)
    print(
        f"wrote {ts.n_traces} traces x {ts.n_samples} samples "
        f"({args.core}, {args.kind}) to {args.out}"
    )
    return 0


def _write_scores(path, metric) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("guess,score\n")
        for guess in range(256):
            fh.write(f"{guess},{metric[guess]:.9g}\n")


def _write_corr(path, corr) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("sample_index,correlation\n")
        for i, r in enumerate(corr):
            fh.write(f"{i},{r:.9g}\n")


def _cmd_attack(args) -> int:
    if not 0 <= args.target_byte <= 15:
        raise ValueError("target byte must be in 0..15")
    ts = TraceSet.load(args.traces)
    if args.method == "basic":
        res = cpa_attack(ts.traces, ts.plaintexts, args.target_byte)
        metric, corr = res.metric, np.abs(res.correlations[res.best_guess])
    elif args.method == "educated":
        res, _ = educated_attack(ts.traces, ts.plaintexts, args.target_byte)
        metric, corr = res.metric, np.abs(res.correlations[res.best_guess])
        print(f"best integration window: {res.window_width}")
    else:
        if args.profiling is None:
            raise ValueError("--method advanced needs --profiling")
        prof = TraceSet.load(args.profiling)
        if prof.kind != KIND_PROFILING:
            raise ValueError(
                f"{args.profiling} is not a profiling set (kind={prof.kind})"
            )
        _, scores, _ = advanced_attack(
            ts.traces, ts.plaintexts,
            prof.traces, prof.plaintexts, prof.keys,
            byte_idx=args.target_byte,
        )
        metric, corr = scores.sum(axis=0), None
    _write_scores(args.out, metric)
    best = int(np.argmax(metric))
    print(f"best guess for byte {args.target_byte}: 0x{best:02x}")
    if args.corr_out is not None:
        if corr is None:
            raise ValueError("--corr-out applies to basic/educated methods")
        _write_corr(args.corr_out, corr)
    return 0


def _cmd_evaluate(args) -> int:
    if args.show_bundled:
        text = (
            importlib.resources.files("slackbench") / "assets" / BUNDLED_PLAN
        ).read_text()
        print(text, end="")
        return 0
    if args.plan is None:
        raise ValueError("plan file required (or --show-bundled)")
    plan = load_plan_file(args.plan)
    if args.seed is not None:
        from dataclasses import replace

        plan = replace(
            plan, attack_seed=args.seed, profiling_seed=args.seed + 1
        )
    progress = None if args.quiet else (
        lambda msg: print(msg, file=sys.stderr, flush=True)
    )
    summary = run_security_pipeline(plan, progress=progress)
    print(summary.table(), end="")
    return 0


def _cmd_perf(args) -> int:
    cores = tuple(c.strip() for c in args.cores.split(",") if c.strip())
    for c in cores:
        get_core(c)  # fail fast on unknown names
    progress = None if args.quiet else (
        lambda msg: print(msg, file=sys.stderr, flush=True)
    )
    results = run_perf_pipeline(
        cores, args.plaintexts, seed=args.seed, engine=args.engine,
        progress=progress,
    )
    print(perf_table(results, args.plaintexts), end="")
    return 0


def _cmd_dump_config(args) -> int:
    cores = args.cores or list(core_configs())
    for name in cores:
        print(dump_config(get_core(name)), end="")
    return 0


def _cmd_bench(args) -> int:
    engines = available_engines()
    program = aes.load_program()
    core = get_core(args.core)
    key = DEFAULT_ATTACK_KEY
    rows = []
    for engine in engines:
        sim = Simulator(program, core, engine=engine)
        checksum = 0
        start = time.perf_counter()
        for i in range(args.encryptions):
            pt = Prng(derive_seed(args.seed, i)).bytes(16)
            rec = sim.run(
                seed=derive_seed(args.seed, 1000 + i),
                mem={
                    program.symbols["plaintext"]: pt,
                    program.symbols["key"]: key,
                },
                record="samples",
            )
            checksum ^= int(rec.samples.sum()) ^ rec.end_cycle
        elapsed = time.perf_counter() - start
        rows.append((engine, elapsed / args.encryptions, checksum))
    print(f"engine benchmark: {args.core}, {args.encryptions} encryptions")
    for engine, per_enc, checksum in rows:
        print(f"{engine:<8} {per_enc * 1e3:10.2f} ms/encryption  "
              f"checksum {checksum:#x}")
    if len(rows) == 2:
        if rows[0][2] != rows[1][2]:
            raise AssertionError("engines disagree on identical inputs")
        print(f"speedup: {rows[0][1] / rows[1][1]:.1f}x "
              f"({rows[1][0]} over {rows[0][0]}); checksums match")
    return 0


_COMMANDS = {
    "collect": _cmd_collect,
    "attack": _cmd_attack,
    "evaluate": _cmd_evaluate,
    "perf": _cmd_perf,
    "dump-config": _cmd_dump_config,
    "bench": _cmd_bench,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (
        ValueError, KeyError, OSError, np.linalg.LinAlgError
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
