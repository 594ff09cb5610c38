"""End-to-end pipelines: security evaluation and performance measurement.

The security pipeline follows one recipe per core: collect an attack set
(fixed key, derived plaintexts) and, when profiled attacks are requested,
a profiling set (derived keys and plaintexts); run the requested attack
tiers; convert each into a guessing-entropy curve over disjoint subsets;
and report, per core and tier, the number of traces per attack after
which the true key byte's average rank stays below one.  Security ratios
always compare a core against the out-of-order baseline *under the same
tier* — cross-tier ratios are meaningless and never computed.

Curves are written as CSV (``traces,ge``) plus, for the profiled tier,
the POI diagnostic (``sample_index,correlation``).  All outputs are
deterministic functions of the plan: collection derives every trace from
the plan seeds no matter how many worker processes run, attacks are
deterministic, and files are written with fixed formatting, so repeated
runs produce byte-identical files.

The performance pipeline runs full encryptions back to back with
persistent scheduler/cache state (the deployment posture: the core keeps
learning across encryptions) and reports mean instructions-per-cycle,
normalized against the out-of-order baseline.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field

import numpy as np

from . import aes
from .configs import core_configs, get_core
from .power import (
    KIND_ATTACK,
    KIND_PROFILING,
    TraceSet,
    collect_traces,
)
from .prng import Prng, derive_seed
from .sca import (
    WINDOW_WIDTHS,
    GECurve,
    fit_template_model,
    ge_curve_cpa,
    ge_curve_template,
    integrate_windows,
    known_key_correlation,
    select_poi,
    trace_count_grid,
)
from .simulate import Simulator
from .slack_unit import SlackTables

EVALUATION_TIERS = ("basic", "educated", "advanced")

#: default attack key for collected attack sets
DEFAULT_ATTACK_KEY = bytes(range(16))

#: PCA dimensionality candidates swept by the profiled tier
COMPONENT_SWEEP = tuple(range(1, 11))

#: POI threshold floor; the effective threshold rises with small profiling
#: sets so that selection stays above the correlation noise floor (~1/sqrt n)
POI_THRESHOLD_FLOOR = 0.005
POI_NOISE_SIGMA = 4.0


def poi_threshold_for(n_profiling: int, floor: float = POI_THRESHOLD_FLOOR) -> float:
    """Noise-aware POI threshold: max(floor, 4 / sqrt(n_profiling))."""
    if n_profiling < 1:
        raise ValueError("profiling set must be nonempty")
    return max(floor, POI_NOISE_SIGMA / float(np.sqrt(n_profiling)))


class PlanError(ValueError):
    """Raised for malformed or inconsistent experiment plans."""


@dataclass
class ExperimentPlan:
    """Everything the security pipeline needs, checked for consistency."""

    cores: tuple[str, ...]
    n_attack_traces: int = 50_000
    n_profiling_traces: int = 50_000
    n_subsets: int = 20
    evaluations: tuple[str, ...] = EVALUATION_TIERS
    attack_seed: int = 0xA77AC4_0001
    profiling_seed: int = 0x920F11E_0001
    output_dir: str = "results"
    target_byte: int = 0
    attack_key: bytes = DEFAULT_ATTACK_KEY
    processes: int = 1
    engine: str | None = None

    def __post_init__(self):
        known = core_configs()
        if not self.cores:
            raise PlanError("plan names no cores")
        for c in self.cores:
            if c not in known:
                raise PlanError(
                    f"unknown core {c!r}; available: {', '.join(sorted(known))}"
                )
        if len(set(self.cores)) != len(self.cores):
            raise PlanError("duplicate core in plan")
        if self.n_subsets < 1:
            raise PlanError("n_subsets must be >= 1")
        if self.n_attack_traces < 1:
            raise PlanError("n_attack_traces must be >= 1")
        if self.n_attack_traces % self.n_subsets:
            raise PlanError(
                f"n_attack_traces ({self.n_attack_traces}) not divisible "
                f"by n_subsets ({self.n_subsets})"
            )
        if not self.evaluations:
            raise PlanError("plan requests no evaluations")
        for e in self.evaluations:
            if e not in EVALUATION_TIERS:
                raise PlanError(
                    f"unknown evaluation {e!r}; "
                    f"available: {', '.join(EVALUATION_TIERS)}"
                )
        if len(set(self.evaluations)) != len(self.evaluations):
            raise PlanError("duplicate evaluation in plan")
        if "advanced" in self.evaluations and self.n_profiling_traces < 2:
            raise PlanError("advanced evaluation needs a profiling set")
        if not 0 <= self.target_byte <= 15:
            raise PlanError("target_byte must be in 0..15")
        if len(self.attack_key) != 16:
            raise PlanError("attack_key must be 16 bytes")
        if self.processes < 1:
            raise PlanError("processes must be >= 1")

    @property
    def subset_size(self) -> int:
        return self.n_attack_traces // self.n_subsets


def load_plan(text: str) -> ExperimentPlan:
    """Parse an INI experiment plan (one ``[plan]`` section).

    Keys: cores (comma list), n_attack_traces, n_profiling_traces,
    n_subsets, evaluations (comma list), attack_seed, profiling_seed
    (decimal or 0x hex), output_dir, target_byte, attack_key (32 hex
    chars), processes, engine.  Unknown keys are rejected.
    """
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise PlanError(f"unparseable plan: {exc}") from exc
    if "plan" not in cp:
        raise PlanError("plan needs a [plan] section")
    sec = cp["plan"]
    known_keys = {
        "cores", "n_attack_traces", "n_profiling_traces", "n_subsets",
        "evaluations", "attack_seed", "profiling_seed", "output_dir",
        "target_byte", "attack_key", "processes", "engine",
    }
    for key in sec:
        if key not in known_keys:
            raise PlanError(f"unknown plan key {key!r}")

    def _int(key, default):
        raw = sec.get(key)
        if raw is None:
            return default
        try:
            return int(raw, 0)
        except ValueError as exc:
            raise PlanError(f"plan key {key!r}: not an integer: {raw!r}") from exc

    def _list(key, default):
        raw = sec.get(key)
        if raw is None:
            return default
        return tuple(s.strip() for s in raw.split(",") if s.strip())

    kwargs = dict(
        cores=_list("cores", ()),
        n_attack_traces=_int("n_attack_traces", 50_000),
        n_profiling_traces=_int("n_profiling_traces", 50_000),
        n_subsets=_int("n_subsets", 20),
        evaluations=_list("evaluations", EVALUATION_TIERS),
        attack_seed=_int("attack_seed", 0xA77AC4_0001),
        profiling_seed=_int("profiling_seed", 0x920F11E_0001),
        output_dir=sec.get("output_dir", "results"),
        target_byte=_int("target_byte", 0),
        processes=_int("processes", 1),
        engine=sec.get("engine") or None,
    )
    key_hex = sec.get("attack_key")
    if key_hex is not None:
        try:
            kwargs["attack_key"] = bytes.fromhex(key_hex.strip())
        except ValueError as exc:
            raise PlanError(f"attack_key is not valid hex: {key_hex!r}") from exc
    return ExperimentPlan(**kwargs)


def load_plan_file(path) -> ExperimentPlan:
    with open(path, "r", encoding="utf-8") as fh:
        return load_plan(fh.read())


# ---------------------------------------------------------------------------
# security pipeline
# ---------------------------------------------------------------------------


@dataclass
class TierResult:
    """One attack tier's outcome on one core."""

    tier: str
    curve: GECurve
    traces_to_break: int | None
    detail: str = ""

    @property
    def broken(self) -> bool:
        return self.traces_to_break is not None


@dataclass
class CoreSecurityResult:
    """All requested tiers on one core, or the error that stopped them."""

    core: str
    tiers: dict[str, TierResult] = field(default_factory=dict)
    error: str | None = None


@dataclass
class SecuritySummary:
    """Pipeline output: per-core results plus the plan that produced them."""

    plan: ExperimentPlan
    results: dict[str, CoreSecurityResult]

    def ratio_vs_baseline(self, core: str, tier: str) -> tuple[float, bool] | None:
        """Security ratio against ooo-baseline under the same tier.

        Returns (ratio, exact).  For an unbroken core the ratio is the
        conservative lower bound subset_size / baseline_count, flagged
        inexact.  None when the comparison is impossible (baseline absent,
        unbroken baseline, missing tier).
        """
        base = self.results.get("ooo-baseline")
        this = self.results.get(core)
        if base is None or this is None:
            return None
        bt, ct = base.tiers.get(tier), this.tiers.get(tier)
        if bt is None or ct is None or not bt.broken:
            return None
        if ct.broken:
            return ct.traces_to_break / bt.traces_to_break, True
        return self.plan.subset_size / bt.traces_to_break, False

    def table(self) -> str:
        """Human-readable summary: traces-to-GE<1 per core and tier."""
        plan = self.plan
        lines = [
            f"security summary: {plan.n_attack_traces} attack traces per core, "
            f"{plan.n_subsets} independent attacks of {plan.subset_size}",
            f"{'core':<20} {'tier':<9} {'traces-to-GE<1':>15} "
            f"{'vs ooo-baseline':>16}  detail",
        ]
        for core in plan.cores:
            res = self.results[core]
            if res.error is not None:
                lines.append(f"{core:<20} {'—':<9} {'error':>15} "
                             f"{'':>16}  {res.error}")
                continue
            for tier in plan.evaluations:
                tr = res.tiers.get(tier)
                if tr is None:
                    continue
                if tr.broken:
                    count = str(tr.traces_to_break)
                else:
                    count = f"> {plan.n_attack_traces}"
                ratio = self.ratio_vs_baseline(core, tier)
                if core == "ooo-baseline" or ratio is None:
                    rtxt = "—"
                else:
                    val, exact = ratio
                    rtxt = f"{val:.1f}x" if exact else f"> {val:.1f}x"
                lines.append(
                    f"{core:<20} {tier:<9} {count:>15} {rtxt:>16}  {tr.detail}"
                )
        return "\n".join(lines) + "\n"


def _write_csv(path, header: str, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(str(x) for x in row) + "\n")


def _write_curve(path, curve: GECurve) -> None:
    _write_csv(
        path, "traces,ge",
        ((int(t), f"{g:.6f}") for t, g in zip(curve.grid, curve.ge)),
    )


def _best_curve(candidates: list[tuple[GECurve, str]]) -> TierResult | None:
    """Attacker-optimal pick: earliest sustained break, then lowest end GE."""
    best = None
    for curve, detail in candidates:
        ttb = curve.traces_to_break()
        key = (ttb if ttb is not None else np.inf, curve.ge[-1])
        if best is None or key < best[0]:
            best = (key, curve, detail)
    if best is None:
        return None
    _, curve, detail = best
    return TierResult("", curve, curve.traces_to_break(), detail)


def evaluate_core(
    plan: ExperimentPlan, core: str, progress=None
) -> CoreSecurityResult:
    """Collect trace sets for one core and run every requested tier."""

    def say(msg):
        if progress is not None:
            progress(f"[{core}] {msg}")

    true_byte = plan.attack_key[plan.target_byte]
    grid = trace_count_grid(plan.subset_size)
    result = CoreSecurityResult(core)

    say(f"collecting {plan.n_attack_traces} attack traces")
    attack = collect_traces(
        core, KIND_ATTACK, plan.n_attack_traces, plan.attack_seed,
        key=plan.attack_key, processes=plan.processes, engine=plan.engine,
    )
    profiling: TraceSet | None = None
    if "advanced" in plan.evaluations:
        say(f"collecting {plan.n_profiling_traces} profiling traces")
        profiling = collect_traces(
            core, KIND_PROFILING, plan.n_profiling_traces,
            plan.profiling_seed, processes=plan.processes,
            engine=plan.engine,
        )

    out = plan.output_dir
    if "basic" in plan.evaluations:
        say("basic: correlation attack")
        curve = ge_curve_cpa(
            attack.traces, attack.plaintexts, true_byte,
            byte_idx=plan.target_byte, grid=grid, n_subsets=plan.n_subsets,
        )
        result.tiers["basic"] = TierResult(
            "basic", curve, curve.traces_to_break()
        )
        _write_curve(os.path.join(out, f"{core}-basic-ge.csv"), curve)

    if "educated" in plan.evaluations:
        candidates = []
        for w in WINDOW_WIDTHS:
            say(f"educated: integration window {w}")
            curve = ge_curve_cpa(
                attack.traces, attack.plaintexts, true_byte,
                byte_idx=plan.target_byte, grid=grid,
                n_subsets=plan.n_subsets, window_width=w,
            )
            candidates.append((curve, f"window={w}"))
        tier = _best_curve(candidates)
        tier.tier = "educated"
        result.tiers["educated"] = tier
        _write_curve(os.path.join(out, f"{core}-educated-ge.csv"), tier.curve)

    if "advanced" in plan.evaluations:
        threshold = poi_threshold_for(plan.n_profiling_traces)
        candidates = []
        for w in (1,) + WINDOW_WIDTHS:
            say(f"advanced: profiled templates on window-{w} features")
            if w == 1:
                prof_t, att_t = profiling.traces, attack.traces
            else:
                prof_t = integrate_windows(profiling.traces, w)
                att_t = integrate_windows(attack.traces, w)
            corr = known_key_correlation(
                prof_t, profiling.plaintexts, profiling.keys,
                plan.target_byte,
            )
            poi = select_poi(corr, threshold=threshold)
            if w == 1:
                # raw-sample POI profile is the leakage diagnostic
                _write_csv(
                    os.path.join(out, f"{core}-advanced-poi.csv"),
                    "sample_index,correlation",
                    ((int(i), f"{corr[i]:.6f}") for i in range(corr.size)),
                )
            shift = None
            for k in COMPONENT_SWEEP:
                model = fit_template_model(
                    prof_t, profiling.plaintexts, profiling.keys,
                    byte_idx=plan.target_byte, n_components=k, poi=poi,
                )
                if shift is None:
                    shift = model.estimate_shift(att_t)
                curve = ge_curve_template(
                    model, att_t, attack.plaintexts, true_byte,
                    grid=grid, n_subsets=plan.n_subsets, shift=shift,
                )
                detail = (
                    f"window={w}, components={model.pca.n_components}, "
                    f"shift={shift}"
                )
                candidates.append((curve, detail))
                if model.pca.rank_deficient:
                    break  # larger sweeps cannot add directions
        tier = _best_curve(candidates)
        tier.tier = "advanced"
        result.tiers["advanced"] = tier
        _write_curve(os.path.join(out, f"{core}-advanced-ge.csv"), tier.curve)

    return result


def run_security_pipeline(
    plan: ExperimentPlan, progress=None
) -> SecuritySummary:
    """Run every requested tier on every core in the plan.

    A failure in one core's evaluation is recorded on that core and the
    pipeline moves on; the summary's table marks the failed core.
    """
    os.makedirs(plan.output_dir, exist_ok=True)
    results: dict[str, CoreSecurityResult] = {}
    for core in plan.cores:
        try:
            results[core] = evaluate_core(plan, core, progress)
        except Exception as exc:  # noqa: BLE001 - per-core isolation
            results[core] = CoreSecurityResult(core, error=f"{type(exc).__name__}: {exc}")
    summary = SecuritySummary(plan, results)
    table = summary.table()
    with open(
        os.path.join(plan.output_dir, "summary.txt"),
        "w", encoding="utf-8", newline="\n",
    ) as fh:
        fh.write(table)
    rows = []
    for core in plan.cores:
        res = results[core]
        if res.error is not None:
            rows.append((core, "error", "", "", res.error))
            continue
        for tier in plan.evaluations:
            tr = res.tiers.get(tier)
            if tr is None:
                continue
            count = tr.traces_to_break if tr.broken else f"> {plan.n_attack_traces}"
            ratio = summary.ratio_vs_baseline(core, tier)
            if core == "ooo-baseline" or ratio is None:
                rtxt = ""
            else:
                val, exact = ratio
                rtxt = f"{val:.4f}" if exact else f"> {val:.4f}"
            rows.append((core, tier, count, rtxt, tr.detail))
    _write_csv(
        os.path.join(plan.output_dir, "summary.csv"),
        "core,tier,traces_to_break,ratio_vs_ooo_baseline,detail",
        rows,
    )
    return summary


# ---------------------------------------------------------------------------
# performance pipeline
# ---------------------------------------------------------------------------


@dataclass
class PerfResult:
    """Mean IPC of one core over a sequence of encryptions."""

    core: str
    ipc: float
    normalized: float | None  # vs ooo-baseline, None if baseline absent
    unstable_until: int | None  # encryptions until injections all stable


def run_perf_pipeline(
    cores: tuple[str, ...],
    n_plaintexts: int = 2_000,
    seed: int = 0x5EED_0001,
    key: bytes = DEFAULT_ATTACK_KEY,
    engine: str | None = None,
    progress=None,
) -> list[PerfResult]:
    """Mean full-encryption IPC per core, normalized to ooo-baseline.

    Encryptions run back to back with persistent scheduler tables and
    cache (the deployment posture), every core seeing the same derived
    plaintext sequence.  For slack-scheduled cores the result also
    reports how many encryptions still contained unstable-phase (verbatim
    slack) injections: the learning horizon.
    """
    if n_plaintexts < 1:
        raise ValueError("n_plaintexts must be >= 1")
    program = aes.load_program()
    results: list[PerfResult] = []
    for core in cores:
        if progress is not None:
            progress(f"[{core}] {n_plaintexts} encryptions")
        sim = Simulator(program, get_core(core), engine=engine)
        tables = (
            SlackTables(sim.mode.slack_config)
            if sim.mode.kind == "slack"
            else None
        )
        cache = sim.new_cache_state()
        total_retired = 0
        total_cycles = 0
        unstable_until = 0
        for i in range(n_plaintexts):
            pt = Prng(derive_seed(seed, i)).bytes(16)
            rec = sim.run(
                seed=derive_seed(seed, 2 * n_plaintexts + i),
                mem={
                    program.symbols["plaintext"]: pt,
                    program.symbols["key"]: key,
                },
                slack_tables=tables,
                cache_state=cache,
                record="samples",
            )
            total_retired += rec.n_retired
            total_cycles += rec.end_cycle
            if rec.n_unstable_injections > 0:
                unstable_until = i + 1
        ipc = total_retired / total_cycles
        results.append(
            PerfResult(
                core, ipc, None,
                unstable_until if tables is not None else None,
            )
        )
    base = next((r for r in results if r.core == "ooo-baseline"), None)
    if base is not None:
        for r in results:
            r.normalized = r.ipc / base.ipc
    return results


def perf_table(results: list[PerfResult], n_plaintexts: int) -> str:
    """Align perf results into the report table."""
    lines = [
        f"performance: mean IPC over {n_plaintexts} AES-128 encryptions",
        f"{'core':<20} {'IPC':>8} {'vs ooo-baseline':>16}  learning horizon",
    ]
    for r in results:
        norm = f"{r.normalized:.4f}" if r.normalized is not None else "—"
        if r.unstable_until is None:
            horizon = "—"
        elif r.unstable_until >= n_plaintexts:
            horizon = f"not reached in {n_plaintexts}"
        else:
            horizon = f"{r.unstable_until} encryptions"
        lines.append(f"{r.core:<20} {r.ipc:>8.4f} {norm:>16}  {horizon}")
    return "\n".join(lines) + "\n"
