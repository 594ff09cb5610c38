"""Slack-directed delay tables: learned producer criticality and slack.

Three small set-associative tables, each 4-way x 16-set with true per-set
LRU replacement, indexed by ``(pc >> 2) % sets``:

* dependence table (DT): keyed by a consumer pc; remembers which producer
  was last seen as the non-critical one, as a signed 8-bit instruction
  offset from the consumer.
* non-critical table (NCT): keyed by a producer pc; holds the learned
  slack (saturating 8-bit) and a stable/unstable phase flag.
* critical table (CT): keyed by a producer pc; membership means the
  producer sits on a critical path and must never be delayed.

NCT and CT are mutually exclusive; criticality supersedes, so a pc
entering the CT evicts its NCT entry and a CT-resident pc is never given
an NCT entry.

Protocol.  When a two-producer consumer issues, the later-finishing
producer is critical and the earlier one non-critical with slack equal to
the completion gap.  A fresh pair observation records the critical pc in
the CT, the non-critical pc in the NCT (unstable), and the pair in the DT.
While an NCT entry is unstable, the producer's next occurrence is delayed
by the stored slack verbatim; the consumer's issue then measures the
overshoot (how much later than the other producer it finished) and
subtracts it from the stored slack.  An exact landing (overshoot zero)
marks the entry stable.  Stable entries inject a uniformly random delay in
[0, slack], which preserves the consumer's issue time by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SlackConfig:
    """Geometry of the slack tables."""

    ways: int = 4
    sets: int = 16
    pc_offset_bits: int = 8
    slack_bits: int = 8

    def __post_init__(self):
        if self.ways < 1 or self.sets < 1:
            raise ValueError("ways and sets must be >= 1")
        if self.pc_offset_bits != 8:
            raise ValueError("pc_offset_bits is fixed at 8")
        if self.slack_bits < 1:
            raise ValueError("slack_bits must be >= 1")

    @property
    def slack_max(self) -> int:
        return (1 << self.slack_bits) - 1

    @property
    def off_min(self) -> int:
        return -(1 << (self.pc_offset_bits - 1))

    @property
    def off_max(self) -> int:
        return (1 << (self.pc_offset_bits - 1)) - 1


class SlackTables:
    """Mutable table state.  All fields are plain numpy arrays so the
    compiled engine can operate on the same storage in place."""

    def __init__(self, config: SlackConfig | None = None):
        self.config = config or SlackConfig()
        s, w = self.config.sets, self.config.ways
        self.dt_tag = np.full((s, w), -1, dtype=np.int64)
        self.dt_stamp = np.zeros((s, w), dtype=np.int64)
        self.dt_off = np.zeros((s, w), dtype=np.int32)
        self.dt_ctr = np.zeros(s, dtype=np.int64)
        self.nct_tag = np.full((s, w), -1, dtype=np.int64)
        self.nct_stamp = np.zeros((s, w), dtype=np.int64)
        self.nct_slack = np.zeros((s, w), dtype=np.int32)
        self.nct_stable = np.zeros((s, w), dtype=np.uint8)
        self.nct_ctr = np.zeros(s, dtype=np.int64)
        self.ct_tag = np.full((s, w), -1, dtype=np.int64)
        self.ct_stamp = np.zeros((s, w), dtype=np.int64)
        self.ct_ctr = np.zeros(s, dtype=np.int64)

    _ARRAYS = (
        "dt_tag", "dt_stamp", "dt_off", "dt_ctr",
        "nct_tag", "nct_stamp", "nct_slack", "nct_stable", "nct_ctr",
        "ct_tag", "ct_stamp", "ct_ctr",
    )

    def clone(self) -> "SlackTables":
        other = SlackTables.__new__(SlackTables)
        other.config = self.config
        for name in self._ARRAYS:
            setattr(other, name, getattr(self, name).copy())
        return other

    def same_state(self, other: "SlackTables") -> bool:
        return self.config == other.config and all(
            np.array_equal(getattr(self, n), getattr(other, n)) for n in self._ARRAYS
        )

    def set_index(self, pc: int) -> int:
        return (pc >> 2) % self.config.sets

    # -- generic way management ----------------------------------------

    @staticmethod
    def _find(tag_arr, s: int, pc: int) -> int:
        row = tag_arr[s]
        for w in range(row.shape[0]):
            if row[w] == pc:
                return w
        return -1

    @staticmethod
    def _touch(stamp_arr, ctr_arr, s: int, w: int) -> None:
        stamp_arr[s, w] = ctr_arr[s]
        ctr_arr[s] += 1

    @staticmethod
    def _victim(tag_arr, stamp_arr, s: int) -> int:
        """First empty way, else the least recently used (lowest stamp)."""
        row = tag_arr[s]
        best, best_stamp = 0, None
        for w in range(row.shape[0]):
            if row[w] == -1:
                return w
            st = stamp_arr[s, w]
            if best_stamp is None or st < best_stamp:
                best, best_stamp = w, st
        return best

    # -- DT --------------------------------------------------------------

    def dt_lookup(self, pc: int) -> int | None:
        """Return the recorded producer offset for a consumer pc, or None.
        Hitting promotes the entry to MRU."""
        s = self.set_index(pc)
        w = self._find(self.dt_tag, s, pc)
        if w < 0:
            return None
        self._touch(self.dt_stamp, self.dt_ctr, s, w)
        return int(self.dt_off[s, w])

    def dt_set(self, pc: int, off: int) -> None:
        s = self.set_index(pc)
        w = self._find(self.dt_tag, s, pc)
        if w < 0:
            w = self._victim(self.dt_tag, self.dt_stamp, s)
            self.dt_tag[s, w] = pc
        self.dt_off[s, w] = off
        self._touch(self.dt_stamp, self.dt_ctr, s, w)

    def dt_remove(self, pc: int) -> None:
        s = self.set_index(pc)
        w = self._find(self.dt_tag, s, pc)
        if w >= 0:
            self.dt_tag[s, w] = -1

    # -- NCT -------------------------------------------------------------

    def nct_lookup(self, pc: int, promote: bool = True) -> tuple[int, bool] | None:
        """Return (slack, stable) for a producer pc, or None on miss."""
        s = self.set_index(pc)
        w = self._find(self.nct_tag, s, pc)
        if w < 0:
            return None
        if promote:
            self._touch(self.nct_stamp, self.nct_ctr, s, w)
        return int(self.nct_slack[s, w]), bool(self.nct_stable[s, w])

    def nct_insert(self, pc: int, slack: int, stable: bool = False) -> None:
        s = self.set_index(pc)
        w = self._find(self.nct_tag, s, pc)
        if w < 0:
            w = self._victim(self.nct_tag, self.nct_stamp, s)
            self.nct_tag[s, w] = pc
        self.nct_slack[s, w] = min(slack, self.config.slack_max)
        self.nct_stable[s, w] = 1 if stable else 0
        self._touch(self.nct_stamp, self.nct_ctr, s, w)

    def nct_update(self, pc: int, slack: int, stable: bool) -> None:
        """Rewrite payload of an existing entry (and promote it)."""
        s = self.set_index(pc)
        w = self._find(self.nct_tag, s, pc)
        if w < 0:
            raise KeyError(f"pc {pc:#x} not in NCT")
        self.nct_slack[s, w] = min(slack, self.config.slack_max)
        self.nct_stable[s, w] = 1 if stable else 0
        self._touch(self.nct_stamp, self.nct_ctr, s, w)

    def nct_remove(self, pc: int) -> None:
        s = self.set_index(pc)
        w = self._find(self.nct_tag, s, pc)
        if w >= 0:
            self.nct_tag[s, w] = -1

    # -- CT --------------------------------------------------------------

    def ct_contains(self, pc: int, promote: bool = True) -> bool:
        s = self.set_index(pc)
        w = self._find(self.ct_tag, s, pc)
        if w < 0:
            return False
        if promote:
            self._touch(self.ct_stamp, self.ct_ctr, s, w)
        return True

    def ct_insert(self, pc: int) -> None:
        """Record a producer as critical; evicts any NCT entry it holds."""
        self.nct_remove(pc)
        s = self.set_index(pc)
        w = self._find(self.ct_tag, s, pc)
        if w < 0:
            w = self._victim(self.ct_tag, self.ct_stamp, s)
            self.ct_tag[s, w] = pc
        self._touch(self.ct_stamp, self.ct_ctr, s, w)

    # -- integrity / debugging -------------------------------------------

    def check_invariants(self) -> None:
        """Raise AssertionError if NCT/CT overlap or payloads are out of range."""
        nct = {int(p) for p in self.nct_tag.ravel() if p >= 0}
        ct = {int(p) for p in self.ct_tag.ravel() if p >= 0}
        overlap = nct & ct
        assert not overlap, f"pcs in both NCT and CT: {sorted(hex(p) for p in overlap)}"
        live = self.nct_tag >= 0
        assert (self.nct_slack[live] >= 0).all(), "negative stored slack"
        assert (self.nct_slack[live] <= self.config.slack_max).all(), "slack above saturation"
        assert (self.dt_off[self.dt_tag >= 0] >= self.config.off_min).all()
        assert (self.dt_off[self.dt_tag >= 0] <= self.config.off_max).all()

    def dump(self) -> str:
        """Human-readable table state, MRU way first within each set."""
        lines = []

        def emit(name, tag, stamp, payload):
            lines.append(f"{name}:")
            for s in range(self.config.sets):
                entries = [
                    (int(stamp[s, w]), w)
                    for w in range(self.config.ways)
                    if tag[s, w] >= 0
                ]
                if not entries:
                    continue
                entries.sort(reverse=True)
                parts = []
                for _, w in entries:
                    parts.append(payload(s, w))
                lines.append(f"  set {s:2d}: " + " ".join(parts))

        emit(
            "DT", self.dt_tag, self.dt_stamp,
            lambda s, w: f"[pc={int(self.dt_tag[s, w]):#06x} off={int(self.dt_off[s, w]):+d}]",
        )
        emit(
            "NCT", self.nct_tag, self.nct_stamp,
            lambda s, w: (
                f"[pc={int(self.nct_tag[s, w]):#06x} slack={int(self.nct_slack[s, w])}"
                f"{' stable' if self.nct_stable[s, w] else ''}]"
            ),
        )
        emit(
            "CT", self.ct_tag, self.ct_stamp,
            lambda s, w: f"[pc={int(self.ct_tag[s, w]):#06x}]",
        )
        return "\n".join(lines) + "\n"


# -- scheduling-time operations (reference implementation) ----------------
#
# The compiled engine re-implements these on the same arrays; equivalence
# is asserted end-to-end by the engine tests.


def on_dispatch(tables: SlackTables, pc: int, uniform) -> tuple[int, bool, bool]:
    """NCT query at dispatch.  Returns (delay, hit, stable).

    Unstable entries inject their stored slack verbatim; stable entries
    draw uniformly from [0, slack] via ``uniform(bound)``.
    """
    e = tables.nct_lookup(pc)
    if e is None:
        return 0, False, False
    slack, stable = e
    if stable:
        return uniform(slack), True, True
    return slack, True, False


def update_after_injection(tables: SlackTables, pc: int, overshoot: int) -> None:
    """Contract the stored slack of an injected producer by its overshoot.

    Overshoot is how many cycles later than the pair's other producer the
    injected producer finished (0 if it did not finish later).  Zero
    overshoot confirms the slack and marks the entry stable.  A positive
    overshoot shrinks an unstable entry's slack; hitting zero (or
    overshooting a stable entry at all) reclassifies the producer as
    critical.
    """
    if overshoot < 0:
        raise ValueError("overshoot must be non-negative")
    e = tables.nct_lookup(pc)
    if e is None:
        return  # evicted since dispatch: nothing to update
    slack, stable = e
    if overshoot == 0:
        if not stable:
            tables.nct_update(pc, slack, True)
        return
    if stable:
        # a supposedly safe delay overshot: the producer turned critical
        tables.ct_insert(pc)
        return
    remaining = slack - overshoot
    if remaining <= 0:
        tables.ct_insert(pc)
    else:
        tables.nct_update(pc, remaining, False)


def observe_pair(
    tables: SlackTables,
    consumer_pc: int,
    p0_pc: int,
    t0: int,
    p1_pc: int,
    t1: int,
) -> None:
    """Fresh classification of a two-producer pair at consumer issue.

    The later-finishing producer is critical; the earlier one is
    non-critical with slack equal to the completion gap (saturated).  A
    tie marks both producers critical and leaves no pair record.
    """
    cfg = tables.config
    if t0 == t1:
        tables.ct_insert(p0_pc)
        if p1_pc != p0_pc:
            tables.ct_insert(p1_pc)
        tables.dt_remove(consumer_pc)
        return
    if t0 < t1:
        nc_pc, crit_pc, gap = p0_pc, p1_pc, t1 - t0
    else:
        nc_pc, crit_pc, gap = p1_pc, p0_pc, t0 - t1
    tables.ct_insert(crit_pc)
    if tables.ct_contains(nc_pc):
        # criticality conflict: the producer is registered critical
        # somewhere else, so it must not be delayed for this pair either.
        tables.dt_remove(consumer_pc)
        return
    slack = min(gap, cfg.slack_max)
    if tables.nct_lookup(nc_pc, promote=False) is not None:
        old_slack, old_stable = tables.nct_lookup(nc_pc)
        tables.nct_update(nc_pc, min(old_slack, slack), old_stable)
    else:
        tables.nct_insert(nc_pc, slack, stable=False)
    off = (nc_pc - consumer_pc) >> 2
    if cfg.off_min <= off <= cfg.off_max:
        tables.dt_set(consumer_pc, off)
    else:
        # offset not representable: the pair cannot be tracked
        tables.dt_remove(consumer_pc)


def on_issue(
    tables: SlackTables,
    consumer_pc: int,
    p0_pc: int,
    t0: int,
    injected0: bool,
    p1_pc: int,
    t1: int,
    injected1: bool,
) -> None:
    """Criticality bookkeeping when a two-producer consumer issues.

    ``tN`` are producer completion cycles; ``injectedN`` says whether that
    producer's dynamic instance received an NCT delay at dispatch.  A DT
    hit whose recorded producer was injected runs the slack-contraction
    update; anything else is treated as a fresh pair observation.
    """
    off = tables.dt_lookup(consumer_pc)
    if off is not None:
        rec_pc = consumer_pc + 4 * off
        side = -1
        if p0_pc == rec_pc and (injected0 or p1_pc != rec_pc):
            side = 0
        elif p1_pc == rec_pc:
            side = 1
        if side >= 0:
            injected = injected0 if side == 0 else injected1
            if injected:
                t_rec = t0 if side == 0 else t1
                t_oth = t1 if side == 0 else t0
                oth_pc = p1_pc if side == 0 else p0_pc
                update_after_injection(tables, rec_pc, max(0, t_rec - t_oth))
                if t_oth >= t_rec and oth_pc != rec_pc:
                    # the other producer paced the pair: keep it registered
                    # critical (refreshes recency, enforces exclusivity)
                    tables.ct_insert(oth_pc)
                return
    observe_pair(tables, consumer_pc, p0_pc, t0, p1_pc, t1)
