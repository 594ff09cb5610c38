# cython: language_level=3, boundscheck=False, wraparound=False
# cython: cdivision=True, initializedcheck=False
"""Compiled cycle-level kernel: the fast twin of ``engine_python``.

This module re-implements ``engine_python.run_kernel`` (and the slack-table
protocol from ``slack_unit`` plus the LFSR stream from ``prng``) in C via
Cython.  The two kernels must stay bit-identical for any program,
configuration and seed; keep them in sync when touching either.  All state
lives in caller-provided numpy buffers (see ``simulate.Simulator``): the
dynamic-instruction columns, the power-sample buffer, the cache tags (read
and updated in place) and the slack tables (mutated in place).

Scalar results land in ``o_scalars``:
``[n_dyn, end_cycle, truncated, n_injections, n_unstable, retired,
final_cycle, samples_high_water]``.
"""

from libc.stdint cimport (
    INT64_MAX,
    int32_t,
    int64_t,
    uint8_t,
    uint32_t,
    uint64_t,
)
from libc.stdlib cimport free, malloc

cdef extern from *:
    int __builtin_popcountll(unsigned long long) nogil

ENGINE_NAME = "cython"

# Mirrors of the opcode numbering and property tables (isa.py / encode.py).
cdef enum:
    OP_ADD = 0
    OP_SUB = 1
    OP_XOR = 2
    OP_AND = 3
    OP_OR = 4
    OP_SLL = 5
    OP_SRL = 6
    OP_ADDI = 7
    OP_XORI = 8
    OP_ANDI = 9
    OP_ORI = 10
    OP_LUI = 11
    OP_LBU = 12
    OP_LW = 13
    OP_SB = 14
    OP_SW = 15
    OP_BEQ = 16
    OP_BNE = 17
    OP_JAL = 18
    OP_HALT = 19

cdef int[20] T_READS1 = [1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 1, 1, 1, 1, 1, 1, 0, 0]
cdef int[20] T_READS2 = [1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 0, 0]
cdef int[20] T_WRITES = [1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 1, 0]
cdef int[20] T_IS_LOAD = [0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 0, 0, 0, 0, 0, 0]
cdef int[20] T_IS_STORE = [0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 0, 0, 0, 0]
cdef int[20] T_IS_BRANCH = [0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 0]
cdef int[20] T_UNIT = [0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 0, 0, 0, 0]

cdef enum:
    MODE_IN_ORDER = 0
    MODE_OUT_OF_ORDER = 1
    MODE_RANDOM = 2
    MODE_SLACK = 3

cdef enum:
    STATUS_OK = 0
    STATUS_STEP_LIMIT = 1
    STATUS_CYCLE_LIMIT = 2
    STATUS_UNMAPPED = 3
    STATUS_BAD_PC = 4
    STATUS_UNALIGNED = 5

cdef enum:
    FLAG_NCT_HIT = 1
    FLAG_NCT_STABLE = 2

cdef int64_t MASK32 = 0xFFFFFFFF
cdef int64_t INF = (<int64_t>1) << 62
cdef uint64_t LFSR_TAPS = <uint64_t>0xD800000000000000
cdef uint64_t ZERO_SEED_SUBSTITUTE = <uint64_t>0x9E3779B97F4A7C15


# ---------------------------------------------------------------------------
# PRNG: 64-bit Galois LFSR; one draw = 64 single-bit steps (prng.py twin).
# ---------------------------------------------------------------------------

cdef inline uint64_t prng_next(uint64_t *st) nogil:
    cdef uint64_t s = st[0]
    cdef int k
    for k in range(64):
        if s & 1:
            s = (s >> 1) ^ LFSR_TAPS
        else:
            s = s >> 1
    st[0] = s
    return s


cdef inline int64_t prng_uniform(uint64_t *st, int64_t bound) nogil:
    # Draw from [0, bound]; bound 0 consumes no draw.  Rejection sampling
    # against the smallest covering power-of-two mask.
    cdef uint64_t m, v
    if bound <= 0:
        return 0
    m = <uint64_t>bound
    m |= m >> 1
    m |= m >> 2
    m |= m >> 4
    m |= m >> 8
    m |= m >> 16
    m |= m >> 32
    while True:
        v = prng_next(st) & m
        if v <= <uint64_t>bound:
            return <int64_t>v


# ---------------------------------------------------------------------------
# Slack tables (slack_unit.py twin), operating on the caller's arrays.
# ---------------------------------------------------------------------------

ctypedef struct SlackT:
    int64_t *dt_tag
    int64_t *dt_stamp
    int32_t *dt_off
    int64_t *dt_ctr
    int64_t *nct_tag
    int64_t *nct_stamp
    int32_t *nct_slack
    uint8_t *nct_stable
    int64_t *nct_ctr
    int64_t *ct_tag
    int64_t *ct_stamp
    int64_t *ct_ctr
    int64_t sets
    int64_t ways
    int64_t slack_max
    int64_t off_min
    int64_t off_max


cdef inline int64_t s_index(SlackT *t, int64_t pc) nogil:
    return (pc >> 2) % t.sets


cdef inline int64_t t_find(int64_t *tag, int64_t s, int64_t ways, int64_t pc) nogil:
    cdef int64_t w
    for w in range(ways):
        if tag[s * ways + w] == pc:
            return w
    return -1


cdef inline void t_touch(int64_t *stamp, int64_t *ctr, int64_t s, int64_t ways,
                         int64_t w) nogil:
    stamp[s * ways + w] = ctr[s]
    ctr[s] += 1


cdef inline int64_t t_victim(int64_t *tag, int64_t *stamp, int64_t s,
                             int64_t ways) nogil:
    # First empty way, else the least recently used (lowest stamp).
    cdef int64_t w, best = 0
    cdef int64_t best_stamp = INT64_MAX
    for w in range(ways):
        if tag[s * ways + w] == -1:
            return w
        if stamp[s * ways + w] < best_stamp:
            best = w
            best_stamp = stamp[s * ways + w]
    return best


cdef inline bint dt_lookup(SlackT *t, int64_t pc, int64_t *off_out) nogil:
    cdef int64_t s = s_index(t, pc)
    cdef int64_t w = t_find(t.dt_tag, s, t.ways, pc)
    if w < 0:
        return 0
    t_touch(t.dt_stamp, t.dt_ctr, s, t.ways, w)
    off_out[0] = t.dt_off[s * t.ways + w]
    return 1


cdef inline void dt_set(SlackT *t, int64_t pc, int64_t off) nogil:
    cdef int64_t s = s_index(t, pc)
    cdef int64_t w = t_find(t.dt_tag, s, t.ways, pc)
    if w < 0:
        w = t_victim(t.dt_tag, t.dt_stamp, s, t.ways)
        t.dt_tag[s * t.ways + w] = pc
    t.dt_off[s * t.ways + w] = <int32_t>off
    t_touch(t.dt_stamp, t.dt_ctr, s, t.ways, w)


cdef inline void dt_remove(SlackT *t, int64_t pc) nogil:
    cdef int64_t s = s_index(t, pc)
    cdef int64_t w = t_find(t.dt_tag, s, t.ways, pc)
    if w >= 0:
        t.dt_tag[s * t.ways + w] = -1


cdef inline void nct_insert(SlackT *t, int64_t pc, int64_t slack, int stable) nogil:
    cdef int64_t s = s_index(t, pc)
    cdef int64_t w = t_find(t.nct_tag, s, t.ways, pc)
    if w < 0:
        w = t_victim(t.nct_tag, t.nct_stamp, s, t.ways)
        t.nct_tag[s * t.ways + w] = pc
    if slack > t.slack_max:
        slack = t.slack_max
    t.nct_slack[s * t.ways + w] = <int32_t>slack
    t.nct_stable[s * t.ways + w] = 1 if stable else 0
    t_touch(t.nct_stamp, t.nct_ctr, s, t.ways, w)


cdef inline void nct_update(SlackT *t, int64_t pc, int64_t slack, int stable) nogil:
    # Rewrite payload of an existing entry (and promote it).
    cdef int64_t s = s_index(t, pc)
    cdef int64_t w = t_find(t.nct_tag, s, t.ways, pc)
    if w < 0:
        return  # callers only update entries they just found
    if slack > t.slack_max:
        slack = t.slack_max
    t.nct_slack[s * t.ways + w] = <int32_t>slack
    t.nct_stable[s * t.ways + w] = 1 if stable else 0
    t_touch(t.nct_stamp, t.nct_ctr, s, t.ways, w)


cdef inline void nct_remove(SlackT *t, int64_t pc) nogil:
    cdef int64_t s = s_index(t, pc)
    cdef int64_t w = t_find(t.nct_tag, s, t.ways, pc)
    if w >= 0:
        t.nct_tag[s * t.ways + w] = -1


cdef inline bint ct_contains(SlackT *t, int64_t pc) nogil:
    # Promotes on hit.
    cdef int64_t s = s_index(t, pc)
    cdef int64_t w = t_find(t.ct_tag, s, t.ways, pc)
    if w < 0:
        return 0
    t_touch(t.ct_stamp, t.ct_ctr, s, t.ways, w)
    return 1


cdef inline void ct_insert(SlackT *t, int64_t pc) nogil:
    # Criticality supersedes: evicts any NCT entry for the same pc.
    cdef int64_t s, w
    nct_remove(t, pc)
    s = s_index(t, pc)
    w = t_find(t.ct_tag, s, t.ways, pc)
    if w < 0:
        w = t_victim(t.ct_tag, t.ct_stamp, s, t.ways)
        t.ct_tag[s * t.ways + w] = pc
    t_touch(t.ct_stamp, t.ct_ctr, s, t.ways, w)


cdef inline int64_t sl_on_dispatch(SlackT *t, int64_t pc, uint64_t *st,
                                   int *hit, int *stable) nogil:
    # NCT query at dispatch: unstable entries inject their slack verbatim,
    # stable entries draw uniformly from [0, slack].
    cdef int64_t s = s_index(t, pc)
    cdef int64_t w = t_find(t.nct_tag, s, t.ways, pc)
    cdef int64_t slack
    if w < 0:
        hit[0] = 0
        stable[0] = 0
        return 0
    t_touch(t.nct_stamp, t.nct_ctr, s, t.ways, w)
    slack = t.nct_slack[s * t.ways + w]
    hit[0] = 1
    if t.nct_stable[s * t.ways + w]:
        stable[0] = 1
        return prng_uniform(st, slack)
    stable[0] = 0
    return slack


cdef inline void sl_update_after_injection(SlackT *t, int64_t pc,
                                           int64_t overshoot) nogil:
    # Contract the stored slack of an injected producer by its overshoot.
    cdef int64_t s = s_index(t, pc)
    cdef int64_t w = t_find(t.nct_tag, s, t.ways, pc)
    cdef int64_t slack, remaining
    cdef int stable
    if w < 0:
        return  # evicted since dispatch: nothing to update
    t_touch(t.nct_stamp, t.nct_ctr, s, t.ways, w)
    slack = t.nct_slack[s * t.ways + w]
    stable = t.nct_stable[s * t.ways + w]
    if overshoot == 0:
        if not stable:
            nct_update(t, pc, slack, 1)
        return
    if stable:
        # a supposedly safe delay overshot: the producer turned critical
        ct_insert(t, pc)
        return
    remaining = slack - overshoot
    if remaining <= 0:
        ct_insert(t, pc)
    else:
        nct_update(t, pc, remaining, 0)


cdef inline void sl_observe_pair(SlackT *t, int64_t cpc, int64_t p0pc,
                                 int64_t t0, int64_t p1pc, int64_t t1) nogil:
    # Fresh classification: later producer critical, earlier non-critical
    # with slack = completion gap; ties mark both critical, no pair record.
    cdef int64_t nc, crit, gap, slack, s, w, off, old_slack
    cdef int old_stable
    if t0 == t1:
        ct_insert(t, p0pc)
        if p1pc != p0pc:
            ct_insert(t, p1pc)
        dt_remove(t, cpc)
        return
    if t0 < t1:
        nc = p0pc
        crit = p1pc
        gap = t1 - t0
    else:
        nc = p1pc
        crit = p0pc
        gap = t0 - t1
    ct_insert(t, crit)
    if ct_contains(t, nc):
        # criticality conflict: registered critical elsewhere, never delay
        dt_remove(t, cpc)
        return
    slack = gap if gap < t.slack_max else t.slack_max
    s = s_index(t, nc)
    w = t_find(t.nct_tag, s, t.ways, nc)
    if w >= 0:
        # re-observation: promote, then min-merge (update promotes again)
        t_touch(t.nct_stamp, t.nct_ctr, s, t.ways, w)
        old_slack = t.nct_slack[s * t.ways + w]
        old_stable = t.nct_stable[s * t.ways + w]
        nct_update(t, nc, old_slack if old_slack < slack else slack, old_stable)
    else:
        nct_insert(t, nc, slack, 0)
    off = (nc - cpc) >> 2
    if t.off_min <= off <= t.off_max:
        dt_set(t, cpc, off)
    else:
        # offset not representable: the pair cannot be tracked
        dt_remove(t, cpc)


cdef inline void sl_on_issue(SlackT *t, int64_t cpc, int64_t p0pc, int64_t t0,
                             int inj0, int64_t p1pc, int64_t t1, int inj1) nogil:
    # Criticality bookkeeping when a two-producer consumer issues.
    cdef int64_t off = 0, rec, t_rec, t_oth, oth_pc, ov
    cdef int side, injected
    if dt_lookup(t, cpc, &off):
        rec = cpc + 4 * off
        side = -1
        if p0pc == rec and (inj0 or p1pc != rec):
            side = 0
        elif p1pc == rec:
            side = 1
        if side >= 0:
            injected = inj0 if side == 0 else inj1
            if injected:
                t_rec = t0 if side == 0 else t1
                t_oth = t1 if side == 0 else t0
                oth_pc = p1pc if side == 0 else p0pc
                ov = t_rec - t_oth
                if ov < 0:
                    ov = 0
                sl_update_after_injection(t, rec, ov)
                if t_oth >= t_rec and oth_pc != rec:
                    # the other producer paced the pair: keep it critical
                    ct_insert(t, oth_pc)
                return
    sl_observe_pair(t, cpc, p0pc, t0, p1pc, t1)


# ---------------------------------------------------------------------------
# Main kernel (engine_python.run_kernel twin).
# ---------------------------------------------------------------------------

def run_kernel(
    int32_t[::1] opc not None,
    int32_t[::1] o_rd not None,
    int32_t[::1] o_rs1 not None,
    int32_t[::1] o_rs2 not None,
    int64_t[::1] o_imm not None,
    int64_t entry,
    int64_t n_static,
    uint8_t[::1] mem not None,
    uint8_t[::1] mapped not None,
    uint32_t[::1] init_regs not None,
    int64_t[::1] cfg not None,
    uint64_t seed,
    uint64_t rand_thresh,
    int64_t[:, ::1] dt_tag not None,
    int64_t[:, ::1] dt_stamp not None,
    int32_t[:, ::1] dt_off not None,
    int64_t[::1] dt_ctr not None,
    int64_t[:, ::1] nct_tag not None,
    int64_t[:, ::1] nct_stamp not None,
    int32_t[:, ::1] nct_slack not None,
    uint8_t[:, ::1] nct_stable not None,
    int64_t[::1] nct_ctr not None,
    int64_t[:, ::1] ct_tag not None,
    int64_t[:, ::1] ct_stamp not None,
    int64_t[::1] ct_ctr not None,
    int64_t[::1] d_sidx not None,
    int64_t[::1] d_dispatch not None,
    int64_t[::1] d_issue not None,
    int64_t[::1] d_complete not None,
    int64_t[::1] d_extra not None,
    int64_t[::1] d_wb not None,
    int64_t[::1] d_dst not None,
    int64_t[::1] d_p0 not None,
    int64_t[::1] d_p1 not None,
    int64_t[::1] d_t0 not None,
    int64_t[::1] d_t1 not None,
    int64_t[::1] d_addr not None,
    int64_t[::1] d_flags not None,
    int64_t[::1] samples not None,
    int64_t[::1] cache_tag not None,
    int64_t[::1] o_scalars not None,
):
    """Run one simulation; returns the status code.

    Results land in the caller's buffers; ``o_scalars`` receives the run
    summary (see module docstring).  ``cache_tag`` carries tags in and out,
    so persistent-cache sequences just reuse the array.
    """
    # -- configuration unpacking -------------------------------------------
    cdef int64_t rob = cfg[0]
    cdef int64_t fetch_buffer = cfg[1]
    cdef int64_t iq_entries = cfg[2]
    cdef int64_t mem_units = cfg[3]
    cdef int64_t alu_units = cfg[4]
    cdef int64_t fpu_units = cfg[5]
    cdef int64_t dispatch_width = cfg[6]
    cdef int64_t issue_width = cfg[7]
    cdef int64_t lat_alu = cfg[8]
    cdef int64_t lat_load_hit = cfg[9]
    cdef int64_t lat_load_miss = cfg[10]
    cdef int64_t lat_store = cfg[11]
    cdef int64_t lat_branch = cfg[12]
    cdef int64_t branch_penalty = cfg[13]
    cdef int64_t cache_lines = cfg[14]
    cdef int64_t cache_line_shift = cfg[15]
    cdef int64_t mode_kind = cfg[16]
    cdef int64_t rand_always = cfg[17]
    cdef int64_t rand_max_delay = cfg[18]
    cdef int64_t max_instr = cfg[24]
    cdef int64_t max_cycles = cfg[25]
    cdef int64_t stop_sidx = cfg[26]
    cdef int64_t mem_size = mem.shape[0]

    cdef SlackT slk
    slk.dt_tag = &dt_tag[0, 0]
    slk.dt_stamp = &dt_stamp[0, 0]
    slk.dt_off = &dt_off[0, 0]
    slk.dt_ctr = &dt_ctr[0]
    slk.nct_tag = &nct_tag[0, 0]
    slk.nct_stamp = &nct_stamp[0, 0]
    slk.nct_slack = &nct_slack[0, 0]
    slk.nct_stable = &nct_stable[0, 0]
    slk.nct_ctr = &nct_ctr[0]
    slk.ct_tag = &ct_tag[0, 0]
    slk.ct_stamp = &ct_stamp[0, 0]
    slk.ct_ctr = &ct_ctr[0]
    slk.sets = cfg[19]
    slk.ways = cfg[20]
    slk.slack_max = cfg[21]
    slk.off_min = cfg[22]
    slk.off_max = cfg[23]

    cdef uint64_t prng_state = seed
    if prng_state == 0:
        prng_state = ZERO_SEED_SUBSTITUTE

    cdef int64_t regs0[32]
    cdef int64_t reg_producer[32]
    cdef int64_t k
    for k in range(32):
        regs0[k] = <int64_t>init_regs[k]
        reg_producer[k] = -1

    # -- work arrays ---------------------------------------------------------
    cdef int64_t pend_cap = rob + 8
    cdef int64_t total = 3 * iq_entries + fetch_buffer + 2 * pend_cap + 2 * issue_width
    cdef int64_t *arena = <int64_t *>malloc(total * sizeof(int64_t))
    if arena == NULL:
        raise MemoryError("kernel work arrays")
    cdef int64_t *q0 = arena
    cdef int64_t *q1 = q0 + iq_entries
    cdef int64_t *q2 = q1 + iq_entries
    cdef int64_t *fring = q2 + iq_entries
    cdef int64_t *pstores = fring + fetch_buffer
    cdef int64_t *pmems = pstores + pend_cap
    cdef int64_t *is_q = pmems + pend_cap
    cdef int64_t *is_i = is_q + issue_width
    cdef int64_t *queues[3]
    queues[0] = q0
    queues[1] = q1
    queues[2] = q2
    cdef int64_t qlen[3]
    cdef int64_t unit_cap[3]
    cdef int64_t used[3]
    cdef int64_t ptrs[3]
    qlen[0] = qlen[1] = qlen[2] = 0
    unit_cap[0] = alu_units
    unit_cap[1] = mem_units
    unit_cap[2] = fpu_units

    cdef int64_t fhead = 0, fcnt = 0
    cdef int64_t ps_cnt = 0, pm_cnt = 0

    cdef int64_t fetch_pc = entry
    cdef bint fetch_stop = 0
    cdef bint branch_stall = 0
    cdef int64_t fetch_blocked_until = 0

    cdef bint halt_dispatched = 0
    cdef int64_t retire_ptr = 0
    cdef int64_t inorder_ptr = 0
    cdef int64_t n_dyn = 0
    cdef int64_t max_complete = -1
    cdef bint truncated = 0
    cdef int64_t n_injections = 0
    cdef int64_t n_unstable = 0
    cdef int64_t samples_top = 0

    cdef int status = STATUS_OK
    cdef int64_t cycle = 0

    cdef bint progress, is_halt, blocked, ok, taken
    cdef int64_t c, n_disp, j, i, qi, p0, p1, extra, flags, delay
    cdef int hit_f, stable_f
    cdef int64_t n_issued, best_q, best_i, t0, t1, ready
    cdef int64_t n_issued_now, w_c
    cdef int64_t a, b, imm, pc_i, latency, wb, addr, nbytes
    cdef int64_t line, slot, target, complete_c, nxt, c0, c1
    cdef int64_t op, n_fetch
    cdef int is_load, is_store

    try:
        while True:
            progress = 0

            # ---- retire --------------------------------------------------
            while retire_ptr < n_dyn and d_complete[retire_ptr] <= cycle:
                c = d_complete[retire_ptr]
                if c > max_complete:
                    max_complete = c
                if d_sidx[retire_ptr] == stop_sidx:
                    truncated = 1
                retire_ptr += 1
                progress = 1
                if truncated:
                    break
            if truncated:
                break
            if halt_dispatched and retire_ptr == n_dyn:
                break

            # ---- dispatch -------------------------------------------------
            n_disp = 0
            while (
                n_disp < dispatch_width
                and fcnt > 0
                and not halt_dispatched
                and n_dyn - retire_ptr < rob
            ):
                j = fring[fhead]
                op = opc[j]
                is_halt = op == OP_HALT
                if not is_halt and qlen[T_UNIT[op]] >= iq_entries:
                    break
                if n_dyn >= max_instr:
                    status = STATUS_STEP_LIMIT
                    break
                fhead += 1
                if fhead == fetch_buffer:
                    fhead = 0
                fcnt -= 1
                i = n_dyn
                n_dyn += 1
                n_disp += 1
                progress = 1

                p0 = -1
                p1 = -1
                if T_READS1[op] and o_rs1[j] != 0:
                    p0 = reg_producer[o_rs1[j]]
                if T_READS2[op] and o_rs2[j] != 0:
                    p1 = reg_producer[o_rs2[j]]

                extra = 0
                flags = 0
                if not is_halt:
                    if mode_kind == MODE_RANDOM:
                        if rand_always or prng_next(&prng_state) < rand_thresh:
                            extra = 1 + prng_uniform(&prng_state, rand_max_delay - 1)
                    elif mode_kind == MODE_SLACK:
                        pc_i = entry + 4 * j
                        delay = sl_on_dispatch(
                            &slk, pc_i, &prng_state, &hit_f, &stable_f
                        )
                        if hit_f:
                            extra = delay
                            flags |= FLAG_NCT_HIT
                            n_injections += 1
                            if stable_f:
                                flags |= FLAG_NCT_STABLE
                            else:
                                n_unstable += 1

                d_sidx[i] = j
                d_dispatch[i] = cycle
                d_issue[i] = -1
                d_complete[i] = INF
                d_extra[i] = extra
                d_wb[i] = 0
                d_dst[i] = -1
                d_p0[i] = p0
                d_p1[i] = p1
                d_t0[i] = -1
                d_t1[i] = -1
                d_addr[i] = -1
                d_flags[i] = flags

                if is_halt:
                    halt_dispatched = 1
                    d_issue[i] = cycle
                    d_complete[i] = cycle
                else:
                    if T_WRITES[op] and o_rd[j] != 0:
                        reg_producer[o_rd[j]] = i
                    qi = T_UNIT[op]
                    queues[qi][qlen[qi]] = i
                    qlen[qi] += 1
                    if T_IS_STORE[op]:
                        pstores[ps_cnt] = i
                        ps_cnt += 1
                    if T_IS_STORE[op] or T_IS_LOAD[op]:
                        pmems[pm_cnt] = i
                        pm_cnt += 1
            if status != STATUS_OK:
                break

            # ---- issue ----------------------------------------------------
            # prune completed memory fences
            w_c = 0
            for k in range(ps_cnt):
                if d_complete[pstores[k]] > cycle:
                    pstores[w_c] = pstores[k]
                    w_c += 1
            ps_cnt = w_c
            w_c = 0
            for k in range(pm_cnt):
                if d_complete[pmems[k]] > cycle:
                    pmems[w_c] = pmems[k]
                    w_c += 1
            pm_cnt = w_c

            used[0] = used[1] = used[2] = 0
            ptrs[0] = ptrs[1] = ptrs[2] = 0
            n_issued = 0
            n_issued_now = 0
            if mode_kind == MODE_IN_ORDER:
                while inorder_ptr < n_dyn and d_issue[inorder_ptr] >= 0:
                    inorder_ptr += 1
            while n_issued < issue_width:
                # find the oldest un-scanned entry across queues
                best_q = -1
                best_i = INF
                for qi in range(3):
                    if ptrs[qi] < qlen[qi] and queues[qi][ptrs[qi]] < best_i:
                        best_i = queues[qi][ptrs[qi]]
                        best_q = qi
                if best_q < 0:
                    break
                i = best_i
                ptrs[best_q] += 1
                if mode_kind == MODE_IN_ORDER and i != inorder_ptr:
                    break
                j = d_sidx[i]
                op = opc[j]
                if used[best_q] >= unit_cap[best_q]:
                    if mode_kind == MODE_IN_ORDER:
                        break
                    continue
                p0 = d_p0[i]
                p1 = d_p1[i]
                t0 = d_complete[p0] if p0 >= 0 else -1
                t1 = d_complete[p1] if p1 >= 0 else -1
                if (t0 != -1 and t0 > cycle) or (t1 != -1 and t1 > cycle):
                    # covers unissued producers too (their completion is INF)
                    if mode_kind == MODE_IN_ORDER:
                        break
                    continue
                ready = d_dispatch[i]
                if t0 > ready:
                    ready = t0
                if t1 > ready:
                    ready = t1
                if ready + d_extra[i] > cycle:
                    if mode_kind == MODE_IN_ORDER:
                        break
                    continue
                is_load = T_IS_LOAD[op]
                is_store = T_IS_STORE[op]
                if is_load:
                    blocked = 0
                    for k in range(ps_cnt):
                        if pstores[k] < i:
                            blocked = 1
                            break
                    if blocked:
                        if mode_kind == MODE_IN_ORDER:
                            break
                        continue
                elif is_store:
                    blocked = 0
                    for k in range(pm_cnt):
                        if pmems[k] < i and pmems[k] != i:
                            blocked = 1
                            break
                    if blocked:
                        if mode_kind == MODE_IN_ORDER:
                            break
                        continue

                # ---- execute ---------------------------------------------
                a = 0
                b = 0
                if T_READS1[op]:
                    a = d_wb[p0] if p0 >= 0 else regs0[o_rs1[j]]
                if T_READS2[op]:
                    b = d_wb[p1] if p1 >= 0 else regs0[o_rs2[j]]
                imm = o_imm[j]
                pc_i = entry + 4 * j
                latency = lat_alu
                wb = -1
                addr = -1

                if op == OP_ADD:
                    wb = (a + b) & MASK32
                elif op == OP_SUB:
                    wb = (a - b) & MASK32
                elif op == OP_XOR:
                    wb = a ^ b
                elif op == OP_AND:
                    wb = a & b
                elif op == OP_OR:
                    wb = a | b
                elif op == OP_SLL:
                    wb = (a << (b & 31)) & MASK32
                elif op == OP_SRL:
                    wb = a >> (b & 31)
                elif op == OP_ADDI:
                    wb = (a + imm) & MASK32
                elif op == OP_XORI:
                    wb = (a ^ imm) & MASK32
                elif op == OP_ANDI:
                    wb = a & (imm & MASK32)
                elif op == OP_ORI:
                    wb = (a | imm) & MASK32
                elif op == OP_LUI:
                    wb = (imm << 12) & MASK32
                elif is_load:
                    addr = (a + imm) & MASK32
                    if addr >= mem_size or (op == OP_LW and addr + 4 > mem_size):
                        status = STATUS_UNMAPPED
                        break
                    if op == OP_LW:
                        if addr % 4 != 0:
                            status = STATUS_UNALIGNED
                            break
                        if not (
                            mapped[addr]
                            and mapped[addr + 1]
                            and mapped[addr + 2]
                            and mapped[addr + 3]
                        ):
                            status = STATUS_UNMAPPED
                            break
                        wb = (
                            <int64_t>mem[addr]
                            | (<int64_t>mem[addr + 1] << 8)
                            | (<int64_t>mem[addr + 2] << 16)
                            | (<int64_t>mem[addr + 3] << 24)
                        )
                    else:
                        if not mapped[addr]:
                            status = STATUS_UNMAPPED
                            break
                        wb = <int64_t>mem[addr]
                    line = addr >> cache_line_shift
                    slot = line % cache_lines
                    if cache_tag[slot] == line:
                        latency = lat_load_hit
                    else:
                        latency = lat_load_miss
                        cache_tag[slot] = line
                elif is_store:
                    addr = (a + imm) & MASK32
                    nbytes = 4 if op == OP_SW else 1
                    if addr + nbytes > mem_size:
                        status = STATUS_UNMAPPED
                        break
                    if op == OP_SW and addr % 4 != 0:
                        status = STATUS_UNALIGNED
                        break
                    ok = 1
                    for k in range(nbytes):
                        if not mapped[addr + k]:
                            ok = 0
                            break
                    if not ok:
                        status = STATUS_UNMAPPED
                        break
                    for k in range(nbytes):
                        mem[addr + k] = <uint8_t>((b >> (8 * k)) & 0xFF)
                    latency = lat_store
                    line = addr >> cache_line_shift
                    cache_tag[line % cache_lines] = line
                elif op == OP_BEQ or op == OP_BNE or op == OP_JAL:
                    latency = lat_branch
                    if op == OP_JAL:
                        wb = (pc_i + 4) & MASK32
                        target = pc_i + imm
                    else:
                        taken = (a == b) if op == OP_BEQ else (a != b)
                        target = pc_i + imm if taken else pc_i + 4
                    complete_c = cycle + latency
                    branch_stall = 0
                    fetch_pc = target
                    fetch_blocked_until = complete_c + (
                        branch_penalty if target != pc_i + 4 else 0
                    )

                complete_c = cycle + latency
                if complete_c > samples_top:
                    samples_top = complete_c
                d_issue[i] = cycle
                d_complete[i] = complete_c
                d_t0[i] = t0
                d_t1[i] = t1
                d_addr[i] = addr
                if wb >= 0 and T_WRITES[op] and o_rd[j] != 0:
                    d_wb[i] = wb
                    d_dst[i] = o_rd[j]
                    samples[complete_c] += __builtin_popcountll(<uint64_t>wb)
                elif wb >= 0:
                    d_wb[i] = wb  # computed but architecturally discarded (x0)

                # slack bookkeeping: two-producer consumers classify the pair
                if mode_kind == MODE_SLACK and p0 >= 0 and p1 >= 0:
                    sl_on_issue(
                        &slk,
                        pc_i,
                        entry + 4 * d_sidx[p0],
                        t0,
                        1 if (d_flags[p0] & FLAG_NCT_HIT) else 0,
                        entry + 4 * d_sidx[p1],
                        t1,
                        1 if (d_flags[p1] & FLAG_NCT_HIT) else 0,
                    )

                is_q[n_issued_now] = best_q
                is_i[n_issued_now] = i
                n_issued_now += 1
                used[best_q] += 1
                n_issued += 1
                progress = 1
                if mode_kind == MODE_IN_ORDER:
                    inorder_ptr = i + 1
                    while inorder_ptr < n_dyn and d_issue[inorder_ptr] >= 0:
                        inorder_ptr += 1

            if status != STATUS_OK:
                break
            for k in range(n_issued_now):
                qi = is_q[k]
                # remove the issued entry, preserving queue order
                w_c = 0
                while queues[qi][w_c] != is_i[k]:
                    w_c += 1
                qlen[qi] -= 1
                while w_c < qlen[qi]:
                    queues[qi][w_c] = queues[qi][w_c + 1]
                    w_c += 1

            # ---- fetch -----------------------------------------------------
            n_fetch = 0
            while (
                n_fetch < dispatch_width
                and not fetch_stop
                and not branch_stall
                and cycle >= fetch_blocked_until
                and fcnt < fetch_buffer
            ):
                if fetch_pc % 4 != 0:
                    status = STATUS_UNALIGNED
                    break
                j = (fetch_pc - entry) >> 2
                if j < 0 or j >= n_static:
                    status = STATUS_BAD_PC
                    break
                slot = fhead + fcnt
                if slot >= fetch_buffer:
                    slot -= fetch_buffer
                fring[slot] = j
                fcnt += 1
                fetch_pc += 4
                n_fetch += 1
                progress = 1
                op = opc[j]
                if T_IS_BRANCH[op]:
                    branch_stall = 1
                elif op == OP_HALT:
                    fetch_stop = 1
            if status != STATUS_OK:
                break

            # ---- advance time ----------------------------------------------
            if cycle >= max_cycles:
                status = STATUS_CYCLE_LIMIT
                break
            if progress:
                cycle += 1
                continue
            # idle cycle: jump to the next event
            nxt = INF
            for qi in range(3):
                for k in range(qlen[qi]):
                    i = queues[qi][k]
                    c0 = d_complete[d_p0[i]] if d_p0[i] >= 0 else 0
                    c1 = d_complete[d_p1[i]] if d_p1[i] >= 0 else 0
                    if c0 == INF or c1 == INF:
                        continue
                    ready = d_dispatch[i]
                    if c0 > ready:
                        ready = c0
                    if c1 > ready:
                        ready = c1
                    ready += d_extra[i]
                    if ready < nxt:
                        nxt = ready
            for i in range(retire_ptr, n_dyn):
                if d_issue[i] >= 0 and d_complete[i] < nxt:
                    nxt = d_complete[i]
            if (
                not fetch_stop
                and not branch_stall
                and fcnt < fetch_buffer
                and fetch_blocked_until < nxt
                and fetch_blocked_until > cycle
            ):
                nxt = fetch_blocked_until
            if nxt <= cycle or nxt == INF:
                nxt = cycle + 1  # defensive: plain tick
            cycle = nxt if nxt < max_cycles else max_cycles
    finally:
        free(arena)

    # ---- epilogue ------------------------------------------------------
    for i in range(n_dyn):
        if d_complete[i] == INF:
            d_complete[i] = -1

    o_scalars[0] = n_dyn
    o_scalars[1] = max_complete if max_complete >= 0 else cycle
    o_scalars[2] = 1 if truncated else 0
    o_scalars[3] = n_injections
    o_scalars[4] = n_unstable
    o_scalars[5] = retire_ptr
    o_scalars[6] = cycle
    o_scalars[7] = samples_top + 1
    return status
