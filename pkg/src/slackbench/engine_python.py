"""Pure-Python cycle-level kernel (reference implementation).

The compiled kernel in ``_engine_cy`` mirrors this file step for step; both
must produce bit-identical results for any program, configuration and seed.
Keep the two in sync when touching either.

Model summary
-------------
Per cycle, in this order: retire (in order, completion <= now), dispatch
(in order from the fetch buffer into the per-class issue queues, bounded by
ROB/queue space and dispatch width), issue (oldest-first across queues,
bounded by unit counts and issue width), fetch (bounded by dispatch width
and the fetch buffer; stalls at branches until they resolve, plus a
redirect penalty on taken branches/jumps).

An instruction becomes issue-eligible at
``max(dispatch_cycle, producer completion times) + extra_delay`` where
extra_delay comes from the active scheduler mode.  Execution is magic-value
at issue: operand values are read from the producers' write-backs, memory
is read/written in place, and completion lands ``latency`` cycles later.
Loads wait for all older stores to complete; stores wait for all older
memory operations (conservative, deterministic memory ordering).  Branches
resolve at completion; fetch never follows a wrong path.

Register write-backs deposit the Hamming weight of the 32-bit value into
the power sample buffer at the completion cycle.
"""

from __future__ import annotations

import numpy as np

from . import slack_unit
from .encode import (
    EncodedProgram,
    FLAG_NCT_HIT,
    FLAG_NCT_STABLE,
    MODE_IN_ORDER,
    MODE_OUT_OF_ORDER,
    MODE_RANDOM,
    MODE_SLACK,
    OPC_IS_BRANCH,
    OPC_IS_LOAD,
    OPC_IS_STORE,
    OPC_READS1,
    OPC_READS2,
    OPC_UNIT,
    OPC_WRITES,
    SAMPLE_HEADROOM,
    STATUS_BAD_PC,
    STATUS_CYCLE_LIMIT,
    STATUS_OK,
    STATUS_STEP_LIMIT,
    STATUS_UNALIGNED,
    STATUS_UNMAPPED,
)
from .isa import Op
from .prng import Prng

MASK32 = 0xFFFFFFFF
INF = 1 << 62

ENGINE_NAME = "python"


def run_kernel(
    enc: EncodedProgram,
    *,
    init_regs,  # uint32[32]
    mem,  # uint8[MEM_SIZE], mutated in place
    rob: int,
    fetch_buffer: int,
    iq_entries: int,
    mem_units: int,
    alu_units: int,
    fpu_units: int,
    dispatch_width: int,
    issue_width: int,
    lat_alu: int,
    lat_load_hit: int,
    lat_load_miss: int,
    lat_store: int,
    lat_branch: int,
    branch_penalty: int,
    cache_lines: int,
    cache_line_shift: int,
    mode_kind: int,
    rand_thresh: int,  # u64 threshold; draws strictly below it delay
    rand_always: int,  # 1 => delay every instruction (no threshold draw)
    rand_max_delay: int,
    slack: slack_unit.SlackTables | None,
    seed: int,
    max_instr: int,
    max_cycles: int,
    stop_pc: int,  # -1 for none: otherwise truncate when it first retires
    cache_state=None,  # optional int64[cache_lines]: persists tags across runs
):
    """Run one simulation.  Returns a dict of result arrays and scalars."""
    opc = enc.opc
    o_rd = enc.rd
    o_rs1 = enc.rs1
    o_rs2 = enc.rs2
    o_imm = enc.imm
    n_static = enc.n
    entry = enc.entry
    mapped = enc.mapped
    mem_size = mem.shape[0]

    prng = Prng(seed)
    uniform = prng.uniform

    regs0 = [int(v) & MASK32 for v in init_regs]
    reg_producer = [-1] * 32

    # dynamic instruction records (python lists for speed)
    d_sidx: list[int] = []
    d_dispatch: list[int] = []
    d_issue: list[int] = []
    d_complete: list[int] = []
    d_extra: list[int] = []
    d_wb: list[int] = []
    d_dst: list[int] = []
    d_p0: list[int] = []
    d_p1: list[int] = []
    d_t0: list[int] = []
    d_t1: list[int] = []
    d_addr: list[int] = []
    d_flags: list[int] = []

    samples = [0] * (max_cycles + SAMPLE_HEADROOM)
    if cache_state is not None:
        cache_tag = [int(t) for t in cache_state]
        if len(cache_tag) != cache_lines:
            raise ValueError("cache_state length does not match cache_lines")
    else:
        cache_tag = [-1] * cache_lines

    queues: list[list[int]] = [[], [], []]  # ALU, MEM, FPU (unit-class order)
    unit_cap = (alu_units, mem_units, fpu_units)

    fetch_pc = entry
    fbuf: list[int] = []  # static indices, FIFO
    fetch_stop = False  # saw HALT
    branch_stall = False  # waiting on an unresolved branch/jump
    fetch_blocked_until = 0

    halt_dispatched = False
    retire_ptr = 0
    inorder_ptr = 0  # smallest seq not yet issued (in-order mode)
    n_dyn = 0
    max_complete = -1
    stop_sidx = -1 if stop_pc < 0 else (stop_pc - entry) >> 2
    truncated = False
    n_injections = 0
    n_unstable = 0

    # memory-ordering fences: dispatched stores / mem ops not yet complete
    pending_stores: list[int] = []
    pending_mems: list[int] = []

    status = STATUS_OK
    cycle = 0

    def producer_value(p: int, r: int) -> int:
        return d_wb[p] if p >= 0 else regs0[r]

    while True:
        progress = False

        # ---- retire ----------------------------------------------------
        while retire_ptr < n_dyn and d_complete[retire_ptr] <= cycle:
            c = d_complete[retire_ptr]
            if c > max_complete:
                max_complete = c
            if d_sidx[retire_ptr] == stop_sidx:
                truncated = True
            retire_ptr += 1
            progress = True
            if truncated:
                break
        if truncated:
            break
        if halt_dispatched and retire_ptr == n_dyn:
            break

        # ---- dispatch ---------------------------------------------------
        n_disp = 0
        while (
            n_disp < dispatch_width
            and fbuf
            and not halt_dispatched
            and n_dyn - retire_ptr < rob
        ):
            j = fbuf[0]
            op = opc[j]
            is_halt = op == Op.HALT
            if not is_halt and len(queues[int(OPC_UNIT[op])]) >= iq_entries:
                break
            if n_dyn >= max_instr:
                status = STATUS_STEP_LIMIT
                break
            fbuf.pop(0)
            i = n_dyn
            n_dyn += 1
            n_disp += 1
            progress = True

            p0 = p1 = -1
            if OPC_READS1[op] and o_rs1[j] != 0:
                p0 = reg_producer[o_rs1[j]]
            if OPC_READS2[op] and o_rs2[j] != 0:
                p1 = reg_producer[o_rs2[j]]

            extra = 0
            flags = 0
            if not is_halt:
                if mode_kind == MODE_RANDOM:
                    hit = rand_always or prng.next() < rand_thresh
                    if hit:
                        extra = 1 + uniform(rand_max_delay - 1)
                elif mode_kind == MODE_SLACK:
                    pc_i = entry + 4 * j
                    delay, hit, stable = slack_unit.on_dispatch(
                        slack, pc_i, uniform
                    )
                    if hit:
                        extra = delay
                        flags |= FLAG_NCT_HIT
                        n_injections += 1
                        if stable:
                            flags |= FLAG_NCT_STABLE
                        else:
                            n_unstable += 1

            d_sidx.append(j)
            d_dispatch.append(cycle)
            d_issue.append(-1)
            d_complete.append(INF)
            d_extra.append(extra)
            d_wb.append(0)
            d_dst.append(-1)
            d_p0.append(p0)
            d_p1.append(p1)
            d_t0.append(-1)
            d_t1.append(-1)
            d_addr.append(-1)
            d_flags.append(flags)

            if is_halt:
                halt_dispatched = True
                d_issue[i] = cycle
                d_complete[i] = cycle
            else:
                if OPC_WRITES[op] and o_rd[j] != 0:
                    reg_producer[o_rd[j]] = i
                queues[int(OPC_UNIT[op])].append(i)
                if OPC_IS_STORE[op]:
                    pending_stores.append(i)
                if OPC_IS_STORE[op] or OPC_IS_LOAD[op]:
                    pending_mems.append(i)
        if status != STATUS_OK:
            break

        # ---- issue -------------------------------------------------------
        # prune completed memory fences
        if pending_stores:
            pending_stores = [i for i in pending_stores if d_complete[i] > cycle]
        if pending_mems:
            pending_mems = [i for i in pending_mems if d_complete[i] > cycle]

        used = [0, 0, 0]
        n_issued = 0
        # merged oldest-first scan over the three queues
        ptrs = [0, 0, 0]
        issued_now: list[tuple[int, int]] = []  # (queue, index-in-queue)
        if mode_kind == MODE_IN_ORDER:
            while inorder_ptr < n_dyn and d_issue[inorder_ptr] >= 0:
                inorder_ptr += 1
        while n_issued < issue_width:
            # find the oldest un-scanned entry across queues
            best_q = -1
            best_i = INF
            for q in range(3):
                if ptrs[q] < len(queues[q]) and queues[q][ptrs[q]] < best_i:
                    best_i = queues[q][ptrs[q]]
                    best_q = q
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
            p0, p1 = d_p0[i], d_p1[i]
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
            is_load = OPC_IS_LOAD[op]
            is_store = OPC_IS_STORE[op]
            if is_load:
                blocked = any(s < i for s in pending_stores)
                if blocked:
                    if mode_kind == MODE_IN_ORDER:
                        break
                    continue
            elif is_store:
                blocked = any(m < i for m in pending_mems if m != i)
                if blocked:
                    if mode_kind == MODE_IN_ORDER:
                        break
                    continue

            # ---- execute -------------------------------------------------
            a = producer_value(p0, o_rs1[j]) if OPC_READS1[op] else 0
            b = producer_value(p1, o_rs2[j]) if OPC_READS2[op] else 0
            imm = int(o_imm[j])
            pc_i = entry + 4 * j
            latency = lat_alu
            wb = -1
            addr = -1

            if op == Op.ADD:
                wb = (a + b) & MASK32
            elif op == Op.SUB:
                wb = (a - b) & MASK32
            elif op == Op.XOR:
                wb = a ^ b
            elif op == Op.AND:
                wb = a & b
            elif op == Op.OR:
                wb = a | b
            elif op == Op.SLL:
                wb = (a << (b & 31)) & MASK32
            elif op == Op.SRL:
                wb = a >> (b & 31)
            elif op == Op.ADDI:
                wb = (a + imm) & MASK32
            elif op == Op.XORI:
                wb = (a ^ imm) & MASK32
            elif op == Op.ANDI:
                wb = a & (imm & MASK32)
            elif op == Op.ORI:
                wb = (a | imm) & MASK32
            elif op == Op.LUI:
                wb = (imm << 12) & MASK32
            elif is_load:
                addr = (a + imm) & MASK32
                if addr >= mem_size or (
                    op == Op.LW and addr + 4 > mem_size
                ):
                    status = STATUS_UNMAPPED
                    break
                if op == Op.LW:
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
                        int(mem[addr])
                        | (int(mem[addr + 1]) << 8)
                        | (int(mem[addr + 2]) << 16)
                        | (int(mem[addr + 3]) << 24)
                    )
                else:
                    if not mapped[addr]:
                        status = STATUS_UNMAPPED
                        break
                    wb = int(mem[addr])
                line = addr >> cache_line_shift
                slot = line % cache_lines
                if cache_tag[slot] == line:
                    latency = lat_load_hit
                else:
                    latency = lat_load_miss
                    cache_tag[slot] = line
            elif is_store:
                addr = (a + imm) & MASK32
                nbytes = 4 if op == Op.SW else 1
                if addr + nbytes > mem_size:
                    status = STATUS_UNMAPPED
                    break
                if op == Op.SW and addr % 4 != 0:
                    status = STATUS_UNALIGNED
                    break
                ok = True
                for k in range(nbytes):
                    if not mapped[addr + k]:
                        ok = False
                        break
                if not ok:
                    status = STATUS_UNMAPPED
                    break
                for k in range(nbytes):
                    mem[addr + k] = (b >> (8 * k)) & 0xFF
                latency = lat_store
                line = addr >> cache_line_shift
                cache_tag[line % cache_lines] = line
            elif op == Op.BEQ or op == Op.BNE or op == Op.JAL:
                latency = lat_branch
                if op == Op.JAL:
                    wb = (pc_i + 4) & MASK32
                    target = pc_i + imm
                else:
                    taken = (a == b) if op == Op.BEQ else (a != b)
                    target = pc_i + imm if taken else pc_i + 4
                complete_c = cycle + latency
                branch_stall = False
                fetch_pc = target
                fetch_blocked_until = complete_c + (
                    branch_penalty if target != pc_i + 4 else 0
                )

            complete_c = cycle + latency
            d_issue[i] = cycle
            d_complete[i] = complete_c
            d_t0[i] = t0
            d_t1[i] = t1
            d_addr[i] = addr
            if wb >= 0 and OPC_WRITES[op] and o_rd[j] != 0:
                d_wb[i] = wb
                d_dst[i] = int(o_rd[j])
                samples[complete_c] += bin(wb).count("1")
            elif wb >= 0:
                d_wb[i] = wb  # computed but architecturally discarded (x0)

            # slack bookkeeping: two-producer consumers classify their pair
            if (
                mode_kind == MODE_SLACK
                and p0 >= 0
                and p1 >= 0
            ):
                slack_unit.on_issue(
                    slack,
                    pc_i,
                    entry + 4 * d_sidx[p0],
                    t0,
                    bool(d_flags[p0] & FLAG_NCT_HIT),
                    entry + 4 * d_sidx[p1],
                    t1,
                    bool(d_flags[p1] & FLAG_NCT_HIT),
                )

            issued_now.append((best_q, i))
            used[best_q] += 1
            n_issued += 1
            progress = True
            if mode_kind == MODE_IN_ORDER:
                inorder_ptr = i + 1
                while inorder_ptr < n_dyn and d_issue[inorder_ptr] >= 0:
                    inorder_ptr += 1

        if status != STATUS_OK:
            break
        for q, i in issued_now:
            queues[q].remove(i)

        # ---- fetch -------------------------------------------------------
        n_fetch = 0
        while (
            n_fetch < dispatch_width
            and not fetch_stop
            and not branch_stall
            and cycle >= fetch_blocked_until
            and len(fbuf) < fetch_buffer
        ):
            if fetch_pc % 4 != 0:
                status = STATUS_UNALIGNED
                break
            j = (fetch_pc - entry) >> 2
            if j < 0 or j >= n_static:
                status = STATUS_BAD_PC
                break
            fbuf.append(j)
            fetch_pc += 4
            n_fetch += 1
            progress = True
            op = opc[j]
            if OPC_IS_BRANCH[op]:
                branch_stall = True
            elif op == Op.HALT:
                fetch_stop = True
        if status != STATUS_OK:
            break

        # ---- advance time -------------------------------------------------
        if cycle >= max_cycles:
            status = STATUS_CYCLE_LIMIT
            break
        if progress:
            cycle += 1
            continue
        # idle cycle: jump to the next event
        nxt = INF
        for q in range(3):
            for i in queues[q]:
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
            and len(fbuf) < fetch_buffer
            and fetch_blocked_until < nxt
            and fetch_blocked_until > cycle
        ):
            nxt = fetch_blocked_until
        if nxt <= cycle or nxt == INF:
            nxt = cycle + 1  # defensive: plain tick
        cycle = min(nxt, max_cycles)

    end_cycle = max_complete if max_complete >= 0 else cycle
    if cache_state is not None:
        cache_state[:] = cache_tag

    if truncated:
        # drop any accumulated power beyond the truncation point
        n_keep = end_cycle + 1
    else:
        n_keep = end_cycle + 1 if status == STATUS_OK else min(
            cycle + 1, len(samples)
        )

    return {
        "status": status,
        "n_dyn": n_dyn,
        "end_cycle": end_cycle,
        "truncated": truncated,
        "n_injections": n_injections,
        "n_unstable_injections": n_unstable,
        "sidx": np.array(d_sidx, dtype=np.int64),
        "dispatch": np.array(d_dispatch, dtype=np.int64),
        "issue": np.array(d_issue, dtype=np.int64),
        "complete": np.array(
            [c if c != INF else -1 for c in d_complete], dtype=np.int64
        ),
        "extra": np.array(d_extra, dtype=np.int64),
        "wb": np.array(d_wb, dtype=np.int64),
        "dst": np.array(d_dst, dtype=np.int64),
        "p0": np.array(d_p0, dtype=np.int64),
        "p1": np.array(d_p1, dtype=np.int64),
        "t0": np.array(d_t0, dtype=np.int64),
        "t1": np.array(d_t1, dtype=np.int64),
        "addr": np.array(d_addr, dtype=np.int64),
        "flags": np.array(d_flags, dtype=np.int64),
        "samples": np.array(samples[:n_keep], dtype=np.int64),
        "retired": retire_ptr,
    }
