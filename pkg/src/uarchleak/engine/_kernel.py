"""Pure-Python execution kernel.

This is the hot loop: it interprets compiled micro-op streams against a
machine, runs the transient-window shadow after a faulting micro-op, and
accounts simulated cycles. The Cython twin (_kernel_cy.pyx) mirrors this
file statement for statement; any semantic change here must be applied
there, and the backend differential tests enforce equality.

Semantics pinned down here:

 * Committed execution is sequential; each executed micro-op costs 1 cycle,
   memory micro-ops add the cache latency, and translation adds the
   machine's per-access translation cost.
 * A micro-op whose translation faults does not commit. Before the fault
   resolves, up to `window` subsequent micro-ops (in dynamic program order)
   enter the transient shadow. In baseline mode a protection-faulting load
   with a resolvable mapping forwards the loaded value to the shadow (zeroed
   with probability p_zero, redrawn per load execution); under the
   serialized-check mode, or when no physical address resolves (not-present,
   hard-split refusal), no value is forwarded and dependent micro-ops never
   execute.
 * Every transient load that obtains data fills its cache line exactly as a
   committed load would; transient stores live only in a store buffer that
   forwards to younger transient loads; transient flushes have no effect.
 * At resolution the shadow is discarded. Outside a transaction the fault is
   delivered (fault_cost cycles) and the run ends; inside one, architectural
   state rolls back to the TX_BEGIN snapshot, abort_cost is charged, no
   fault is delivered, and execution resumes after TX_END.
"""

from __future__ import annotations

MASK64 = (1 << 64) - 1

# Micro-op kind codes (keep in sync with _ops.py; the Cython twin re-declares
# them as C constants).
K_AGEN = 0
K_LOAD = 1
K_STORE = 2
K_MOV = 3
K_SHL = 4
K_ADD = 5
K_JZ = 6
K_JMP = 7
K_FLUSH = 8
K_TIMER = 9
K_TXB = 10
K_TXE = 11
K_RAISE = 12
K_HALT = 13

FK_TRAP = 3


def _read_bytes(mem_pages, phys_size, pa, width, sbuf):
    """Read `width` bytes at physical address pa, little-endian.

    Bytes past the end of physical memory read as zero; `sbuf` (the transient
    store buffer) overrides memory when present.
    """
    if width == 1 and sbuf is None:
        if pa >= phys_size:
            return 0
        page = mem_pages.get(pa >> 12)
        return page[pa & 4095] if page is not None else 0
    value = 0
    for k in range(width):
        a = pa + k
        b = -1
        if sbuf is not None:
            b = sbuf.get(a, -1)
        if b < 0:
            if a >= phys_size:
                b = 0
            else:
                page = mem_pages.get(a >> 12)
                b = page[a & 4095] if page is not None else 0
        value |= b << (8 * k)
    return value


def _transient_window(
    uops,
    start,
    budget,
    shadow,
    avail,
    tlb,
    tlb_fill,
    mem_pages,
    phys_size,
    cache,
    simple_cache,
    lines,
    line_shift,
    hit_lat,
    miss_lat,
    t_cost,
    serialized_check,
    p_zero,
    rng,
    transient_loads,
):
    """Run the shadow of a fault: up to `budget` micro-ops from `start`.

    `shadow`/`avail` carry the speculative register file and per-register
    value availability (a register written by a load that yielded no data is
    poisoned, and so is anything computed from it). Branches on a poisoned
    register end the stream: there is no prediction, the transient stream is
    linear. Returns the cycles consumed in the shadow.
    """
    cycles = 0
    sbuf = None
    latch = 0
    latch_ok = False
    j = start
    n = len(uops)
    while budget > 0 and j < n:
        budget -= 1
        op = uops[j]
        k = op[0]
        if k == K_AGEN:
            a = op[1]
            b = op[2]
            if avail[a] and (b < 0 or avail[b]):
                latch = shadow[a]
                if b >= 0:
                    latch = (latch + shadow[b]) & MASK64
                latch_ok = True
                cycles += 1
            else:
                latch_ok = False
            j += 1
            continue
        if k == K_LOAD:
            rd = op[1]
            if not latch_ok:
                avail[rd] = False
                j += 1
                continue
            vpn = latch >> 12
            e = tlb.get(vpn)
            if e is None:
                e = tlb[vpn] = tlb_fill(vpn)
            base = e[0]
            f = e[1]
            cycles += t_cost
            if f == 0 or (f == 2 and base >= 0 and not serialized_check):
                pa = base | (latch & 4095)
                if simple_cache:
                    line = pa >> line_shift
                    if line in lines:
                        lat = hit_lat
                    else:
                        lines.add(line)
                        lat = miss_lat
                else:
                    lat = cache.access(pa)
                cycles += 1 + lat
                transient_loads.append(pa)
                width = op[3]
                if f == 0:
                    value = _read_bytes(mem_pages, phys_size, pa, width, sbuf)
                elif p_zero > 0.0 and rng.random() < p_zero:
                    value = 0
                else:
                    value = _read_bytes(mem_pages, phys_size, pa, width, None)
                if width == 1:
                    shadow[rd] = (shadow[rd] & ~0xFF) | value
                else:
                    shadow[rd] = value
                avail[rd] = True
            else:
                avail[rd] = False
            j += 1
            continue
        if k == K_TIMER:
            rd = op[1]
            if latch_ok:
                vpn = latch >> 12
                e = tlb.get(vpn)
                if e is None:
                    e = tlb[vpn] = tlb_fill(vpn)
                base = e[0]
                f = e[1]
                cycles += t_cost
                if f == 0:
                    pa = base | (latch & 4095)
                    if simple_cache:
                        line = pa >> line_shift
                        if line in lines:
                            lat = hit_lat
                        else:
                            lines.add(line)
                            lat = miss_lat
                    else:
                        lat = cache.access(pa)
                    cycles += 1 + lat
                    shadow[rd] = lat
                    avail[rd] = True
                else:
                    avail[rd] = False
            else:
                avail[rd] = False
            j += 1
            continue
        if k == K_STORE:
            rs = op[1]
            if latch_ok and avail[rs]:
                vpn = latch >> 12
                e = tlb.get(vpn)
                if e is None:
                    e = tlb[vpn] = tlb_fill(vpn)
                cycles += t_cost
                if e[2] == 0:
                    base = e[0]
                    pa = base | (latch & 4095)
                    if sbuf is None:
                        sbuf = {}
                    value = shadow[rs]
                    for kk in range(8):
                        sbuf[pa + kk] = (value >> (8 * kk)) & 0xFF
                    cycles += 1
            j += 1
            continue
        if k == K_MOV:
            shadow[op[1]] = op[3]
            avail[op[1]] = True
            cycles += 1
            j += 1
            continue
        if k == K_SHL:
            rd = op[1]
            if avail[rd]:
                shadow[rd] = (shadow[rd] << op[3]) & MASK64
                cycles += 1
            j += 1
            continue
        if k == K_ADD:
            rd = op[1]
            rs = op[2]
            if avail[rd] and avail[rs]:
                shadow[rd] = (shadow[rd] + shadow[rs]) & MASK64
                cycles += 1
            else:
                avail[rd] = False
            j += 1
            continue
        if k == K_JZ:
            rs = op[1]
            if not avail[rs]:
                break
            cycles += 1
            if shadow[rs] == 0:
                j = op[3]
            else:
                j += 1
            continue
        if k == K_JMP:
            cycles += 1
            j = op[3]
            continue
        if k == K_HALT:
            cycles += 1
            break
        # TXB / TXE / RAISE / FLUSH: no transient effect.
        cycles += 1
        j += 1
    return cycles


def execute(machine, cp, window, p_zero, rng, serialized_check, fault_cost, abort_cost, max_uops):
    """Interpret a compiled micro-op stream on `machine`.

    Returns a raw result tuple:
      (fault_code, fault_index, fault_delivered, tx_state, cycles,
       mem_writes, transient_loads, timer_values, limit_hit)
    """
    uops = cp.uops
    regs = machine.regs
    tlb = machine._tlb
    tlb_fill = machine._tlb_fill
    mem_pages = machine.mem._pages
    phys_size = machine.mem.size
    cache = machine.cache
    simple_cache = cache.simple and cache.line_shift >= 0
    lines = cache.lines
    line_shift = cache.line_shift if cache.line_shift >= 0 else 0
    hit_lat = cache.cfg.hit_latency
    miss_lat = cache.cfg.miss_latency
    t_cost = machine.translate_cost

    n_uops = len(uops)
    cycles = 0
    executed = 0
    mem_writes: dict[int, int] = {}
    transient_loads: list[int] = []
    timer_values: list[int] = []
    tx_state = 0
    fault_code = 0
    fault_index = -1
    fault_delivered = False
    limit_hit = False

    tx_regs = None
    tx_writes = None
    tx_undo: list[tuple[int, int]] = []
    tx_timer_len = 0
    tx_resume = -1

    latch = 0
    i = 0
    while i < n_uops:
        executed += 1
        if executed > max_uops:
            limit_hit = True
            break
        op = uops[i]
        k = op[0]
        fault = 0

        if k == K_AGEN:
            a = op[1]
            b = op[2]
            latch = regs[a]
            if b >= 0:
                latch = (latch + regs[b]) & MASK64
            cycles += 1
            i += 1
            continue
        if k == K_MOV:
            regs[op[1]] = op[3]
            cycles += 1
            i += 1
            continue
        if k == K_SHL:
            rd = op[1]
            regs[rd] = (regs[rd] << op[3]) & MASK64
            cycles += 1
            i += 1
            continue
        if k == K_ADD:
            rd = op[1]
            regs[rd] = (regs[rd] + regs[op[2]]) & MASK64
            cycles += 1
            i += 1
            continue
        if k == K_JZ:
            cycles += 1
            if regs[op[1]] == 0:
                i = op[3]
            else:
                i += 1
            continue
        if k == K_JMP:
            cycles += 1
            i = op[3]
            continue
        if k == K_LOAD or k == K_TIMER:
            vpn = latch >> 12
            e = tlb.get(vpn)
            if e is None:
                e = tlb[vpn] = tlb_fill(vpn)
            base = e[0]
            fault = e[1]
            cycles += t_cost
            if fault == 0:
                pa = base | (latch & 4095)
                if simple_cache:
                    line = pa >> line_shift
                    if line in lines:
                        lat = hit_lat
                    else:
                        lines.add(line)
                        lat = miss_lat
                else:
                    lat = cache.access(pa)
                cycles += 1 + lat
                rd = op[1]
                if k == K_TIMER:
                    regs[rd] = lat
                    timer_values.append(lat)
                else:
                    width = op[3]
                    value = _read_bytes(mem_pages, phys_size, pa, width, None)
                    if width == 1:
                        regs[rd] = (regs[rd] & ~0xFF) | value
                    else:
                        regs[rd] = value
                i += 1
                continue
            # fall through to fault resolution
        elif k == K_STORE:
            vpn = latch >> 12
            e = tlb.get(vpn)
            if e is None:
                e = tlb[vpn] = tlb_fill(vpn)
            fault = e[2]
            cycles += t_cost
            if fault == 0:
                pa = e[0] | (latch & 4095)
                value = regs[op[1]]
                in_tx = tx_regs is not None
                for kk in range(8):
                    a = pa + kk
                    if a >= phys_size:
                        continue
                    ppn = a >> 12
                    page = mem_pages.get(ppn)
                    if page is None:
                        page = mem_pages[ppn] = bytearray(4096)
                    off = a & 4095
                    if in_tx:
                        tx_undo.append((a, page[off]))
                    byte = (value >> (8 * kk)) & 0xFF
                    page[off] = byte
                    mem_writes[a] = byte
                cycles += 1
                i += 1
                continue
        elif k == K_FLUSH:
            vpn = latch >> 12
            e = tlb.get(vpn)
            if e is None:
                e = tlb[vpn] = tlb_fill(vpn)
            fault = e[1]
            cycles += t_cost
            if fault == 0:
                pa = e[0] | (latch & 4095)
                if simple_cache:
                    lines.discard(pa >> line_shift)
                else:
                    cache.flush(pa)
                cycles += 1
                i += 1
                continue
        elif k == K_TXB:
            tx_regs = list(regs)
            tx_writes = dict(mem_writes)
            tx_undo = []
            tx_timer_len = len(timer_values)
            tx_resume = op[3]
            cycles += 1
            i += 1
            continue
        elif k == K_TXE:
            tx_regs = None
            tx_state = 1
            cycles += 1
            i += 1
            continue
        elif k == K_RAISE:
            fault = FK_TRAP
        elif k == K_HALT:
            cycles += 1
            break
        else:
            raise AssertionError(f"unknown uop kind {k}")

        # -- fault resolution ---------------------------------------------
        # The faulting micro-op issued; charge its slot.
        cycles += 1
        instr_idx = op[4]
        shadow = list(regs)
        avail = [True] * 8
        if k == K_LOAD:
            forwarded = False
            if fault == 2 and e[0] >= 0 and not serialized_check:
                # Baseline bug: the permission check resolves only at
                # retirement, so the data is fetched and forwarded.
                pa = e[0] | (latch & 4095)
                if simple_cache:
                    line = pa >> line_shift
                    if line in lines:
                        lat = hit_lat
                    else:
                        lines.add(line)
                        lat = miss_lat
                else:
                    lat = cache.access(pa)
                cycles += lat
                transient_loads.append(pa)
                width = op[3]
                if p_zero > 0.0 and rng.random() < p_zero:
                    value = 0
                else:
                    value = _read_bytes(mem_pages, phys_size, pa, width, None)
                if width == 1:
                    shadow[op[1]] = (shadow[op[1]] & ~0xFF) | value
                else:
                    shadow[op[1]] = value
                forwarded = True
            if not forwarded:
                avail[op[1]] = False
        elif k == K_TIMER:
            avail[op[1]] = False

        cycles += _transient_window(
            uops,
            i + 1,
            window,
            shadow,
            avail,
            tlb,
            tlb_fill,
            mem_pages,
            phys_size,
            cache,
            simple_cache,
            lines,
            line_shift,
            hit_lat,
            miss_lat,
            t_cost,
            serialized_check,
            p_zero,
            rng,
            transient_loads,
        )

        fault_code = fault
        fault_index = instr_idx
        if tx_regs is not None:
            # Abort: undo committed-in-transaction effects, resume after TX_END.
            for a, old in reversed(tx_undo):
                mem_pages[a >> 12][a & 4095] = old
            mem_writes = tx_writes
            regs[:] = tx_regs
            del timer_values[tx_timer_len:]
            tx_regs = None
            tx_undo = []
            tx_state = 2
            cycles += abort_cost
            fault_delivered = False
            i = tx_resume
            continue
        fault_delivered = True
        cycles += fault_cost
        break

    return (
        fault_code,
        fault_index,
        fault_delivered,
        tx_state,
        cycles,
        mem_writes,
        transient_loads,
        timer_values,
        limit_hit,
    )
