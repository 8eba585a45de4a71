# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Cython execution kernel: the compiled twin of _kernel.py.

Statement-for-statement mirror of the pure-Python kernel; register values,
addresses, and cycle counters live in C integers, micro-ops are read from
the packed stream, and everything observable (trace fields, rng draw order,
cache mutations) must match the Python kernel bit for bit. The backend
differential tests enforce that.
"""

cdef enum:
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

ctypedef unsigned long long u64
ctypedef long long i64


cdef u64 _read_bytes(dict mem_pages, i64 phys_size, i64 pa, int width, object sbuf):
    """Little-endian read; off-end bytes are zero; sbuf overrides memory."""
    cdef u64 value = 0
    cdef int k
    cdef i64 a
    cdef int b
    cdef object page, hit
    cdef bytearray pg
    if width == 1 and sbuf is None:
        if pa >= phys_size:
            return 0
        page = mem_pages.get(pa >> 12)
        if page is None:
            return 0
        pg = <bytearray> page
        return pg[pa & 4095]
    for k in range(width):
        a = pa + k
        b = -1
        if sbuf is not None:
            hit = (<dict> sbuf).get(a)
            if hit is not None:
                b = <int> hit
        if b < 0:
            if a >= phys_size:
                b = 0
            else:
                page = mem_pages.get(a >> 12)
                if page is None:
                    b = 0
                else:
                    pg = <bytearray> page
                    b = pg[a & 4095]
        value |= (<u64> b) << (8 * k)
    return value


cdef i64 _transient_window(
    i64[::1] packed,
    Py_ssize_t n_uops,
    Py_ssize_t start,
    long budget,
    u64 *shadow,
    int *avail,
    dict tlb,
    object tlb_fill,
    dict mem_pages,
    i64 phys_size,
    object cache,
    bint simple_cache,
    set lines,
    int line_shift,
    int hit_lat,
    int miss_lat,
    int t_cost,
    bint serialized_check,
    double p_zero,
    object rng,
    list transient_loads,
):
    cdef i64 cycles = 0
    cdef object sbuf = None
    cdef u64 latch = 0
    cdef bint latch_ok = False
    cdef Py_ssize_t j = start
    cdef Py_ssize_t j5
    cdef int k, a, b, rd, rs, width, kk, lat
    cdef i64 base, pa, line
    cdef int f
    cdef u64 value, vpn
    cdef tuple e
    cdef object eo
    while budget > 0 and j < n_uops:
        budget -= 1
        j5 = j * 5
        k = <int> packed[j5]
        if k == K_AGEN:
            a = <int> packed[j5 + 1]
            b = <int> packed[j5 + 2]
            if avail[a] and (b < 0 or avail[b]):
                latch = shadow[a]
                if b >= 0:
                    latch = latch + shadow[b]
                latch_ok = True
                cycles += 1
            else:
                latch_ok = False
            j += 1
            continue
        if k == K_LOAD:
            rd = <int> packed[j5 + 1]
            if not latch_ok:
                avail[rd] = False
                j += 1
                continue
            vpn = latch >> 12
            eo = tlb.get(vpn)
            if eo is None:
                eo = tlb_fill(vpn)
                tlb[vpn] = eo
            e = <tuple> eo
            base = e[0]
            f = e[1]
            cycles += t_cost
            if f == 0 or (f == 2 and base >= 0 and not serialized_check):
                pa = base | <i64> (latch & 4095)
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
                width = <int> packed[j5 + 3]
                if f == 0:
                    value = _read_bytes(mem_pages, phys_size, pa, width, sbuf)
                elif p_zero > 0.0 and rng.random() < p_zero:
                    value = 0
                else:
                    value = _read_bytes(mem_pages, phys_size, pa, width, None)
                if width == 1:
                    shadow[rd] = (shadow[rd] & ~(<u64> 0xFF)) | value
                else:
                    shadow[rd] = value
                avail[rd] = True
            else:
                avail[rd] = False
            j += 1
            continue
        if k == K_TIMER:
            rd = <int> packed[j5 + 1]
            if latch_ok:
                vpn = latch >> 12
                eo = tlb.get(vpn)
                if eo is None:
                    eo = tlb_fill(vpn)
                    tlb[vpn] = eo
                e = <tuple> eo
                base = e[0]
                f = e[1]
                cycles += t_cost
                if f == 0:
                    pa = base | <i64> (latch & 4095)
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
                    shadow[rd] = <u64> lat
                    avail[rd] = True
                else:
                    avail[rd] = False
            else:
                avail[rd] = False
            j += 1
            continue
        if k == K_STORE:
            rs = <int> packed[j5 + 1]
            if latch_ok and avail[rs]:
                vpn = latch >> 12
                eo = tlb.get(vpn)
                if eo is None:
                    eo = tlb_fill(vpn)
                    tlb[vpn] = eo
                e = <tuple> eo
                cycles += t_cost
                if <int> e[2] == 0:
                    base = e[0]
                    pa = base | <i64> (latch & 4095)
                    if sbuf is None:
                        sbuf = {}
                    value = shadow[rs]
                    for kk in range(8):
                        (<dict> sbuf)[pa + kk] = <int> ((value >> (8 * kk)) & 0xFF)
                    cycles += 1
            j += 1
            continue
        if k == K_MOV:
            a = <int> packed[j5 + 1]
            shadow[a] = <u64> packed[j5 + 3]
            avail[a] = True
            cycles += 1
            j += 1
            continue
        if k == K_SHL:
            rd = <int> packed[j5 + 1]
            if avail[rd]:
                shadow[rd] = shadow[rd] << <int> packed[j5 + 3]
                cycles += 1
            j += 1
            continue
        if k == K_ADD:
            rd = <int> packed[j5 + 1]
            rs = <int> packed[j5 + 2]
            if avail[rd] and avail[rs]:
                shadow[rd] = shadow[rd] + shadow[rs]
                cycles += 1
            else:
                avail[rd] = False
            j += 1
            continue
        if k == K_JZ:
            rs = <int> packed[j5 + 1]
            if not avail[rs]:
                break
            cycles += 1
            if shadow[rs] == 0:
                j = <Py_ssize_t> packed[j5 + 3]
            else:
                j += 1
            continue
        if k == K_JMP:
            cycles += 1
            j = <Py_ssize_t> packed[j5 + 3]
            continue
        if k == K_HALT:
            cycles += 1
            break
        # TXB / TXE / RAISE / FLUSH: no transient effect.
        cycles += 1
        j += 1
    return cycles


def execute(object machine, object cp, long window, double p_zero, object rng,
            bint serialized_check, long fault_cost, long abort_cost, long max_uops):
    """Interpret a compiled micro-op stream on `machine`; see _kernel.execute."""
    cdef i64[::1] packed = cp.packed
    cdef Py_ssize_t n_uops = packed.shape[0] // 5

    cdef list regs_list = machine.regs
    cdef dict tlb = machine._tlb
    tlb_fill = machine._tlb_fill
    cdef dict mem_pages = machine.mem._pages
    cdef i64 phys_size = machine.mem.size
    cache = machine.cache
    cdef bint simple_cache = cache.simple and cache.line_shift >= 0
    cdef set lines = cache.lines
    cdef int line_shift = cache.line_shift if cache.line_shift >= 0 else 0
    cdef int hit_lat = cache.cfg.hit_latency
    cdef int miss_lat = cache.cfg.miss_latency
    cdef int t_cost = machine.translate_cost

    cdef u64 regs[8]
    cdef u64 tx_regs[8]
    cdef u64 shadow[8]
    cdef int avail[8]
    cdef int r
    for r in range(8):
        regs[r] = regs_list[r]

    cdef i64 cycles = 0
    cdef long executed = 0
    cdef dict mem_writes = {}
    cdef list transient_loads = []
    cdef list timer_values = []
    cdef int tx_state = 0
    cdef int fault_code = 0
    cdef i64 fault_index = -1
    cdef bint fault_delivered = False
    cdef bint limit_hit = False

    cdef bint in_tx = False
    cdef object tx_writes = None
    cdef list tx_undo = []
    cdef Py_ssize_t tx_timer_len = 0
    cdef Py_ssize_t tx_resume = -1

    cdef u64 latch = 0
    cdef Py_ssize_t i = 0
    cdef Py_ssize_t i5
    cdef int k, a, b, rd, width, kk, lat, fault, byte
    cdef i64 base, pa, line, aa, ppn, instr_idx
    cdef u64 value, vpn
    cdef tuple e
    cdef object eo, page
    cdef bytearray pg
    cdef bint forwarded

    while i < n_uops:
        executed += 1
        if executed > max_uops:
            limit_hit = True
            break
        i5 = i * 5
        k = <int> packed[i5]
        fault = 0

        if k == K_AGEN:
            a = <int> packed[i5 + 1]
            b = <int> packed[i5 + 2]
            latch = regs[a]
            if b >= 0:
                latch = latch + regs[b]
            cycles += 1
            i += 1
            continue
        if k == K_MOV:
            regs[<int> packed[i5 + 1]] = <u64> packed[i5 + 3]
            cycles += 1
            i += 1
            continue
        if k == K_SHL:
            rd = <int> packed[i5 + 1]
            regs[rd] = regs[rd] << <int> packed[i5 + 3]
            cycles += 1
            i += 1
            continue
        if k == K_ADD:
            rd = <int> packed[i5 + 1]
            regs[rd] = regs[rd] + regs[<int> packed[i5 + 2]]
            cycles += 1
            i += 1
            continue
        if k == K_JZ:
            cycles += 1
            if regs[<int> packed[i5 + 1]] == 0:
                i = <Py_ssize_t> packed[i5 + 3]
            else:
                i += 1
            continue
        if k == K_JMP:
            cycles += 1
            i = <Py_ssize_t> packed[i5 + 3]
            continue
        if k == K_LOAD or k == K_TIMER:
            vpn = latch >> 12
            eo = tlb.get(vpn)
            if eo is None:
                eo = tlb_fill(vpn)
                tlb[vpn] = eo
            e = <tuple> eo
            base = e[0]
            fault = e[1]
            cycles += t_cost
            if fault == 0:
                pa = base | <i64> (latch & 4095)
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
                rd = <int> packed[i5 + 1]
                if k == K_TIMER:
                    regs[rd] = <u64> lat
                    timer_values.append(lat)
                else:
                    width = <int> packed[i5 + 3]
                    value = _read_bytes(mem_pages, phys_size, pa, width, None)
                    if width == 1:
                        regs[rd] = (regs[rd] & ~(<u64> 0xFF)) | value
                    else:
                        regs[rd] = value
                i += 1
                continue
            # fall through to fault resolution
        elif k == K_STORE:
            vpn = latch >> 12
            eo = tlb.get(vpn)
            if eo is None:
                eo = tlb_fill(vpn)
                tlb[vpn] = eo
            e = <tuple> eo
            fault = e[2]
            cycles += t_cost
            if fault == 0:
                base = e[0]
                pa = base | <i64> (latch & 4095)
                value = regs[<int> packed[i5 + 1]]
                for kk in range(8):
                    aa = pa + kk
                    if aa >= phys_size:
                        continue
                    ppn = aa >> 12
                    page = mem_pages.get(ppn)
                    if page is None:
                        page = bytearray(4096)
                        mem_pages[ppn] = page
                    pg = <bytearray> page
                    if in_tx:
                        tx_undo.append((aa, pg[aa & 4095]))
                    byte = <int> ((value >> (8 * kk)) & 0xFF)
                    pg[aa & 4095] = byte
                    mem_writes[aa] = byte
                cycles += 1
                i += 1
                continue
        elif k == K_FLUSH:
            vpn = latch >> 12
            eo = tlb.get(vpn)
            if eo is None:
                eo = tlb_fill(vpn)
                tlb[vpn] = eo
            e = <tuple> eo
            fault = e[1]
            cycles += t_cost
            if fault == 0:
                pa = (<i64> e[0]) | <i64> (latch & 4095)
                if simple_cache:
                    lines.discard(pa >> line_shift)
                else:
                    cache.flush(pa)
                cycles += 1
                i += 1
                continue
        elif k == K_TXB:
            for r in range(8):
                tx_regs[r] = regs[r]
            in_tx = True
            tx_writes = dict(mem_writes)
            tx_undo = []
            tx_timer_len = len(timer_values)
            tx_resume = <Py_ssize_t> packed[i5 + 3]
            cycles += 1
            i += 1
            continue
        elif k == K_TXE:
            in_tx = False
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
        cycles += 1
        instr_idx = packed[i5 + 4]
        for r in range(8):
            shadow[r] = regs[r]
            avail[r] = True
        if k == K_LOAD:
            forwarded = False
            base = e[0]
            if fault == 2 and base >= 0 and not serialized_check:
                pa = base | <i64> (latch & 4095)
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
                width = <int> packed[i5 + 3]
                if p_zero > 0.0 and rng.random() < p_zero:
                    value = 0
                else:
                    value = _read_bytes(mem_pages, phys_size, pa, width, None)
                rd = <int> packed[i5 + 1]
                if width == 1:
                    shadow[rd] = (shadow[rd] & ~(<u64> 0xFF)) | value
                else:
                    shadow[rd] = value
                forwarded = True
            if not forwarded:
                avail[<int> packed[i5 + 1]] = False
        elif k == K_TIMER:
            avail[<int> packed[i5 + 1]] = False

        cycles += _transient_window(
            packed,
            n_uops,
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
        if in_tx:
            for aa, byte in reversed(tx_undo):
                pg = <bytearray> mem_pages[aa >> 12]
                pg[aa & 4095] = byte
            mem_writes = <dict> tx_writes
            for r in range(8):
                regs[r] = tx_regs[r]
            del timer_values[tx_timer_len:]
            in_tx = False
            tx_undo = []
            tx_state = 2
            cycles += abort_cost
            fault_delivered = False
            i = tx_resume
            continue
        fault_delivered = True
        cycles += fault_cost
        break

    for r in range(8):
        regs_list[r] = regs[r]

    return (
        fault_code,
        fault_index,
        fault_delivered,
        tx_state,
        <object> cycles,
        mem_writes,
        transient_loads,
        timer_values,
        limit_hit,
    )


# -- receiver sweeps --------------------------------------------------------
#
# Compiled fast paths for the flush/measure loops of the covert-channel
# receiver (simple-cache configurations only). Cycle totals are returned to
# the caller, which charges them on success; a fault aborts the sweep with
# (partial results, va, fault code) and nothing charged.

def clflush_sweep(dict tlb, object tlb_fill, set lines, int line_shift,
                  u64 base, i64 stride, long count, int per_flush):
    cdef long k
    cdef u64 va, vpn
    cdef i64 pa, pbase, cycles = 0
    cdef tuple e
    cdef object eo
    for k in range(count):
        va = base + <u64> (k * stride)
        vpn = va >> 12
        eo = tlb.get(vpn)
        if eo is None:
            eo = tlb_fill(vpn)
            tlb[vpn] = eo
        e = <tuple> eo
        pbase = e[0]
        if <int> e[1] != 0:
            return (cycles, va, <int> e[1])
        pa = pbase | <i64> (va & 4095)
        lines.discard(pa >> line_shift)
        cycles += per_flush
    return (cycles, -1, 0)


def timed_read_sweep(dict tlb, object tlb_fill, set lines, int line_shift,
                     int hit_lat, int miss_lat, u64 base, i64 stride,
                     long count, int per_access, long stop_below):
    cdef list out = []
    cdef long k
    cdef u64 va, vpn
    cdef i64 pa, pbase, line, cycles = 0
    cdef int lat
    cdef tuple e
    cdef object eo
    for k in range(count):
        va = base + <u64> (k * stride)
        vpn = va >> 12
        eo = tlb.get(vpn)
        if eo is None:
            eo = tlb_fill(vpn)
            tlb[vpn] = eo
        e = <tuple> eo
        pbase = e[0]
        if <int> e[1] != 0:
            return (out, cycles, va, <int> e[1])
        pa = pbase | <i64> (va & 4095)
        line = pa >> line_shift
        if line in lines:
            lat = hit_lat
        else:
            lines.add(line)
            lat = miss_lat
        out.append(lat)
        cycles += per_access + lat
        if stop_below >= 0 and lat < stop_below:
            break
    return (out, cycles, -1, 0)
