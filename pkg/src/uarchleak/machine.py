"""Machine assembly: registers + memory + address space + cache + timing.

A Machine owns the architectural state (register file, physical memory) and
the microarchitectural state beside it (cache, translation memo, cycle
counter). Programs run on it through the execution engine; the flush and
timed-read helpers below apply the architectural semantics of single
CLFLUSH / TIME_READ instructions for driver code (the attack's receiver
loop), charging the same cycle costs the engine would.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .cache import Cache, CacheConfig
from .vmem import (
    F_NONE,
    FAULT_NAMES,
    AddressSpace,
    PhysicalMemory,
    VmemConfig,
    build_address_space,
)


class MachineFault(RuntimeError):
    """A helper access faulted; carries the vmem fault name."""

    def __init__(self, va: int, fault: str):
        super().__init__(f"access to {va:#x} faulted: {fault}")
        self.va = va
        self.fault = fault


@dataclass
class WindowModel:
    """Transient-execution window model.

    `window` is the micro-op budget that may enter the shadow of a faulting
    micro-op before squash; `p_zero` is the probability that a privileged
    load's consumers observe a zeroed value instead of the true one (each
    transient re-execution of the load redraws, which is what makes the
    in-window retry loop effective). The rng stream is owned by the model so
    identical (program, machine, model-with-seed) triples replay exactly.
    """

    window: int = 24
    p_zero: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.window < 0:
            raise ValueError("window must be >= 0")
        if not 0.0 <= self.p_zero <= 1.0:
            raise ValueError(f"p_zero {self.p_zero} outside [0, 1]")
        self.rng = random.Random(self.seed)


@dataclass
class MachineConfig:
    vmem: VmemConfig
    cache: CacheConfig = field(default_factory=CacheConfig)
    window: WindowModel = field(default_factory=WindowModel)
    fault_cost: int = 2000
    abort_cost: int = 200
    serialized_check: bool = False
    tx_supported: bool = True


# Micro-op counts of the fused helper instructions (address-gen + operation),
# kept in sync with isa.decode.
TIMED_READ_UOPS = 2
CLFLUSH_UOPS = 2


class Machine:
    def __init__(self, cfg: MachineConfig):
        self.cfg = cfg
        self.mem = PhysicalMemory(cfg.vmem.phys_size)
        self.asp: AddressSpace = build_address_space(cfg.vmem, self.mem)
        self.cache = Cache(cfg.cache)
        self.window = cfg.window
        self.fault_cost = cfg.fault_cost
        self.abort_cost = cfg.abort_cost
        self.serialized_check = cfg.serialized_check
        self.tx_supported = cfg.tx_supported
        self.regs: list[int] = [0] * 8
        self.cycles = 0
        # Per-page translation memo (the address space is immutable). Entries
        # are (page paddr or -1, read fault code, write fault code). With the
        # TLB disabled every access pays the translation latency instead.
        self._tlb: dict[int, tuple[int, int, int]] = {}
        self.translate_cost = 0 if cfg.vmem.tlb else cfg.vmem.translate_cycles
        # Compiled receiver-sweep fast paths, when the active backend has them.
        # Resolved at build time; machines built after a backend switch pick
        # up the new choice.
        from .engine import _select

        self._sweeps = _select.sweep_functions()

    # -- translation ------------------------------------------------------

    def _tlb_fill(self, vpn: int) -> tuple[int, int, int]:
        va = vpn << 12
        base, fault_r = self.asp.translate_raw(va, user=True)
        _, fault_w = self.asp.translate_raw(va, user=True, write=True)
        return (base, fault_r, fault_w)

    def lookup_user(self, va: int) -> tuple[int, int]:
        """Memoized user-mode translation of va's page: (paddr, fault code)."""
        vpn = va >> 12
        hit = self._tlb.get(vpn)
        if hit is None:
            hit = self._tlb[vpn] = self._tlb_fill(vpn)
        base = hit[0]
        if base < 0:
            return -1, hit[1]
        return base | (va & 0xFFF), hit[1]

    # -- architectural helper instructions --------------------------------

    def clflush(self, va: int) -> None:
        pa, fault = self.lookup_user(va)
        if fault != F_NONE:
            raise MachineFault(va, FAULT_NAMES[fault])
        self.cache.flush(pa)
        self.cycles += CLFLUSH_UOPS + self.translate_cost

    def timed_read(self, va: int) -> int:
        """Architectural TIME_READ: access one byte, return observed latency."""
        pa, fault = self.lookup_user(va)
        if fault != F_NONE:
            raise MachineFault(va, FAULT_NAMES[fault])
        latency = self.cache.access(pa)
        self.cycles += TIMED_READ_UOPS + latency + self.translate_cost
        return latency

    def clflush_block(self, base: int, stride: int, count: int) -> None:
        """Flush `count` lines at base, base+stride, ...; charged on success."""
        cache = self.cache
        per_flush = CLFLUSH_UOPS + self.translate_cost
        if cache.simple and cache.line_shift >= 0:
            if self._sweeps is not None:
                cycles, fault_va, fault = self._sweeps[0](
                    self._tlb, self._tlb_fill, cache.lines, cache.line_shift,
                    base, stride, count, per_flush,
                )
                if fault:
                    raise MachineFault(fault_va, FAULT_NAMES[fault])
                self.cycles += cycles
                return
            lines = cache.lines
            shift = cache.line_shift
            for k in range(count):
                pa, fault = self.lookup_user(base + k * stride)
                if fault != F_NONE:
                    raise MachineFault(base + k * stride, FAULT_NAMES[fault])
                lines.discard(pa >> shift)
            self.cycles += per_flush * count
            return
        cycles = 0
        for k in range(count):
            pa, fault = self.lookup_user(base + k * stride)
            if fault != F_NONE:
                raise MachineFault(base + k * stride, FAULT_NAMES[fault])
            cache.flush(pa)
            cycles += per_flush
        self.cycles += cycles

    def timed_read_block(
        self, base: int, stride: int, count: int, stop_below: int | None = None
    ) -> list[int]:
        """TIME_READ a strided sequence of addresses, returning latencies.

        With `stop_below` set the sweep ends early after the first latency
        under that bound (callers may only use this when the cache is
        noise-free, where at most one sub-threshold element can exist).
        Cycles are charged on success of the sweep.
        """
        cache = self.cache
        per_access = TIMED_READ_UOPS + self.translate_cost
        if cache.simple and cache.line_shift >= 0:
            if self._sweeps is not None:
                out, cycles, fault_va, fault = self._sweeps[1](
                    self._tlb, self._tlb_fill, cache.lines, cache.line_shift,
                    cache.cfg.hit_latency, cache.cfg.miss_latency,
                    base, stride, count, per_access,
                    -1 if stop_below is None else stop_below,
                )
                if fault:
                    raise MachineFault(fault_va, FAULT_NAMES[fault])
                self.cycles += cycles
                return out
            out: list[int] = []
            cycles = 0
            lines = cache.lines
            shift = cache.line_shift
            hit_lat = cache.cfg.hit_latency
            miss_lat = cache.cfg.miss_latency
            for k in range(count):
                pa, fault = self.lookup_user(base + k * stride)
                if fault != F_NONE:
                    raise MachineFault(base + k * stride, FAULT_NAMES[fault])
                line = pa >> shift
                if line in lines:
                    latency = hit_lat
                else:
                    lines.add(line)
                    latency = miss_lat
                out.append(latency)
                cycles += per_access + latency
                if stop_below is not None and latency < stop_below:
                    break
            self.cycles += cycles
            return out
        out = []
        cycles = 0
        for k in range(count):
            pa, fault = self.lookup_user(base + k * stride)
            if fault != F_NONE:
                raise MachineFault(base + k * stride, FAULT_NAMES[fault])
            latency = cache.access(pa)
            out.append(latency)
            cycles += per_access + latency
            if stop_below is not None and latency < stop_below:
                break
        self.cycles += cycles
        return out

    # -- test plumbing -----------------------------------------------------

    def plant(self, pa: int, data: bytes) -> None:
        self.mem.plant(pa, data)

    def direct_map_va(self, pa: int) -> int:
        return self.asp.direct_map_base + pa


def build_machine(cfg: MachineConfig) -> Machine:
    return Machine(cfg)
