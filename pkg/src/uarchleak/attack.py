"""The end-to-end privilege-bypass attack built from two blocks: a transient
instruction sequence that encodes a privileged byte into cache state (the
sender), and a flush-and-time sweep that turns that state architectural (the
receiver).

The receiver works through TIME_READ latencies alone; it never inspects
cache membership or physical memory. Faults raised by the privileged load
are either delivered and absorbed by the driver (handling mode, the signal
handler analogue) or suppressed by wrapping the sequence in a transaction
(suppression mode).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

from . import engine, isa
from .machine import Machine
from .vmem import FIXED_DIRECT_MAP_BASE, PAGE_SIZE, USER_BASE, kaslr_candidates

# User-space layout used by the attack driver: one scratch page for the
# bit-masking spill, then the 256-page probe array.
SCRATCH_VA = USER_BASE + 8 * PAGE_SIZE
DEFAULT_PROBE_VA = USER_BASE + 16 * PAGE_SIZE

HIT = "hit"
INFERRED_ZERO = "inferred-zero"
UNKNOWN = "unknown"


class SetupError(RuntimeError):
    """Probe array or scratch page not usable from user mode."""


class CapabilityError(RuntimeError):
    """Attack configuration requires a machine capability that is absent."""


class DirectMapNotFound(RuntimeError):
    """Every candidate base was probed without a confident hit."""

    def __init__(self, probes: int):
        super().__init__(f"no direct-map base found after {probes} probes")
        self.probes = probes


@dataclass(frozen=True)
class ProbeArray:
    base: int
    pages: int = 256
    stride: int = PAGE_SIZE


@dataclass(frozen=True)
class AttackConfig:
    mode: str = "handling"  # or "suppression"
    bits_per_tx: int = 1  # 1 or 8
    retry: bool = True
    max_retries: int = 10

    def __post_init__(self):
        if self.mode not in ("handling", "suppression"):
            raise ValueError(f"bad attack mode {self.mode!r}")
        if self.bits_per_tx not in (1, 8):
            raise ValueError(f"bits_per_tx must be 1 or 8, got {self.bits_per_tx}")
        if self.max_retries < 1:
            raise ValueError("max_retries must be >= 1")


@dataclass(frozen=True)
class LeakOutcome:
    """One recovered byte. `value` is None when confidence is 'unknown';
    inferred-zero means no probe page ever produced a hit, which the attack
    interprets as a true zero."""

    value: int | None
    confidence: str


@dataclass
class AttackResult:
    outcomes: list[LeakOutcome]
    cycles: int
    errors: int | None = None  # mismatches vs. oracle among recovered bytes

    @property
    def values(self) -> list[int | None]:
        return [o.value for o in self.outcomes]

    @property
    def unknown_count(self) -> int:
        return sum(1 for o in self.outcomes if o.value is None)

    @property
    def hit_count(self) -> int:
        return sum(1 for o in self.outcomes if o.confidence == HIT)

    @property
    def recovered_count(self) -> int:
        return len(self.outcomes) - self.unknown_count

    @property
    def cycles_per_byte(self) -> float | None:
        if self.recovered_count == 0:
            return None
        return self.cycles / self.recovered_count

    def accuracy(self, oracle: bytes) -> float:
        """Fraction of bytes whose recovered value matches the oracle."""
        ok = sum(1 for k, o in enumerate(self.outcomes) if o.value == oracle[k])
        return ok / len(self.outcomes) if self.outcomes else 1.0


@dataclass
class DirectMapSearch:
    base: int
    probes: int


# -- transient programs ----------------------------------------------------
#
# Register conventions (set up architecturally by the driver per attempt):
#   R1 = target virtual address        R2 = probe target base
#   R6 = scratch page, R7 = scratch+7 (bit mode only)

_BYTE_SENDER = """\
    MOV_IMM R0, 0
{txb}retry:
    LOAD_BYTE R0, [R1]
    SHL_IMM R0, 12
{jz}    LOAD_WORD R3, [R2+R0]
{txe}    HALT
"""

_BIT_SENDER = """\
    MOV_IMM R0, 0
    MOV_IMM R3, 0
{txb}retry:
    LOAD_BYTE R0, [R1]
{jz}    SHL_IMM R0, {shift}
    STORE [R6], R0
    LOAD_BYTE R3, [R7]
    SHL_IMM R3, 63
    JZ R3, done
    LOAD_WORD R4, [R2]
done:
{txe}    HALT
"""


@lru_cache(maxsize=None)
def _sender_program(bits: int, bit: int, suppress: bool, retry: bool) -> isa.Program:
    txb = "    TX_BEGIN\n" if suppress else ""
    txe = "    TX_END\n" if suppress else ""
    if bits == 8:
        jz = "    JZ R0, retry\n" if retry else ""
        return isa.assemble(_BYTE_SENDER.format(txb=txb, txe=txe, jz=jz))
    jz = "    JZ R0, retry\n" if retry else ""
    return isa.assemble(_BIT_SENDER.format(txb=txb, txe=txe, jz=jz, shift=56 - bit))


@lru_cache(maxsize=None)
def _toy_program() -> isa.Program:
    # The illustrative sequence: an unconditional trap, then an access whose
    # address depends on a value that is architecturally never used.
    return isa.assemble(
        """\
    RAISE
    SHL_IMM R0, 12
    LOAD_WORD R3, [R2+R0]
    HALT
"""
    )


def install_probe_array(machine: Machine, base: int = DEFAULT_PROBE_VA) -> ProbeArray:
    """Validate and return the 256-page user probe array at `base`."""
    if base % PAGE_SIZE:
        raise SetupError(f"probe base {base:#x} is not page-aligned")
    probe = ProbeArray(base=base)
    for va in (SCRATCH_VA, *(base + i * probe.stride for i in range(probe.pages))):
        _, fault = machine.lookup_user(va)
        if fault != 0:
            raise SetupError(f"probe/scratch page {va:#x} is not user-accessible")
    return probe


def _probe_for(machine: Machine, probe: ProbeArray | None) -> ProbeArray:
    if probe is not None:
        return probe
    cached = getattr(machine, "_probe_array", None)
    if cached is None:
        cached = machine._probe_array = install_probe_array(machine)
    return cached


def _run_sender(prog: isa.Program, machine: Machine, suppress: bool) -> engine.ExecutionTrace:
    if suppress:
        return engine.run_transaction(prog, machine)
    return engine.run(prog, machine)


def leak_byte(
    va: int, cfg: AttackConfig, machine: Machine, probe: ProbeArray | None = None
) -> LeakOutcome:
    """Recover the byte at `va` (any address, privileged or not).

    Flushes the probe lines, runs the transient sender, then times the probe
    reload(s); retries the whole attempt on a zero observation when
    configured. A not-present fault (the address does not resolve, e.g.
    kernel page-table isolation is on) yields 'unknown'; no hit after all
    retries yields an inferred zero.
    """
    suppress = cfg.mode == "suppression"
    if suppress and not machine.tx_supported:
        raise CapabilityError("suppression mode requires transaction support")
    probe = _probe_for(machine, probe)
    threshold = machine.cache.cfg.threshold
    noise_free = machine.cache.cfg.p_noise == 0.0
    attempts = cfg.max_retries if cfg.retry else 1
    regs = machine.regs

    if cfg.bits_per_tx == 8:
        prog = _sender_program(8, 0, suppress, cfg.retry)
        for _ in range(attempts):
            machine.clflush_block(probe.base, probe.stride, probe.pages)
            regs[1] = va
            regs[2] = probe.base
            trace = _run_sender(prog, machine, suppress)
            latencies = machine.timed_read_block(
                probe.base,
                probe.stride,
                probe.pages,
                stop_below=threshold if noise_free else None,
            )
            hits = [i for i, lat in enumerate(latencies) if lat < threshold]
            if len(hits) == 1:
                return LeakOutcome(hits[0], HIT)
            if len(hits) > 1:
                # Only possible with cache noise; never guess.
                return LeakOutcome(None, UNKNOWN)
            if trace.fault == isa.FAULT_PAGE:
                return LeakOutcome(None, UNKNOWN)
            if trace.fault is None and noise_free:
                # Fault-free attempt (readable address): the outcome is
                # architectural and retrying cannot change it.
                break
        return LeakOutcome(0, INFERRED_ZERO)

    # Single-bit transmission: 8 rounds, each masking one bit (LSB first) and
    # probing a single fixed line.
    line_va = probe.base + machine.cache.cfg.line_size
    value = 0
    any_hit = False
    for bit in range(8):
        prog = _sender_program(1, bit, suppress, cfg.retry)
        for _ in range(attempts):
            machine.clflush(line_va)
            regs[1] = va
            regs[2] = line_va
            regs[6] = SCRATCH_VA
            regs[7] = SCRATCH_VA + 7
            trace = _run_sender(prog, machine, suppress)
            if machine.timed_read(line_va) < threshold:
                value |= 1 << bit
                any_hit = True
                break
            if trace.fault == isa.FAULT_PAGE:
                return LeakOutcome(None, UNKNOWN)
            if trace.fault is None and noise_free:
                break  # fault-free round: a zero bit, architecturally settled
    if any_hit:
        return LeakOutcome(value, HIT)
    return LeakOutcome(0, INFERRED_ZERO)


def dump_range(
    start: int,
    length: int,
    cfg: AttackConfig,
    machine: Machine,
    oracle: bytes | None = None,
    probe: ProbeArray | None = None,
) -> AttackResult:
    """leak_byte over [start, start+length), aggregating cycles and errors."""
    if length < 1:
        raise ValueError("length must be >= 1")
    probe = _probe_for(machine, probe)
    start_cycles = machine.cycles
    outcomes = [leak_byte(start + k, cfg, machine, probe) for k in range(length)]
    cycles = machine.cycles - start_cycles
    errors = None
    if oracle is not None:
        errors = sum(
            1
            for k, o in enumerate(outcomes)
            if o.value is not None and o.value != oracle[k]
        )
    return AttackResult(outcomes=outcomes, cycles=cycles, errors=errors)


def find_direct_map(
    cfg: AttackConfig,
    machine: Machine,
    phys_size: int | None = None,
    probe_offset: int = 0,
) -> DirectMapSearch:
    """Locate the (possibly randomized) direct-physical-map base.

    Probes candidate bases fixed_base + k*phys_size; the randomized offset is
    a multiple of phys_size inside the entropy window, so the true base is a
    candidate. A candidate counts as found only on a confident hit, which
    requires the byte at probe_offset to be nonzero.
    """
    if phys_size is None:
        phys_size = machine.mem.size
    entropy = machine.asp.kaslr_entropy_bits
    candidates = kaslr_candidates(phys_size, entropy) if entropy else 1
    for k in range(candidates):
        base = FIXED_DIRECT_MAP_BASE + k * phys_size
        outcome = leak_byte(base + probe_offset, cfg, machine)
        if outcome.confidence == HIT:
            return DirectMapSearch(base=base, probes=k + 1)
    raise DirectMapNotFound(candidates)


def toy_example(data: int, machine: Machine, probe: ProbeArray | None = None) -> list[int]:
    """Run the trap-then-dependent-access snippet and time all 256 pages.

    Returns the latency array; for data != 0 exactly index `data` dips below
    the threshold (for data == 0 the access literally lands on page 0).
    """
    if not 0 <= data <= 0xFF:
        raise ValueError("data must be a byte")
    probe = _probe_for(machine, probe)
    machine.clflush_block(probe.base, probe.stride, probe.pages)
    machine.regs[0] = data
    machine.regs[2] = probe.base
    engine.run(_toy_program(), machine)
    return machine.timed_read_block(probe.base, probe.stride, probe.pages)
