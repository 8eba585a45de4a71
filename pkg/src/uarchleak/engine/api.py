"""Out-of-order execution engine: public entry points and trace type."""

from __future__ import annotations

from dataclasses import dataclass

from .. import isa
from ..machine import Machine, WindowModel
from . import _select
from ._program import compile_program

# Committed micro-op budget per run; a program that exceeds it (an
# architectural loop that never exits, e.g. a zero-value retry loop over a
# readable address) ends with `uop_limit_hit` set instead of spinning.
DEFAULT_MAX_UOPS = 20_000

_FAULT_NAMES = {1: isa.FAULT_PAGE, 2: isa.FAULT_PROTECTION, 3: isa.FAULT_TRAP}
_TX_NAMES = {0: isa.TX_NONE, 1: isa.TX_COMMITTED, 2: isa.TX_ABORTED}


class TransactionUnsupportedError(RuntimeError):
    """Transactional markers used on a machine without transaction support."""


@dataclass
class ExecutionTrace:
    """Outcome of one engine run.

    The architectural portion (registers, mem_writes, fault, tx) matches what
    the in-order oracle produces for the same program; transient_loads and
    the cache side effects are the microarchitectural residue that survives
    the squash. `fault` is populated even when a transaction suppressed its
    delivery (`fault_delivered` False), modelling an abort-status register.
    """

    registers: tuple[int, ...]
    mem_writes: dict[int, int]
    fault: str | None
    fault_index: int | None
    fault_delivered: bool
    tx: str
    cycles: int
    transient_loads: list[int]
    timer_latencies: list[int]
    uop_limit_hit: bool = False


def run(
    prog: isa.Program,
    machine: Machine,
    wm: WindowModel | None = None,
    mode: str | None = None,
    max_uops: int = DEFAULT_MAX_UOPS,
) -> ExecutionTrace:
    """Execute a program out-of-order on `machine`.

    `mode` is 'baseline' or 'serialized-check'; None uses the machine's
    configured mode. `wm` overrides the machine's window model. Architectural
    effects (registers, memory) are applied to the machine; the trace reports
    them alongside the microarchitectural residue.
    """
    if wm is None:
        wm = machine.window
    if mode is None:
        serialized = machine.serialized_check
    elif mode in ("baseline", "serialized-check"):
        serialized = mode == "serialized-check"
    else:
        raise ValueError(f"bad mode {mode!r}")
    cp = compile_program(prog)
    if cp.has_tx and not machine.tx_supported:
        raise TransactionUnsupportedError("program uses TX markers on a non-TX machine")

    raw = _select.execute(
        machine,
        cp,
        wm.window,
        wm.p_zero,
        wm.rng,
        serialized,
        machine.fault_cost,
        machine.abort_cost,
        max_uops,
    )
    (fault, fault_index, delivered, tx_state, cycles, mem_writes, transient_loads,
     timer_values, limit_hit) = raw
    machine.cycles += cycles
    return ExecutionTrace(
        registers=tuple(machine.regs),
        mem_writes=mem_writes,
        fault=_FAULT_NAMES.get(fault),
        fault_index=fault_index if fault else None,
        fault_delivered=delivered,
        tx=_TX_NAMES[tx_state],
        cycles=cycles,
        transient_loads=transient_loads,
        timer_latencies=timer_values,
        uop_limit_hit=limit_hit,
    )


def run_transaction(
    prog: isa.Program,
    machine: Machine,
    wm: WindowModel | None = None,
    max_uops: int = DEFAULT_MAX_UOPS,
) -> ExecutionTrace:
    """Execute a program whose fault-prone code sits inside TX_BEGIN/TX_END.

    A fault inside the region aborts the transaction instead of being
    delivered: architectural state rolls back to TX_BEGIN and execution
    continues after TX_END, while cache side effects of the transient shadow
    persist.
    """
    if not prog.has_tx:
        raise isa.ProgramError("run_transaction requires a TX_BEGIN/TX_END region")
    if not machine.tx_supported:
        raise TransactionUnsupportedError("machine does not support transactions")
    return run(prog, machine, wm=wm, max_uops=max_uops)


def backend_name() -> str:
    return _select.backend_name()
