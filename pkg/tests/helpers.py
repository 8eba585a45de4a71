"""Shared test plumbing: machine factory and the differential program fuzzer."""

from __future__ import annotations

import random

from uarchleak import isa
from uarchleak.cache import CacheConfig
from uarchleak.machine import Machine, MachineConfig, WindowModel, build_machine
from uarchleak.vmem import USER_BASE, VmemConfig

MIB = 1024 * 1024
SECRET_PA = 0x80_0000
KERNEL_SECRET_VA_OFFSET = SECRET_PA  # direct_map_base + this = planted secret


def make_machine(
    phys: int = 16 * MIB,
    *,
    window: int = 24,
    p_zero: float = 0.0,
    seed: int = 0,
    kaiser: bool = False,
    kaslr: bool = False,
    hard_split: bool = False,
    serialized: bool = False,
    tx: bool = True,
    noise: float = 0.0,
    capacity: int = 0,
    tlb: bool = True,
    vmem_seed: int = 0,
) -> Machine:
    cfg = MachineConfig(
        vmem=VmemConfig(
            phys_size=phys,
            kaiser=kaiser,
            kaslr=kaslr,
            hard_split=hard_split,
            seed=vmem_seed,
            tlb=tlb,
        ),
        cache=CacheConfig(p_noise=noise, capacity=capacity, seed=seed + 17),
        window=WindowModel(window=window, p_zero=p_zero, seed=seed),
        serialized_check=serialized,
        tx_supported=tx,
    )
    return build_machine(cfg)


# -- differential fuzzing ----------------------------------------------------

KERNEL_VA_OFF = 0x70_0000  # planted pattern for faulting loads
UNMAPPED_VA = 0x0000_1234_5670_0000
USER_SCRATCH = USER_BASE  # first user pages, fuzz stores/loads land here

I = isa.Instruction


def random_program(rng: random.Random, dm_base: int, allow_tx: bool = True) -> isa.Program:
    """A short loop-free program with zero or one injected faulting instruction.

    Branches are forward-only so the architectural run always terminates;
    TIME_READ is excluded because the in-order oracle reads cache membership
    without updating it, and so would diverge from the engine on the second
    access to the same line.
    """
    n_body = rng.randrange(2, 10)
    fault_at = rng.randrange(n_body + 2)  # may fall past the end: no fault
    body: list[I] = []
    for i in range(n_body):
        if i == fault_at:
            kind = rng.choice(("raise", "kload", "uload_bad", "kstore"))
            if kind == "raise":
                body.append(I("RAISE"))
            elif kind == "kload":
                body.append(I("MOV_IMM", rd=1, imm=dm_base + KERNEL_VA_OFF + rng.randrange(56)))
                body.append(I(rng.choice(("LOAD_BYTE", "LOAD_WORD")), rd=rng.randrange(8), base=1))
            elif kind == "uload_bad":
                body.append(I("MOV_IMM", rd=1, imm=UNMAPPED_VA))
                body.append(I("LOAD_WORD", rd=rng.randrange(8), base=1))
            else:
                body.append(I("MOV_IMM", rd=1, imm=dm_base + KERNEL_VA_OFF))
                body.append(I("STORE", rs=rng.randrange(8), base=1))
            continue
        c = rng.randrange(8)
        if c == 0:
            body.append(I("MOV_IMM", rd=rng.randrange(8), imm=rng.randrange(1 << 64)))
        elif c == 1:
            body.append(I("ADD", rd=rng.randrange(8), rs=rng.randrange(8)))
        elif c == 2:
            body.append(I("SHL_IMM", rd=rng.randrange(8), imm=rng.randrange(64)))
        elif c == 3:
            body.append(I("MOV_IMM", rd=6, imm=USER_SCRATCH + rng.randrange(4096 - 8)))
            body.append(I("STORE", rs=rng.randrange(8), base=6))
        elif c == 4:
            body.append(I("MOV_IMM", rd=6, imm=USER_SCRATCH + rng.randrange(8192 - 8)))
            body.append(I(rng.choice(("LOAD_BYTE", "LOAD_WORD")), rd=rng.randrange(8), base=6))
        elif c == 5:
            body.append(I("MOV_IMM", rd=6, imm=USER_SCRATCH + rng.randrange(8192)))
            body.append(I("CLFLUSH", base=6))
        else:
            body.append(I("MOV_IMM", rd=rng.randrange(8), imm=rng.randrange(256)))

    wrap_tx = allow_tx and rng.random() < 0.3
    instrs: list[I] = [I("TX_BEGIN")] if wrap_tx else []
    instrs.extend(body)
    if wrap_tx:
        instrs.append(I("TX_END"))
    instrs.append(I("HALT"))

    # Sprinkle forward branches over the finished layout.
    if rng.random() < 0.5 and len(instrs) > 2:
        at = rng.randrange(len(instrs) - 2)
        target = rng.randrange(at + 1, len(instrs))
        if rng.random() < 0.5:
            instrs.insert(at, I("JMP", target=target + 1))
        else:
            instrs.insert(at, I("JZ", rs=rng.randrange(8), target=target + 1))
        # Inserting shifts everything at or after `at`; retarget other branches.
        fixed = []
        for k, ins in enumerate(instrs):
            if ins.op in ("JZ", "JMP") and k != at and ins.target >= at:
                fixed.append(I(ins.op, rs=ins.rs, target=ins.target + 1))
            else:
                fixed.append(ins)
        instrs = fixed
    return isa.Program(instrs)


def seed_fuzz_machine(machine: Machine) -> None:
    machine.plant(KERNEL_VA_OFF, bytes(range(1, 65)))


def arch_views(trace, arch):
    """Comparable architectural projections of an engine trace and an oracle
    result (fault exposure only when delivered)."""
    t = (
        trace.registers,
        trace.mem_writes,
        trace.fault if trace.fault_delivered else None,
        trace.fault_index if trace.fault_delivered else None,
        trace.tx,
    )
    a = (arch.registers, arch.mem_writes, arch.fault, arch.fault_index, arch.tx)
    return t, a
