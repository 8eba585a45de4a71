#!/usr/bin/env python3
"""Wall-clock comparison of the pure-Python and compiled execution kernels.

Simulated results (recovered bytes, cycle counts) are identical across
backends by construction; this script measures how long the host takes to
produce them. Three workloads: raw transient-sequence executions, a byte-mode
dump (receiver-sweep heavy), and a bit-mode dump (engine heavy).

Usage: python benchmarks/compare_backends.py [--bytes N] [--runs N]
"""

from __future__ import annotations

import argparse
import random
import time

from uarchleak import attack, engine
from uarchleak.attack import AttackConfig
from uarchleak.cache import CacheConfig
from uarchleak.engine import _select
from uarchleak.machine import MachineConfig, WindowModel, build_machine
from uarchleak.vmem import VmemConfig

MIB = 1024 * 1024
SECRET_PA = 0x80_0000


def fresh_machine() -> "Machine":
    cfg = MachineConfig(
        vmem=VmemConfig(phys_size=16 * MIB),
        cache=CacheConfig(),
        window=WindowModel(p_zero=0.0, seed=1),
    )
    return build_machine(cfg)


def bench_engine_runs(n_runs: int) -> float:
    m = fresh_machine()
    m.plant(SECRET_PA, b"\x54")
    prog = attack._sender_program(8, 0, False, True)
    kva = m.direct_map_va(SECRET_PA)
    m.regs[1] = kva
    m.regs[2] = attack.DEFAULT_PROBE_VA
    engine.run(prog, m)  # warm the translation memo
    t0 = time.perf_counter()
    for _ in range(n_runs):
        m.regs[1] = kva
        m.regs[2] = attack.DEFAULT_PROBE_VA
        engine.run(prog, m)
    return time.perf_counter() - t0


def bench_dump(n_bytes: int, bits: int) -> tuple[float, int]:
    m = fresh_machine()
    data = bytes(random.Random(7).randrange(256) for _ in range(n_bytes))
    m.plant(SECRET_PA, data)
    cfg = AttackConfig(mode="suppression", bits_per_tx=bits, retry=True, max_retries=2)
    t0 = time.perf_counter()
    res = attack.dump_range(m.direct_map_va(SECRET_PA), n_bytes, cfg, m, oracle=data)
    elapsed = time.perf_counter() - t0
    assert res.errors == 0 and res.unknown_count == 0
    return elapsed, res.cycles


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--bytes", type=int, default=8192, help="dump size per workload")
    parser.add_argument("--runs", type=int, default=50_000, help="raw engine executions")
    args = parser.parse_args()

    backends = sorted(_select.AVAILABLE)
    if len(backends) < 2:
        print(f"only {backends} available; install with the extension built to compare")

    results: dict[str, dict[str, float]] = {}
    sim_cycles: dict[str, tuple[int, int]] = {}
    for backend in backends:
        _select.set_backend(backend)
        row: dict[str, float] = {}
        row["engine us/run"] = bench_engine_runs(args.runs) / args.runs * 1e6
        t8, c8 = bench_dump(args.bytes, bits=8)
        t1, c1 = bench_dump(args.bytes, bits=1)
        row["byte-mode us/B"] = t8 / args.bytes * 1e6
        row["bit-mode us/B"] = t1 / args.bytes * 1e6
        results[backend] = row
        sim_cycles[backend] = (c8, c1)

    cols = ["engine us/run", "byte-mode us/B", "bit-mode us/B"]
    print(f"\nworkloads: {args.runs} engine runs; {args.bytes}-byte dumps (suppression)")
    print(f"{'backend':<10}" + "".join(f"{c:>18}" for c in cols))
    for backend in backends:
        row = results[backend]
        print(f"{backend:<10}" + "".join(f"{row[c]:>18.2f}" for c in cols))
    if len(backends) == 2:
        a, b = "python", "cython"
        if a in results and b in results:
            print(f"{'speedup':<10}" + "".join(
                f"{results[a][c] / results[b][c]:>17.2f}x" for c in cols
            ))
            assert sim_cycles[a] == sim_cycles[b], "backends must simulate identical cycles"
            print("\nsimulated cycle counts identical across backends: OK")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
