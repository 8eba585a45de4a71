"""Differential tests: the compiled kernel must match the pure-Python one
observable-for-observable, including cycle counts and rng-driven values."""

import random

import pytest

from helpers import make_machine, random_program, seed_fuzz_machine
from uarchleak import attack, engine
from uarchleak.engine import _select
from uarchleak.machine import WindowModel

needs_cython = pytest.mark.skipif(
    "cython" not in _select.AVAILABLE, reason="compiled kernel not built"
)


@pytest.fixture
def restore_backend():
    current = _select.backend_name()
    yield
    _select.set_backend(current)


def run_on(backend: str, prog, seed: int, p_zero: float, window: int, init_regs):
    _select.set_backend(backend)
    m = make_machine(window=window, p_zero=p_zero, seed=seed)
    seed_fuzz_machine(m)
    m.regs[:] = init_regs
    trace = engine.run(prog, m, wm=WindowModel(window=window, p_zero=p_zero, seed=seed))
    return (
        trace,
        m.cache.snapshot(),
        tuple(m.regs),
        m.mem.read_phys(0x10_0000, 8192),
        m.cycles,
    )


@needs_cython
def test_kernels_agree_on_random_programs(restore_backend):
    rng = random.Random(20240)
    dm = make_machine().asp.direct_map_base
    for trial in range(800):
        prog = random_program(rng, dm)
        seed = rng.randrange(10**9)
        p_zero = rng.choice([0.0, 0.3, 0.5, 1.0])
        window = rng.randrange(0, 16)
        init = [rng.randrange(1 << 64) for _ in range(8)]
        a = run_on("python", prog, seed, p_zero, window, init)
        b = run_on("cython", prog, seed, p_zero, window, init)
        assert a == b, f"trial {trial} diverged"


@needs_cython
def test_backends_agree_on_full_attack(restore_backend):
    data = bytes(random.Random(5).randrange(256) for _ in range(128))
    results = {}
    for backend in ("python", "cython"):
        _select.set_backend(backend)
        m = make_machine(p_zero=0.3, seed=9)
        m.plant(0x80_0000, data)
        cfg = attack.AttackConfig(mode="suppression", bits_per_tx=8)
        res = attack.dump_range(m.direct_map_va(0x80_0000), len(data), cfg, m, oracle=data)
        results[backend] = (res.values, res.cycles, res.errors, m.cycles)
    assert results["python"] == results["cython"]


@needs_cython
def test_receiver_sweeps_agree(restore_backend):
    outs = {}
    for backend in ("python", "cython"):
        _select.set_backend(backend)
        m = make_machine()
        probe = attack.install_probe_array(m)
        m.timed_read_block(probe.base, probe.stride, 256)
        m.clflush_block(probe.base + 5 * 4096, probe.stride, 17)
        lats = m.timed_read_block(probe.base, probe.stride, 256)
        early = m.timed_read_block(probe.base, probe.stride, 256, stop_below=150)
        outs[backend] = (lats, early, m.cycles, m.cache.snapshot())
    assert outs["python"] == outs["cython"]


@needs_cython
def test_reports_byte_identical_across_backends(restore_backend):
    from uarchleak.harness.config import defaults
    from uarchleak.harness.scenario import Scenario, run_scenario

    texts = {}
    for backend in ("python", "cython"):
        _select.set_backend(backend)
        cfg = defaults()
        cfg.update({"plant.length": 96, "seed": 3})
        texts[backend] = run_scenario(Scenario(cfg=cfg)).render()
    assert texts["python"] == texts["cython"]


def test_backend_name_reports_active_kernel(restore_backend):
    _select.set_backend("python")
    assert engine.backend_name() == "python"
    if "cython" in _select.AVAILABLE:
        _select.set_backend("cython")
        assert engine.backend_name() == "cython"
