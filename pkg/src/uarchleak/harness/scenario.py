"""Scenario runner: builds machines from settings, plants data, runs the
requested experiment, and renders a deterministic report.

Reports contain only simulated quantities (cycles, counts), never wall-clock
values, so identical scenario files and seeds produce byte-identical output.
"""

from __future__ import annotations

import os
import random
from dataclasses import dataclass, field

from .. import attack
from ..cache import CacheConfig
from ..machine import Machine, MachineConfig, WindowModel, build_machine
from ..vmem import VmemConfig
from . import hexdump
from .config import ConfigError, defaults

_ASCII_SAMPLE = (
    b"ts=1512859765 level=info msg=\"session opened\" user=jane\x00\x00"
    b"pw1=Dolphin18\x00pw2=insta_0203\x00pw3=secretpwd0\x00\x00"
    b"GET /index.html HTTP/1.1\r\nHost: localhost\r\nAccept: text/html\r\n\r\n"
)


class ScenarioError(RuntimeError):
    """A scenario-level assertion failed (e.g. leak under a countermeasure)."""


def _derive_seed(master: int, salt: int) -> int:
    return master * 1_000_003 + salt


def _machine_config(cfg: dict, **overrides) -> MachineConfig:
    seed = cfg["seed"]
    vmem_seed = cfg["vmem.seed"]
    cache_seed = cfg["cache.seed"]
    window_seed = cfg["window.seed"]
    mc = MachineConfig(
        vmem=VmemConfig(
            phys_size=cfg["vmem.phys_size"],
            user_size=cfg["vmem.user_size"],
            kaiser=overrides.get("kaiser", cfg["vmem.kaiser"]),
            kaslr=cfg["vmem.kaslr"],
            hard_split=overrides.get("hard_split", cfg["vmem.hard_split"]),
            kaslr_entropy_bits=cfg["vmem.kaslr_entropy_bits"],
            seed=vmem_seed if vmem_seed is not None else _derive_seed(seed, 1),
            tlb=cfg["vmem.tlb"],
            translate_cycles=cfg["vmem.translate_cycles"],
        ),
        cache=CacheConfig(
            hit_latency=cfg["cache.hit"],
            miss_latency=cfg["cache.miss"],
            threshold=cfg["cache.threshold"],
            p_noise=cfg["cache.noise"],
            capacity=cfg["cache.capacity"],
            seed=cache_seed if cache_seed is not None else _derive_seed(seed, 2),
        ),
        window=WindowModel(
            window=cfg["window.w"],
            p_zero=cfg["window.p_zero"],
            seed=window_seed if window_seed is not None else _derive_seed(seed, 3),
        ),
        fault_cost=cfg["cost.fault"],
        abort_cost=cfg["cost.abort"],
        serialized_check=overrides.get("serialized_check", cfg["mode.serialized_check"]),
        tx_supported=cfg["machine.tx"],
    )
    return mc


def _attack_config(cfg: dict, mode: str | None = None) -> attack.AttackConfig:
    return attack.AttackConfig(
        mode=mode or cfg["attack.mode"],
        bits_per_tx=cfg["attack.bits_per_tx"],
        retry=cfg["attack.retry"],
        max_retries=cfg["attack.max_retries"],
    )


def _plant_data(cfg: dict) -> bytes:
    source = cfg["plant.source"]
    length = cfg["plant.length"]
    if source == "random":
        seed = cfg["plant.seed"]
        if seed is None:
            seed = _derive_seed(cfg["seed"], 4)
        rng = random.Random(seed)
        return bytes(rng.randrange(256) for _ in range(length))
    if source == "ascii":
        reps = -(-length // len(_ASCII_SAMPLE))
        return (_ASCII_SAMPLE * reps)[:length]
    if source == "file":
        return b""  # planted from plant.file / --load in build_machine
    raise ConfigError(f"unknown plant.source {source!r}")


@dataclass
class Scenario:
    cfg: dict = field(default_factory=defaults)
    loads: list[tuple[str, int]] = field(default_factory=list)  # (path, paddr)

    def build_machine(self, **overrides) -> Machine:
        m = build_machine(_machine_config(self.cfg, **overrides))
        data = _plant_data(self.cfg)
        if data:
            m.plant(self.cfg["plant.paddr"], data)
        if self.cfg["plant.source"] == "file" and self.cfg["plant.file"]:
            m.mem.load_image(self.cfg["plant.file"], self.cfg["plant.paddr"])
        for path, pa in self.loads:
            m.mem.load_image(path, pa)
        return m


@dataclass
class Report:
    experiment: str
    seed: int
    header_lines: list[str]
    body_lines: list[str]
    status: str = "ok"
    dump_text: str = ""
    latencies: list[int] | None = None

    @property
    def failed(self) -> bool:
        return self.status != "ok"

    def render(self) -> str:
        out = ["# uarchleak report", f"experiment: {self.experiment}", f"seed: {self.seed}"]
        out.extend(self.header_lines)
        out.extend(self.body_lines)
        out.append(f"status: {self.status}")
        text = "\n".join(out) + "\n"
        if self.dump_text:
            text += "\n" + self.dump_text
        return text


def _write_atomic(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _flags_line(cfg: dict, kaiser=None, serialized=None, hard_split=None) -> str:
    k = cfg["vmem.kaiser"] if kaiser is None else kaiser
    s = cfg["mode.serialized_check"] if serialized is None else serialized
    h = cfg["vmem.hard_split"] if hard_split is None else hard_split
    onoff = lambda b: "on" if b else "off"
    return (
        f"countermeasures: kaiser={onoff(k)} serialized_check={onoff(s)}"
        f" hard_split={onoff(h)} kaslr={onoff(cfg['vmem.kaslr'])}"
    )


def _attack_line(cfg: dict) -> str:
    return (
        f"attack: mode={cfg['attack.mode']} bits_per_tx={cfg['attack.bits_per_tx']}"
        f" retry={'on' if cfg['attack.retry'] else 'off'}"
        f" max_retries={cfg['attack.max_retries']}"
    )


def _dump_start(scenario: Scenario, machine: Machine) -> int:
    start = scenario.cfg["dump.start"]
    if start == "auto":
        return machine.direct_map_va(scenario.cfg["plant.paddr"])
    try:
        return int(start, 0)
    except ValueError:
        raise ConfigError(f"bad dump.start {start!r}") from None


def _oracle_for(machine: Machine, start_va: int, length: int) -> bytes | None:
    """Planted ground truth for [start_va, +length), if fully covered."""
    base = machine.asp.direct_map_base
    if not base <= start_va < base + machine.mem.size:
        return None
    pa = start_va - base
    for ppa, data in machine.mem.planted:
        if ppa <= pa and pa + length <= ppa + len(data):
            return data[pa - ppa : pa - ppa + length]
    return None


def _result_lines(res: attack.AttackResult, oracle: bytes | None, length: int) -> list[str]:
    lines = []
    acc = f"{res.accuracy(oracle) * 100:.2f}%" if oracle is not None else "n/a"
    err = res.errors if res.errors is not None else "n/a"
    lines.append(
        f"result: bytes={length} recovered={res.recovered_count}"
        f" unknown={res.unknown_count} hits={res.hit_count} errors={err} accuracy={acc}"
    )
    per_byte = f"{res.cycles_per_byte:.2f}" if res.cycles_per_byte is not None else "n/a"
    lines.append(f"cycles: total={res.cycles} per_byte={per_byte}")
    return lines


def run_dump(scenario: Scenario) -> Report:
    cfg = scenario.cfg
    machine = scenario.build_machine()
    acfg = _attack_config(cfg)
    length = cfg["dump.length"] or cfg["plant.length"]
    start = _dump_start(scenario, machine)
    oracle = _oracle_for(machine, start, length)
    res = attack.dump_range(start, length, acfg, machine, oracle=oracle)
    dump_text = hexdump.format_hexdump(res.values, start)
    return Report(
        experiment="dump",
        seed=cfg["seed"],
        header_lines=[_flags_line(cfg), _attack_line(cfg)],
        body_lines=_result_lines(res, oracle, length),
        dump_text=dump_text,
    )


def run_toy(scenario: Scenario) -> Report:
    cfg = scenario.cfg
    machine = scenario.build_machine()
    data = cfg["toy.data"]
    latencies = attack.toy_example(data, machine)
    threshold = machine.cache.cfg.threshold
    dips = [i for i, lat in enumerate(latencies) if lat < threshold]
    status = "ok" if dips == [data] else f"FAIL expected single dip at {data}, got {dips}"
    return Report(
        experiment="toy",
        seed=cfg["seed"],
        header_lines=[_flags_line(cfg)],
        body_lines=[f"toy: data={data} dips={dips} threshold={threshold}"],
        status=status,
        latencies=latencies,
    )


def run_kaslr_search(scenario: Scenario) -> Report:
    cfg = scenario.cfg
    machine = scenario.build_machine()
    acfg = _attack_config(cfg)
    offset = cfg["search.probe_offset"]
    if offset < 0:
        # Probe at the first nonzero planted byte: a zero can never produce a
        # confident hit, so searching on one would always exhaust the candidates.
        offset = None
        for pa, data in machine.mem.planted:
            nz = next((i for i, b in enumerate(data) if b), None)
            if nz is not None:
                offset = pa + nz
                break
        if offset is None:
            raise ScenarioError("no nonzero planted byte to search with")
    body = []
    status = "ok"
    try:
        found = attack.find_direct_map(acfg, machine, probe_offset=offset)
        body.append(f"search: found=0x{found.base:016x} probes={found.probes}")
        if cfg["vmem.kaiser"]:
            status = "FAIL direct map located despite kaiser"
        elif found.base != machine.asp.direct_map_base:
            status = "FAIL wrong base located"
    except attack.DirectMapNotFound as exc:
        body.append(f"search: found=none probes={exc.probes}")
        if not cfg["vmem.kaiser"]:
            status = "FAIL direct map not found"
    body.append(f"truth: base=0x{machine.asp.direct_map_base:016x}")
    return Report(
        experiment="kaslr-search",
        seed=cfg["seed"],
        header_lines=[_flags_line(cfg)],
        body_lines=body,
        status=status,
    )


_MATRIX_ROWS = (
    ("baseline", {}),
    ("kaiser", {"kaiser": True}),
    ("serialized-check", {"serialized_check": True}),
    ("hard-split", {"hard_split": True}),
)


def run_matrix(scenario: Scenario) -> Report:
    """Same scenario under each countermeasure; only baseline may leak."""
    cfg = scenario.cfg
    acfg = _attack_config(cfg)
    length = cfg["dump.length"] or cfg["plant.length"]
    body = []
    status = "ok"
    for name, overrides in _MATRIX_ROWS:
        machine = scenario.build_machine(**overrides)
        start = machine.direct_map_va(cfg["plant.paddr"])
        oracle = _oracle_for(machine, start, length)
        res = attack.dump_range(start, length, acfg, machine, oracle=oracle)
        acc = res.accuracy(oracle) if oracle is not None else 0.0
        body.append(
            f"row: mode={name} accuracy={acc * 100:.2f}% hits={res.hit_count}"
            f" unknown={res.unknown_count} cycles={res.cycles}"
        )
        if name == "baseline":
            if acc < 0.99:
                status = "FAIL baseline failed to leak"
        elif res.hit_count:
            status = f"FAIL leak under countermeasure {name}"
    return Report(
        experiment="matrix",
        seed=cfg["seed"],
        header_lines=[_attack_line(cfg)],
        body_lines=body,
        status=status,
    )


def run_bench(scenario: Scenario) -> Report:
    """Cycles-per-byte comparison: exception handling vs suppression."""
    cfg = scenario.cfg
    length = cfg["dump.length"] or cfg["plant.length"]
    per_byte = {}
    body = []
    for mode in ("handling", "suppression"):
        machine = scenario.build_machine()
        acfg = _attack_config(cfg, mode=mode)
        start = machine.direct_map_va(cfg["plant.paddr"])
        oracle = _oracle_for(machine, start, length)
        res = attack.dump_range(start, length, acfg, machine, oracle=oracle)
        per_byte[mode] = res.cycles / length
        acc = f"{res.accuracy(oracle) * 100:.2f}%" if oracle is not None else "n/a"
        body.append(
            f"row: mode={mode} cycles={res.cycles} cycles_per_byte={res.cycles / length:.2f}"
            f" accuracy={acc}"
        )
    ok = per_byte["suppression"] < per_byte["handling"]
    body.append(
        "ordering: suppression "
        + ("<" if ok else ">=")
        + " handling (cycles per byte)"
    )
    return Report(
        experiment="bench",
        seed=cfg["seed"],
        header_lines=[_attack_line(cfg)],
        body_lines=body,
        status="ok" if ok else "FAIL suppression not faster than handling",
    )


_EXPERIMENTS = {
    "dump": run_dump,
    "toy": run_toy,
    "kaslr-search": run_kaslr_search,
    "matrix": run_matrix,
    "bench": run_bench,
}


def run_scenario(scenario: Scenario, out_path: str | None = None) -> Report:
    experiment = scenario.cfg["experiment"]
    runner = _EXPERIMENTS.get(experiment)
    if runner is None:
        raise ConfigError(f"unknown experiment {experiment!r}")
    report = runner(scenario)
    if out_path:
        _write_atomic(out_path, report.render())
        if report.latencies is not None:
            hexdump.emit_latency_csv(report.latencies, out_path + ".csv")
    return report
