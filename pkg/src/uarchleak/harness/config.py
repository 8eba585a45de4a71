"""Flat key=value scenario configuration.

Format: one `key = value` per line, dotted section keys (cache.hit=50),
`#` comments, blank lines ignored. Unknown keys are an error that names the
key. Values are coerced per the schema: ints accept 0x hex and _ separators,
bools accept true/false/on/off/1/0.
"""

from __future__ import annotations


class ConfigError(ValueError):
    pass


_MIB = 1024 * 1024

# key -> (type tag, default)
SCHEMA: dict[str, tuple[str, object]] = {
    "seed": ("int", 0),
    "experiment": ("str", "dump"),
    "vmem.phys_size": ("int", 16 * _MIB),
    "vmem.user_size": ("int", 2 * _MIB),
    "vmem.kaiser": ("bool", False),
    "vmem.kaslr": ("bool", False),
    "vmem.hard_split": ("bool", False),
    "vmem.kaslr_entropy_bits": ("int", 40),
    "vmem.tlb": ("bool", True),
    "vmem.translate_cycles": ("int", 20),
    "vmem.seed": ("int", None),
    "cache.hit": ("int", 50),
    "cache.miss": ("int", 300),
    "cache.threshold": ("int", 150),
    "cache.noise": ("float", 0.0),
    "cache.capacity": ("int", 0),
    "cache.seed": ("int", None),
    "window.w": ("int", 24),
    "window.p_zero": ("float", 0.2),
    "window.seed": ("int", None),
    "cost.fault": ("int", 2000),
    "cost.abort": ("int", 200),
    "mode.serialized_check": ("bool", False),
    "machine.tx": ("bool", True),
    "attack.mode": ("str", "handling"),
    "attack.bits_per_tx": ("int", 1),
    "attack.retry": ("bool", True),
    "attack.max_retries": ("int", 10),
    "plant.source": ("str", "random"),
    "plant.paddr": ("int", 0x80_0000),
    "plant.length": ("int", 4096),
    "plant.seed": ("int", None),
    "plant.file": ("str", ""),  # raw image for plant.source = file
    "dump.start": ("str", "auto"),
    "dump.length": ("int", 0),  # 0 = plant.length
    "toy.data": ("int", 84),
    "search.probe_offset": ("int", -1),  # -1 = first nonzero planted byte
}

_BOOL_WORDS = {"true": True, "on": True, "yes": True, "1": True,
               "false": False, "off": False, "no": False, "0": False}


def _coerce(key: str, kind: str, text: str):
    text = text.strip()
    try:
        if kind == "int":
            return int(text.replace("_", ""), 0)
        if kind == "float":
            return float(text)
        if kind == "bool":
            word = text.lower()
            if word not in _BOOL_WORDS:
                raise ValueError(text)
            return _BOOL_WORDS[word]
        return text
    except ValueError:
        raise ConfigError(f"bad value for {key!r}: {text!r} (expected {kind})") from None


def parse_text(text: str, base: dict | None = None) -> dict:
    """Parse config text into a fully-defaulted, typed settings dict."""
    cfg = dict(base) if base is not None else {k: d for k, (_, d) in SCHEMA.items()}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, eq, value = line.partition("=")
        if not eq:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key = key.strip()
        if key not in SCHEMA:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        cfg[key] = _coerce(key, SCHEMA[key][0], value)
    return cfg


def parse_file(path: str, base: dict | None = None) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_text(fh.read(), base)


def defaults() -> dict:
    return {k: d for k, (_, d) in SCHEMA.items()}


def set_key(cfg: dict, key: str, value) -> None:
    """Typed override used by CLI flags."""
    if key not in SCHEMA:
        raise ConfigError(f"unknown config key {key!r}")
    if isinstance(value, str):
        value = _coerce(key, SCHEMA[key][0], value)
    cfg[key] = value
