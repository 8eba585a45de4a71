"""uarchleak: a deterministic out-of-order core simulator with a permission
checking MMU and a timing-faithful cache, the transient-execution attack that
leaks privileged memory through a Flush+Reload covert channel, and the
countermeasures (kernel page-table isolation, serialized permission checks,
hard address-space split) that stop it."""

from . import attack, cache, engine, harness, isa, machine, vmem

__version__ = "0.1.0"

__all__ = ["attack", "cache", "engine", "harness", "isa", "machine", "vmem", "__version__"]
