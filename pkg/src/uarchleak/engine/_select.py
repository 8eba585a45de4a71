"""Kernel backend selection.

The compiled Cython kernel is preferred when importable; the pure-Python
kernel is the fallback and the semantic reference. UARCHLEAK_BACKEND=python
or =cython forces a choice (the latter fails loudly when the extension is
missing, so CI can assert it built).
"""

from __future__ import annotations

import os

from . import _kernel as _kernel_py

try:
    from . import _kernel_cy
except ImportError:  # extension not built
    _kernel_cy = None

AVAILABLE = {"python": _kernel_py.execute}
if _kernel_cy is not None:
    AVAILABLE["cython"] = _kernel_cy.execute

_forced = os.environ.get("UARCHLEAK_BACKEND", "").strip().lower()
if _forced in ("", "auto"):
    _name = "cython" if "cython" in AVAILABLE else "python"
elif _forced in AVAILABLE:
    _name = _forced
elif _forced == "cython":
    raise ImportError(
        "UARCHLEAK_BACKEND=cython but the compiled kernel is not available; "
        "reinstall with the extension built"
    )
else:
    raise ValueError(f"UARCHLEAK_BACKEND={_forced!r} not one of auto/python/cython")

execute = AVAILABLE[_name]


def backend_name() -> str:
    return _name


def set_backend(name: str) -> str:
    """Switch the active kernel (used by tests and the backend benchmark)."""
    global execute, _name
    if name not in AVAILABLE:
        raise ValueError(f"backend {name!r} not available (have: {sorted(AVAILABLE)})")
    _name = name
    execute = AVAILABLE[name]
    return _name


def sweep_functions():
    """Compiled (clflush_sweep, timed_read_sweep) pair, or None on python."""
    if _name == "cython" and _kernel_cy is not None:
        return (_kernel_cy.clflush_sweep, _kernel_cy.timed_read_sweep)
    return None
