"""Hexdump rendering with unknown-byte markers, and latency CSV emission.

Layout per line: 16 bytes, lower-case hex address prefix, two-character
byte cells (`XX` for bytes the side channel never resolved), a double space
between the two 8-byte halves, and an ASCII gutter where non-printable or
unknown bytes render as `.`. The format is stable; golden tests depend on
it, and parse_hexdump inverts it exactly up to the unknown marker.
"""

from __future__ import annotations

import csv
from typing import Iterable, Sequence

UNKNOWN_CELL = "XX"
BYTES_PER_LINE = 16


def format_hexdump(values: Sequence[int | None], base_va: int = 0) -> str:
    """Render byte values (None = unknown) 16 per line from base_va."""
    lines = []
    for off in range(0, len(values), BYTES_PER_LINE):
        row = values[off : off + BYTES_PER_LINE]
        cells = []
        gutter = []
        for k, b in enumerate(row):
            if k == 8:
                cells.append("")  # renders as the double space between halves
            if b is None:
                cells.append(UNKNOWN_CELL)
                gutter.append(".")
            else:
                cells.append(f"{b:02x}")
                gutter.append(chr(b) if 0x20 <= b <= 0x7E else ".")
        lines.append(f"{base_va + off:016x}: {' '.join(cells)} |{''.join(gutter)}|")
    return "\n".join(lines) + ("\n" if lines else "")


def parse_hexdump(text: str) -> tuple[int, list[int | None]]:
    """Inverse of format_hexdump: returns (base_va, values)."""
    base_va = 0
    values: list[int | None] = []
    first = True
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        addr_part, _, rest = line.partition(":")
        if first:
            base_va = int(addr_part, 16)
            first = False
        body = rest.split("|", 1)[0]
        for cell in body.split():
            values.append(None if cell == UNKNOWN_CELL else int(cell, 16))
    return base_va, values


def emit_latency_csv(latencies: Iterable[int], path: str) -> None:
    """Write (page index, access cycles) rows for plotting."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["page", "cycles"])
        for idx, lat in enumerate(latencies):
            writer.writerow([idx, lat])
