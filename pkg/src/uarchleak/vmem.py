"""Physical memory and virtual address spaces.

Models a flat single-level page map (virtual page -> physical page with
present / user-accessible / writable bits), a kernel direct-physical map of
all RAM at a fixed or KASLR-randomized base, kernel page-table isolation
("kaiser" mode: kernel pages absent from the user-visible table except a
tiny trampoline set), and a hard user/kernel address-split mode where the
privilege decision is derived from the address alone.

The page map is stored as a handful of contiguous segments so that an 8 GB
address space costs a few tuples instead of millions of entries; per-page
entries are materialized on demand through `pte_at`.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

PAGE_SIZE = 4096
PAGE_SHIFT = 12

# Direct-physical map base when KASLR is off.
FIXED_DIRECT_MAP_BASE = 0xFFFF_8800_0000_0000
# Hard-split boundary: kernel half is the upper half of the address space.
HARD_SPLIT_BOUNDARY = 1 << 63

# User region: a fixed virtual window backed by low physical memory.
USER_BASE = 0x0000_0000_0040_0000
USER_PHYS_BASE = 0x0010_0000

# Trampoline pages kept user-visible (but still privileged) under kaiser.
TRAMPOLINE_BASE = 0xFFFF_FFFF_8000_0000
TRAMPOLINE_PAGES = 4
TRAMPOLINE_FILL = 0x90

# Integer fault codes used on the hot path; string names mirror them.
F_NONE = 0
F_NOT_PRESENT = 1
F_PROTECTION = 2
FAULT_NAMES = {F_NONE: "none", F_NOT_PRESENT: "not-present", F_PROTECTION: "protection"}


class ConfigurationError(ValueError):
    """Raised for invalid address-space or memory configuration."""


class MemoryBoundsError(IndexError):
    """Raised for physical accesses outside [0, size)."""


@dataclass(frozen=True)
class PageTableEntry:
    ppn: int
    present: bool = True
    user_accessible: bool = False
    writable: bool = True


@dataclass(frozen=True)
class Segment:
    """A contiguous virtual->physical mapping with uniform permissions."""

    vpn_start: int
    pages: int
    ppn_start: int
    user_accessible: bool
    writable: bool
    user_visible: bool  # present in the user-visible table (kaiser filters this)

    @property
    def vpn_end(self) -> int:
        return self.vpn_start + self.pages


@dataclass(frozen=True)
class Translation:
    """Result of an address translation; faults are values, not exceptions.

    `paddr` is populated whenever the mapping resolves, including the
    protection-fault case: a permission failure still names the physical
    address the table points at, which is exactly the property the
    out-of-order engine exploits in its baseline mode.
    """

    paddr: int | None
    fault: str = "none"


@dataclass
class VmemConfig:
    phys_size: int
    user_size: int = 2 * 1024 * 1024
    kaiser: bool = False
    kaslr: bool = False
    hard_split: bool = False
    kaslr_entropy_bits: int = 40
    seed: int = 0
    tlb: bool = True
    translate_cycles: int = 20


class AddressSpace:
    """Immutable after construction; safe for concurrent readers."""

    def __init__(
        self,
        segments: list[Segment],
        phys_size: int,
        kaiser: bool,
        kaslr_entropy_bits: int,
        direct_map_base: int,
        hard_split: bool,
        split_boundary: int = HARD_SPLIT_BOUNDARY,
    ):
        self.segments = tuple(segments)
        self.phys_size = phys_size
        self.kaiser_mode = kaiser
        self.kaslr_entropy_bits = kaslr_entropy_bits
        self.direct_map_base = direct_map_base
        self.hard_split = hard_split
        self.split_boundary = split_boundary

    def translate_raw(self, va: int, user: bool, write: bool = False) -> tuple[int, int]:
        """Hot-path translation: returns (paddr, fault code).

        paddr is -1 when no mapping resolves. With hard_split on, a user-mode
        access above the split boundary is refused from the address alone,
        without consulting the table, so no physical address is ever named.
        """
        if self.hard_split and user and va >= self.split_boundary:
            return -1, F_PROTECTION
        vpn = va >> PAGE_SHIFT
        for seg in self.segments:
            if seg.vpn_start <= vpn < seg.vpn_end:
                if user and not seg.user_visible:
                    return -1, F_NOT_PRESENT
                pa = ((seg.ppn_start + vpn - seg.vpn_start) << PAGE_SHIFT) | (va & (PAGE_SIZE - 1))
                if user and not seg.user_accessible:
                    return pa, F_PROTECTION
                if write and not seg.writable:
                    return pa, F_PROTECTION
                return pa, F_NONE
        return -1, F_NOT_PRESENT

    def pte_at(self, vpn: int, user_view: bool = False) -> PageTableEntry | None:
        """Materialize the page-table entry for one virtual page, or None."""
        for seg in self.segments:
            if seg.vpn_start <= vpn < seg.vpn_end:
                if user_view and not seg.user_visible:
                    return None
                return PageTableEntry(
                    ppn=seg.ppn_start + vpn - seg.vpn_start,
                    user_accessible=seg.user_accessible,
                    writable=seg.writable,
                )
        return None


def translate(va: int, mode: str, asp: AddressSpace, write: bool = False) -> Translation:
    """Translate a virtual address in `mode` ('user' or 'kernel')."""
    if mode not in ("user", "kernel"):
        raise ValueError(f"bad mode {mode!r}")
    pa, fault = asp.translate_raw(va, user=(mode == "user"), write=write)
    return Translation(paddr=None if pa < 0 else pa, fault=FAULT_NAMES[fault])


def kaslr_candidates(phys_size: int, entropy_bits: int = 40) -> int:
    """Number of direct-map base candidates an attacker must test.

    The randomized offset is a multiple of phys_size inside a 2^entropy_bits
    byte window, so stepping from the fixed base by phys_size covers it.
    """
    window = 1 << entropy_bits
    return max(1, -(-window // phys_size))


def build_address_space(cfg: VmemConfig, mem: "PhysicalMemory | None" = None) -> AddressSpace:
    """Construct the address space for one victim kernel + attacker user space.

    The user window maps [USER_PHYS_BASE, +user_size); the kernel direct map
    covers all physical memory at the (possibly randomized) base. Under
    kaiser the direct map is dropped from the user-visible table and only the
    trampoline pages (filler content, physically at the top of RAM) remain.
    If `mem` is given, trampoline backing is filled with TRAMPOLINE_FILL.
    """
    if cfg.phys_size <= 0:
        raise ConfigurationError("phys_size must be positive")
    if cfg.phys_size % PAGE_SIZE:
        raise ConfigurationError("phys_size must be a multiple of the 4096-byte page size")
    if cfg.user_size <= 0 or cfg.user_size % PAGE_SIZE:
        raise ConfigurationError("user_size must be a positive multiple of the page size")
    reserved_top = TRAMPOLINE_PAGES * PAGE_SIZE if cfg.kaiser else 0
    if USER_PHYS_BASE + cfg.user_size + reserved_top > cfg.phys_size:
        raise ConfigurationError(
            f"phys_size {cfg.phys_size:#x} too small for the user window plus reserved pages"
        )

    if cfg.kaslr:
        entropy_bits = cfg.kaslr_entropy_bits
        steps = kaslr_candidates(cfg.phys_size, entropy_bits)
        k = random.Random(cfg.seed).randrange(steps)
        direct_map_base = FIXED_DIRECT_MAP_BASE + k * cfg.phys_size
    else:
        entropy_bits = 0
        direct_map_base = FIXED_DIRECT_MAP_BASE

    phys_pages = cfg.phys_size >> PAGE_SHIFT
    segments = [
        Segment(
            vpn_start=USER_BASE >> PAGE_SHIFT,
            pages=cfg.user_size >> PAGE_SHIFT,
            ppn_start=USER_PHYS_BASE >> PAGE_SHIFT,
            user_accessible=True,
            writable=True,
            user_visible=True,
        ),
        Segment(
            vpn_start=direct_map_base >> PAGE_SHIFT,
            pages=phys_pages,
            ppn_start=0,
            user_accessible=False,
            writable=True,
            user_visible=not cfg.kaiser,
        ),
    ]
    if cfg.kaiser:
        tramp_ppn = phys_pages - TRAMPOLINE_PAGES
        segments.append(
            Segment(
                vpn_start=TRAMPOLINE_BASE >> PAGE_SHIFT,
                pages=TRAMPOLINE_PAGES,
                ppn_start=tramp_ppn,
                user_accessible=False,
                writable=False,
                user_visible=True,
            )
        )
        if mem is not None:
            mem.write_phys(tramp_ppn << PAGE_SHIFT, bytes([TRAMPOLINE_FILL]) * reserved_top)

    if direct_map_base + cfg.phys_size > TRAMPOLINE_BASE:
        raise ConfigurationError("direct map would overlap the trampoline window")
    if direct_map_base < HARD_SPLIT_BOUNDARY:
        raise ConfigurationError("direct map must live in the kernel half of the address space")

    return AddressSpace(
        segments=segments,
        phys_size=cfg.phys_size,
        kaiser=cfg.kaiser,
        kaslr_entropy_bits=entropy_bits,
        direct_map_base=direct_map_base,
        hard_split=cfg.hard_split,
    )


class PhysicalMemory:
    """Sparse byte-addressable RAM with planted-secret bookkeeping.

    Backing pages are allocated on first write; unwritten bytes read as zero.
    Sparseness keeps multi-gigabyte configurations cheap, which the KASLR
    search scenarios rely on. `planted` records (paddr, bytes) pairs written
    through `plant` so tests can use ground truth without re-reading memory.
    """

    def __init__(self, size: int):
        if size <= 0:
            raise ConfigurationError("physical memory size must be positive")
        if size % PAGE_SIZE:
            raise ConfigurationError("physical memory size must be page-aligned")
        self.size = size
        self._pages: dict[int, bytearray] = {}
        self.planted: list[tuple[int, bytes]] = []

    def _check(self, pa: int, length: int) -> None:
        if pa < 0 or length < 0 or pa + length > self.size:
            raise MemoryBoundsError(f"physical access [{pa:#x}, +{length}) outside [0, {self.size:#x})")

    def read_phys(self, pa: int, length: int) -> bytes:
        self._check(pa, length)
        out = bytearray(length)
        i = 0
        while i < length:
            a = pa + i
            page = self._pages.get(a >> PAGE_SHIFT)
            off = a & (PAGE_SIZE - 1)
            chunk = min(length - i, PAGE_SIZE - off)
            if page is not None:
                out[i : i + chunk] = page[off : off + chunk]
            i += chunk
        return bytes(out)

    def write_phys(self, pa: int, data: bytes) -> None:
        self._check(pa, len(data))
        i = 0
        while i < len(data):
            a = pa + i
            ppn = a >> PAGE_SHIFT
            page = self._pages.get(ppn)
            if page is None:
                page = self._pages[ppn] = bytearray(PAGE_SIZE)
            off = a & (PAGE_SIZE - 1)
            chunk = min(len(data) - i, PAGE_SIZE - off)
            page[off : off + chunk] = data[i : i + chunk]
            i += chunk

    def plant(self, pa: int, data: bytes) -> None:
        """Write `data` and remember it as a ground-truth oracle for tests."""
        self.write_phys(pa, data)
        self.planted.append((pa, bytes(data)))

    def read_byte(self, pa: int) -> int:
        page = self._pages.get(pa >> PAGE_SHIFT)
        return page[pa & (PAGE_SIZE - 1)] if page is not None else 0

    def load_image(self, path: str, pa: int) -> int:
        """Load a raw binary file at the given physical address; returns length."""
        with open(path, "rb") as fh:
            data = fh.read()
        self.plant(pa, data)
        return len(data)
