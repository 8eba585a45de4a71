"""Line-granular cache model: the physical substrate of the covert channel.

Membership of a physical line in the cached set is the sole determinant of
the reported latency class. There is no prefetching of any kind: an access
fills exactly its own line, so 256 probe pages occupy 256 disjoint line
sets. Capacity is unbounded by default (the attack never relies on
eviction); an optional LRU capacity and a latency-misreport noise knob exist
for error-rate experiments.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .vmem import PAGE_SIZE


class CacheConfigError(ValueError):
    """Raised for inconsistent cache parameters."""


@dataclass(frozen=True)
class CacheConfig:
    line_size: int = 64
    hit_latency: int = 50
    miss_latency: int = 300
    threshold: int = 150
    p_noise: float = 0.0
    capacity: int = 0  # lines; 0 = unbounded
    seed: int = 0

    def __post_init__(self):
        if self.line_size <= 0 or PAGE_SIZE % self.line_size:
            raise CacheConfigError(f"line size {self.line_size} must divide the page size")
        if not self.hit_latency < self.threshold <= self.miss_latency:
            raise CacheConfigError(
                f"need hit < threshold <= miss, got {self.hit_latency}/{self.threshold}/{self.miss_latency}"
            )
        if not 0.0 <= self.p_noise <= 1.0:
            raise CacheConfigError(f"p_noise {self.p_noise} outside [0, 1]")
        if self.capacity < 0:
            raise CacheConfigError("capacity must be >= 0")


class Cache:
    """Mutable cached-line set; single-threaded, serialized by its machine."""

    def __init__(self, cfg: CacheConfig):
        self.cfg = cfg
        self.line_shift = cfg.line_size.bit_length() - 1
        if 1 << self.line_shift != cfg.line_size:
            # Non-power-of-two lines still work, just without the shift fast path.
            self.line_shift = -1
        self.lines: set[int] = set()
        self._lru: dict[int, None] = {}
        self._rng = random.Random(cfg.seed)
        # Fast path used by the execution kernels: plain set membership with
        # no noise and no capacity bound.
        self.simple = cfg.capacity == 0 and cfg.p_noise == 0.0

    def line_of(self, pa: int) -> int:
        if self.line_shift >= 0:
            return pa >> self.line_shift
        return pa // self.cfg.line_size

    def access(self, pa: int) -> int:
        """Access one line: returns the observed latency; the line is cached
        afterwards and no other line's state changes."""
        line = self.line_of(pa)
        if self.cfg.capacity == 0:
            hit = line in self.lines
            self.lines.add(line)
        else:
            hit = line in self._lru
            if hit:
                self._lru.pop(line)
            self._lru[line] = None
            if len(self._lru) > self.cfg.capacity:
                self._lru.pop(next(iter(self._lru)))
        cfg = self.cfg
        latency = cfg.hit_latency if hit else cfg.miss_latency
        if cfg.p_noise and self._rng.random() < cfg.p_noise:
            latency = cfg.miss_latency if hit else cfg.hit_latency
        return latency

    def flush(self, pa: int) -> None:
        line = self.line_of(pa)
        if self.cfg.capacity == 0:
            self.lines.discard(line)
        else:
            self._lru.pop(line, None)

    def is_cached(self, pa: int) -> bool:
        """White-box inspection hook for tests; attack code must not call it."""
        line = self.line_of(pa)
        return line in self.lines if self.cfg.capacity == 0 else line in self._lru

    def cached_line_count(self) -> int:
        return len(self.lines) if self.cfg.capacity == 0 else len(self._lru)

    def snapshot(self) -> frozenset[int]:
        return frozenset(self.lines if self.cfg.capacity == 0 else self._lru)
