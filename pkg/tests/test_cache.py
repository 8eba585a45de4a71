import pytest
from hypothesis import given, strategies as st

from uarchleak.cache import Cache, CacheConfig, CacheConfigError


def fresh(**kw):
    return Cache(CacheConfig(**kw))


def test_miss_then_hit():
    c = fresh()
    assert c.access(0x4000) == c.cfg.miss_latency
    assert c.access(0x4000) == c.cfg.hit_latency


def test_no_fill_across_lines_or_pages():
    c = fresh()
    c.access(0x4000)
    assert not c.is_cached(0x5000)
    assert not c.is_cached(0x4040)  # next line of the same page
    assert c.is_cached(0x4000) and c.is_cached(0x403F)  # same 64-byte line


def test_default_latencies_are_config_not_literals():
    c = fresh(hit_latency=7, miss_latency=900, threshold=100)
    assert c.access(0) == 900
    assert c.access(0) == 7


def test_flush_semantics():
    c = fresh()
    c.access(0x4000)
    c.access(0x9000)
    c.flush(0x4000)
    assert not c.is_cached(0x4000)
    assert c.is_cached(0x9000)  # isolation
    c.flush(0x123000)  # never-accessed line: no-op, no error
    assert c.access(0x4000) == c.cfg.miss_latency  # monotone miss after flush


@given(st.lists(st.tuples(st.sampled_from(["access", "flush"]), st.integers(0, 40)), max_size=60))
def test_flush_reload_soundness(ops):
    """Observed latency is below threshold iff the line was cached before."""
    c = fresh()
    model: set[int] = set()
    for op, line in ops:
        pa = line * 64
        if op == "access":
            was_cached = line in model
            lat = c.access(pa)
            assert (lat < c.cfg.threshold) == was_cached
            model.add(line)
        else:
            c.flush(pa)
            model.discard(line)
        assert c.snapshot() == frozenset(model)


def test_injective_probe_page_mapping():
    c = fresh()
    base = 0x40_0000
    c.access(base + 84 * 4096)
    cached_pages = {i for i in range(256) if c.is_cached(base + i * 4096)}
    assert cached_pages == {84}


def test_noise_flips_reported_class_but_not_membership():
    c = fresh(p_noise=1.0, seed=3)
    assert c.access(0x4000) == c.cfg.hit_latency  # a miss, reported as hit
    assert c.is_cached(0x4000)
    assert c.access(0x4000) == c.cfg.miss_latency  # a hit, reported as miss


def test_lru_capacity_evicts_oldest():
    c = fresh(capacity=2)
    c.access(0x0)
    c.access(0x40)
    c.access(0x0)  # refresh line 0
    c.access(0x80)  # evicts line 1 (least recently used)
    assert c.is_cached(0x0) and c.is_cached(0x80)
    assert not c.is_cached(0x40)


@pytest.mark.parametrize(
    "kw",
    [
        dict(hit_latency=100, threshold=100),  # hit not < threshold
        dict(threshold=400),  # threshold > miss
        dict(line_size=48),  # does not divide the page
        dict(p_noise=1.5),
        dict(capacity=-1),
    ],
)
def test_bad_configs_rejected(kw):
    with pytest.raises(CacheConfigError):
        CacheConfig(**kw)
