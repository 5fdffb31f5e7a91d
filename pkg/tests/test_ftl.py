import pytest
from hypothesis import given, settings, strategies as st

from voltdrop.analyzer import analyze, responded_iops, summarize
from voltdrop.engine import RunConfig, simulate
from voltdrop.flash import FlashArray, FlashGeometry, PageKind
from voltdrop.ftl import EventKind, Ftl, FtlConfig, MapEntry, MappingTable, sub_requests
from voltdrop.workload import Op, WorkloadSpec, make_packet

MiB = 1 << 20
MS = 1_000_000


# ---------------------------------------------------------------- mapping

def test_contiguous_writes_merge():
    m = MappingTable()
    m.update(0, 8, 100)
    m.update(8, 8, 108)
    assert m.entries() == [MapEntry(0, 16, 100)]


def test_noncontiguous_stay_single():
    m = MappingTable()
    m.update(0, 1, 10)
    m.update(100, 1, 11)
    assert m.entries() == [MapEntry(0, 1, 10), MapEntry(100, 1, 11)]


def test_overwrite_inside_range_splits():
    m = MappingTable()
    m.update(0, 16, 200)
    m.update(4, 1, 999)
    assert m.entries() == [MapEntry(0, 4, 200), MapEntry(4, 1, 999), MapEntry(5, 11, 205)]


def test_lookup():
    m = MappingTable()
    m.update(0, 16, 300)
    assert m.lookup(5) == 305
    assert m.lookup(16) is None


def test_max_range_caps_merging():
    m = MappingTable(max_range=8)
    m.update(0, 8, 0)
    m.update(8, 4, 8)
    assert [e.length for e in m.entries()] == [8, 4]


ops = st.lists(st.tuples(st.sampled_from(["update", "place", "cut"]), st.integers(0, 40),
                         st.integers(1, 12), st.integers(0, 500)), max_size=40)


@settings(max_examples=200)
@given(ops, st.sampled_from([None, 4, 16]))
def test_mapping_matches_flat_model(seq, max_range):
    """Exhaustive page-by-page model: the table must agree on every lpn."""
    m = MappingTable(max_range)
    flat = {}
    for op, lpn, n, ppn in seq:
        if op == "cut":
            m.cut(lpn, n)
            for k in range(n):
                flat.pop(lpn + k, None)
        else:
            getattr(m, op)(lpn, n, ppn)
            for k in range(n):
                flat[lpn + k] = ppn + k
        assert m.as_dict() == flat
        assert all(m.lookup(l) == flat.get(l) for l in range(0, 60))
        es = m.entries()
        assert all(a.end <= b.lpn for a, b in zip(es, es[1:]))
        if max_range is not None:
            merged = [e for e in es if e.length > max_range]
            # only an explicitly placed extent may exceed the cap
            assert all(any(o == "place" or n > max_range for o, _, n, _ in seq) for _ in merged)


# ------------------------------------------------------------ device helpers

def device(**kw) -> Ftl:
    return Ftl(FlashArray(FlashGeometry(64, 64)), FtlConfig(**kw))


def drain(ftl: Ftl, until: int):
    events = []
    while True:
        t = ftl.next_wakeup()
        if t is None or t > until:
            events += ftl.tick(until)
            return events
        events += ftl.tick(t)


def test_zero_submissions_no_events():
    ftl = device()
    assert drain(ftl, 10 * MS) == []


def test_write_acked_while_cache_resident():
    ftl = device()
    w = make_packet(0, Op.WRITE, 0, 8192, 1)
    evs = ftl.submit(w, 0) + drain(ftl, 0)
    assert [e.kind for e in evs if e.sub_idx == 0] == [EventKind.QUEUED, EventKind.DISPATCHED,
                                                       EventKind.COMPLETED]
    assert ftl.cache_used == 8192  # acknowledged, not yet on flash


def test_unavailable_submit_errors():
    ftl = device()
    w = make_packet(0, Op.WRITE, 0, 256 * 1024, 1)
    evs = ftl.submit(w, 0, available=False)
    assert [e.kind for e in evs] == [EventKind.ERRORED] * len(sub_requests(w))


def test_read_unwritten_is_erased():
    ftl = device()
    assert ftl.read_region(10, 2) == [ftl.flash.erased] * 2


def test_three_cached_writes_are_fwa_candidates():
    ftl = device()
    for i in range(3):
        ftl.submit(make_packet(i, Op.WRITE, i * 8 * 100, 4096, 1), 0)
    drain(ftl, MS // 2)  # all admitted, none programmed yet
    lost = ftl.on_power_loss(1)
    assert sorted(lost["fwa_candidates"]) == [0, 1, 2]


def test_idle_persisted_fault_loses_nothing():
    ftl = device()
    ftl.submit(make_packet(0, Op.WRITE, 0, 8192, 1), 0)
    # a second, disjoint write closes the first extent so it can persist
    ftl.submit(make_packet(1, Op.WRITE, 800, 8192, 2), MS)
    drain(ftl, 600 * MS)
    before = ftl.read_region(0, 2)
    lost = ftl.on_power_loss(700 * MS)
    ftl.on_power_restore(2000 * MS)
    assert lost["fwa_candidates"] == [] and lost["corrupted"] == []
    assert ftl.read_region(0, 2) == before


def test_open_extent_is_not_persisted():
    ftl = device()
    ftl.submit(make_packet(0, Op.WRITE, 0, 8192, 1), 0)
    drain(ftl, 600 * MS)
    assert ftl.on_power_loss(700 * MS)["map_lost"]


def test_consecutive_episodes_idempotent():
    ftl = device()
    ftl.submit(make_packet(0, Op.WRITE, 0, 8192, 1), 0)
    drain(ftl, 600 * MS)
    ftl.submit(make_packet(1, Op.WRITE, 800, 8192, 1), 610 * MS)
    drain(ftl, 610 * MS)
    ftl.on_power_loss(620 * MS)
    ftl.on_power_restore(2000 * MS)
    first = (ftl.read_region(0, 2), ftl.read_region(100, 2))
    ftl.on_power_loss(5000 * MS)
    ftl.on_power_restore(7000 * MS)
    assert (ftl.read_region(0, 2), ftl.read_region(100, 2)) == first


def test_mid_program_cut_exposes_corrupt_page():
    ftl = device(cache_enabled=False, map_persist_ms=0)
    w = make_packet(0, Op.WRITE, 0, 4096, 1)
    ftl.submit(w, 0)
    drain(ftl, 0)  # dispatched; program takes 1.6ms
    ftl.on_power_loss(800_000)
    ftl.on_power_restore(2000 * MS)
    ppn = ftl.lookup(0)
    assert ppn is not None
    assert ftl.flash.page_state(*divmod(ppn, 64)).kind is PageKind.CORRUPTED
    assert ftl.read_region(0, 1) == [ftl.flash.corrupt]


def test_sequential_range_loses_at_least_random():
    """One open 256-page range vs 256 scattered singles, same persist timing."""
    def lost_pages(lpns):
        ftl = device(max_range_pages=None)
        for i, l in enumerate(lpns):
            ftl.submit(make_packet(i, Op.WRITE, l * 8, 4096, 1), i * MS)
            drain(ftl, i * MS)
        drain(ftl, 600 * MS)  # one persist at 500ms, every program finished
        ftl.on_power_loss(600 * MS)
        ftl.on_power_restore(2000 * MS)
        return sum(ftl.lookup(l) is None for l in lpns)

    seq = lost_pages(list(range(256)))
    rnd = lost_pages([(i * 37) % 4000 * 3 for i in range(256)])
    assert seq == 256
    assert seq >= rnd


# ------------------------------------------------------------- rate limit

@settings(max_examples=6, deadline=None)
@given(st.sampled_from([500, 2000, 6000, 7000, 9000, 12000]))
def test_responded_iops_saturates(rate):
    horizon_s = 0.5
    spec = WorkloadSpec(wss=64 * MiB, req_size=4096, requested_iops=rate,
                        n_requests=round(rate * horizon_s))
    rec = simulate(RunConfig(workload=spec, geometry=FlashGeometry(256, 256)))
    assert responded_iops(rec) == pytest.approx(min(rate, 6900), rel=0.02)


def test_write_through_limit_has_no_fwa():
    spec = WorkloadSpec(wss=64 * MiB, n_requests=200, requested_iops=20, seed=3)
    cfg = RunConfig(workload=spec, ftl=FtlConfig(cache_bytes=0, map_persist_ms=0),
                    geometry=FlashGeometry(256, 256), n_faults=3, fault_seed=4)
    rep = summarize(analyze(simulate(cfg)), cutoffs=())
    assert rep.fwa == 0


def test_gc_survives_sustained_overwrites():
    """Tiny array, working set at half capacity: GC must keep up without reusing an erasing block."""
    spec = WorkloadSpec(wss=8 * MiB, req_size=64 * 1024, requested_iops=3000, n_requests=3000, seed=5)
    rec = simulate(RunConfig(workload=spec, geometry=FlashGeometry(64, 64), cutoffs_ms=(300.0,)))
    assert rec.stats["gc_runs"] > 0
    assert len(analyze(rec)) == 3000
