"""SSD controller model: mapping table, write-back cache, persistence, GC.

Durability of a write needs two things: its flash program jobs completed,
and the map entries pointing at those pages persisted. Everything between
acknowledgement and that point is lost on a power cut.

Mapping is kept per logical page (4KiB). Writes that continue the most
recently updated entry both logically and physically are merged into one
range entry, which is what sequential workloads produce. That growing
entry stays open, and the periodic map flush skips it until it is sealed,
either by an unrelated update or by reaching ``max_range_pages``. A cut
while a range is open therefore loses the whole extent.
"""

from __future__ import annotations

import bisect
import enum
import heapq
import itertools
import logging
from collections import deque
from dataclasses import dataclass

from .checksum import fold_pages
from .flash import FlashArray, FlashJob, JobKind, PageData
from .workload import SECTORS_PER_PAGE, DataPacket, Op

log = logging.getLogger(__name__)

SUB_REQUEST_BYTES = 128 * 1024
READ_LATENCY_NS = 100_000


class EventKind(enum.Enum):
    QUEUED = "Q"
    DISPATCHED = "D"
    COMPLETED = "C"
    ERRORED = "E"


@dataclass(frozen=True, slots=True)
class DeviceEvent:
    t: int
    kind: EventKind
    req_id: int
    sub_idx: int
    lba: int
    length: int

    def line(self) -> str:
        return f"{self.t} {self.req_id} {self.sub_idx} {self.kind.value} {self.lba} {self.length}"


def sub_requests(packet: DataPacket, page_size: int = 4096):
    """``(sub_idx, lpn, n_pages)`` for each 128KiB slice of the request."""
    per_sub = SUB_REQUEST_BYTES // page_size
    out = []
    lpn = packet.lba // SECTORS_PER_PAGE
    remaining = packet.length // page_size
    idx = 0
    while remaining > 0:
        n = min(per_sub, remaining)
        out.append((idx, lpn, n))
        lpn += n
        remaining -= n
        idx += 1
    return out


@dataclass(frozen=True, slots=True)
class MapEntry:
    lpn: int
    length: int
    ppn: int

    @property
    def is_range(self) -> bool:
        return self.length > 1

    @property
    def end(self) -> int:
        return self.lpn + self.length


class MappingTable:
    """Logical page -> physical page map made of Single and Range entries."""

    def __init__(self, max_range: int | None = None):
        self.max_range = max_range
        self._starts: list[int] = []
        self._ent: dict[int, MapEntry] = {}

    def __len__(self):
        return len(self._starts)

    def __eq__(self, other):
        return isinstance(other, MappingTable) and self._ent == other._ent

    def copy(self) -> MappingTable:
        t = MappingTable(self.max_range)
        t._starts = self._starts.copy()
        t._ent = self._ent.copy()
        return t

    def entries(self) -> list[MapEntry]:
        return [self._ent[s] for s in self._starts]

    def get(self, start: int) -> MapEntry | None:
        return self._ent.get(start)

    def lookup(self, lpn: int) -> int | None:
        i = bisect.bisect_right(self._starts, lpn) - 1
        if i < 0:
            return None
        e = self._ent[self._starts[i]]
        if lpn < e.end:
            return e.ppn + (lpn - e.lpn)
        return None

    def segments(self, lpn: int, n: int) -> list[tuple[int, int, int | None]]:
        """Cover ``[lpn, lpn+n)`` with ``(start, length, ppn or None)`` runs."""
        out = []
        end = lpn + n
        i = max(bisect.bisect_right(self._starts, lpn) - 1, 0)
        cur = lpn
        starts = self._starts
        while cur < end:
            if i < len(starts) and starts[i] < end:
                e = self._ent[starts[i]]
                if e.end <= cur:
                    i += 1
                    continue
                if e.lpn > cur:
                    out.append((cur, e.lpn - cur, None))
                    cur = e.lpn
                hi = min(e.end, end)
                out.append((cur, hi - cur, e.ppn + (cur - e.lpn)))
                cur = hi
                i += 1
            else:
                out.append((cur, end - cur, None))
                cur = end
        return out

    def _insert(self, e: MapEntry):
        bisect.insort(self._starts, e.lpn)
        self._ent[e.lpn] = e

    def _remove(self, start: int):
        i = bisect.bisect_left(self._starts, start)
        del self._starts[i]
        del self._ent[start]

    def cut(self, lpn: int, n: int) -> None:
        """Drop any mapping for ``[lpn, lpn+n)``, splitting entries that straddle it."""
        end = lpn + n
        i = max(bisect.bisect_right(self._starts, lpn) - 1, 0)
        hit = []
        while i < len(self._starts) and self._starts[i] < end:
            e = self._ent[self._starts[i]]
            if e.end > lpn:
                hit.append(e)
            i += 1
        for e in hit:
            self._remove(e.lpn)
            if e.lpn < lpn:
                self._insert(MapEntry(e.lpn, lpn - e.lpn, e.ppn))
            if e.end > end:
                self._insert(MapEntry(end, e.end - end, e.ppn + (end - e.lpn)))

    def place(self, lpn: int, n: int, ppn: int) -> MapEntry:
        """Map the extent without trying to merge it into a neighbour."""
        self.cut(lpn, n)
        e = MapEntry(lpn, n, ppn)
        self._insert(e)
        return e

    def update(self, lpn: int, n: int, ppn: int, extend: MapEntry | None = None) -> MapEntry:
        """Map ``[lpn, lpn+n)`` onto ``[ppn, ppn+n)`` and return the entry now holding it.

        The extent is merged into ``extend`` (default: whichever entry ends
        exactly at ``lpn``) when it continues it both logically and
        physically and the merged length stays within ``max_range``.
        """
        self.cut(lpn, n)
        prev = extend
        if prev is None:
            i = bisect.bisect_right(self._starts, lpn - 1) - 1
            if i >= 0:
                prev = self._ent[self._starts[i]]
        if (prev is not None and self._ent.get(prev.lpn) == prev and prev.end == lpn
                and prev.ppn + prev.length == ppn
                and (self.max_range is None or prev.length + n <= self.max_range)):
            self._remove(prev.lpn)
            e = MapEntry(prev.lpn, prev.length + n, prev.ppn)
        else:
            e = MapEntry(lpn, n, ppn)
        self._insert(e)
        return e

    def as_dict(self) -> dict[int, int]:
        out = {}
        for e in self.entries():
            for k in range(e.length):
                out[e.lpn + k] = e.ppn + k
        return out


@dataclass
class FtlConfig:
    cache_bytes: int = 16 << 20
    cache_enabled: bool = True
    map_persist_ms: float = 500.0
    service_rate_iops: float = 6900.0
    gc_threshold: float = 0.10
    max_range_pages: int = 128


@dataclass(eq=False)
class _Write:
    packet: DataPacket
    subs: list
    next_sub: int = 0
    acked: bool = False


class BlockState(enum.Enum):
    FREE = 0
    OPEN = 1
    FULL = 2
    ERASING = 3


class Ftl:
    """One simulated device. Drive it with ``submit`` and ``tick``.

    ``before_apply(packet, now)`` is called right before a write becomes
    visible in the device view, which is where the host harness takes its
    region snapshots.
    """

    def __init__(self, flash: FlashArray, config: FtlConfig | None = None, journal: bool = False):
        self.flash = flash
        self.cfg = config or FtlConfig()
        # zero capacity is the write-through limit, same as disabling the cache
        self.cache_on = self.cfg.cache_enabled and self.cfg.cache_bytes > 0
        g = flash.geometry
        self.page_size = g.page_size
        self.ppb = g.pages_per_block
        self.map = MappingTable(self.cfg.max_range_pages)
        self.durable = MappingTable(self.cfg.max_range_pages)
        self._open_entry: MapEntry | None = None
        self.before_apply = None
        self.journal: list | None = [] if journal else None

        self.power_on = True
        self._queue: deque[tuple[DataPacket, int]] = deque()
        self._outstanding: dict[int, tuple[DataPacket, set]] = {}
        self._cache: dict[int, _Write] = {}
        self._cache_index: dict[int, tuple[DataPacket, int]] = {}
        self.cache_used = 0
        self._period = 1e9 / self.cfg.service_rate_iops
        self._next_slot = 0.0
        self._persist_ns = round(self.cfg.map_persist_ms * 1e6)
        self._next_persist = self._persist_ns if self._persist_ns > 0 else None
        self._heap: list = []
        self._seq = itertools.count()
        self._programming: dict[FlashJob, None] = {}
        self._erase_jobs: dict[int, FlashJob] = {}
        self._inflight_per_block: dict[int, int] = {}

        self._block_state = [BlockState.FREE] * g.blocks
        self._free_blocks: deque[int] = deque(range(g.blocks))
        self._cur_block = self._free_blocks.popleft()
        self._block_state[self._cur_block] = BlockState.OPEN
        self._cur_page = 0
        self.dispatch_times: list[int] = []
        self.gc_runs = 0
        self.persists = 0

    # ------------------------------------------------------------------ view

    @property
    def available(self) -> bool:
        return self.power_on

    @property
    def busy(self) -> bool:
        """True while requests are queued or device jobs are pending."""
        return bool(self._heap or self._queue)

    def lookup(self, lpn: int) -> int | None:
        return self.map.lookup(lpn)

    def read_region(self, lpn: int, n: int) -> list[PageData]:
        """Content of each logical page as the host would read it right now."""
        out = []
        index = self._cache_index
        read_ppn = self.flash.read_ppn
        erased = self.flash.erased
        for start, length, ppn in self.map.segments(lpn, n):
            for k in range(length):
                hit = index.get(start + k)
                if hit is not None:
                    pkt, idx = hit
                    out.append(PageData(pkt.page_crcs[idx], (pkt.id, idx)))
                elif ppn is None:
                    out.append(erased)
                else:
                    out.append(read_ppn(ppn + k))
        return out

    def region_checksum(self, lba: int, length: int) -> int:
        pages = self.read_region(lba // SECTORS_PER_PAGE, length // self.page_size)
        return fold_pages([p.crc for p in pages], self.page_size)

    # ------------------------------------------------------------ host side

    def submit(self, packet: DataPacket, now: int, available: bool = True) -> list[DeviceEvent]:
        subs = sub_requests(packet, self.page_size)
        if not available:
            return [DeviceEvent(now, EventKind.ERRORED, packet.id, i, lpn * SECTORS_PER_PAGE,
                                n * self.page_size) for i, lpn, n in subs]
        self._queue.append((packet, now))
        self._outstanding[packet.id] = (packet, {i for i, _, _ in subs})
        return [DeviceEvent(now, EventKind.QUEUED, packet.id, i, lpn * SECTORS_PER_PAGE,
                            n * self.page_size) for i, lpn, n in subs]

    def fail_outstanding(self, now: int) -> list[DeviceEvent]:
        """Error every request the host is still waiting on."""
        events = []
        for pid in sorted(self._outstanding):
            packet, pending = self._outstanding[pid]
            for i, lpn, n in sub_requests(packet, self.page_size):
                if i in pending:
                    events.append(DeviceEvent(now, EventKind.ERRORED, pid, i,
                                              lpn * SECTORS_PER_PAGE, n * self.page_size))
        self._outstanding.clear()
        self._queue.clear()
        return events

    def outstanding_ids(self) -> list[int]:
        return sorted(self._outstanding)

    # ------------------------------------------------------------ event loop

    def _push(self, t: int, kind: str, payload):
        heapq.heappush(self._heap, (t, next(self._seq), kind, payload))

    def _intake_time(self) -> int | None:
        if not self.power_on or not self._queue:
            return None
        head, queued_at = self._queue[0]
        if (head.op is Op.WRITE and self.cache_on and self.cache_used > 0
                and self.cache_used + head.length > self.cfg.cache_bytes):
            return None  # back-pressure: wait for a cache entry to drain
        return max(queued_at, int(-(-self._next_slot // 1)))

    def next_wakeup(self) -> int | None:
        cands = []
        if self._heap:
            cands.append(self._heap[0][0])
        if self.power_on and self._next_persist is not None:
            cands.append(self._next_persist)
        t = self._intake_time()
        if t is not None:
            cands.append(t)
        return min(cands) if cands else None

    def tick(self, now: int) -> list[DeviceEvent]:
        """Advance internal work up to and including ``now``."""
        events: list[DeviceEvent] = []
        while True:
            t_job = self._heap[0][0] if self._heap else None
            t_persist = self._next_persist if self.power_on else None
            t_in = self._intake_time()
            t = min((x for x in (t_job, t_persist, t_in) if x is not None), default=None)
            if t is None or t > now:
                return events
            if t_job == t:
                _, _, kind, payload = heapq.heappop(self._heap)
                self._handle(t, kind, payload, events)
            elif t_persist == t:
                self.persist(t)
                self._next_persist = t + self._persist_ns
            else:
                self._intake(t, events)

    def _emit(self, events, t, kind, packet, sub):
        i, lpn, n = sub
        events.append(DeviceEvent(t, kind, packet.id, i, lpn * SECTORS_PER_PAGE, n * self.page_size))
        if kind is EventKind.COMPLETED:
            entry = self._outstanding.get(packet.id)
            if entry is not None:
                entry[1].discard(i)
                if not entry[1]:
                    del self._outstanding[packet.id]

    def _intake(self, t: int, events):
        packet, _ = self._queue.popleft()
        self._next_slot = max(self._next_slot, t) + self._period
        self.dispatch_times.append(t)
        subs = sub_requests(packet, self.page_size)
        if packet.op is Op.READ:
            for s in subs:
                self._emit(events, t, EventKind.DISPATCHED, packet, s)
            self._push(t + READ_LATENCY_NS, "read", (packet, subs))
            return
        if self.before_apply is not None:
            self.before_apply(packet, t)
        if self.journal is not None:
            self.journal.append(("apply", t, packet.id))
        w = _Write(packet, subs)
        self._cache[packet.id] = w
        if self.cache_on:
            self.cache_used += packet.length
        for k in range(packet.n_pages):
            self._cache_index[packet.lpn + k] = (packet, k)
        for s in subs:
            self._emit(events, t, EventKind.DISPATCHED, packet, s)
        if self.cache_on:
            w.acked = True
            packet.completion_time = t
            for s in subs:
                self._emit(events, t, EventKind.COMPLETED, packet, s)
        self._dispatch_sub(w, t)

    def _dispatch_sub(self, w: _Write, t: int):
        i, lpn, n = w.subs[w.next_sub]
        jobs = []
        k0 = lpn - w.packet.lpn
        done = 0
        while done < n:
            ppn, run = self._allocate(n - done, t)
            for k in range(run):
                block, page = divmod(ppn + k, self.ppb)
                idx = k0 + done + k
                data = PageData(w.packet.page_crcs[idx], (w.packet.id, idx))
                job = self.flash.begin_program(block, page, data, t)
                self._programming[job] = None
                self._inflight_per_block[block] = self._inflight_per_block.get(block, 0) + 1
                jobs.append(job)
            # pages already superseded by a later write must keep pointing at it
            index = self._cache_index
            k = 0
            while k < run:
                if index.get(lpn + done + k, (None,))[0] is not w.packet:
                    k += 1
                    continue
                j = k
                while j < run and index.get(lpn + done + j, (None,))[0] is w.packet:
                    j += 1
                self.map_update(lpn + done + k, j - k, ppn + k, t)
                k = j
            done += run
        self._push(t + self.flash.timing.program_ns, "sub", (w, jobs))

    def _handle(self, t: int, kind: str, payload, events):
        if kind == "read":
            packet, subs = payload
            packet.completion_time = t
            for s in subs:
                self._emit(events, t, EventKind.COMPLETED, packet, s)
        elif kind == "sub":
            w, jobs = payload
            for job in jobs:
                self.flash.complete_job(job)
                self._programming.pop(job, None)
                self._inflight_per_block[job.block] -= 1
            packet = w.packet
            if not self.cache_on:
                self._emit(events, t, EventKind.COMPLETED, packet, w.subs[w.next_sub])
            w.next_sub += 1
            if w.next_sub < len(w.subs):
                self._dispatch_sub(w, t)
                return
            if not w.acked:
                w.acked = True
                packet.completion_time = t
            self._cache.pop(packet.id, None)
            if self.cache_on:
                self.cache_used -= packet.length
            index = self._cache_index
            for k in range(packet.n_pages):
                hit = index.get(packet.lpn + k)
                if hit is not None and hit[0] is packet:
                    del index[packet.lpn + k]
        elif kind == "erase":
            # the block may have been freed early and picked again since
            if self._erase_jobs.get(payload.block) is payload:
                self._push_erase_now(payload)

    # ------------------------------------------------------------- mapping

    def map_update(self, lpn: int, n: int, ppn: int, now: int | None = None) -> MapEntry:
        e = self.map.update(lpn, n, ppn, extend=self._open_entry)
        self._open_entry = e if (self.cfg.max_range_pages is None
                                 or e.length < self.cfg.max_range_pages) else None
        if self._persist_ns <= 0:
            self.persist(now if now is not None else 0, full=True)
        return e

    def persist(self, now: int, full: bool = False) -> None:
        """Write the mapping table to flash. The open range is skipped unless ``full``."""
        new = self.map.copy()
        open_e = self._open_entry
        if full:
            self._open_entry = None
        elif open_e is not None and self.map.get(open_e.lpn) == open_e:
            new.cut(open_e.lpn, open_e.length)
            for start, length, ppn in self.durable.segments(open_e.lpn, open_e.length):
                if ppn is not None:
                    new.place(start, length, ppn)
        if self.journal is not None:
            self._journal_persist(now, new)
        self.durable = new
        self.persists += 1

    def _journal_persist(self, now: int, new: MappingTable):
        old_set = set(self.durable.entries())
        new_set = set(new.entries())
        changes = {}
        for e in old_set - new_set:
            for k in range(e.length):
                changes[e.lpn + k] = None
        for e in new_set - old_set:
            for k in range(e.length):
                changes[e.lpn + k] = self.flash.token(e.ppn + k)
        changes = {lpn: tok for lpn, tok in changes.items()
                   if self.durable.lookup(lpn) != new.lookup(lpn)}
        if changes:
            self.journal.append(("persist", now, changes))

    # ----------------------------------------------------------- allocation

    def free_pages(self) -> int:
        return len(self._free_blocks) * self.ppb + (self.ppb - self._cur_page)

    def _allocate(self, want: int, now: int, for_gc: bool = False) -> tuple[int, int]:
        """Next run of consecutive erased pages, at most ``want`` long."""
        if self._cur_page >= self.ppb:
            self._block_state[self._cur_block] = BlockState.FULL
            if not for_gc and self.free_pages() - self.ppb < self.cfg.gc_threshold * self.flash.geometry.n_pages:
                self._cur_page = self.ppb
                self.collect_garbage(now)
            if self._cur_page >= self.ppb:  # relocation may already have opened a block
                if not self._free_blocks:
                    raise RuntimeError("flash array full; no free block left")
                self._cur_block = self._free_blocks.popleft()
                self._block_state[self._cur_block] = BlockState.OPEN
                self._cur_page = 0
        run = min(want, self.ppb - self._cur_page)
        ppn = self._cur_block * self.ppb + self._cur_page
        self._cur_page += run
        return ppn, run

    def collect_garbage(self, now: int) -> int:
        """Reclaim blocks until free space is back above the threshold.

        The map is flushed before relocation and again before each erase so
        neither the volatile nor the durable map can point into a block that
        is being erased. Returns the number of blocks reclaimed.
        """
        target = self.cfg.gc_threshold * self.flash.geometry.n_pages
        reclaimed = 0
        self.gc_runs += 1
        self.persist(now, full=True)
        while (len(self._free_blocks) + len(self._erase_jobs)) * self.ppb < target + self.ppb:
            valid: dict[int, list[tuple[int, int]]] = {}
            for e in self.map.entries():
                for k in range(e.length):
                    b = (e.ppn + k) // self.ppb
                    valid.setdefault(b, []).append((e.ppn + k, e.lpn + k))
            candidates = [b for b, st in enumerate(self._block_state)
                          if st is BlockState.FULL and not self._inflight_per_block.get(b)]
            if not candidates:
                break
            victim = min(candidates, key=lambda b: (len(valid.get(b, ())), b))
            moving = sorted(valid.get(victim, ()))
            if len(moving) >= self.ppb:
                log.debug("garbage collection found no reclaimable block")
                break
            for src, lpn in moving:
                dst, _ = self._allocate(1, now, for_gc=True)
                self.flash.relocate(src, dst)
                self.map.place(lpn, 1, dst)
            if moving:
                self._open_entry = None
                self.persist(now, full=True)
            self._block_state[victim] = BlockState.ERASING
            job = self.flash.begin_erase(victim, now)
            self._erase_jobs[victim] = job
            self._push(job.end, "erase", job)
            reclaimed += 1
            if not self._free_blocks and reclaimed:
                # erase completes later; the caller needs a block right now
                self._push_erase_now(job)
        return reclaimed

    def _push_erase_now(self, job: FlashJob):
        self.flash.complete_job(job)
        self._erase_jobs.pop(job.block, None)
        self._block_state[job.block] = BlockState.FREE
        self._free_blocks.append(job.block)

    # ---------------------------------------------------------------- power

    def on_power_loss(self, now: int) -> dict:
        """Supply cut: volatile state is gone and running flash jobs are interrupted."""
        lost_cached = [w.packet.id for w in self._cache.values() if w.acked]
        corrupted = []
        for job in list(self._programming):
            self.flash.interrupt_job(job, now - job.start)
            if self.flash.page_state(job.block, job.page).kind.name == "CORRUPTED":
                corrupted.append(job.data.token)
            self._inflight_per_block[job.block] -= 1
        self._programming.clear()
        for block, job in list(self._erase_jobs.items()):
            self.flash.interrupt_job(job, now - job.start)
            # a half-erased block is still dirty; GC will pick it again
            self._block_state[block] = BlockState.FULL
            if self.flash.page_state(block, 0).kind.name == "ERASED":
                self._block_state[block] = BlockState.FREE
                self._free_blocks.append(block)
        self._erase_jobs.clear()
        self._heap.clear()
        self._cache.clear()
        self._cache_index.clear()
        self.cache_used = 0
        lost_map = self.map != self.durable
        self.map = self.durable.copy()
        self._open_entry = None
        self.power_on = False
        self._next_persist = None
        if self.journal is not None:
            self.journal.append(("loss", now, corrupted))
        return {"fwa_candidates": lost_cached, "corrupted": corrupted, "map_lost": lost_map}

    def on_power_restore(self, now: int) -> None:
        self.map = self.durable.copy()
        self._cache.clear()
        self._cache_index.clear()
        self.cache_used = 0
        self.power_on = True
        self._next_slot = float(now)
        self._next_persist = now + self._persist_ns if self._persist_ns > 0 else None
        if self.journal is not None:
            self.journal.append(("restore", now))
