"""Discrete-event run loop tying the host, the power supply and the device together."""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field

from .checksum import fold_pages
from .flash import FlashArray, FlashGeometry, FlashTiming
from .ftl import DeviceEvent, EventKind, Ftl, FtlConfig, sub_requests
from .power import FaultSchedule, Mode, VoltageModel, power_state_at, schedule_faults
from .workload import NS_PER_S, DataPacket, WorkloadSpec, generate

log = logging.getLogger(__name__)

NS_PER_MS = 1_000_000


@dataclass
class RunConfig:
    workload: WorkloadSpec = field(default_factory=WorkloadSpec)
    ftl: FtlConfig = field(default_factory=FtlConfig)
    geometry: FlashGeometry = field(default_factory=FlashGeometry)
    timing: FlashTiming = field(default_factory=FlashTiming)
    p_corrupt_on_interrupt: float = 1.0
    voltage: VoltageModel = field(default_factory=VoltageModel)
    n_faults: int = 0
    fault_seed: int = 1
    restore_delay_ms: float = 500.0
    window_ms: float = 1000.0
    cutoffs_ms: tuple[float, ...] | None = None  # explicit schedule, bypasses the scheduler

    def schedule(self) -> FaultSchedule:
        if self.cutoffs_ms is not None:
            return FaultSchedule(tuple(self.cutoffs_ms), self.restore_delay_ms)
        horizon_ms = self.workload.horizon_ns / NS_PER_MS
        return schedule_faults(self.fault_seed, self.n_faults, horizon_ms,
                               self.restore_delay_ms, self.voltage)


@dataclass
class RunRecord:
    """Everything the analyzer needs from one simulated run."""

    packets: list[DataPacket]
    trace: list[DeviceEvent]
    readbacks: dict[int, int]
    verified_at: dict[int, int]
    neighbor_pages: dict[int, dict[int, list[int]]]
    cutoffs: list[int]
    restores: list[int]
    horizon: int
    window: int
    page_size: int = 4096
    journal: list | None = None
    stats: dict = field(default_factory=dict)

    def packet(self, req_id: int) -> DataPacket:
        return self.packets[req_id]


class _Host:
    """Host-side bookkeeping: snapshots taken when writes become visible."""

    def __init__(self, ftl: Ftl, page_size: int):
        self.ftl = ftl
        self.page_size = page_size
        self.pending: dict[int, set[int]] = {}  # lpn -> unverified write ids
        self.packets: dict[int, DataPacket] = {}
        self.readbacks: dict[int, int] = {}
        self.applied_at: dict[int, int] = {}
        self.verified_at: dict[int, int] = {}

    def region(self, pkt: DataPacket) -> int:
        pages = self.ftl.read_region(pkt.lpn, pkt.n_pages)
        return fold_pages([p.crc for p in pages], self.page_size)

    def before_apply(self, pkt: DataPacket, now: int):
        earlier = set()
        for lpn in range(pkt.lpn, pkt.lpn + pkt.n_pages):
            ids = self.pending.get(lpn)
            if ids:
                earlier |= ids
        for wid in sorted(earlier):
            self.verify(wid, now)
        pkt.checksum_before = self.region(pkt)
        self.applied_at[pkt.id] = now
        self.packets[pkt.id] = pkt
        for lpn in range(pkt.lpn, pkt.lpn + pkt.n_pages):
            self.pending.setdefault(lpn, set()).add(pkt.id)

    def verify(self, wid: int, now: int):
        pkt = self.packets[wid]
        value = self.region(pkt)
        self.readbacks[wid] = value
        self.verified_at[wid] = now
        pkt.checksum_after = value
        for lpn in range(pkt.lpn, pkt.lpn + pkt.n_pages):
            ids = self.pending.get(lpn)
            if ids is not None:
                ids.discard(wid)
                if not ids:
                    del self.pending[lpn]

    def verify_all(self, now: int):
        ids = set()
        for s in self.pending.values():
            ids |= s
        for wid in sorted(ids):
            self.verify(wid, now)


def simulate(cfg: RunConfig, journal: bool = False) -> RunRecord:
    spec = cfg.workload
    schedule = cfg.schedule()
    flash = FlashArray(cfg.geometry, cfg.timing, cfg.p_corrupt_on_interrupt, seed=spec.seed)
    ftl = Ftl(flash, cfg.ftl, journal=journal)
    host = _Host(ftl, cfg.geometry.page_size)
    ftl.before_apply = host.before_apply
    model = cfg.voltage

    packets = list(generate(spec))
    chained = spec.sequence is not None
    cutoffs = [round(c * NS_PER_MS) for c in schedule.cutoffs]
    t_unavail = round(model.t_unavailable * NS_PER_MS)
    t_restore = round((model.t_zero_loaded + schedule.restore_delay) * NS_PER_MS)
    power_events = []
    for c in cutoffs:
        power_events += [(c, 0, "cut"), (c + t_unavail, 1, "unavailable"), (c + t_restore, 2, "restore")]
    power_events.sort()
    power_q = deque(power_events)
    restores = [c + t_restore for c in cutoffs]
    window = round(cfg.window_ms * NS_PER_MS)

    trace: list[DeviceEvent] = []
    subs_left: dict[int, int] = {}
    neighbor_pages: dict[int, dict[int, list[int]]] = {}
    recent_acks: deque[tuple[int, int]] = deque()
    nxt = 0
    gate_open = True  # sequence workloads wait for the previous request to finish
    gate_time = 0

    def record(events):
        nonlocal gate_open, gate_time
        for ev in events:
            trace.append(ev)
            if ev.kind is EventKind.COMPLETED:
                subs_left[ev.req_id] -= 1
                if subs_left[ev.req_id] == 0:
                    pkt = packets[ev.req_id]
                    if pkt.is_write:
                        recent_acks.append((ev.t, pkt.id))
                    if chained and nxt == ev.req_id + 1:
                        gate_open, gate_time = True, ev.t
            elif ev.kind is EventKind.ERRORED:
                if subs_left.get(ev.req_id, 0) > 0:
                    subs_left[ev.req_id] = -1
                    if chained and nxt == ev.req_id + 1:
                        gate_open, gate_time = True, ev.t

    def power_at(t: int):
        return power_state_at(schedule, model, t / NS_PER_MS)

    while True:
        t_issue = None
        if nxt < len(packets) and gate_open:
            t_issue = max(packets[nxt].issue_time, gate_time) if chained else packets[nxt].issue_time
        t_power = power_q[0][0] if power_q else None
        t_dev = ftl.next_wakeup()
        if t_issue is None and t_power is None and not ftl.busy:
            break
        t = min(x for x in (t_issue, t_power, t_dev) if x is not None)
        record(ftl.tick(t))
        while power_q and power_q[0][0] == t:
            _, _, what = power_q.popleft()
            if what == "cut":
                ftl.on_power_loss(t)
                snap = {}
                while recent_acks and recent_acks[0][0] < t - window:
                    recent_acks.popleft()
                for ack_t, wid in recent_acks:
                    if wid in host.readbacks:
                        pkt = packets[wid]
                        snap[wid] = [p.crc for p in ftl.read_region(pkt.lpn, pkt.n_pages)]
                neighbor_pages[t] = snap
                recent_acks.clear()
            elif what == "unavailable":
                record(ftl.fail_outstanding(t))
            else:
                ftl.on_power_restore(t)
        if t_issue == t:
            pkt = packets[nxt]
            pkt.issue_time = t
            nxt += 1
            subs_left[pkt.id] = len(sub_requests(pkt, cfg.geometry.page_size))
            state, volts = power_at(t)
            available = state.mode is not Mode.OFF and volts >= model.v_unavailable
            if chained:
                gate_open = False
            record(ftl.submit(pkt, t, available))

    end = max(trace[-1].t if trace else 0, power_events[-1][0] if power_events else 0)
    host.verify_all(end)
    horizon = spec.horizon_ns
    for c in cutoffs:
        neighbor_pages.setdefault(c, {})
    stats = {
        "gc_runs": ftl.gc_runs,
        "persists": ftl.persists,
        "end_time": end,
        "dispatches": len(ftl.dispatch_times),
    }
    return RunRecord(packets, trace, host.readbacks, host.verified_at, neighbor_pages, cutoffs, restores,
                     horizon, window, cfg.geometry.page_size, ftl.journal, stats)
