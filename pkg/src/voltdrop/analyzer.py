"""Post-run verdicts: completed/notApplied flags and the failure taxonomy.

Everything here is pure post-processing over a finished run. The analyzer
only compares checksums; :func:`oracle_replay` reaches the same verdicts
from write identities alone and exists to cross-check it.
"""

from __future__ import annotations

import bisect
import enum
from collections import defaultdict
from dataclasses import dataclass

from .errors import AnalysisError
from .ftl import DeviceEvent, EventKind, sub_requests
from .workload import DataPacket, Op

TIMEOUT_NS = 30 * 1_000_000_000


class Classification(enum.Enum):
    NONE = "None"
    DATA_FAILURE = "DataFailure"
    FWA = "FWA"
    IO_ERROR = "IoError"


@dataclass
class RequestVerdict:
    req_id: int
    op: Op
    lba: int
    length: int
    completed: bool
    not_applied: bool
    classification: Classification
    evidence: tuple[int | None, int | None, int | None]  # data, before, readback
    detected_at: int | None = None
    reclassified: bool = False

    def csv_row(self) -> list:
        return [self.req_id, self.op.value, self.lba, self.length, int(self.completed),
                int(self.not_applied), self.classification.value]


@dataclass
class FailureReport:
    counts: dict[str, int]
    per_fault: list[dict]
    params: dict
    faults: int
    n_requests: int
    reclassified: int = 0
    responded_iops: float = 0.0

    @property
    def data_failure(self) -> int:
        return self.counts["data_failure"]

    @property
    def fwa(self) -> int:
        return self.counts["fwa"]

    @property
    def io_error(self) -> int:
        return self.counts["io_error"]

    @property
    def clean(self) -> int:
        return self.counts["clean"]

    @property
    def data_loss(self) -> int:
        """DataFailure and FWA together; FWA is a kind of data loss."""
        return self.counts["data_failure"] + self.counts["fwa"]

    @property
    def loss_per_fault(self) -> float:
        return self.data_loss / self.faults if self.faults else 0.0


def events_by_request(trace) -> dict[int, list[DeviceEvent]]:
    out: dict[int, list[DeviceEvent]] = defaultdict(list)
    for ev in trace:
        out[ev.req_id].append(ev)
    return out


def compute_flags(packet: DataPacket, events, readback: int | None,
                  page_size: int = 4096) -> tuple[bool, bool]:
    """``(completed, notApplied)`` for one request.

    ``events`` are the trace events of this request. Every sub-request must
    appear in the trace as queued or errored, otherwise the trace is corrupt.
    """
    if not events:
        raise AnalysisError(f"request {packet.id}: no trace entries")
    n_subs = len(sub_requests(packet, page_size))
    seen: dict[int, dict[EventKind, int]] = defaultdict(dict)
    for ev in events:
        if not 0 <= ev.sub_idx < n_subs:
            raise AnalysisError(f"request {packet.id}: unknown sub-request {ev.sub_idx}")
        seen[ev.sub_idx].setdefault(ev.kind, ev.t)
    issue = packet.issue_time
    if issue is None:
        issue = min(ev.t for ev in events)
    completed = True
    for i in range(n_subs):
        kinds = seen.get(i)
        if not kinds:
            raise AnalysisError(f"request {packet.id}: sub-request {i} missing from trace")
        if EventKind.ERRORED not in kinds and EventKind.QUEUED not in kinds:
            raise AnalysisError(f"request {packet.id}: sub-request {i} never queued")
        q = kinds.get(EventKind.QUEUED)
        c = kinds.get(EventKind.COMPLETED)
        if c is not None and q is not None and c < q:
            raise AnalysisError(f"request {packet.id}: sub-request {i} completed before queued")
        if c is None or c - issue > TIMEOUT_NS:
            completed = False
    not_applied = False
    if packet.is_write and readback is not None:
        not_applied = readback != packet.checksum_data and readback == packet.checksum_before
    return completed, not_applied


def classify(flags: tuple[bool, bool], evidence) -> Classification:
    completed, not_applied = flags
    data, _before, readback = evidence
    if not completed:
        return Classification.IO_ERROR
    if not_applied:
        return Classification.FWA
    if data is not None and readback != data:
        return Classification.DATA_FAILURE
    return Classification.NONE


def apply_times(trace) -> dict[int, int]:
    out = {}
    for ev in trace:
        if ev.kind is EventKind.DISPATCHED and ev.req_id not in out:
            out[ev.req_id] = ev.t
    return out


def ack_times(record) -> dict[int, int]:
    """Instant each fully completed request got its last completion."""
    left = {p.id: len(sub_requests(p, record.page_size)) for p in record.packets}
    out = {}
    for ev in record.trace:
        if ev.kind is EventKind.COMPLETED:
            left[ev.req_id] -= 1
            if left[ev.req_id] == 0:
                out[ev.req_id] = ev.t
    return out


def verify_neighbors(record, cutoff: int, verdicts: dict[int, RequestVerdict],
                     applied=None, acks=None) -> list[int]:
    """Reclassify clean writes ACKed shortly before ``cutoff`` whose pages did not survive it.

    A page survives if after restore it holds either the write's own data or
    the data of a later write that was applied before the cutoff. Returns
    the ids turned into DataFailure.
    """
    applied = applied if applied is not None else apply_times(record.trace)
    acks = acks if acks is not None else ack_times(record)
    snaps = record.neighbor_pages.get(cutoff, {})
    packets = record.packets
    later = [p for p in packets if p.is_write and p.id in applied and applied[p.id] < cutoff]
    changed = []
    for wid in sorted(snaps):
        v = verdicts[wid]
        if v.classification is not Classification.NONE or not packets[wid].is_write:
            continue
        ack = acks.get(wid)
        if ack is None or not cutoff - record.window <= ack < cutoff:
            continue
        w = packets[wid]
        for k, crc in enumerate(snaps[wid]):
            if crc == w.page_crcs[k]:
                continue
            lpn = w.lpn + k
            if any(applied[x.id] > applied[wid] and x.lpn <= lpn < x.lpn + x.n_pages
                   and x.page_crcs[lpn - x.lpn] == crc for x in later):
                continue
            v.classification = Classification.DATA_FAILURE
            v.reclassified = True
            v.detected_at = cutoff
            changed.append(wid)
            break
    return changed


def analyze(record) -> list[RequestVerdict]:
    by_req = events_by_request(record.trace)
    verified_at = getattr(record, "verified_at", {}) or {}
    verdicts: dict[int, RequestVerdict] = {}
    for pkt in record.packets:
        events = by_req.get(pkt.id, [])
        readback = record.readbacks.get(pkt.id) if pkt.is_write else None
        flags = compute_flags(pkt, events, readback, record.page_size)
        evidence = (pkt.checksum_data, pkt.checksum_before, readback)
        cls = classify(flags, evidence)
        if cls is Classification.IO_ERROR:
            errs = [ev.t for ev in events if ev.kind is EventKind.ERRORED]
            detected = max(errs) if errs else min(ev.t for ev in events) + TIMEOUT_NS
        else:
            detected = verified_at.get(pkt.id)
        verdicts[pkt.id] = RequestVerdict(pkt.id, pkt.op, pkt.lba, pkt.length, flags[0], flags[1],
                                          cls, evidence, detected)
    applied = apply_times(record.trace)
    acks = ack_times(record)
    for c in record.cutoffs:
        verify_neighbors(record, c, verdicts, applied, acks)
    return [verdicts[p.id] for p in record.packets]


def responded_iops(record) -> float:
    """Completed requests per second of powered time within the horizon."""
    horizon = record.horizon
    done = set()
    left = {p.id: len(sub_requests(p, record.page_size)) for p in record.packets}
    for ev in record.trace:
        if ev.kind is EventKind.COMPLETED and ev.t <= horizon:
            left[ev.req_id] -= 1
            if left[ev.req_id] == 0:
                done.add(ev.req_id)
    down = sum(max(0, min(r, horizon) - min(c, horizon))
               for c, r in zip(record.cutoffs, record.restores))
    up = horizon - down
    return len(done) * 1e9 / up if up > 0 else 0.0


_COUNT_KEY = {
    Classification.NONE: "clean",
    Classification.DATA_FAILURE: "data_failure",
    Classification.FWA: "fwa",
    Classification.IO_ERROR: "io_error",
}


def summarize(verdicts, params: dict | None = None, cutoffs=(), responded: float = 0.0) -> FailureReport:
    """Aggregate verdicts; each failure goes to the latest cutoff at or before its detection."""
    cutoffs = sorted(cutoffs)
    counts = dict.fromkeys(("clean", "data_failure", "fwa", "io_error"), 0)
    per_fault = [{"cutoff_ns": c, "data_failure": 0, "fwa": 0, "io_error": 0} for c in cutoffs]
    for v in verdicts:
        key = _COUNT_KEY[v.classification]
        counts[key] += 1
        if key == "clean" or not cutoffs or v.detected_at is None:
            continue
        i = bisect.bisect_right(cutoffs, v.detected_at) - 1
        if i >= 0:
            per_fault[i][key] += 1
    return FailureReport(counts, per_fault, dict(params or {}), len(cutoffs), len(verdicts),
                         sum(v.reclassified for v in verdicts), responded)


# ------------------------------------------------------------------ oracle

ERASED_V = ("erased",)
CORRUPT_V = ("corrupt",)


def oracle_replay(record) -> dict[int, Classification]:
    """Ground-truth verdicts from a flat per-page version model.

    Works on write identities: the FTL journal says when each write was
    applied, what the durable map held after each persist and which
    in-flight pages were destroyed at each loss. No checksum is consulted.
    """
    if record.journal is None:
        raise AnalysisError("oracle replay needs a run recorded with a journal")
    packets = record.packets
    window = record.window

    # completion, straight from the trace
    n_subs = {p.id: len(sub_requests(p, record.page_size)) for p in packets}
    comp: dict[int, dict[int, int]] = defaultdict(dict)
    queued: dict[int, int] = {}
    for ev in record.trace:
        if ev.kind is EventKind.COMPLETED:
            comp[ev.req_id].setdefault(ev.sub_idx, ev.t)
        elif ev.kind is EventKind.QUEUED:
            queued.setdefault(ev.req_id, ev.t)
    completed = {}
    ack = {}
    for p in packets:
        issue = p.issue_time if p.issue_time is not None else queued.get(p.id, 0)
        cs = comp.get(p.id, {})
        ok = len(cs) == n_subs[p.id] and all(t - issue <= TIMEOUT_NS for t in cs.values())
        completed[p.id] = ok
        if ok:
            ack[p.id] = max(cs.values())

    live: dict[int, tuple] = {}
    durable: dict[int, tuple] = {}
    corrupted: set = set()
    pending: dict[int, set[int]] = defaultdict(set)
    before: dict[int, tuple] = {}
    readback: dict[int, tuple] = {}
    verified: dict[int, int] = {}
    apply_t: dict[int, int] = {}
    order: dict[int, int] = {}
    neighbor_fail: set[int] = set()

    def seen(lpn, table):
        tok = table.get(lpn)
        if tok is None:
            return ERASED_V
        if tok in corrupted or tok == "corrupt":
            return CORRUPT_V
        return tok

    def region(p, table):
        return tuple(seen(l, table) for l in range(p.lpn, p.lpn + p.n_pages))

    def do_verify(wid, t):
        readback[wid] = region(packets[wid], live)
        verified[wid] = t
        p = packets[wid]
        for l in range(p.lpn, p.lpn + p.n_pages):
            pending[l].discard(wid)

    for entry in record.journal:
        kind, t = entry[0], entry[1]
        if kind == "apply":
            p = packets[entry[2]]
            for wid in sorted({w for l in range(p.lpn, p.lpn + p.n_pages) for w in pending[l]}):
                do_verify(wid, t)
            before[p.id] = region(p, live)
            apply_t[p.id] = t
            order[p.id] = len(order)
            for k in range(p.n_pages):
                live[p.lpn + k] = (p.id, k)
                pending[p.lpn + k].add(p.id)
        elif kind == "persist":
            for lpn, tok in entry[2].items():
                if tok is None:
                    durable.pop(lpn, None)
                else:
                    durable[lpn] = tok
        elif kind == "loss":
            corrupted.update(entry[2])
            live = dict(durable)
            for wid, a in ack.items():
                if not (t - window <= a < t) or wid not in verified:
                    continue
                p = packets[wid]
                for k in range(p.n_pages):
                    v = seen(p.lpn + k, live)
                    if v == (wid, k):
                        continue
                    if (v not in (ERASED_V, CORRUPT_V) and v[0] in order
                            and order[v[0]] > order[wid] and apply_t[v[0]] < t):
                        continue
                    neighbor_fail.add(wid)
                    break
    for wid in sorted({w for ws in pending.values() for w in ws}):
        do_verify(wid, None)

    out = {}
    for p in packets:
        if not completed[p.id]:
            out[p.id] = Classification.IO_ERROR
            continue
        if not p.is_write:
            out[p.id] = Classification.NONE
            continue
        own = tuple((p.id, k) for k in range(p.n_pages))
        rb = readback[p.id]
        if rb == own:
            out[p.id] = Classification.DATA_FAILURE if p.id in neighbor_fail else Classification.NONE
        elif rb == before[p.id]:
            out[p.id] = Classification.FWA
        else:
            out[p.id] = Classification.DATA_FAILURE
    return out
