"""Checksum-carrying IO requests and the workload generator.

Addresses are in 512-byte sectors; a 4KiB page spans 8 sectors. Every
request is page aligned. Payload bytes are regenerated on demand from the
per-packet seed (run seed XOR packet id), so only checksums are kept.
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .checksum import PAGE_SIZE, fold_pages, page_crcs
from .errors import ConfigError, ProtocolError

SECTOR = 512
SECTORS_PER_PAGE = PAGE_SIZE // SECTOR
MIN_REQ = 4 * 1024
MAX_REQ = 1024 * 1024
NS_PER_S = 1_000_000_000


class Op(enum.Enum):
    READ = "R"
    WRITE = "W"


class Pattern(enum.Enum):
    RANDOM = "random"
    SEQUENTIAL = "sequential"


class Sequence(enum.Enum):
    RAR = "RAR"
    RAW = "RAW"
    WAR = "WAR"
    WAW = "WAW"

    @property
    def first(self) -> Op:
        """Op of the request the chain depends on (the trailing letter)."""
        return Op(self.value[2])

    @property
    def then(self) -> Op:
        return Op(self.value[0])


def payload_bytes(seed: int, length: int) -> bytes:
    return np.random.default_rng(seed & 0xFFFFFFFFFFFFFFFF).bytes(length)


@dataclass(slots=True, eq=False)
class DataPacket:
    id: int
    op: Op
    lba: int
    length: int
    seed: int = 0
    issue_time: int | None = None
    completion_time: int | None = None
    checksum_data: int | None = None
    checksum_before: int | None = None
    checksum_after: int | None = None
    page_crcs: tuple[int, ...] = field(default=(), repr=False)

    def __post_init__(self):
        if self.length % MIN_REQ or not MIN_REQ <= self.length <= MAX_REQ:
            raise ProtocolError(f"request length {self.length} not a 4KiB multiple in [4KiB, 1MiB]")
        if self.lba % SECTORS_PER_PAGE:
            raise ProtocolError(f"lba {self.lba} not page aligned")

    @property
    def lpn(self) -> int:
        return self.lba // SECTORS_PER_PAGE

    @property
    def n_pages(self) -> int:
        return self.length // PAGE_SIZE

    @property
    def payload(self) -> bytes | None:
        if self.op is not Op.WRITE:
            return None
        return payload_bytes(self.seed, self.length)

    @property
    def is_write(self) -> bool:
        return self.op is Op.WRITE


@lru_cache(maxsize=8192)
def _payload_checksums(seed: int, length: int) -> tuple[tuple[int, ...], int]:
    # sweeps replay the same seeds at every axis point, so this hits often
    crcs = page_crcs(payload_bytes(seed, length))
    return crcs, fold_pages(crcs)


def make_packet(packet_id: int, op: Op, lba: int, length: int, run_seed: int,
                issue_time: int | None = None) -> DataPacket:
    seed = run_seed ^ packet_id
    pkt = DataPacket(packet_id, op, lba, length, seed, issue_time)
    if op is Op.WRITE:
        pkt.page_crcs, pkt.checksum_data = _payload_checksums(seed, length)
    return pkt


def parse_size(text) -> int | None:
    """``"uniform"`` -> None, otherwise a byte count such as ``4K``, ``64KB``, ``1MiB``."""
    if isinstance(text, int):
        return text
    s = str(text).strip().upper()
    if s in ("UNIFORM", "RANDOM", ""):
        return None
    for suffix, mult in (("KIB", 1024), ("MIB", 1 << 20), ("GIB", 1 << 30), ("TIB", 1 << 40),
                         ("KB", 1024), ("MB", 1 << 20), ("GB", 1 << 30), ("TB", 1 << 40),
                         ("K", 1024), ("M", 1 << 20), ("G", 1 << 30), ("T", 1 << 40), ("B", 1)):
        if s.endswith(suffix):
            return int(float(s[: -len(suffix)]) * mult)
    return int(s)


@dataclass(frozen=True)
class WorkloadSpec:
    wss: int = 64 << 30
    req_size: int | None = None  # None: uniform over 4KiB..1MiB in 4KiB steps
    write_pct: float = 100.0
    pattern: Pattern = Pattern.RANDOM
    sequence: Sequence | None = None
    requested_iops: float = 6.0
    n_requests: int = 24000
    seed: int = 1

    def __post_init__(self):
        if not 0 <= self.write_pct <= 100:
            raise ConfigError(f"write_pct {self.write_pct} outside 0..100")
        if self.req_size is not None and (self.req_size % MIN_REQ or not MIN_REQ <= self.req_size <= MAX_REQ):
            raise ConfigError(f"request size {self.req_size} not a 4KiB multiple in [4KiB, 1MiB]")
        if self.wss < self.max_request or self.wss % PAGE_SIZE:
            raise ConfigError(f"wss {self.wss} must be page aligned and >= {self.max_request}")
        if self.requested_iops <= 0:
            raise ConfigError("requested iops must be > 0")
        if self.n_requests < 0:
            raise ConfigError("n_requests must be >= 0")
        if self.sequence is not None and self.write_pct == 0 and "W" in self.sequence.value:
            raise ConfigError(f"sequence {self.sequence.value} needs writes but write_pct is 0")

    @property
    def max_request(self) -> int:
        return self.req_size if self.req_size is not None else MAX_REQ

    @property
    def wss_pages(self) -> int:
        return self.wss // PAGE_SIZE

    @property
    def horizon_ns(self) -> int:
        return round(self.n_requests * NS_PER_S / self.requested_iops)


def throttle(requested_iops: float, clock: float) -> float:
    """Issue instant (ns) following ``clock`` at the requested pacing."""
    if requested_iops <= 0:
        raise ValueError("requested_iops must be > 0")
    return clock + NS_PER_S / requested_iops


def issue_time(requested_iops: float, index: int) -> int:
    # computed from the index, not accumulated, so pacing never drifts
    return round(index * NS_PER_S / requested_iops)


def _sequel(kind: Sequence, prev: DataPacket, packet_id: int, run_seed: int) -> DataPacket:
    return make_packet(packet_id, kind.then, prev.lba, prev.length, run_seed)


def next_in_sequence(kind: Sequence, prev_completed: DataPacket, packet_id: int,
                     run_seed: int = 0) -> DataPacket:
    """Request at the address of ``prev_completed`` with the op ``kind`` dictates."""
    if prev_completed.completion_time is None:
        raise ProtocolError(f"request {prev_completed.id} has not completed")
    if prev_completed.op is not kind.first:
        raise ProtocolError(
            f"{kind.value} must follow a {kind.first.name} request, got {prev_completed.op.name}")
    return _sequel(kind, prev_completed, packet_id, run_seed)


def generate(spec: WorkloadSpec):
    """Yield ``spec.n_requests`` packets with throttled issue times.

    For sequence workloads every packet targets the same address; packets
    alternate between the depended-on op and the dependent op. The runner
    holds each one back until its predecessor has completed.
    """
    rng = random.Random(spec.seed)
    wss_pages = spec.wss_pages
    cursor = None
    prev = None
    for i in range(spec.n_requests):
        # fixed draw order per request keeps runs with different knobs coupled
        u_op = rng.random()
        pages = spec.req_size // PAGE_SIZE if spec.req_size else rng.randint(1, MAX_REQ // PAGE_SIZE)
        u_addr = rng.random()
        t = issue_time(spec.requested_iops, i)
        if spec.sequence is not None:
            kind = spec.sequence
            if prev is None:
                lpn = int(u_addr * (wss_pages - pages + 1))
                pkt = make_packet(i, kind.first, lpn * SECTORS_PER_PAGE, pages * PAGE_SIZE, spec.seed)
            elif prev.op is kind.first and (kind.first is not kind.then or i % 2 == 1):
                pkt = _sequel(kind, prev, i, spec.seed)
            else:
                pkt = make_packet(i, kind.first, prev.lba, prev.length, spec.seed)
            pkt.issue_time = t
            prev = pkt
            yield pkt
            continue
        op = Op.WRITE if u_op * 100 < spec.write_pct else Op.READ
        if spec.pattern is Pattern.RANDOM:
            lpn = int(u_addr * (wss_pages - pages + 1))
        else:
            if cursor is None:
                cursor = int(u_addr * (wss_pages - pages + 1))
            if cursor + pages > wss_pages:
                cursor = 0
            lpn = cursor
            cursor += pages
        yield make_packet(i, op, lpn * SECTORS_PER_PAGE, pages * PAGE_SIZE, spec.seed, t)


def snapshot_checksums(packet: DataPacket, device, phase: str = "before") -> DataPacket:
    """Record the device's checksum of the packet's region.

    ``device`` needs ``available`` and ``region_checksum(lba, length)``.
    ``phase`` is ``"before"`` (at issue) or ``"after"`` (after completion);
    an unavailable device leaves ``checksum_after`` unset.
    """
    if phase == "before":
        return replace(packet, checksum_before=device.region_checksum(packet.lba, packet.length))
    if phase == "after":
        if not device.available:
            return replace(packet, checksum_after=None)
        return replace(packet, checksum_after=device.region_checksum(packet.lba, packet.length))
    raise ValueError(f"unknown phase {phase!r}")
