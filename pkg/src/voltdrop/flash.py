"""NAND array as interruptible program/erase state machines.

Pages are stored as (checksum, token) pairs rather than bytes. The token
identifies which write produced the page so the FTL and the oracle can
talk about versions; the checksum is all the analyzer ever compares.
Simulation time is integer nanoseconds.
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass
from typing import NamedTuple

from .checksum import checksum, corrupt_page_crc, erased_page_crc
from .errors import GeometryError, IllegalTransition

ERASED = "erased"
CORRUPT = "corrupt"


class PageKind(enum.IntEnum):
    ERASED = 0
    PROGRAMMING = 1
    PROGRAMMED = 2
    CORRUPTED = 3


class PageData(NamedTuple):
    crc: int
    token: object = None


@dataclass(frozen=True)
class PageState:
    kind: PageKind
    step: int = 0
    crc: int | None = None


@dataclass(frozen=True)
class FlashGeometry:
    blocks: int = 131072  # 128GiB, room for the largest working set swept
    pages_per_block: int = 256
    page_size: int = 4096

    @property
    def n_pages(self) -> int:
        return self.blocks * self.pages_per_block


@dataclass(frozen=True)
class FlashTiming:
    program_steps: int = 8
    t_program_step_us: float = 200.0
    t_erase_us: float = 2000.0

    @property
    def program_ns(self) -> int:
        return round(self.program_steps * self.t_program_step_us * 1000)

    @property
    def erase_ns(self) -> int:
        return round(self.t_erase_us * 1000)


class JobKind(enum.Enum):
    PROGRAM = "program"
    ERASE = "erase"


@dataclass(eq=False)
class FlashJob:
    kind: JobKind
    block: int
    page: int | None
    data: PageData | None
    start: int
    duration: int
    done: bool = False

    @property
    def end(self) -> int:
        return self.start + self.duration

    @property
    def duration_us(self) -> float:
        return self.duration / 1000


class FlashArray:
    def __init__(self, geometry: FlashGeometry | None = None, timing: FlashTiming | None = None,
                 p_corrupt_on_interrupt: float = 1.0, seed: int = 0):
        self.geometry = geometry or FlashGeometry()
        self.timing = timing or FlashTiming()
        if not 0.0 <= p_corrupt_on_interrupt <= 1.0:
            raise ValueError("p_corrupt_on_interrupt must be in [0, 1]")
        self.p_corrupt = p_corrupt_on_interrupt
        self._rng = random.Random(seed)
        # ppn -> (kind, PageData | None, job | None); absent means erased
        self._pages: dict[int, tuple[PageKind, PageData | None, FlashJob | None]] = {}
        self._erasing: dict[int, FlashJob] = {}
        self.erased = PageData(erased_page_crc(self.geometry.page_size), ERASED)
        self.corrupt = PageData(corrupt_page_crc(self.geometry.page_size), CORRUPT)

    def ppn(self, block: int, page: int) -> int:
        g = self.geometry
        if not (0 <= block < g.blocks and 0 <= page < g.pages_per_block):
            raise GeometryError(f"page ({block}, {page}) outside {g.blocks}x{g.pages_per_block}")
        return block * g.pages_per_block + page

    def _check_block(self, block: int):
        if not 0 <= block < self.geometry.blocks:
            raise GeometryError(f"block {block} outside 0..{self.geometry.blocks - 1}")

    def page_state(self, block: int, page: int, now: int | None = None) -> PageState:
        entry = self._pages.get(self.ppn(block, page))
        if entry is None:
            return PageState(PageKind.ERASED)
        kind, data, job = entry
        if kind is PageKind.PROGRAMMING:
            step = 0
            if now is not None:
                step_ns = job.duration / self.timing.program_steps
                step = min(self.timing.program_steps - 1, max(0, int((now - job.start) // step_ns)))
            return PageState(kind, step)
        if kind is PageKind.PROGRAMMED:
            return PageState(kind, crc=data.crc)
        return PageState(kind)

    def begin_program(self, block: int, page: int, payload, now: int) -> FlashJob:
        """Start programming one page. ``payload`` is page-sized bytes or a PageData."""
        ppn = self.ppn(block, page)
        if block in self._erasing:
            raise IllegalTransition(f"block {block} is being erased")
        if ppn in self._pages:
            raise IllegalTransition(
                f"page ({block}, {page}) is {self._pages[ppn][0].name}, not ERASED")
        if isinstance(payload, (bytes, bytearray, memoryview)):
            if len(payload) != self.geometry.page_size:
                raise ValueError(f"payload must be {self.geometry.page_size} bytes")
            payload = PageData(checksum(bytes(payload)))
        job = FlashJob(JobKind.PROGRAM, block, page, payload, now, self.timing.program_ns)
        self._pages[ppn] = (PageKind.PROGRAMMING, None, job)
        return job

    def begin_erase(self, block: int, now: int) -> FlashJob:
        self._check_block(block)
        if block in self._erasing:
            raise IllegalTransition(f"block {block} already erasing")
        job = FlashJob(JobKind.ERASE, block, None, None, now, self.timing.erase_ns)
        self._erasing[block] = job
        return job

    def complete_job(self, job: FlashJob) -> None:
        if job.done:
            return
        job.done = True
        if job.kind is JobKind.PROGRAM:
            ppn = self.ppn(job.block, job.page)
            self._pages[ppn] = (PageKind.PROGRAMMED, job.data, None)
        else:
            self._erasing.pop(job.block, None)
            ppb = self.geometry.pages_per_block
            base = job.block * ppb
            for ppn in range(base, base + ppb):
                self._pages.pop(ppn, None)

    def interrupt_job(self, job: FlashJob, elapsed: int) -> PageKind:
        """Cut power ``elapsed`` ns into ``job``.

        Returns the resulting kind of the programmed page (program jobs) or of
        every page in the block (erase jobs).
        """
        if job.done:
            return self._job_outcome(job)
        if elapsed >= job.duration:
            self.complete_job(job)
            return self._job_outcome(job)
        job.done = True
        survive = self.p_corrupt < 1.0 and self._rng.random() >= self.p_corrupt
        if job.kind is JobKind.PROGRAM:
            ppn = self.ppn(job.block, job.page)
            if survive:
                self._pages[ppn] = (PageKind.PROGRAMMED, job.data, None)
                return PageKind.PROGRAMMED
            self._pages[ppn] = (PageKind.CORRUPTED, None, None)
            return PageKind.CORRUPTED
        self._erasing.pop(job.block, None)
        ppb = self.geometry.pages_per_block
        base = job.block * ppb
        if survive:
            for ppn in range(base, base + ppb):
                self._pages.pop(ppn, None)
            return PageKind.ERASED
        for ppn in range(base, base + ppb):
            self._pages[ppn] = (PageKind.CORRUPTED, None, None)
        return PageKind.CORRUPTED

    def _job_outcome(self, job: FlashJob) -> PageKind:
        page = job.page if job.kind is JobKind.PROGRAM else 0
        return self.page_state(job.block, page).kind

    def read_page(self, block: int, page: int) -> PageData:
        return self.read_ppn(self.ppn(block, page))

    def read_ppn(self, ppn: int) -> PageData:
        entry = self._pages.get(ppn)
        if entry is None:
            return self.erased
        kind = entry[0]
        if kind is PageKind.PROGRAMMED:
            return entry[1]
        if kind is PageKind.CORRUPTED:
            return self.corrupt
        # mid-program cells read back as neither old nor new content
        return self.corrupt

    def token(self, ppn: int):
        """Identity of the write held (or being programmed) at ``ppn``."""
        entry = self._pages.get(ppn)
        if entry is None:
            return None
        kind, data, job = entry
        if kind is PageKind.PROGRAMMING:
            return job.data.token
        if kind is PageKind.PROGRAMMED:
            return data.token
        return CORRUPT

    def relocate(self, src_ppn: int, dst_ppn: int) -> None:
        """Copy a settled page (programmed or corrupted) into an erased page."""
        if dst_ppn in self._pages:
            raise IllegalTransition(f"relocation target {dst_ppn} not erased")
        entry = self._pages.get(src_ppn)
        if entry is None:
            return
        if entry[0] is PageKind.PROGRAMMING:
            raise IllegalTransition(f"page {src_ppn} still programming")
        self._pages[dst_ppn] = entry

    def dump(self):
        """Every non-erased page as ``(ppn, kind, crc, token)``, sorted by ppn."""
        rows = []
        for ppn in sorted(self._pages):
            kind, data, _ = self._pages[ppn]
            if kind is PageKind.PROGRAMMED:
                rows.append((ppn, kind.name, data.crc, data.token))
            else:
                rows.append((ppn, kind.name, None, None))
        return rows
