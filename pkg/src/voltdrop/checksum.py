"""CRC-32 (IEEE 802.3, reflected 0x04C11DB7) plus page-wise folding.

Region checksums are assembled from per-page CRCs without touching the
bytes again: for two byte strings ``a`` and ``b`` with ``len(b) == n``,
``crc(a + b) == shift_n(crc(a)) ^ crc(b)`` where ``shift_n`` is the linear
map that advances the raw CRC register over ``n`` zero bytes.
"""

from __future__ import annotations

import zlib
from functools import lru_cache

PAGE_SIZE = 4096

# Values at or above 2**32 never come out of crc32(); used as read markers.
CORRUPT_FLAG = 1 << 32


def checksum(data: bytes) -> int:
    return zlib.crc32(data) & 0xFFFFFFFF


@lru_cache(maxsize=None)
def _shift_tables(n: int) -> tuple[tuple[int, ...], ...]:
    zeros = bytes(n)
    base = zlib.crc32(zeros, 0)
    column = [zlib.crc32(zeros, 1 << i) ^ base for i in range(32)]
    tables = []
    for k in range(4):
        table = []
        for byte in range(256):
            acc = 0
            for bit in range(8):
                if byte >> bit & 1:
                    acc ^= column[8 * k + bit]
            table.append(acc)
        tables.append(tuple(table))
    return tuple(tables)


def combine(crc_a: int, crc_b: int, len_b: int) -> int:
    """CRC of ``a + b`` from ``crc(a)``, ``crc(b)`` and ``len(b)``."""
    t0, t1, t2, t3 = _shift_tables(len_b)
    return (t0[crc_a & 0xFF] ^ t1[(crc_a >> 8) & 0xFF]
            ^ t2[(crc_a >> 16) & 0xFF] ^ t3[crc_a >> 24] ^ crc_b)


def fold_pages(page_crcs, page_size: int = PAGE_SIZE) -> int:
    """Checksum of a region given the CRC of each of its pages.

    A page CRC carrying ``CORRUPT_FLAG`` marks unreadable content; the
    region result then carries the flag too, so it can never equal the
    checksum of real bytes, while distinct corruption layouts still fold to
    distinct values.
    """
    t0, t1, t2, t3 = _shift_tables(page_size)
    crc = 0
    flagged = 0
    first = True
    for c in page_crcs:
        flagged |= c & CORRUPT_FLAG
        c &= 0xFFFFFFFF
        if first:
            crc = c
            first = False
        else:
            crc = t0[crc & 0xFF] ^ t1[(crc >> 8) & 0xFF] ^ t2[(crc >> 16) & 0xFF] ^ t3[crc >> 24] ^ c
    return crc | flagged


def page_crcs(data: bytes, page_size: int = PAGE_SIZE) -> tuple[int, ...]:
    crc32 = zlib.crc32
    return tuple(crc32(data[i:i + page_size]) for i in range(0, len(data), page_size))


@lru_cache(maxsize=None)
def erased_page_crc(page_size: int = PAGE_SIZE) -> int:
    return checksum(bytes(page_size))


@lru_cache(maxsize=None)
def corrupt_page_crc(page_size: int = PAGE_SIZE) -> int:
    # what a corrupted page reads as: 0xFF fill, tagged out of the 32-bit range
    return checksum(b"\xff" * page_size) | CORRUPT_FLAG
