import pytest

from voltdrop.checksum import checksum
from voltdrop.errors import GeometryError, IllegalTransition
from voltdrop.flash import FlashArray, FlashGeometry, FlashTiming, PageData, PageKind


@pytest.fixture
def flash():
    return FlashArray(FlashGeometry(blocks=4, pages_per_block=8))


def page(fill: int) -> bytes:
    return bytes([fill]) * 4096


def test_program_duration_default():
    job = FlashArray(FlashGeometry(4, 8)).begin_program(0, 0, page(1), 0)
    assert job.duration_us == 1600


def test_program_round_trip(flash):
    job = flash.begin_program(0, 0, page(7), 100)
    assert flash.page_state(0, 0, now=100 + 450_000).step == 2
    flash.complete_job(job)
    assert flash.read_page(0, 0).crc == checksum(page(7))
    assert flash.page_state(0, 0).kind is PageKind.PROGRAMMED


def test_no_in_place_update(flash):
    flash.complete_job(flash.begin_program(0, 0, page(1), 0))
    with pytest.raises(IllegalTransition):
        flash.begin_program(0, 0, page(2), 10)


def test_erased_page_reads_marker(flash):
    assert flash.read_page(1, 3) == flash.erased


@pytest.mark.parametrize("elapsed, kind", [(800_000, PageKind.CORRUPTED), (1_600_000, PageKind.PROGRAMMED)])
def test_interrupt_program(flash, elapsed, kind):
    job = flash.begin_program(0, 0, page(3), 0)
    assert flash.interrupt_job(job, elapsed) is kind
    assert flash.page_state(0, 0).kind is kind


def test_corrupted_reads_marker_and_is_idempotent(flash):
    job = flash.begin_program(0, 0, page(3), 0)
    flash.interrupt_job(job, 1)
    assert flash.read_page(0, 0) == flash.corrupt
    assert flash.interrupt_job(job, 2) is PageKind.CORRUPTED
    assert flash.read_page(0, 0).crc != checksum(page(3))


def test_erase_clears_block(flash):
    for p in range(3):
        flash.complete_job(flash.begin_program(2, p, page(p + 1), 0))
    job = flash.begin_erase(2, 10)
    assert job.duration_us == 2000
    flash.complete_job(job)
    assert all(flash.read_page(2, p) == flash.erased for p in range(8))


def test_interrupted_erase_corrupts_block(flash):
    flash.complete_job(flash.begin_program(1, 0, page(9), 0))
    job = flash.begin_erase(1, 0)
    flash.interrupt_job(job, job.duration // 2)
    assert all(flash.page_state(1, p).kind is PageKind.CORRUPTED for p in range(8))


def test_no_programming_to_erased_without_erase(flash):
    job = flash.begin_program(0, 5, page(1), 0)
    flash.interrupt_job(job, 10)
    assert flash.page_state(0, 5).kind is not PageKind.ERASED


@pytest.mark.parametrize("block, pg", [(4, 0), (0, 8), (-1, 0)])
def test_geometry_errors(flash, block, pg):
    with pytest.raises(GeometryError):
        flash.read_page(block, pg)


def test_p_corrupt_zero_keeps_payload():
    f = FlashArray(FlashGeometry(2, 4), p_corrupt_on_interrupt=0.0)
    job = f.begin_program(0, 0, PageData(123, "t"), 0)
    assert f.interrupt_job(job, 5) is PageKind.PROGRAMMED
    assert f.read_page(0, 0).crc == 123


def test_timing_custom():
    t = FlashTiming(program_steps=4, t_program_step_us=100, t_erase_us=500)
    assert t.program_ns == 400_000 and t.erase_ns == 500_000
