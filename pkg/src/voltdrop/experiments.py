"""Named parameter sweeps, one simulated run per axis value."""

from __future__ import annotations

import bisect
import logging
import time
from dataclasses import dataclass, replace

from .analyzer import (Classification, FailureReport, RequestVerdict, ack_times, analyze,
                       responded_iops, summarize)
from .config import Experiment, ExperimentConfig
from .engine import NS_PER_MS, RunRecord, simulate
from .errors import ConfigError, VoltdropError
from .workload import MAX_REQ, PAGE_SIZE, Pattern, Sequence

log = logging.getLogger(__name__)

GiB = 1 << 30
REQ_TYPE_AXIS = (100, 80, 50, 20, 0)
WSS_AXIS_GIB = (1, 8, 16, 32, 64, 90)
PATTERN_AXIS = (Pattern.RANDOM, Pattern.SEQUENTIAL)
REQ_SIZE_AXIS = (4 << 10, 16 << 10, 64 << 10, 256 << 10, 1 << 20)
IOPS_AXIS = (1000, 2000, 4000, 6900, 10000, 14000)
SEQUENCE_AXIS = (Sequence.RAR, Sequence.RAW, Sequence.WAR, Sequence.WAW)
# mean page count of the uniform 4KiB..1MiB size distribution
MEAN_UNIFORM_BYTES = (1 + MAX_REQ // PAGE_SIZE) / 2 * PAGE_SIZE
DELAY_BINS_MS = (0, 100, 200, 300, 400, 500, 600, 700, 800, 900, 1000)


class RunError(VoltdropError):
    """A run inside a sweep failed; carries the run's identity."""


@dataclass
class SweepPoint:
    axis: str
    value: str
    overrides: dict


@dataclass
class RunResult:
    experiment: str
    axis: str
    value: str
    report: FailureReport
    verdicts: list[RequestVerdict]
    record: RunRecord
    wall_seconds: float
    workload_seed: int
    fault_seed: int
    scale: float

    @property
    def label(self) -> str:
        v = self.value.replace("/", "_").replace(" ", "")
        return f"{self.experiment}-{self.axis}-{v}" if self.axis else self.experiment


def _fmt_size(n: int) -> str:
    return f"{n >> 20}M" if n >= 1 << 20 else f"{n >> 10}K"


def sweep_points(cfg: ExperimentConfig) -> list[SweepPoint]:
    exp = cfg.experiment
    if exp is Experiment.REQ_TYPE:
        return [SweepPoint("write_pct", str(p), {"wl_write_pct": float(p)}) for p in REQ_TYPE_AXIS]
    if exp is Experiment.WSS:
        return [SweepPoint("wss_gib", str(g), {"wl_wss_bytes": g * GiB}) for g in WSS_AXIS_GIB]
    if exp is Experiment.PATTERN:
        return [SweepPoint("pattern", p.value, {"wl_pattern": p}) for p in PATTERN_AXIS]
    if exp is Experiment.REQ_SIZE:
        # same offered bandwidth and horizon at every size
        out = []
        for size in REQ_SIZE_AXIS:
            factor = MEAN_UNIFORM_BYTES / size
            out.append(SweepPoint("req_size", _fmt_size(size), {
                "wl_req_size": size,
                "wl_iops": cfg.wl_iops * factor,
                "wl_n_requests": round(cfg.wl_n_requests * factor),
            }))
        return out
    if exp is Experiment.IOPS:
        horizon_s = cfg.wl_n_requests / cfg.wl_iops
        return [SweepPoint("iops", str(r), {"wl_iops": float(r), "wl_n_requests": round(r * horizon_s)})
                for r in IOPS_AXIS]
    if exp is Experiment.SEQUENCE:
        return [SweepPoint("sequence", s.value, {"wl_sequence": s}) for s in SEQUENCE_AXIS]
    return [SweepPoint("", "", {})]


def run_point(cfg: ExperimentConfig, point: SweepPoint, scale: float = 0.01) -> RunResult:
    """Simulate and analyze one sweep point."""
    t0 = time.perf_counter()
    label = f"{cfg.experiment.value} {point.axis}={point.value}" if point.axis else cfg.experiment.value
    # Shrinking the working set without shrinking the request rate would
    # multiply how often requests overlap, so the WSS axis stays unscaled.
    run_cfg = cfg.run_config(scale, fixed_wss=cfg.experiment is Experiment.WSS, **point.overrides)
    try:
        record = simulate(run_cfg)
        verdicts = analyze(record)
    except ConfigError as e:
        raise ConfigError(f"run {label!r}: {e}") from e
    except VoltdropError as e:
        raise RunError(f"run {label!r}: {e}") from e
    except (RuntimeError, ValueError) as e:
        raise RunError(f"run {label!r}: {e}") from e
    spec = run_cfg.workload
    params = {
        "experiment": cfg.experiment.value,
        "axis": point.axis,
        "value": point.value,
        "wss_bytes": spec.wss,
        "req_size": spec.req_size if spec.req_size is not None else "uniform",
        "write_pct": f"{spec.write_pct:g}",
        "pattern": spec.pattern.value,
        "sequence": spec.sequence.value if spec.sequence else "none",
        "iops": f"{spec.requested_iops:g}",
        "n_requests": spec.n_requests,
        "cache_bytes": run_cfg.ftl.cache_bytes if run_cfg.ftl.cache_enabled else 0,
        "map_persist_ms": f"{run_cfg.ftl.map_persist_ms:g}",
        "wl_seed": spec.seed,
        "fault_seed": run_cfg.fault_seed,
        "scale": f"{scale:g}",
    }
    report = summarize(verdicts, params, record.cutoffs, responded_iops(record))
    wall = time.perf_counter() - t0
    log.info("%s: %d requests, %d faults, loss %d, io errors %d (%.1fs)", label,
             report.n_requests, report.faults, report.data_loss, report.io_error, wall)
    return RunResult(cfg.experiment.value, point.axis, point.value, report, verdicts, record,
                     wall, spec.seed, run_cfg.fault_seed, scale)


def with_seed(cfg: ExperimentConfig, seed: int | None) -> ExperimentConfig:
    """Apply a master seed. Every axis point reuses it (common random numbers)."""
    if seed is None:
        return cfg
    return replace(cfg, wl_seed=seed, faults_seed=seed)


def run_experiment(cfg: ExperimentConfig, scale: float = 0.01, seed: int | None = None) -> list[RunResult]:
    cfg = with_seed(cfg, seed)
    return [run_point(cfg, p, scale) for p in sweep_points(cfg)]


def ack_delays(result: RunResult) -> list[tuple[int, str, float]]:
    """``(req_id, class, ms from ACK to the next cutoff)`` for every failed write."""
    rec = result.record
    acks = ack_times(rec)
    cutoffs = rec.cutoffs
    out = []
    for v in result.verdicts:
        if v.classification not in (Classification.DATA_FAILURE, Classification.FWA):
            continue
        a = acks.get(v.req_id)
        if a is None:
            continue
        i = bisect.bisect_left(cutoffs, a)
        if i < len(cutoffs):
            out.append((v.req_id, v.classification.value, (cutoffs[i] - a) / NS_PER_MS))
    return out


def delay_histogram(delays) -> list[tuple[str, int]]:
    edges = DELAY_BINS_MS
    counts = [0] * len(edges)
    for _, _, d in delays:
        for i in range(len(edges) - 1, -1, -1):
            if d >= edges[i]:
                counts[i] += 1
                break
    labels = [f"{edges[i]}-{edges[i + 1]}" for i in range(len(edges) - 1)] + [f">={edges[-1]}"]
    return list(zip(labels, counts))
