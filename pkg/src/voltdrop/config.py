"""Line-oriented ``key = value`` experiment configuration."""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from pathlib import Path

from .engine import RunConfig
from .errors import ConfigError
from .flash import FlashGeometry, FlashTiming
from .ftl import FtlConfig
from .power import VoltageModel
from .workload import MAX_REQ, MIN_REQ, PAGE_SIZE, Pattern, Sequence, WorkloadSpec, parse_size


class Experiment(enum.Enum):
    TIME_INTERVAL = "time_interval"
    REQ_TYPE = "req_type"
    WSS = "wss"
    PATTERN = "pattern"
    REQ_SIZE = "req_size"
    IOPS = "iops"
    SEQUENCE = "sequence"
    CUSTOM = "custom"


@dataclass
class ExperimentConfig:
    experiment: Experiment = Experiment.CUSTOM
    output_dir: Path = Path("results")

    faults_count: int = 300
    faults_seed: int = 1
    faults_restore_delay_ms: float = 500.0

    power_t_unavailable_ms: float = 40.0
    power_t_zero_loaded_ms: float = 900.0

    flash_blocks: int = FlashGeometry.blocks
    flash_pages_per_block: int = 256
    flash_page_size: int = PAGE_SIZE
    flash_program_steps: int = 8
    flash_t_program_step_us: float = 200.0
    flash_t_erase_us: float = 2000.0
    flash_p_corrupt_on_interrupt: float = 1.0

    ftl_cache_bytes: int = 16 << 20
    ftl_cache_enabled: bool = True
    ftl_map_persist_ms: float = 500.0
    ftl_service_rate_iops: float = 6900.0
    ftl_gc_threshold: float = 0.10
    ftl_max_range_pages: int = FtlConfig.max_range_pages

    wl_wss_bytes: int = 64 << 30
    wl_req_size: int | None = None
    wl_write_pct: float = 100.0
    wl_pattern: Pattern = Pattern.RANDOM
    wl_sequence: Sequence | None = None
    wl_iops: float = WorkloadSpec.requested_iops
    wl_n_requests: int = 24000
    wl_seed: int = 1

    analyzer_window_ms: float = 1000.0

    def validate(self) -> None:
        """Cross-field checks; raises ConfigError."""
        self.run_config(1.0, check_capacity=False)
        if self.experiment is Experiment.SEQUENCE and self.wl_write_pct == 0:
            raise ConfigError("experiment sequence needs wl.write_pct > 0")

    def run_config(self, scale: float = 1.0, check_capacity: bool = True, fixed_wss: bool = False,
                   **overrides) -> RunConfig:
        """Concrete run settings with WSS, request and fault counts scaled.

        ``fixed_wss`` keeps the working set at its configured size while the
        request and fault counts still shrink.
        """
        if scale <= 0:
            raise ConfigError(f"scale must be > 0, got {scale}")
        c = replace(self, **overrides) if overrides else self
        req = c.wl_req_size
        floor = req if req is not None else MAX_REQ
        wss_scale = 1.0 if fixed_wss else scale
        wss = max(floor, int(c.wl_wss_bytes * wss_scale) // PAGE_SIZE * PAGE_SIZE)
        spec = WorkloadSpec(
            wss=wss, req_size=req, write_pct=c.wl_write_pct, pattern=c.wl_pattern,
            sequence=c.wl_sequence, requested_iops=c.wl_iops,
            n_requests=max(1, round(c.wl_n_requests * scale)), seed=c.wl_seed)
        geometry = FlashGeometry(c.flash_blocks, c.flash_pages_per_block, c.flash_page_size)
        if check_capacity and wss > 0.85 * geometry.n_pages * geometry.page_size:
            raise ConfigError(f"working set {wss} bytes does not fit the flash array with spare room")
        try:
            voltage = VoltageModel(t_unavailable=c.power_t_unavailable_ms,
                                   t_zero_loaded=c.power_t_zero_loaded_ms,
                                   t_zero_unloaded=max(VoltageModel.t_zero_unloaded,
                                                       c.power_t_zero_loaded_ms))
        except ValueError as e:
            raise ConfigError(str(e)) from None
        return RunConfig(
            workload=spec,
            ftl=FtlConfig(c.ftl_cache_bytes, c.ftl_cache_enabled, c.ftl_map_persist_ms,
                          c.ftl_service_rate_iops, c.ftl_gc_threshold, c.ftl_max_range_pages),
            geometry=geometry,
            timing=FlashTiming(c.flash_program_steps, c.flash_t_program_step_us, c.flash_t_erase_us),
            p_corrupt_on_interrupt=c.flash_p_corrupt_on_interrupt,
            voltage=voltage,
            n_faults=round(c.faults_count * scale),
            fault_seed=c.faults_seed,
            restore_delay_ms=c.faults_restore_delay_ms,
            window_ms=c.analyzer_window_ms,
        )


def _bool(text: str) -> bool:
    t = text.lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _size(text: str) -> int:
    n = parse_size(text)
    if n is None:
        raise ValueError(f"expected a byte size, got {text!r}")
    return n


def _req_size(text: str) -> int | None:
    n = parse_size(text)
    if n is not None and (n % MIN_REQ or not MIN_REQ <= n <= MAX_REQ):
        raise ValueError(f"request size must be a 4KiB multiple in [4KiB, 1MiB], got {text!r}")
    return n


def _enum(cls):
    def parse(text: str):
        try:
            return cls(text if cls is not Sequence else text.upper())
        except ValueError:
            raise ValueError(f"expected one of {', '.join(m.value for m in cls)}, got {text!r}") from None
    return parse


def _optional_sequence(text: str):
    return None if text.lower() in ("none", "") else _enum(Sequence)(text)


def _ranged(conv, lo=None, hi=None, lo_open=False):
    def parse(text: str):
        v = conv(text)
        if lo is not None and (v < lo or (lo_open and v == lo)):
            raise ValueError(f"{v} must be {'>' if lo_open else '>='} {lo}")
        if hi is not None and v > hi:
            raise ValueError(f"{v} must be <= {hi}")
        return v
    return parse


_POS_INT = _ranged(int, 1)
_NONNEG = _ranged(float, 0)

# key -> (attribute, parser)
KEYS = {
    "experiment": ("experiment", _enum(Experiment)),
    "output_dir": ("output_dir", Path),
    "faults.count": ("faults_count", _ranged(int, 0)),
    "faults.seed": ("faults_seed", int),
    "faults.restore_delay_ms": ("faults_restore_delay_ms", _NONNEG),
    "power.t_unavailable_ms": ("power_t_unavailable_ms", _ranged(float, 0, lo_open=True)),
    "power.t_zero_loaded_ms": ("power_t_zero_loaded_ms", _ranged(float, 0, lo_open=True)),
    "flash.blocks": ("flash_blocks", _POS_INT),
    "flash.pages_per_block": ("flash_pages_per_block", _POS_INT),
    "flash.page_size": ("flash_page_size", _ranged(_size, PAGE_SIZE, PAGE_SIZE)),
    "flash.program_steps": ("flash_program_steps", _POS_INT),
    "flash.t_program_step_us": ("flash_t_program_step_us", _ranged(float, 0, lo_open=True)),
    "flash.t_erase_us": ("flash_t_erase_us", _ranged(float, 0, lo_open=True)),
    "flash.p_corrupt_on_interrupt": ("flash_p_corrupt_on_interrupt", _ranged(float, 0, 1)),
    "ftl.cache_bytes": ("ftl_cache_bytes", _ranged(_size, 0)),
    "ftl.cache_enabled": ("ftl_cache_enabled", _bool),
    "ftl.map_persist_ms": ("ftl_map_persist_ms", _NONNEG),
    "ftl.service_rate_iops": ("ftl_service_rate_iops", _ranged(float, 0, lo_open=True)),
    "ftl.gc_threshold": ("ftl_gc_threshold", _ranged(float, 0, 0.5)),
    "ftl.max_range_pages": ("ftl_max_range_pages", _POS_INT),
    "wl.wss_bytes": ("wl_wss_bytes", _ranged(_size, MIN_REQ)),
    "wl.req_size": ("wl_req_size", _req_size),
    "wl.write_pct": ("wl_write_pct", _ranged(float, 0, 100)),
    "wl.pattern": ("wl_pattern", _enum(Pattern)),
    "wl.sequence": ("wl_sequence", _optional_sequence),
    "wl.iops": ("wl_iops", _ranged(float, 0, lo_open=True)),
    "wl.n_requests": ("wl_n_requests", _ranged(int, 0)),
    "wl.seed": ("wl_seed", int),
    "analyzer.window_ms": ("analyzer_window_ms", _NONNEG),
}


def parse_config(text: str) -> ExperimentConfig:
    """Parse config text; every diagnostic names the offending line."""
    cfg = ExperimentConfig()
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"unknown key {key!r}", lineno)
        if key in seen:
            raise ConfigError(f"duplicate key {key!r} (first set on line {seen[key]})", lineno)
        seen[key] = lineno
        attr, conv = KEYS[key]
        try:
            setattr(cfg, attr, conv(value))
        except (ValueError, ConfigError) as e:
            raise ConfigError(f"{key}: {e}", lineno) from None
    try:
        cfg.validate()
    except ConfigError as e:
        # cross-field problems surface once the last key is in place
        raise ConfigError(str(e), max(seen.values()) if seen else None) from None
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
    return parse_config(text)


def config_items(cfg: ExperimentConfig) -> dict[str, str]:
    """Config as ``key -> text`` in a stable order, for echoing into reports."""
    out = {}
    for key, (attr, _) in KEYS.items():
        v = getattr(cfg, attr)
        if isinstance(v, enum.Enum):
            v = v.value
        elif v is None:
            v = "none" if key == "wl.sequence" else "uniform"
        out[key] = str(v)
    return out


__all__ = ["Experiment", "ExperimentConfig", "KEYS", "parse_config", "load_config", "config_items"]
