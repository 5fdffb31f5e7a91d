"""PSU discharge model and power-fault scheduling.

All times in this module are milliseconds (floats). The discharge curve is
piecewise linear through the measured anchor points: with the SSD attached
the rail falls 5.0V -> 4.5V in 40ms and reaches 0V at 900ms; the bare PSU
decays linearly to 0V in 1400ms.
"""

from __future__ import annotations

import bisect
import enum
import random
from dataclasses import dataclass, field

from .errors import ConfigError


@dataclass(frozen=True)
class VoltageModel:
    v_nominal: float = 5.0
    v_unavailable: float = 4.5
    t_unavailable: float = 40.0
    t_zero_loaded: float = 900.0
    t_zero_unloaded: float = 1400.0

    def __post_init__(self):
        if not self.v_nominal > self.v_unavailable > 0:
            raise ConfigError("need v_nominal > v_unavailable > 0")
        if not 0 < self.t_unavailable < self.t_zero_loaded < self.t_zero_unloaded:
            raise ConfigError("need 0 < t_unavailable < t_zero_loaded < t_zero_unloaded")

    @property
    def discharge_ms(self) -> float:
        # worst-case discharge (unloaded supply); used for episode spacing
        return self.t_zero_unloaded


@dataclass(frozen=True)
class FaultSchedule:
    cutoffs: tuple[float, ...] = ()
    restore_delay: float = 500.0

    def __post_init__(self):
        object.__setattr__(self, "cutoffs", tuple(self.cutoffs))
        if any(b <= a for a, b in zip(self.cutoffs, self.cutoffs[1:])):
            raise ConfigError("fault cutoffs must be strictly increasing")
        if self.restore_delay < 0:
            raise ConfigError("restore_delay must be >= 0")


class Mode(enum.Enum):
    ON = "on"
    DISCHARGING = "discharging"
    OFF = "off"


@dataclass(frozen=True)
class PowerState:
    mode: Mode
    elapsed: float = 0.0  # ms since cutoff, meaningful while discharging/off
    cutoff: float | None = field(default=None, compare=False)

    @property
    def on(self) -> bool:
        return self.mode is Mode.ON


def voltage_at(model: VoltageModel, elapsed: float, loaded: bool = True) -> float:
    """Supply voltage ``elapsed`` ms after the cutoff."""
    if elapsed < 0:
        raise ValueError("elapsed must be >= 0")
    v0 = model.v_nominal
    if not loaded:
        if elapsed >= model.t_zero_unloaded:
            return 0.0
        return v0 * (1.0 - elapsed / model.t_zero_unloaded)
    if elapsed >= model.t_zero_loaded:
        return 0.0
    if elapsed <= model.t_unavailable:
        drop = v0 - model.v_unavailable
        return v0 - drop * elapsed / model.t_unavailable
    span = model.t_zero_loaded - model.t_unavailable
    return model.v_unavailable * (model.t_zero_loaded - elapsed) / span


def device_available(model: VoltageModel, v: float) -> bool:
    if v < 0:
        raise ValueError("voltage must be >= 0")
    return v >= model.v_unavailable


def episode_ms(model: VoltageModel, restore_delay: float) -> float:
    """Cutoff-to-restore duration of one fault episode with the SSD attached."""
    return model.t_zero_loaded + restore_delay


def schedule_faults(seed: int, n_faults: int, horizon: float, restore_delay: float = 500.0,
                    model: VoltageModel | None = None, max_rounds: int = 10_000) -> FaultSchedule:
    """Draw ``n_faults`` cutoff instants uniformly over ``[0, horizon)``.

    Cutoffs that land too close to a neighbour are redrawn until every gap
    exceeds the discharge duration plus ``restore_delay``.
    """
    model = model or VoltageModel()
    if n_faults < 0:
        raise ConfigError("n_faults must be >= 0")
    gap = model.discharge_ms + restore_delay
    if n_faults == 0:
        return FaultSchedule((), restore_delay)
    if horizon <= n_faults * gap:
        raise ConfigError(
            f"horizon {horizon:g}ms cannot hold {n_faults} faults spaced > {gap:g}ms")
    rng = random.Random(seed)
    draws = sorted(round(rng.uniform(0.0, horizon), 3) for _ in range(n_faults))
    for _ in range(max_rounds):
        keep = [draws[0]]
        rejected = 0
        for t in draws[1:]:
            if t - keep[-1] > gap:
                keep.append(t)
            else:
                rejected += 1
        if not rejected:
            return FaultSchedule(tuple(keep), restore_delay)
        draws = sorted(keep + [round(rng.uniform(0.0, horizon), 3) for _ in range(rejected)])
    raise ConfigError(f"could not space {n_faults} faults within {horizon:g}ms")


def power_state_at(schedule: FaultSchedule, model: VoltageModel, t: float,
                   loaded: bool = True) -> tuple[PowerState, float]:
    i = bisect.bisect_right(schedule.cutoffs, t) - 1
    if i < 0:
        return PowerState(Mode.ON), model.v_nominal
    cutoff = schedule.cutoffs[i]
    elapsed = t - cutoff
    t_zero = model.t_zero_loaded if loaded else model.t_zero_unloaded
    if elapsed < t_zero:
        return PowerState(Mode.DISCHARGING, elapsed, cutoff), voltage_at(model, elapsed, loaded)
    if elapsed < t_zero + schedule.restore_delay:
        return PowerState(Mode.OFF, elapsed, cutoff), 0.0
    return PowerState(Mode.ON), model.v_nominal
