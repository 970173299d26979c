"""Battery, solar harvest traces, communication budget and loss-of-load probability.

All energy quantities are Wh.  One simulation slot defaults to 15 minutes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

DEFAULT_SLOT_MINUTES = 15
TRACE_MAGIC = "# kadex-trace"
TRACE_VERSION = 1


class TraceError(ValueError):
    pass


@dataclass(frozen=True)
class BatteryState:
    soc: float
    capacity: float

    def __post_init__(self):
        if self.capacity <= 0:
            raise ValueError(f"capacity must be positive, got {self.capacity}")
        if not 0.0 <= self.soc <= self.capacity:
            raise ValueError(f"soc {self.soc} outside [0, {self.capacity}]")

    @property
    def fraction(self) -> float:
        return self.soc / self.capacity


@dataclass(frozen=True)
class PowerConfig:
    """Per-slot energy parameters.

    ``b_safe`` is the scheduler reserve the uplink may not spend into;
    ``critical`` is the loss-of-load threshold used for LOLP and defaults to
    ``b_safe``.  ``link_load`` is drawn every slot only by the always-on policy.
    """

    capacity: float
    b_safe: float
    base_load: float
    e_pkt: float
    link_load: float = 0.0
    critical: float | None = None
    initial_soc: float | None = None

    def __post_init__(self):
        for name in ("capacity", "b_safe", "base_load", "e_pkt", "link_load"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.b_safe >= self.capacity:
            raise ValueError("b_safe must be below capacity")
        if self.critical is not None and not 0 <= self.critical <= self.capacity:
            raise ValueError("critical threshold must lie in [0, capacity]")
        if self.initial_soc is not None and not 0 <= self.initial_soc <= self.capacity:
            raise ValueError("initial_soc must lie in [0, capacity]")

    @property
    def lolp_threshold(self) -> float:
        return self.b_safe if self.critical is None else self.critical

    def initial_state(self) -> BatteryState:
        soc = self.capacity if self.initial_soc is None else self.initial_soc
        return BatteryState(soc, self.capacity)


def step_battery(state: BatteryState, harvest: float, load: float) -> BatteryState:
    if harvest < 0 or load < 0:
        raise ValueError("harvest and load must be non-negative")
    soc = min(max(state.soc + harvest - load, 0.0), state.capacity)
    return BatteryState(soc, state.capacity)


def debit(state: BatteryState, energy: float) -> BatteryState:
    return step_battery(state, 0.0, energy)


def energy_budget(state: BatteryState, b_safe: float) -> float:
    return max(0.0, state.soc - b_safe)


def lolp(soc_history: Sequence[float], threshold: float) -> float:
    """Fraction of slots whose state of charge is strictly below ``threshold``."""
    hist = np.asarray(soc_history, dtype=float)
    if hist.size == 0:
        raise ValueError("LOLP of an empty history is undefined")
    return float(np.count_nonzero(hist < threshold)) / hist.size


def slots_to_threshold(soc0: float, threshold: float, drain: float) -> int:
    """Slots until soc first reaches ``threshold`` under a constant net drain."""
    if soc0 <= threshold:
        return 0
    if drain <= 0:
        raise ValueError("a positive drain is needed to reach the threshold")
    t = math.ceil((soc0 - threshold) / drain)
    # guard against float rounding in the division
    while t > 0 and soc0 - (t - 1) * drain <= threshold:
        t -= 1
    while soc0 - t * drain > threshold:
        t += 1
    return t


# -- harvest traces -------------------------------------------------------


@dataclass(frozen=True)
class EnergyTrace:
    harvest: np.ndarray
    slot_minutes: int = DEFAULT_SLOT_MINUTES

    def __post_init__(self):
        arr = np.asarray(self.harvest, dtype=float)
        if arr.ndim != 1:
            raise TraceError("harvest must be one-dimensional")
        if np.any(arr < 0) or not np.all(np.isfinite(arr)):
            raise TraceError("harvest entries must be finite and non-negative")
        object.__setattr__(self, "harvest", arr)

    def __len__(self) -> int:
        return len(self.harvest)

    @property
    def slots_per_day(self) -> int:
        return 24 * 60 // self.slot_minutes


@dataclass(frozen=True)
class Overcast:
    start_day: float
    days: float
    factor: float


@dataclass(frozen=True)
class TraceGenerator:
    """Diurnal half-sine harvest with overcast windows and seeded jitter.

    ``peak`` is the clear-sky harvest per slot at solar noon.
    """

    days: int
    peak: float
    slot_minutes: int = DEFAULT_SLOT_MINUTES
    sunrise_hour: float = 6.0
    sunset_hour: float = 20.0
    overcast: tuple[Overcast, ...] = ()
    jitter: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.days < 1 or self.peak < 0 or not 0 <= self.sunrise_hour < self.sunset_hour <= 24:
            raise TraceError("invalid trace generator parameters")
        if (24 * 60) % self.slot_minutes:
            raise TraceError("slot_minutes must divide a day")


def generate_trace(gen: TraceGenerator) -> EnergyTrace:
    per_day = 24 * 60 // gen.slot_minutes
    n = gen.days * per_day
    t_hours = (np.arange(n) + 0.5) * gen.slot_minutes / 60.0
    hour = t_hours % 24.0
    day = t_hours / 24.0
    phase = (hour - gen.sunrise_hour) / (gen.sunset_hour - gen.sunrise_hour)
    harvest = gen.peak * np.where((phase > 0) & (phase < 1), np.sin(np.pi * phase), 0.0)
    for oc in gen.overcast:
        inside = (day >= oc.start_day) & (day < oc.start_day + oc.days)
        harvest = np.where(inside, harvest * oc.factor, harvest)
    if gen.jitter > 0:
        rng = np.random.default_rng(gen.seed)
        harvest = harvest * np.clip(1.0 + gen.jitter * rng.standard_normal(n), 0.0, None)
    return EnergyTrace(np.round(harvest, 6), gen.slot_minutes)


def dump_trace(trace: EnergyTrace) -> str:
    lines = [f"{TRACE_MAGIC} version={TRACE_VERSION} slot_minutes={trace.slot_minutes} units=Wh"]
    lines += [repr(float(h)) for h in trace.harvest]
    return "\n".join(lines) + "\n"


def parse_trace(text: str) -> EnergyTrace:
    lines = text.splitlines()
    if not lines or not lines[0].startswith(TRACE_MAGIC):
        raise TraceError(f"line 1: expected header starting with {TRACE_MAGIC!r}")
    header = {}
    for item in lines[0][len(TRACE_MAGIC):].split():
        key, sep, value = item.partition("=")
        if not sep:
            raise TraceError(f"line 1: malformed header item {item!r}")
        header[key] = value
    if header.get("version") != str(TRACE_VERSION):
        raise TraceError(f"line 1: unsupported trace version {header.get('version')!r}")
    if header.get("units") != "Wh":
        raise TraceError(f"line 1: units must be Wh, got {header.get('units')!r}")
    try:
        slot_minutes = int(header["slot_minutes"])
    except (KeyError, ValueError):
        raise TraceError("line 1: slot_minutes missing or not an integer") from None
    values = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            v = float(line)
        except ValueError:
            raise TraceError(f"line {lineno}: not a number: {line!r}") from None
        if not math.isfinite(v) or v < 0:
            raise TraceError(f"line {lineno}: harvest must be finite and >= 0")
        values.append(v)
    return EnergyTrace(np.array(values), slot_minutes)


def read_trace(path: str | Path) -> EnergyTrace:
    return parse_trace(Path(path).read_text(encoding="utf-8"))


def write_trace(trace: EnergyTrace, path: str | Path) -> None:
    Path(path).write_text(dump_trace(trace), encoding="utf-8")

