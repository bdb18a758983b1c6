"""
Seeded synthetic workload traces.

A desk-scale stand-in for real page-view traces: a daily sine wave, white
noise and occasional multiplicative bursts. The same profile and seed always
give the same trace.
"""
from dataclasses import dataclass

import numpy as np
import pandas as pd

from collector.trace import Trace
from errors import ValidationError


@dataclass(frozen=True)
class BurstProfile:
    """
    Shape of a synthetic trace.

    Args:
        n_slots:           total number of samples.
        slot_seconds:      spacing of the timestamps.
        base_level:        mean of the diurnal wave (raw units).
        diurnal_amplitude: relative swing of the wave, in [0, 1).
        period_slots:      slots per diurnal period (24 for hourly data).
        noise_level:       std-dev of white noise relative to base_level.
        burst_probability: chance that a slot is a burst.
        burst_height:      multiplier applied to a burst slot.
        recurring_bursts:  bursts hit the same slots of every period (scheduled
                           jobs, backups) instead of landing at random; each
                           period then holds round(burst_probability *
                           period_slots) of them.
        start:             timestamp of the first slot (UTC).
    """
    n_slots: int = 5 * 672
    slot_seconds: float = 3600.0
    base_level: float = 100.0
    diurnal_amplitude: float = 0.3
    period_slots: int = 24
    noise_level: float = 0.05
    burst_probability: float = 0.05
    burst_height: float = 5.0
    recurring_bursts: bool = False
    start: str = "2014-01-01T00:00:00Z"

    def __post_init__(self):
        if self.n_slots < 1:
            raise ValidationError("n_slots must be positive")
        if not self.slot_seconds > 0:
            raise ValidationError("slot_seconds must be > 0")
        if not self.base_level > 0:
            raise ValidationError("base_level must be > 0")
        if not 0 <= self.diurnal_amplitude < 1:
            raise ValidationError("diurnal_amplitude must lie in [0, 1)")
        if self.period_slots < 1:
            raise ValidationError("period_slots must be positive")
        if self.noise_level < 0:
            raise ValidationError("noise_level must be >= 0")
        if not 0 <= self.burst_probability <= 1:
            raise ValidationError("burst_probability must lie in [0, 1]")
        if self.burst_height < 1:
            raise ValidationError("burst_height must be >= 1")

    @property
    def diurnal_peak(self) -> float:
        return self.base_level * (1 + self.diurnal_amplitude)


def diurnal_wave(profile: BurstProfile) -> np.ndarray:
    """The noiseless daily pattern the bursts ride on."""
    t = np.arange(profile.n_slots)
    phase = 2 * np.pi * t / profile.period_slots
    return profile.base_level * (1 + profile.diurnal_amplitude * np.sin(phase))


def burst_slots(profile: BurstProfile, rng: np.random.Generator) -> np.ndarray:
    """Boolean burst indicator per slot."""
    if not profile.recurring_bursts:
        return rng.random(profile.n_slots) < profile.burst_probability
    count = min(int(round(profile.burst_probability * profile.period_slots)), profile.period_slots)
    template = np.zeros(profile.period_slots, dtype=bool)
    template[rng.choice(profile.period_slots, size=count, replace=False)] = True
    return np.resize(template, profile.n_slots)


def synth_trace(profile: BurstProfile, seed: int, unit_scale: float = 1.0) -> Trace:
    """
    Generate a reproducible trace.

    Examples:
        burst_probability=0    → pure diurnal wave plus noise
        burst_probability=0.05 → about 5% of slots above twice the diurnal peak
        recurring_bursts=True, period_slots=24 → one burst at the same hour every day
    """
    rng = np.random.default_rng(seed)
    wave = diurnal_wave(profile)
    noise = rng.standard_normal(profile.n_slots) * profile.noise_level * profile.base_level
    bursts = burst_slots(profile, rng)

    values = np.clip(wave + noise, 0.0, None)
    values = np.where(bursts, values * profile.burst_height, values)

    start = pd.Timestamp(profile.start)
    if start.tzinfo is None:
        start = start.tz_localize("UTC")
    stamps = start + pd.to_timedelta(np.arange(profile.n_slots) * profile.slot_seconds, unit="s")
    return Trace(timestamps=pd.DatetimeIndex(stamps), values=values, unit_scale=unit_scale)
