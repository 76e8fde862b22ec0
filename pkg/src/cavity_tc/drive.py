"""Pump schedules: linear ramps, holds and periodic modulation.

During a modulate segment the depth is ``eps_f * (1 + f0 * g(theta))`` where
``theta = omega_dr * (t - t_mod) + drive_phase`` is measured from the start of
the first modulate segment, so the drive phase runs continuously through the
f0 ramp and the modulated hold.  ``g`` is cosine-like: phase 0 is a maximum
for the sine and square waveforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict, replace
from typing import Sequence

import numpy as np

from .model import PumpValue, SystemParams, TWO_PI

WAVEFORMS = ("sine", "square", "sawtooth")
NOISE_TARGETS = ("delta_eff", "epsilon_f", "f0", "omega_dr")
SEGMENT_KINDS = ("ramp", "hold", "modulate")

# amplitude of the first harmonic of each waveform for unit f0
FUNDAMENTAL_AMPLITUDE = {"square": 4.0 / math.pi, "sine": 1.0, "sawtooth": 2.0 / math.pi}


def waveform(name: str, theta):
    theta = np.asarray(theta, dtype=float)
    if name == "sine":
        return np.cos(theta)
    if name == "square":
        return np.where(np.cos(theta) >= 0.0, 1.0, -1.0)
    if name == "sawtooth":
        frac = np.mod(theta / TWO_PI + 0.5, 1.0)
        return 2.0 * frac - 1.0
    raise ValueError(f"unknown waveform {name!r}; expected one of {WAVEFORMS}")


@dataclass(frozen=True)
class Segment:
    kind: str
    duration: float
    epsilon_start: float
    epsilon_end: float | None = None
    f0_start: float = 0.0
    f0_end: float | None = None
    waveform: str = "sine"
    omega_dr: float = 0.0
    drive_phase: float = 0.0

    def __post_init__(self):
        if self.kind not in SEGMENT_KINDS:
            raise ValueError(f"segment kind must be one of {SEGMENT_KINDS}, got {self.kind!r}")
        if not self.duration > 0:
            raise ValueError(f"segment duration must be positive, got {self.duration}")
        if self.waveform not in WAVEFORMS:
            raise ValueError(f"unknown waveform {self.waveform!r}")
        if self.f0_start < 0 or (self.f0_end is not None and self.f0_end < 0):
            raise ValueError("f0 must be non-negative")
        if self.kind == "modulate" and not self.omega_dr > 0:
            raise ValueError("modulate segment needs omega_dr > 0")

    @property
    def eps_end(self) -> float:
        return self.epsilon_start if self.epsilon_end is None else self.epsilon_end

    @property
    def f0_final(self) -> float:
        return self.f0_start if self.f0_end is None else self.f0_end


@dataclass(frozen=True)
class NoiseChannel:
    """White parameter noise, piecewise constant at the channel bandwidth.

    amplitude is in the units of the target: rad/s for delta_eff and
    omega_dr, recoil units for epsilon_f, dimensionless for f0.
    """

    target: str
    amplitude: float
    bandwidth: float = 50.0e3

    def __post_init__(self):
        if self.target not in NOISE_TARGETS:
            raise ValueError(f"noise target must be one of {NOISE_TARGETS}, got {self.target!r}")
        if self.amplitude < 0:
            raise ValueError("noise amplitude must be non-negative")
        if not self.bandwidth > 0:
            raise ValueError("noise bandwidth must be positive")


@dataclass(frozen=True)
class NoiseState:
    """One drawn realization of every noise channel of a program."""

    values: tuple  # one array per channel, one entry per refresh interval

    @classmethod
    def empty(cls) -> "NoiseState":
        return cls(())


@dataclass(frozen=True)
class DriveProgram:
    segments: tuple
    noise: tuple = ()
    analysis_window: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        object.__setattr__(self, "noise", tuple(self.noise))
        if not self.segments:
            raise ValueError("a drive program needs at least one segment")
        if self.analysis_window is not None:
            t0, t1 = self.analysis_window
            if not (0 <= t0 < t1 <= self.duration + 1e-12):
                raise ValueError(f"analysis window {self.analysis_window} outside program span")
            object.__setattr__(self, "analysis_window", (float(t0), float(t1)))

    @property
    def duration(self) -> float:
        return float(sum(s.duration for s in self.segments))

    @property
    def boundaries(self) -> np.ndarray:
        """End time of every segment."""
        return np.cumsum([s.duration for s in self.segments])

    @property
    def starts(self) -> np.ndarray:
        return np.concatenate([[0.0], self.boundaries[:-1]])

    @property
    def modulation_origin(self) -> float | None:
        for start, seg in zip(self.starts, self.segments):
            if seg.kind == "modulate":
                return float(start)
        return None

    @property
    def drive_segment(self) -> Segment | None:
        """Last modulate segment (the one that carries the steady drive)."""
        mods = [s for s in self.segments if s.kind == "modulate"]
        return mods[-1] if mods else None

    @property
    def omega_dr(self) -> float | None:
        seg = self.drive_segment
        return None if seg is None else seg.omega_dr

    def segment_index(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.boundaries, t, side="right")
        return np.minimum(idx, len(self.segments) - 1)

    def draw_noise(self, rng: np.random.Generator) -> NoiseState:
        if not self.noise:
            return NoiseState.empty()
        origin = self.modulation_origin
        span = self.duration - (origin if origin is not None else self.duration)
        values = []
        for ch in self.noise:
            n = int(math.ceil(span * ch.bandwidth)) + 2
            values.append(rng.uniform(-ch.amplitude, ch.amplitude, size=n))
        return NoiseState(tuple(values))

    def sample(self, t, noise_state: NoiseState | None = None):
        """Vectorized pump depth (recoil units) and detuning offset (rad/s) at t."""
        t = np.asarray(t, dtype=float)
        eps = np.zeros_like(t)
        d_delta = np.zeros_like(t)
        idx = self.segment_index(t)
        starts = self.starts
        origin = self.modulation_origin
        channels = {}
        if noise_state is not None and noise_state.values:
            for ch, vals in zip(self.noise, noise_state.values):
                channels[ch.target] = (ch, vals)
        for k, seg in enumerate(self.segments):
            sel = idx == k
            if not sel.any():
                continue
            tau = t[sel] - starts[k]
            frac = np.clip(tau / seg.duration, 0.0, 1.0)
            if seg.kind == "ramp":
                eps[sel] = seg.epsilon_start + (seg.eps_end - seg.epsilon_start) * frac
            elif seg.kind == "hold":
                eps[sel] = seg.epsilon_start
            else:
                ts = t[sel] - origin
                eps_f = np.full(ts.shape, seg.epsilon_start)
                f0 = seg.f0_start + (seg.f0_final - seg.f0_start) * frac
                theta = seg.omega_dr * ts + seg.drive_phase
                for target, (ch, vals) in channels.items():
                    slot = np.floor(ts * ch.bandwidth).astype(int)
                    slot = np.clip(slot, 0, len(vals) - 1)
                    v = vals[slot]
                    if target == "delta_eff":
                        d_delta[sel] = v
                    elif target == "epsilon_f":
                        eps_f = eps_f + v
                    elif target == "f0":
                        f0 = f0 + v
                    elif target == "omega_dr":
                        # phase-continuous frequency noise
                        accumulated = np.concatenate([[0.0], np.cumsum(vals) / ch.bandwidth])
                        theta = theta + accumulated[slot] + v * (ts - slot / ch.bandwidth)
                eps[sel] = eps_f * (1.0 + f0 * waveform(seg.waveform, theta))
        return eps, d_delta

    def to_dict(self) -> dict:
        return {
            "segments": [asdict(s) for s in self.segments],
            "noise": [asdict(c) for c in self.noise],
            "analysis_window": None if self.analysis_window is None else list(self.analysis_window),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DriveProgram":
        win = d.get("analysis_window")
        return cls(
            tuple(Segment(**s) for s in d["segments"]),
            tuple(NoiseChannel(**c) for c in d.get("noise", ())),
            None if win is None else tuple(win),
        )

    def with_noise(self, channels: Sequence[NoiseChannel]) -> "DriveProgram":
        return replace(self, noise=tuple(channels))


def evaluate_drive(program: DriveProgram, t: float, params: SystemParams,
                   noise_state: NoiseState | None = None):
    """Pump value and instantaneous effective parameters at a single time."""
    if not (0.0 <= t <= program.duration):
        raise ValueError(f"t={t} outside program span [0, {program.duration}]")
    eps, d_delta = program.sample(np.array([t]), noise_state)
    eps = float(eps[0])
    effective = {
        "epsilon": eps,
        "delta_eff": params.effective_detuning + float(d_delta[0]),
        "segment": int(program.segment_index(t)),
    }
    return PumpValue.from_depth(eps, params), effective


def standard_protocol(epsilon_f: float = 1.7, f0: float = 0.0, omega_dr: float = TWO_PI * 20.5e3,
                      waveform: str = "sine", drive_phase: float = 0.0, ramp_time: float = 10e-3,
                      hold_time: float = 0.5e-3, f0_ramp_time: float = 0.5e-3,
                      modulation_time: float = 10e-3, noise: Sequence[NoiseChannel] = ()) -> DriveProgram:
    """Ramp to eps_f, hold, ramp f0 up, then hold the modulation.

    The final modulated hold is flagged as the analysis window.
    """
    common = dict(waveform=waveform, omega_dr=omega_dr, drive_phase=drive_phase)
    segments = (
        Segment("ramp", ramp_time, 0.0, epsilon_f),
        Segment("hold", hold_time, epsilon_f),
        Segment("modulate", f0_ramp_time, epsilon_f, f0_start=0.0, f0_end=f0, **common),
        Segment("modulate", modulation_time, epsilon_f, f0_start=f0, **common),
    )
    end = ramp_time + hold_time + f0_ramp_time + modulation_time
    return DriveProgram(segments, tuple(noise), (end - modulation_time, end))
