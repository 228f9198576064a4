"""Synthetic subject: a latent binary stress state driving dual-wavelength
optical intensities.

The latent state is a two-state Markov chain evaluated at one-second
boundaries: calculation blocks induce stress, vibration feedback (and rest
blocks) calm it. Accumulated vibration exposure slowly shifts both rates in
the calming direction, standing in for the human reward-learning dynamic.
Concentrations are state-dependent means plus a cardiac sinusoid at the
current heart rate plus Gaussian noise, pushed through the forward
Beer-Lambert map so the recorded intensities invert exactly.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .hemodynamics import (
    CHANNELS,
    BeerLambertParams,
    OpticalFrame,
    default_params,
    forward_attenuation,
    intensity_from_attenuation,
)


class BlockKind(enum.Enum):
    REST = "rest"
    CALCULATION = "calculation"
    SPECIAL = "special"

    @property
    def stressful(self) -> bool:
        return self is not BlockKind.REST


@dataclass
class SampleClock:
    """Monotone sample counter at a fixed rate."""

    fs: float = 10.0
    t_index: int = 0

    def tick(self) -> int:
        t = self.t_index
        self.t_index += 1
        return t


@dataclass
class SubjectModel:
    """Parameters and live state of one simulated subject.

    Transition fields are probabilities per second; concentration means are
    uM; noise_sigma is the per-sample concentration noise in uM.
    """

    base_heart_rate: float = 72.0
    hr_stress_delta: float = 25.0
    hbo_rest_mean: float = 0.0
    hbo_stress_mean: float = 2.5
    hhb_rest_mean: float = 0.0
    hhb_stress_mean: float = -1.2
    responsiveness: float = 0.35
    induction: float = 0.9
    rest_recovery: float = 1.0
    learning_rate: float = 0.01
    noise_sigma: float = 0.05
    cardiac_amp_hbo: float = 0.4
    cardiac_amp_hhb: float = 0.15
    superficial_stress_gain: float = 0.3
    source_intensity: float = 1000.0
    ambient: float = 0.0
    rng_seed: int = 0
    latent_stress: int = 0

    def __post_init__(self):
        for name in ("responsiveness", "induction", "rest_recovery"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {p}")
        if not 40.0 <= self.base_heart_rate <= 180.0:
            raise ValueError(f"base_heart_rate must be in [40, 180], got {self.base_heart_rate}")
        if self.latent_stress not in (0, 1):
            raise ValueError("latent_stress must be 0 or 1")
        self._rng = np.random.default_rng(self.rng_seed)
        self._phase = 0.0
        self._vibration_seconds = 0.0

    @property
    def heart_rate(self) -> float:
        return self.base_heart_rate + self.hr_stress_delta * self.latent_stress

    def effective_responsiveness(self) -> float:
        decay = math.exp(-self.learning_rate * self._vibration_seconds)
        return 1.0 - (1.0 - self.responsiveness) * decay

    def effective_induction(self) -> float:
        return self.induction * math.exp(-self.learning_rate * self._vibration_seconds)


def validate_clock(model: SubjectModel, fs: float) -> None:
    """Cardiac peaks must be resolvable: fs above twice the max heart rate."""
    max_hz = (model.base_heart_rate + max(0.0, model.hr_stress_delta)) / 60.0
    if fs <= 2.0 * max_hz:
        raise ValueError(f"fs={fs} too low for heart rate up to {max_hz * 60:.0f} bpm")


def truth_label(model: SubjectModel) -> int:
    """Current latent stress state, for scoring against ground truth."""
    return model.latent_stress


def _transition(model: SubjectModel, block: BlockKind, vibration_on: bool) -> None:
    u = model._rng.uniform()
    if model.latent_stress == 1:
        if vibration_on:
            if u < model.effective_responsiveness():
                model.latent_stress = 0
        elif block is BlockKind.REST:
            if u < model.rest_recovery:
                model.latent_stress = 0
    else:
        if block.stressful and u < model.effective_induction():
            model.latent_stress = 1


def step(model: SubjectModel, clock: SampleClock, block: BlockKind,
         vibration_on: bool, params: BeerLambertParams) -> list[OpticalFrame]:
    """Advance one tick and emit one frame per channel.

    The caller advances the clock exactly once per call; state transitions
    fire at one-second boundaries using the block context and the vibration
    state of that tick.
    """
    t = clock.tick()
    fs = clock.fs
    if vibration_on:
        model._vibration_seconds += 1.0 / fs
    if t > 0 and t % int(round(fs)) == 0:
        _transition(model, block, vibration_on)

    model._phase += 2.0 * math.pi * (model.heart_rate / 60.0) / fs
    cardiac = math.sin(model._phase)
    s = model.latent_stress

    hbo_delta = (model.hbo_stress_mean - model.hbo_rest_mean) * s
    hhb_delta = (model.hhb_stress_mean - model.hhb_rest_mean) * s
    frames = []
    for ch in CHANNELS:
        gain = 1.0 if ch == "deep" else model.superficial_stress_gain
        hbo = (model.hbo_rest_mean + gain * hbo_delta
               + model.cardiac_amp_hbo * cardiac
               + model.noise_sigma * model._rng.standard_normal())
        hhb = (model.hhb_rest_mean + gain * hhb_delta
               - model.cardiac_amp_hhb * cardiac
               + model.noise_sigma * model._rng.standard_normal())
        da = forward_attenuation(hbo, hhb, params)
        intensity = {
            wl: intensity_from_attenuation(a, model.source_intensity, model.ambient)
            for wl, a in zip(params.wavelengths, da)
        }
        frames.append(OpticalFrame(t_index=t, channel=ch, intensity=intensity))
    return frames


class SubjectFrameSource:
    """Frame source for the recorder node; block and vibration are settable
    by the session driver between ticks."""

    def __init__(self, model: SubjectModel, fs: float = 10.0,
                 params: BeerLambertParams | None = None):
        validate_clock(model, fs)
        self.model = model
        self.clock = SampleClock(fs=fs)
        self.params = params if params is not None else default_params()
        self.block = BlockKind.REST
        self.vibration_on = False

    def next_frames(self) -> list[OpticalFrame]:
        return step(self.model, self.clock, self.block, self.vibration_on, self.params)
