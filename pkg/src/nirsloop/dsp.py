"""Causal streaming DSP: moving averages, slope estimation, online peak
detection with refractory logic, and beat-to-beat heart rate.

All filters are single-threaded stateful objects, one instance per stream.
Outputs are None until the window is warm.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass


class DspError(Exception):
    pass


class NonIncreasingPeaks(DspError):
    pass


@dataclass(frozen=True)
class PeakEvent:
    t_index: int
    value: float


@dataclass(frozen=True)
class HrvSample:
    """Instantaneous heart rate at the later of two peaks."""

    t_index: int
    bpm: float


class MovingAverage:
    """Arithmetic mean of the last N inputs.

    Running sum is resynced from the buffer every N evictions so it never
    drifts from the exact window sum.
    """

    def __init__(self, window_n: int):
        if window_n < 1:
            raise ValueError("window_n must be >= 1")
        self.window_n = window_n
        self._buf = deque(maxlen=window_n)
        self._sum = 0.0
        self._evictions = 0

    def push(self, x: float):
        if len(self._buf) == self.window_n:
            self._sum -= self._buf[0]
            self._evictions += 1
        self._buf.append(x)
        self._sum += x
        if self._evictions >= self.window_n:
            self._sum = math.fsum(self._buf)
            self._evictions = 0
        if len(self._buf) < self.window_n:
            return None
        return self._sum / self.window_n


class SlopeEstimator:
    """Least-squares line slope (units/sample) over the last N inputs."""

    def __init__(self, window_n: int):
        if window_n < 2:
            raise ValueError("window_n must be >= 2 for a slope")
        self.window_n = window_n
        self._buf = deque(maxlen=window_n)
        n = window_n
        self._t_mean = (n - 1) / 2.0
        self._t_var_sum = n * (n * n - 1) / 12.0  # sum((t - t_mean)^2) for t=0..n-1

    def push(self, x: float):
        self._buf.append(x)
        if len(self._buf) < self.window_n:
            return None
        num = math.fsum((t - self._t_mean) * v for t, v in enumerate(self._buf))
        return num / self._t_var_sum


class PeakDetector:
    """Online peak detector: threshold + deviation rule + refractory period.

    A sample is a candidate peak when it (a) exceeds the threshold, (b) sits
    at least excess_k running standard deviations above the running mean, and
    (c) rises above its predecessor. It is confirmed one sample later when the
    successor is lower (one-sample emission latency). A confirmed candidate
    closer than refractory_s to the previous emitted peak is discarded.

    The running mean/std cover the stats_window samples before the candidate;
    nothing is emitted until that window is full. threshold=None uses the
    adaptive policy mean + threshold_k * std.
    """

    def __init__(self, fs: float, stats_window_n: int, threshold: float | None = None,
                 threshold_k: float = 0.5, excess_k: float = 1.1, refractory_s: float = 0.25):
        if stats_window_n < 2:
            raise ValueError("stats_window_n must be >= 2")
        self.fs = fs
        self.threshold = threshold
        self.threshold_k = threshold_k
        self.excess_k = excess_k
        self.refractory_n = refractory_s * fs
        self._stats = deque(maxlen=stats_window_n)
        self._prev: tuple[int, float] | None = None
        self._candidate: tuple[int, float] | None = None
        self.last_peak_index: int | None = None

    def _stats_ready(self) -> bool:
        return len(self._stats) == self._stats.maxlen

    def _mean_std(self):
        mean = math.fsum(self._stats) / len(self._stats)
        var = math.fsum((v - mean) ** 2 for v in self._stats) / len(self._stats)
        return mean, math.sqrt(var)

    def push(self, x: float, t_index: int):
        event = None
        if self._candidate is not None:
            ct, cv = self._candidate
            if x < cv:
                if self.last_peak_index is None or (ct - self.last_peak_index) >= self.refractory_n:
                    event = PeakEvent(t_index=ct, value=cv)
                    self.last_peak_index = ct
                # else: too close to the previous peak, candidate dropped
            self._candidate = None

        if self._prev is not None and self._stats_ready():
            prev_v = self._prev[1]
            if x > prev_v:
                mean, std = self._mean_std()
                theta = self.threshold if self.threshold is not None else mean + self.threshold_k * std
                if x > theta and (x - mean) >= self.excess_k * std:
                    self._candidate = (t_index, x)

        self._stats.append(x)
        self._prev = (t_index, x)
        return event


def instantaneous_hrv(prev: PeakEvent, cur: PeakEvent, fs: float) -> HrvSample:
    """Beat rate from two consecutive peaks: 60*fs / inter-peak samples."""
    if cur.t_index <= prev.t_index:
        raise NonIncreasingPeaks(f"peak indices must increase: {prev.t_index} -> {cur.t_index}")
    return HrvSample(t_index=cur.t_index, bpm=60.0 * fs / (cur.t_index - prev.t_index))
