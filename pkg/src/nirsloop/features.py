"""Streaming 20-dimensional feature space over the filtered hemodynamic
signals: per channel and chromophore the mean/std of the second-stage moving
average and of the windowed slope (16 features), plus four heart-rate
variability features shared across channels.

Chain layout per (channel, signal) stream:

    raw -> MA1(n1) -> MA2(n) -> trailing window of (1+x1)*n MA outputs
                   -> Slope(n) -> trailing window of (2+x2)*n slope outputs

MA2 and the slope estimator both consume the stage-1 output with the same
window n, so with x1 == x2 + 1 all four time-domain features of a stream
become valid at exactly the same tick. The heart-rate source is the mean of
the two channels' HBO streams (channel-symmetric), denoised by its own MA1
and fed to the online peak detector.

Delay budget (0-based t_index of first valid output):
    stage-1 output:        n1 - 1
    MA2 / slope output:    n1 + n - 2
    time-domain features:  n1 + n - 3 + (1+x1)*n   == 3n + (n + n1 - 3) at x1=2
    peak confirmation:     1 tick after the peak sample
HRV features hold their last value between peaks and are valid from the
second confirmed peak onward.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .dsp import HrvSample, MovingAverage, PeakDetector, SlopeEstimator, instantaneous_hrv
from .hemodynamics import CHANNELS

SIGNALS = ("hbo", "hhb")

FEATURE_NAMES = tuple(
    f"{ch}_{sig}_{stat}"
    for ch in CHANNELS
    for sig in SIGNALS
    for stat in ("mean_ma", "std_ma", "mean_slope", "std_slope")
) + ("hrv_mean", "hrv_std", "hrv_max", "hrv_inst")

N_FEATURES = len(FEATURE_NAMES)  # 20

PEAK_CONFIRM_LATENCY = 1  # ticks between a peak sample and its emission


class NotWarm(Exception):
    """Raised by window statistics before their warm-up delay has elapsed."""


@dataclass(frozen=True)
class FeatureWindowConfig:
    """Base window n plus the integer window multipliers.

    x1 == x2 + 1 keeps the moving-average and slope feature delays equal;
    x3_window_s is the trailing span for HRV aggregation.
    """

    n: int = 10
    x1: int = 2
    x2: int = 1
    x3_window_s: float = 10.0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.x2 < 1:
            raise ValueError("x2 must be >= 1")
        if self.x1 != self.x2 + 1:
            raise ValueError("x1 must equal x2 + 1 to keep feature delays aligned")
        if self.x3_window_s <= 0:
            raise ValueError("x3_window_s must be > 0")

    @property
    def ma_window(self) -> int:
        return (1 + self.x1) * self.n

    @property
    def slope_window(self) -> int:
        return (2 + self.x2) * self.n


def time_domain_warmup(cfg: FeatureWindowConfig, n1: int) -> int:
    """First t_index (0-based) at which every time-domain feature is valid."""
    return (n1 - 1) + (cfg.n - 1) + (cfg.ma_window - 1)


@dataclass
class FeatureVector:
    """One tick of the feature space with per-feature validity flags."""

    t_index: int
    values: np.ndarray
    valid: np.ndarray

    @property
    def fully_valid(self) -> bool:
        return bool(self.valid.all())

    def to_record(self, label: int | None = None) -> dict:
        rec = {
            "t_index": self.t_index,
            "features": [float(v) if ok else None for v, ok in zip(self.values, self.valid)],
            "valid": [bool(b) for b in self.valid],
        }
        if label is not None:
            rec["label"] = int(label)
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "FeatureVector":
        values = np.array([math.nan if v is None else float(v) for v in rec["features"]])
        return cls(t_index=int(rec["t_index"]), values=values, valid=np.array(rec["valid"], dtype=bool))


def _window_tail(values, size: int, what: str) -> list[float]:
    vals = list(values)
    if len(vals) < size:
        raise NotWarm(f"{what}: {len(vals)} samples < window {size}")
    return vals[-size:]


def mean_ma(values, cfg: FeatureWindowConfig) -> float:
    """Mean of the last (1+x1)*n second-stage MA outputs."""
    w = _window_tail(values, cfg.ma_window, "mean_ma")
    return math.fsum(w) / len(w)


def std_ma(values, cfg: FeatureWindowConfig) -> float:
    """Population std over the same window as mean_ma."""
    w = _window_tail(values, cfg.ma_window, "std_ma")
    m = math.fsum(w) / len(w)
    return math.sqrt(math.fsum((v - m) ** 2 for v in w) / len(w))


def mean_slope(values, cfg: FeatureWindowConfig) -> float:
    """Mean of the last (2+x2)*n slope outputs."""
    w = _window_tail(values, cfg.slope_window, "mean_slope")
    return math.fsum(w) / len(w)


def std_slope(values, cfg: FeatureWindowConfig) -> float:
    """Population std over the same window as mean_slope."""
    w = _window_tail(values, cfg.slope_window, "std_slope")
    m = math.fsum(w) / len(w)
    return math.sqrt(math.fsum((v - m) ** 2 for v in w) / len(w))


def hrv_features(recent: list[HrvSample], latest: HrvSample | None):
    """(mean, std, max, instantaneous) bpm over the trailing HRV span.

    Values hold between peak events: the caller passes the samples currently
    inside the span and the latest sample seen.
    """
    if latest is None or not recent:
        raise NotWarm("hrv: need at least two peaks")
    bpm = [s.bpm for s in recent]
    m = math.fsum(bpm) / len(bpm)
    sd = math.sqrt(math.fsum((b - m) ** 2 for b in bpm) / len(bpm))
    return (m, sd, max(bpm), latest.bpm)


def assemble(time_domain: dict, hrv: tuple | None, t_index: int) -> FeatureVector:
    """Build the ordered 20-entry vector; missing pieces get valid=False.

    ``time_domain[(channel, signal)]`` is a (mean_ma, std_ma, mean_slope,
    std_slope) tuple whose entries may individually be None.
    """
    values = np.full(N_FEATURES, np.nan)
    valid = np.zeros(N_FEATURES, dtype=bool)
    i = 0
    for ch in CHANNELS:
        for sig in SIGNALS:
            quad = time_domain.get((ch, sig)) or (None, None, None, None)
            for v in quad:
                if v is not None:
                    values[i] = v
                    valid[i] = True
                i += 1
    if hrv is not None:
        values[16:20] = hrv
        valid[16:20] = True
    return FeatureVector(t_index=t_index, values=values, valid=valid)


class _SignalChain:
    """Stage-1 denoise, then parallel MA2 and slope with trailing windows."""

    def __init__(self, cfg: FeatureWindowConfig, n1: int):
        self.cfg = cfg
        self.ma1 = MovingAverage(n1)
        self.ma2 = MovingAverage(cfg.n)
        self.slope = SlopeEstimator(cfg.n)
        self.ma_out = deque(maxlen=cfg.ma_window)
        self.slope_out = deque(maxlen=cfg.slope_window)

    def push(self, x: float):
        v1 = self.ma1.push(x)
        if v1 is None:
            return
        v2 = self.ma2.push(v1)
        if v2 is not None:
            self.ma_out.append(v2)
        s = self.slope.push(v1)
        if s is not None:
            self.slope_out.append(s)

    def feature_quad(self):
        cfg = self.cfg
        out = []
        for fn, buf in ((mean_ma, self.ma_out), (std_ma, self.ma_out),
                        (mean_slope, self.slope_out), (std_slope, self.slope_out)):
            try:
                out.append(fn(buf, cfg))
            except NotWarm:
                out.append(None)
        return tuple(out)


class _HrvChain:
    """Cross-channel cardiac source -> MA1 -> peak detector -> HRV span."""

    def __init__(self, cfg: FeatureWindowConfig, n1: int, fs: float, detector: PeakDetector):
        self.fs = fs
        self.span_n = cfg.x3_window_s * fs
        self.ma1 = MovingAverage(n1)
        self.detector = detector
        self.window: deque[HrvSample] = deque()
        self.latest: HrvSample | None = None
        self._prev_peak = None
        self.peaks: list = []

    def push(self, x: float, t_index: int):
        v = self.ma1.push(x)
        if v is None:
            return
        ev = self.detector.push(v, t_index)
        if ev is None:
            return
        self.peaks.append(ev)
        if self._prev_peak is not None:
            s = instantaneous_hrv(self._prev_peak, ev, self.fs)
            self.window.append(s)
            cutoff = s.t_index - self.span_n
            while self.window and self.window[0].t_index <= cutoff:
                self.window.popleft()
            self.latest = s
        self._prev_peak = ev

    def feature_quad(self):
        try:
            return hrv_features(list(self.window), self.latest)
        except NotWarm:
            return None


class FeatureExtractor:
    """Feeds per-channel HBO/HHB samples through the chain, one tick at a time."""

    def __init__(self, cfg: FeatureWindowConfig, fs: float, n1: int = 3,
                 peak_detector: PeakDetector | None = None):
        self.cfg = cfg
        self.fs = fs
        self.n1 = n1
        self.chains = {(ch, sig): _SignalChain(cfg, n1) for ch in CHANNELS for sig in SIGNALS}
        if peak_detector is None:
            peak_detector = PeakDetector(fs=fs, stats_window_n=int(round(3.0 * fs)))
        self.hrv = _HrvChain(cfg, n1, fs, peak_detector)

    def push(self, t_index: int, samples: dict[str, tuple[float, float]]) -> FeatureVector:
        """samples: channel -> (hbo, hhb) for this tick; returns the vector."""
        for ch in CHANNELS:
            hbo, hhb = samples[ch]
            self.chains[(ch, "hbo")].push(hbo)
            self.chains[(ch, "hhb")].push(hhb)
        cardiac = math.fsum(samples[ch][0] for ch in CHANNELS) / len(CHANNELS)
        self.hrv.push(cardiac, t_index)
        td = {key: chain.feature_quad() for key, chain in self.chains.items()}
        return assemble(td, self.hrv.feature_quad(), t_index)

    @property
    def time_domain_warmup(self) -> int:
        return time_domain_warmup(self.cfg, self.n1)
