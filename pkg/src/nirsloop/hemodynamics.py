"""Dual-wavelength optical intensities -> HBO/HHB concentration changes.

The conversion is the modified Beer-Lambert relation: attenuation at each
wavelength is a linear mix of the two chromophore concentration changes,
scaled by the optical pathlength and a differential pathlength factor.
Attenuation uses the standard sign convention log10(I0/I); ambient light is
subtracted from both intensities before the log.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

log = logging.getLogger(__name__)

CHANNELS = ("deep", "superficial")


class HemodynamicsError(Exception):
    pass


class EmptyWindow(HemodynamicsError):
    pass


class NonPositiveIntensity(HemodynamicsError):
    pass


class SingularMatrix(HemodynamicsError):
    pass


@dataclass(frozen=True)
class OpticalFrame:
    """One timestamped raw intensity reading for one channel.

    ``intensity`` maps wavelength (nm) -> detector units; exactly two
    wavelengths per frame, both strictly positive.
    """

    t_index: int
    channel: str
    intensity: dict[int, float]
    led_off: bool = False

    def __post_init__(self):
        if len(self.intensity) != 2:
            raise ValueError("frame must carry exactly two wavelengths")
        for wl, v in self.intensity.items():
            if not v > 0:
                raise NonPositiveIntensity(f"intensity {v} at {wl} nm must be > 0")


@dataclass(frozen=True)
class HemoSample:
    """Per-channel HBO/HHB concentration change (uM) from baseline."""

    t_index: int
    channel: str
    hbo: float
    hhb: float


@dataclass(frozen=True)
class CalibrationBaseline:
    """Per (channel, wavelength) baseline intensity and ambient offset."""

    i0: dict[tuple[str, int], float]
    ambient: dict[tuple[str, int], float]

    def __post_init__(self):
        for key, i0 in self.i0.items():
            g = self.ambient.get(key, 0.0)
            if not (i0 > g >= 0.0):
                raise NonPositiveIntensity(
                    f"baseline requires i0 > ambient >= 0 at {key}, got i0={i0} g={g}"
                )


class BeerLambertParams:
    """Extinction matrix, pathlength and DPF for the two-wavelength solve.

    ``extinction[wl] = (e_hbo, e_hhb)`` in 1/(mM*mm); pathlength in mm; one
    DPF per wavelength. Concentrations cross the API in uM.
    """

    def __init__(self, wavelengths, extinction, pathlength_mm, dpf, det_tol=1e-12):
        if len(wavelengths) != 2:
            raise ValueError("exactly two wavelengths required")
        if pathlength_mm <= 0:
            raise ValueError("pathlength must be > 0")
        self.wavelengths = tuple(int(w) for w in wavelengths)
        self.extinction = {int(w): (float(e[0]), float(e[1])) for w, e in extinction.items()}
        self.pathlength_mm = float(pathlength_mm)
        self.dpf = {int(w): float(dpf[w]) for w in self.wavelengths}
        for w in self.wavelengths:
            if self.dpf[w] <= 0:
                raise ValueError("dpf must be > 0")

        # rows: wavelength; cols: (hbo, hhb); units 1/mM after d*dpf scaling
        w1, w2 = self.wavelengths
        d = self.pathlength_mm
        self._m = (
            (self.extinction[w1][0] * d * self.dpf[w1], self.extinction[w1][1] * d * self.dpf[w1]),
            (self.extinction[w2][0] * d * self.dpf[w2], self.extinction[w2][1] * d * self.dpf[w2]),
        )
        a, b = self._m[0]
        c, e = self._m[1]
        self._det = a * e - b * c
        if abs(self._det) < det_tol:
            raise SingularMatrix(f"extinction system is singular (det={self._det:.3e})")
        log.info(
            "beer-lambert params loaded: wavelengths=%s condition=%.3g",
            self.wavelengths,
            self.condition_number,
        )

    @property
    def condition_number(self) -> float:
        a, b = self._m[0]
        c, d = self._m[1]
        # 2-norm condition of a 2x2 from its singular values
        s = a * a + b * b + c * c + d * d
        t = math.sqrt(max(0.0, s * s - 4.0 * self._det * self._det))
        smax = math.sqrt((s + t) / 2.0)
        smin = math.sqrt(max(0.0, (s - t) / 2.0))
        return float("inf") if smin == 0 else smax / smin

    def to_dict(self) -> dict:
        return {
            "wavelengths": list(self.wavelengths),
            "extinction": {str(w): list(self.extinction[w]) for w in self.wavelengths},
            "pathlength_mm": self.pathlength_mm,
            "dpf": {str(w): self.dpf[w] for w in self.wavelengths},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BeerLambertParams":
        wavelengths = [int(w) for w in d["wavelengths"]]
        return cls(
            wavelengths=wavelengths,
            extinction={int(w): tuple(v) for w, v in d["extinction"].items()},
            pathlength_mm=d["pathlength_mm"],
            dpf={int(w): v for w, v in d["dpf"].items()},
        )


def default_params() -> BeerLambertParams:
    """Shipped default optics; documented config values, freely overridable."""
    return BeerLambertParams(
        wavelengths=(730, 850),
        extinction={730: (0.0390, 0.1102), 850: (0.1058, 0.0691)},
        pathlength_mm=30.0,
        dpf={730: 6.0, 850: 6.0},
    )


def absorbance(i: float, i0: float, g: float = 0.0) -> float:
    """Attenuation log10((i0-g)/(i-g)); requires both intensities above ambient."""
    if not (i > g and i0 > g):
        raise NonPositiveIntensity(f"need i > g and i0 > g, got i={i} i0={i0} g={g}")
    return math.log10((i0 - g) / (i - g))


def intensity_from_attenuation(da: float, i0: float, g: float = 0.0) -> float:
    """Inverse of :func:`absorbance` for synthesizing detector readings."""
    return g + (i0 - g) * 10.0 ** (-da)


def forward_attenuation(hbo_um: float, hhb_um: float, params: BeerLambertParams):
    """Concentration pair (uM) -> per-wavelength attenuation pair."""
    c1 = hbo_um * 1e-3
    c2 = hhb_um * 1e-3
    (a, b), (c, d) = params._m
    return (a * c1 + b * c2, c * c1 + d * c2)

def invert_beer_lambert(da, params: BeerLambertParams):
    """Per-wavelength attenuation pair -> (HBO, HHB) change in uM.

    Solves the 2x2 linear system; raises SingularMatrix at load time if the
    extinction system is degenerate.
    """
    (a, b), (c, d) = params._m
    det = params._det
    da1, da2 = da
    hbo_mm = (d * da1 - b * da2) / det
    hhb_mm = (a * da2 - c * da1) / det
    return (hbo_mm * 1e3, hhb_mm * 1e3)


def calibrate(frames, duration_s: float, fs: float) -> CalibrationBaseline:
    """Estimate per-key baseline intensity and ambient offset from a rest window.

    Ambient comes from LED-off frames when present, else 0; i0 is the raw mean
    lit intensity (ambient is subtracted later, inside absorbance). The window
    must span at least duration_s * fs lit frames per channel.
    """
    lit: dict[tuple[str, int], list[float]] = {}
    dark: dict[tuple[str, int], list[float]] = {}
    per_channel = {}
    for f in frames:
        target = dark if f.led_off else lit
        for wl, v in f.intensity.items():
            if not v > 0:
                raise NonPositiveIntensity(f"intensity {v} at {wl} nm must be > 0")
            target.setdefault((f.channel, wl), []).append(v)
        if not f.led_off:
            per_channel[f.channel] = per_channel.get(f.channel, 0) + 1
    if not lit:
        raise EmptyWindow("no lit frames in calibration window")
    need = duration_s * fs
    for ch, n in per_channel.items():
        if n < need:
            raise EmptyWindow(f"channel {ch}: {n} frames < required {need:.0f}")
    ambient = {key: math.fsum(vals) / len(vals) for key, vals in dark.items()}
    # i0 stays raw; absorbance() subtracts ambient from both terms of the log
    i0 = {}
    for key, vals in lit.items():
        i0[key] = math.fsum(vals) / len(vals)
        ambient.setdefault(key, 0.0)
    return CalibrationBaseline(i0=i0, ambient=ambient)


def frame_to_hemo(frame: OpticalFrame, baseline: CalibrationBaseline, params: BeerLambertParams) -> HemoSample:
    """Convert one raw frame to concentration changes using the calibrated baseline."""
    da = []
    for wl in params.wavelengths:
        key = (frame.channel, wl)
        da.append(absorbance(frame.intensity[wl], baseline.i0[key], baseline.ambient[key]))
    hbo, hhb = invert_beer_lambert(tuple(da), params)
    return HemoSample(t_index=frame.t_index, channel=frame.channel, hbo=hbo, hhb=hhb)
