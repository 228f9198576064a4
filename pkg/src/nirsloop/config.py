"""Session configuration: shipped defaults, JSON overrides, typed accessors.

One JSON document configures every stage; any subset of keys may be given and
is deep-merged over the defaults. Schema (all keys optional):

    seed          int     master seed for subject, noise and answer draws
    fs            float   sampling rate, Hz
    biofeedback   bool    default arm for `run`
    subject       object  SubjectModel fields (see subject.py)
    optics        object  wavelengths, extinction, pathlength_mm, dpf
    dsp           object  n1, stats_window_s, threshold (null = adaptive),
                          threshold_k, excess_k, refractory_s
    features      object  n, x1, x2, x3_window_s
    classifier    object  k, variance_retained
    wire          object  host, control_port, data_port, stress_port,
                          debounce_m, queue_size
    protocol      object  calibration_s, rest_s, training_counts,
                          training_per_item_s, test_fast_per_item_s,
                          test_fast_blocks, pause_s, gap_s,
                          pause_after_calculation, test_phases,
                          eval_repetitions, enable_special,
                          special_item_count, special_per_item_s,
                          answer_bias, answer_stress_weight
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

from .features import FeatureWindowConfig
from .hemodynamics import BeerLambertParams
from .subject import SubjectModel, validate_clock


class ConfigError(Exception):
    pass


DEFAULTS: dict = {
    "seed": 0,
    "fs": 10.0,
    "biofeedback": True,
    "subject": {
        "base_heart_rate": 72.0,
        "hr_stress_delta": 25.0,
        "hbo_rest_mean": 0.0,
        "hbo_stress_mean": 2.5,
        "hhb_rest_mean": 0.0,
        "hhb_stress_mean": -1.2,
        "responsiveness": 0.35,
        "induction": 0.9,
        "rest_recovery": 1.0,
        "learning_rate": 0.01,
        "noise_sigma": 0.05,
        "cardiac_amp_hbo": 0.4,
        "cardiac_amp_hhb": 0.15,
        "superficial_stress_gain": 0.3,
        "source_intensity": 1000.0,
        "ambient": 0.0,
    },
    "optics": {
        "wavelengths": [730, 850],
        "extinction": {"730": [0.0390, 0.1102], "850": [0.1058, 0.0691]},
        "pathlength_mm": 30.0,
        "dpf": {"730": 6.0, "850": 6.0},
    },
    "dsp": {
        "n1": 3,
        "stats_window_s": 3.0,
        "threshold": None,
        "threshold_k": 0.5,
        "excess_k": 1.1,
        "refractory_s": 0.25,
    },
    "features": {"n": 10, "x1": 2, "x2": 1, "x3_window_s": 10.0},
    "classifier": {"k": 5, "variance_retained": 0.95},
    "wire": {
        "host": "127.0.0.1",
        "control_port": 9000,
        "data_port": 9001,
        "stress_port": 9002,
        "debounce_m": 3,
        "queue_size": 256,
    },
    "protocol": {
        "calibration_s": 5.0,
        "rest_s": 10.0,
        "training_counts": [10, 15, 20, 25],
        "training_per_item_s": 2.0,
        "test_fast_per_item_s": 1.5,
        "test_fast_blocks": 2,
        "pause_s": 2.0,
        "gap_s": 5.0,
        "pause_after_calculation": True,
        "test_phases": 4,
        "eval_repetitions": 5,
        "enable_special": True,
        "special_item_count": 30,
        "special_per_item_s": 1.0,
        "answer_bias": 2.0,
        "answer_stress_weight": 3.0,
    },
}


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key in out and isinstance(out[key], dict) and isinstance(value, dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


@dataclass
class SessionConfig:
    """Resolved configuration document plus typed accessors."""

    raw: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    @property
    def fs(self) -> float:
        return float(self.raw["fs"])

    @property
    def biofeedback(self) -> bool:
        return bool(self.raw["biofeedback"])

    def subject_model(self) -> SubjectModel:
        model = SubjectModel(rng_seed=self.seed, **self.raw["subject"])
        validate_clock(model, self.fs)
        return model

    def beer_lambert(self) -> BeerLambertParams:
        return BeerLambertParams.from_dict(self.raw["optics"])

    def feature_config(self) -> FeatureWindowConfig:
        f = self.raw["features"]
        return FeatureWindowConfig(n=int(f["n"]), x1=int(f["x1"]), x2=int(f["x2"]),
                                   x3_window_s=float(f["x3_window_s"]))

    @property
    def dsp(self) -> dict:
        return self.raw["dsp"]

    @property
    def classifier(self) -> dict:
        return self.raw["classifier"]

    @property
    def wire(self) -> dict:
        return self.raw["wire"]

    @property
    def protocol(self) -> dict:
        return self.raw["protocol"]

    def to_dict(self) -> dict:
        return copy.deepcopy(self.raw)


def load_config(path=None, overrides: dict | None = None, seed: int | None = None) -> SessionConfig:
    """Defaults <- config file <- explicit overrides <- seed flag."""
    raw = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            loaded = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot load config {path}: {e}") from e
        if not isinstance(loaded, dict):
            raise ConfigError(f"config {path} must be a JSON object")
        raw = _deep_merge(raw, loaded)
    if overrides:
        raw = _deep_merge(raw, overrides)
    if seed is not None:
        raw["seed"] = int(seed)
    cfg = SessionConfig(raw=raw)
    try:
        cfg.subject_model()
        cfg.beer_lambert()
        cfg.feature_config()
    except (ValueError, KeyError, TypeError) as e:
        raise ConfigError(f"invalid configuration: {e}") from e
    if int(cfg.protocol["test_phases"]) < 1:
        raise ConfigError("protocol.test_phases must be >= 1")
    if not cfg.protocol["training_counts"]:
        raise ConfigError("protocol.training_counts must list at least one block")
    return cfg
