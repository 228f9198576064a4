import pytest

from nirsloop.config import load_config

# Short protocol for fast end-to-end tests; structure mirrors the full one.
COMPACT_PROTOCOL = {
    "calibration_s": 3.0,
    "rest_s": 6.0,
    "training_counts": [4, 5],
    "training_per_item_s": 2.0,
    "test_fast_per_item_s": 1.5,
    "test_fast_blocks": 1,
    "pause_s": 1.0,
    "gap_s": 2.0,
    "eval_repetitions": 3,
    "test_phases": 4,
}


def compact_config(seed=0, **extra):
    overrides = {"protocol": dict(COMPACT_PROTOCOL)}
    for key, value in extra.items():
        if key in overrides and isinstance(value, dict):
            overrides[key].update(value)
        else:
            overrides[key] = value
    return load_config(overrides=overrides, seed=seed)


@pytest.fixture
def cfg_compact():
    return compact_config()
