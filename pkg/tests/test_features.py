import math

import numpy as np
import pytest

from nirsloop.dsp import HrvSample
from nirsloop.features import (
    FEATURE_NAMES,
    N_FEATURES,
    PEAK_CONFIRM_LATENCY,
    FeatureExtractor,
    FeatureVector,
    FeatureWindowConfig,
    NotWarm,
    assemble,
    hrv_features,
    mean_ma,
    mean_slope,
    std_ma,
    std_slope,
    time_domain_warmup,
)
from oracles import hrv_reference, time_domain_reference

CFG = FeatureWindowConfig(n=10, x1=2, x2=1, x3_window_s=10.0)


class TestConfig:
    def test_alignment_constraint_enforced(self):
        with pytest.raises(ValueError):
            FeatureWindowConfig(n=10, x1=3, x2=1)
        with pytest.raises(ValueError):
            FeatureWindowConfig(n=10, x1=1, x2=0)

    def test_window_sizes(self):
        assert CFG.ma_window == 30
        assert CFG.slope_window == 30

    def test_feature_count_and_order(self):
        assert N_FEATURES == 20
        assert FEATURE_NAMES[0] == "deep_hbo_mean_ma"
        assert FEATURE_NAMES[4] == "deep_hhb_mean_ma"
        assert FEATURE_NAMES[8] == "superficial_hbo_mean_ma"
        assert FEATURE_NAMES[16:] == ("hrv_mean", "hrv_std", "hrv_max", "hrv_inst")


class TestWindowStats:
    def test_mean_ma_constant(self):
        assert mean_ma([2.5] * 30, CFG) == 2.5

    def test_mean_ma_sequence(self):
        assert mean_ma(list(range(1, 31)), CFG) == pytest.approx(15.5)

    def test_mean_ma_not_warm(self):
        with pytest.raises(NotWarm):
            mean_ma([1.0] * 29, CFG)

    def test_std_ma_constant_is_zero(self):
        assert std_ma([7.0] * 30, CFG) == 0.0

    def test_std_ma_alternating(self):
        assert std_ma([1.0, -1.0] * 15, CFG) == pytest.approx(1.0)

    def test_mean_slope_constant(self):
        assert mean_slope([0.25] * 30, CFG) == pytest.approx(0.25)

    def test_slope_windows_match_brute_force(self):
        rng = np.random.default_rng(5)
        vals = list(rng.standard_normal(100))
        w = vals[-30:]
        assert mean_slope(vals, CFG) == pytest.approx(np.mean(w), abs=1e-12)
        assert std_slope(vals, CFG) == pytest.approx(np.std(w), abs=1e-12)

    def test_std_slope_not_warm(self):
        with pytest.raises(NotWarm):
            std_slope([0.0] * 29, CFG)


class TestHrvFeatures:
    def test_uniform_spacing(self):
        samples = [HrvSample(t_index=10 * i, bpm=60.0) for i in range(1, 6)]
        assert hrv_features(samples, samples[-1]) == (60.0, 0.0, 60.0, 60.0)

    def test_alternating_intervals(self):
        # peaks at 0, 8, 20, 28, 40: intervals 8,12,8,12 at fs=10 -> 75,50,75,50
        samples = [
            HrvSample(8, 75.0), HrvSample(20, 50.0),
            HrvSample(28, 75.0), HrvSample(40, 50.0),
        ]
        m, s, mx, inst = hrv_features(samples, samples[-1])
        bpm = np.array([75.0, 50.0, 75.0, 50.0])
        assert m == pytest.approx(bpm.mean())
        assert s == pytest.approx(bpm.std())
        assert mx == 75.0
        assert inst == 50.0

    def test_not_warm_before_second_peak(self):
        with pytest.raises(NotWarm):
            hrv_features([], None)


class TestAssemble:
    def test_all_streams_warm(self):
        td = {(ch, sig): (1.0, 2.0, 3.0, 4.0)
              for ch in ("deep", "superficial") for sig in ("hbo", "hhb")}
        v = assemble(td, (60.0, 1.0, 62.0, 59.0), t_index=100)
        assert v.fully_valid
        assert np.isfinite(v.values).all()
        assert v.values.shape == (20,)

    def test_missing_pieces_flagged(self):
        td = {("deep", "hbo"): (1.0, None, 3.0, 4.0)}
        v = assemble(td, None, t_index=5)
        assert list(v.valid[:4]) == [True, False, True, True]
        assert not v.valid[4:].any()

    def test_record_roundtrip(self):
        td = {("deep", "hbo"): (1.0, None, 3.0, 4.0)}
        v = assemble(td, None, t_index=5)
        rec = v.to_record(label=1)
        back = FeatureVector.from_record(rec)
        assert back.t_index == 5
        assert (back.valid == v.valid).all()
        assert back.values[0] == 1.0 and math.isnan(back.values[1])
        assert rec["label"] == 1


def run_extractor(hbo, hhb, cfg=CFG, n1=3, fs=10.0, detector=None):
    ext = FeatureExtractor(cfg, fs=fs, n1=n1, peak_detector=detector)
    vectors = []
    for t in range(len(hbo["deep"])):
        samples = {ch: (hbo[ch][t], hhb[ch][t]) for ch in ("deep", "superficial")}
        vectors.append(ext.push(t, samples))
    return ext, vectors


def random_streams(T, seed=0):
    rng = np.random.default_rng(seed)
    return (
        {"deep": rng.standard_normal(T), "superficial": rng.standard_normal(T)},
        {"deep": rng.standard_normal(T), "superficial": rng.standard_normal(T)},
    )


class TestDelayAlignment:
    def test_first_valid_index_is_exactly_the_documented_warmup(self):
        hbo, hhb = random_streams(200)
        _, vectors = run_extractor(hbo, hhb)
        warmup = time_domain_warmup(CFG, 3)
        assert warmup == 3 * CFG.n + (CFG.n + 3 - 3)  # 3N plus the chain constant
        first_valid = next(t for t, v in enumerate(vectors) if v.valid[:16].all())
        assert first_valid == warmup
        assert not vectors[warmup - 1].valid[:16].any() or not vectors[warmup - 1].valid[:16].all()

    def test_ma_and_slope_features_become_valid_together(self):
        hbo, hhb = random_streams(200, seed=3)
        _, vectors = run_extractor(hbo, hhb)
        first_ma = next(t for t, v in enumerate(vectors) if v.valid[0])
        first_slope = next(t for t, v in enumerate(vectors) if v.valid[2])
        assert first_ma == first_slope

    def test_alignment_holds_for_other_multipliers(self):
        cfg = FeatureWindowConfig(n=5, x1=3, x2=2)
        hbo, hhb = random_streams(200, seed=4)
        _, vectors = run_extractor(hbo, hhb, cfg=cfg)
        first_ma = next(t for t, v in enumerate(vectors) if v.valid[0])
        first_slope = next(t for t, v in enumerate(vectors) if v.valid[2])
        assert first_ma == first_slope == time_domain_warmup(cfg, 3)


class TestStreamingEqualsBruteForce:
    def test_time_domain_features_match_reference(self):
        T = 3000
        hbo, hhb = random_streams(T, seed=11)
        _, vectors = run_extractor(hbo, hhb)
        streams = {("deep", "hbo"): hbo["deep"], ("deep", "hhb"): hhb["deep"],
                   ("superficial", "hbo"): hbo["superficial"],
                   ("superficial", "hhb"): hhb["superficial"]}
        values = np.array([v.values for v in vectors])
        valid = np.array([v.valid for v in vectors])
        for si, key in enumerate(streams):
            ref = time_domain_reference(streams[key], n1=3, n=CFG.n,
                                        ma_window=CFG.ma_window,
                                        slope_window=CFG.slope_window)
            for fi, stat in enumerate(("mean_ma", "std_ma", "mean_slope", "std_slope")):
                col = 4 * si + fi
                mask = valid[:, col]
                assert (mask == ~np.isnan(ref[stat])).all()
                assert np.max(np.abs(values[mask, col] - ref[stat][mask])) < 1e-10

    def test_hrv_features_match_reference_replay(self):
        T = 2000
        rng = np.random.default_rng(12)
        t = np.arange(T) / 10.0
        cardiac = np.sin(2 * np.pi * 1.2 * t)
        hbo = {"deep": cardiac + 0.1 * rng.standard_normal(T),
               "superficial": cardiac + 0.1 * rng.standard_normal(T)}
        hhb = {"deep": 0.1 * rng.standard_normal(T),
               "superficial": 0.1 * rng.standard_normal(T)}
        ext, vectors = run_extractor(hbo, hhb)
        peaks = [e.t_index for e in ext.hrv.peaks]
        assert len(peaks) > 10
        ref = hrv_reference(peaks, fs=10.0, span_s=CFG.x3_window_s, total_ticks=T)
        values = np.array([v.values for v in vectors])
        valid = np.array([v.valid for v in vectors])
        for col in range(16, 20):
            mask = valid[:, col]
            ref_col = ref[:, col - 16]
            assert (mask == ~np.isnan(ref_col)).all()
            assert np.max(np.abs(values[mask, col] - ref_col[mask])) < 1e-10


def test_channel_swap_permutes_channel_features_only():
    hbo, hhb = random_streams(300, seed=21)
    _, vectors = run_extractor(hbo, hhb)
    swapped_hbo = {"deep": hbo["superficial"], "superficial": hbo["deep"]}
    swapped_hhb = {"deep": hhb["superficial"], "superficial": hhb["deep"]}
    _, swapped = run_extractor(swapped_hbo, swapped_hhb)
    for v, w in zip(vectors, swapped):
        assert (v.valid[:8] == w.valid[8:16]).all()
        np.testing.assert_array_equal(v.values[:8][v.valid[:8]], w.values[8:16][w.valid[8:16]])
        np.testing.assert_array_equal(v.values[8:16][v.valid[8:16]], w.values[:8][w.valid[:8]])
        # HRV block is channel-symmetric
        assert (v.valid[16:] == w.valid[16:]).all()
        np.testing.assert_allclose(v.values[16:][v.valid[16:]], w.values[16:][w.valid[16:]])


def test_peak_confirmation_latency_documented_constant():
    assert PEAK_CONFIRM_LATENCY == 1


def test_full_vector_validity_awaits_second_confirmed_peak():
    # the whole 20-entry vector becomes valid at the later of the time-domain
    # warm-up and the second peak's confirmation tick
    T = 300
    fs = 10.0
    rng = np.random.default_rng(31)
    t = np.arange(T) / fs
    cardiac = 0.4 * np.sin(2 * np.pi * 1.2 * t)
    hbo = {"deep": cardiac + 0.02 * rng.standard_normal(T),
           "superficial": cardiac + 0.02 * rng.standard_normal(T)}
    hhb = {"deep": 0.02 * rng.standard_normal(T),
           "superficial": 0.02 * rng.standard_normal(T)}
    ext, vectors = run_extractor(hbo, hhb)
    peaks = [e.t_index for e in ext.hrv.peaks]
    assert len(peaks) >= 2
    expected = max(time_domain_warmup(CFG, 3), peaks[1] + PEAK_CONFIRM_LATENCY)
    first_full = next(t for t, v in enumerate(vectors) if v.fully_valid)
    assert first_full == expected
