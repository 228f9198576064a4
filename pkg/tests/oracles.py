"""Independent brute-force recomputations used as test oracles.

These deliberately avoid the streaming code paths: window statistics come
from numpy sliding windows over the full recorded streams, slopes from
explicit least-squares weights, and HRV aggregates from a from-scratch
replay over the peak list.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def causal_ma(x, n):
    """out[i] is the mean of x[i-n+1 .. i]; first valid index n-1."""
    return sliding_window_view(np.asarray(x, dtype=float), n).mean(axis=1)


def causal_slope(x, n):
    """Least-squares slope over each trailing window of n samples."""
    t = np.arange(n, dtype=float)
    w = (t - t.mean()) / np.sum((t - t.mean()) ** 2)
    return sliding_window_view(np.asarray(x, dtype=float), n) @ w


def window_mean_std(x, w):
    """Trailing mean and population std with window w; first valid index w-1."""
    view = sliding_window_view(np.asarray(x, dtype=float), w)
    return view.mean(axis=1), view.std(axis=1)


def time_domain_reference(x, n1, n, ma_window, slope_window):
    """Per-tick reference values for one signal stream.

    Returns dict of full-length arrays (nan before warm-up):
    mean_ma, std_ma, mean_slope, std_slope.
    """
    x = np.asarray(x, dtype=float)
    T = len(x)
    out = {k: np.full(T, np.nan) for k in ("mean_ma", "std_ma", "mean_slope", "std_slope")}
    if T < n1:
        return out
    a1 = causal_ma(x, n1)  # a1[i] -> t = i + n1 - 1
    if len(a1) >= n:
        a2 = causal_ma(a1, n)  # a2[j] -> t = j + n1 + n - 2
        if len(a2) >= ma_window:
            m, s = window_mean_std(a2, ma_window)
            t0 = n1 + n - 3 + ma_window  # k + ma_window - 1 + n1 + n - 2 at k=0
            out["mean_ma"][t0:t0 + len(m)] = m
            out["std_ma"][t0:t0 + len(s)] = s
        sl = causal_slope(a1, n)  # same t alignment as a2
        if len(sl) >= slope_window:
            m, s = window_mean_std(sl, slope_window)
            t0 = n1 + n - 3 + slope_window
            out["mean_slope"][t0:t0 + len(m)] = m
            out["std_slope"][t0:t0 + len(s)] = s
    return out


def hrv_reference(peak_indices, fs, span_s, total_ticks, confirm_latency=1):
    """Per-tick (mean, std, max, inst) HRV arrays replayed from peak indices.

    The trailing span anchors at the newest interval's end peak; values hold
    between peaks; valid from the second peak onward. A peak at tick P is
    only confirmed (and its interval visible) confirm_latency ticks later.
    """
    samples = []
    for prev, cur in zip(peak_indices, peak_indices[1:]):
        samples.append((cur, 60.0 * fs / (cur - prev)))
    out = np.full((total_ticks, 4), np.nan)
    window = []
    si = 0
    current = None
    for t in range(total_ticks):
        while si < len(samples) and samples[si][0] + confirm_latency <= t:
            window.append(samples[si])
            cutoff = samples[si][0] - span_s * fs
            window = [s for s in window if s[0] > cutoff]
            current = samples[si]
            si += 1
        if current is not None and window:
            bpm = np.array([b for _, b in window])
            out[t] = (bpm.mean(), bpm.std(), bpm.max(), current[1])
    return out


def knn_reference(points, labels, k, query):
    """Exhaustive KNN with stable distance ties broken by training index."""
    dists = [(float(np.sum((p - query) ** 2)), i) for i, p in enumerate(points)]
    dists.sort()
    votes = sum(labels[i] for _, i in dists[:k])
    return 1 if votes * 2 > k else 0


def debounce_reference(packets, m):
    """Replay of the actuator automaton: (t_index, level) -> state trace."""
    on = False
    count = 0
    last_t = -1
    trace = []
    for t, level in packets:
        if t <= last_t:
            trace.append(on)
            continue
        last_t = t
        bit = 1 if level else 0
        if bit == int(on):
            count = 0
        else:
            count += 1
            if count >= m:
                on = not on
                count = 0
        trace.append(on)
    return trace
