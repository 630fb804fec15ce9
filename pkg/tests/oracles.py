"""Brute-force reference implementations the fast paths must agree with."""
from __future__ import annotations

import numpy as np

from coinlab.core import EventStream, RunMetadata


def quantize_oracle(t: int, tick: int) -> int:
    """Scan nearby multiples of tick; minimum |t - m|, ties to the larger m."""
    k = t // tick
    candidates = [(k + j) * tick for j in (-1, 0, 1, 2)]
    return min(candidates, key=lambda m: (abs(t - m), -m))


def nearest_oracle(ts: np.ndarray, to: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Partner index and delta per self event: first argmin of |to - t|."""
    partners = np.empty(ts.shape[0], dtype=np.int64)
    deltas = np.empty(ts.shape[0], dtype=np.int64)
    for i in range(ts.shape[0]):
        j = int(np.argmin(np.abs(to - ts[i])))
        partners[i] = j
        deltas[i] = ts[i] - to[j]
    return partners, deltas


def multiples_oracle(
    ts: np.ndarray, to: np.ndarray, partners: np.ndarray, window: int
) -> np.ndarray:
    flags = np.zeros(ts.shape[0], dtype=bool)
    for i in range(ts.shape[0]):
        n_other = int(np.sum(np.abs(to - ts[i]) <= window))
        tp = to[partners[i]]
        n_self = int(np.sum(np.abs(ts - tp) <= window))
        flags[i] = (n_other >= 2) or (n_self >= 2)
    return flags


def mutual_oracle(
    ta: np.ndarray,
    tb: np.ndarray,
    partner_a: np.ndarray,
    partner_b: np.ndarray,
    flags_a: np.ndarray,
    flags_b: np.ndarray,
    window: int,
) -> list[tuple[int, int]]:
    pairs = []
    for i in range(ta.shape[0]):
        j = int(partner_a[i])
        if (
            int(partner_b[j]) == i
            and abs(int(ta[i]) - int(tb[j])) <= window
            and not flags_a[i]
            and not flags_b[j]
        ):
            pairs.append((i, j))
    return pairs


def tally_oracle(symbol_a, symbol_b) -> np.ndarray:
    """Recount (setting_a, setting_b, detector_a, detector_b) one pair at a time."""
    counts = np.zeros((2, 2, 2, 2), dtype=np.int64)
    for sym_a, sym_b in zip(symbol_a, symbol_b):
        counts[sym_a & 1, sym_b & 1, sym_a >> 1, sym_b >> 1] += 1
    return counts


def make_stream(side: str, t, setting=None, detector=None, tick: int = 75) -> EventStream:
    """Build a stream from plain timestamp lists; settings default to zero."""
    t = np.asarray(t, dtype=np.int64)
    n = t.shape[0]
    s = np.zeros(n, dtype=np.uint8) if setting is None else np.asarray(setting, dtype=np.uint8)
    d = np.zeros(n, dtype=np.uint8) if detector is None else np.asarray(detector, dtype=np.uint8)
    return EventStream(side, t, s, d, RunMetadata("", tick))


def random_stream_arrays(rng, n: int, t_max: int) -> np.ndarray:
    """Sorted int64 timestamps with duplicates allowed."""
    return np.sort(rng.integers(0, max(t_max, 1), n).astype(np.int64))
