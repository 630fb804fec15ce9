"""Nearest-partner coincidence extraction between two adjusted streams.

For each event on the perspective station the matcher finds the single
closest event on the other station and records the signed residual
delta = t_self - t_partner.  Ties on |delta| resolve to the earlier partner,
and among equal partner timestamps to the lowest index, which makes the fast
path below agree exactly with a brute-force argmin over |t_other - t_self|.
"""
from __future__ import annotations

import dataclasses
import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import (
    ALICE,
    BOB,
    CoinlabWarning,
    EventStream,
    PS_PER_S,
    normalize_side,
)


@dataclass(frozen=True)
class AdjustmentSet:
    """Clock and channel corrections mapping Bob's raw timeline onto Alice's.

    offset_ps is the typical value of t_bob - t_alice for simultaneous
    detections; drift_ps_per_s its growth per second of run time measured
    from t0_ps.  delay_a / delay_b are per-detector electronic delays
    subtracted from the owning station's events.
    """

    offset_ps: float = 0.0
    drift_ps_per_s: float = 0.0
    delay_a: tuple[float, float] = (0.0, 0.0)
    delay_b: tuple[float, float] = (0.0, 0.0)
    t0_ps: float = 0.0

    def to_report(self) -> str:
        return (
            f"offset_ps = {self.offset_ps}\n"
            f"drift_ps_per_s = {self.drift_ps_per_s}\n"
            f"delay_a = {self.delay_a[0]},{self.delay_a[1]}\n"
            f"delay_b = {self.delay_b[0]},{self.delay_b[1]}\n"
            f"t0_ps = {self.t0_ps}\n"
        )

    @classmethod
    def from_report(cls, text: str) -> "AdjustmentSet":
        values: dict = {}
        for raw in text.splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, _, val = line.partition("=")
            key = key.strip()
            val = val.strip()
            if key in ("offset_ps", "drift_ps_per_s", "t0_ps"):
                values[key] = float(val)
            elif key in ("delay_a", "delay_b"):
                parts = val.split(",")
                if len(parts) != 2:
                    raise ValueError(f"{key} needs two comma-separated values")
                values[key] = (float(parts[0]), float(parts[1]))
            # unrelated keys (calibration diagnostics) are ignored
        return cls(**values)


def adjust(stream: EventStream, adj: AdjustmentSet) -> EventStream:
    """Apply corrections to one station's stream and restore canonical order.

    Bob events move by -(offset + drift * (t - t0) / 1e12 + delay_b[detector]);
    Alice events only lose delay_a[detector].  Times are rounded back to
    integer picoseconds.
    """
    t = stream.t.astype(np.float64)
    if stream.side == BOB:
        t = t - adj.offset_ps - adj.drift_ps_per_s * (t - adj.t0_ps) / PS_PER_S
        t = t - np.asarray(adj.delay_b, dtype=np.float64)[stream.detector]
    else:
        t = t - np.asarray(adj.delay_a, dtype=np.float64)[stream.detector]
    t_adj = np.rint(t).astype(np.int64)
    order = np.lexsort((stream.detector, t_adj))
    return EventStream(
        stream.side,
        t_adj[order],
        stream.setting[order],
        stream.detector[order],
        stream.meta,
    )


@dataclass(frozen=True)
class CoincidenceRecord:
    """One matched event; the _a fields describe the set's perspective station."""

    t_a: int
    delta_ps: int
    symbol_a: int
    symbol_b: int
    multiple: bool


@dataclass
class CoincidenceSet:
    """Per-event nearest-partner residuals for one perspective.

    Arrays are parallel and ordered by t.  partner_idx indexes the other
    station's stream.  window_ps is None until tag_multiples has run.
    """

    perspective: str
    t: np.ndarray
    delta_ps: np.ndarray
    symbol_self: np.ndarray
    symbol_other: np.ndarray
    partner_idx: np.ndarray
    multiple: np.ndarray = field(default=None)  # type: ignore[assignment]
    window_ps: int | None = None

    def __post_init__(self) -> None:
        self.perspective = normalize_side(self.perspective)
        if self.multiple is None:
            self.multiple = np.zeros(self.t.shape[0], dtype=bool)

    def __len__(self) -> int:
        return int(self.t.shape[0])

    def record(self, i: int) -> CoincidenceRecord:
        return CoincidenceRecord(
            int(self.t[i]),
            int(self.delta_ps[i]),
            int(self.symbol_self[i]),
            int(self.symbol_other[i]),
            bool(self.multiple[i]),
        )

    def records(self):
        for i in range(len(self)):
            yield self.record(i)

    def replace(self, **changes) -> "CoincidenceSet":
        return dataclasses.replace(self, **changes)


def nearest_deltas(a: EventStream, b: EventStream, perspective: str = ALICE) -> CoincidenceSet:
    """Match every perspective-station event to its nearest partner.

    Returns an empty set (with a warning) when the other station has no
    events.  delta_ps = t_self - t_partner, so a positive Alice-perspective
    delta means Bob's partner fired earlier on the adjusted timeline.
    """
    perspective = normalize_side(perspective)
    self_s, other = (a, b) if perspective == ALICE else (b, a)
    n, m = len(self_s), len(other)
    empty = CoincidenceSet(
        perspective,
        np.empty(0, dtype=np.int64),
        np.empty(0, dtype=np.int64),
        np.empty(0, dtype=np.uint8),
        np.empty(0, dtype=np.uint8),
        np.empty(0, dtype=np.int64),
    )
    if n == 0:
        return empty
    if m == 0:
        warnings.warn(
            f"{other.side} stream is empty; coincidence set is empty",
            CoinlabWarning,
            stacklevel=2,
        )
        return empty

    ts = self_s.t
    to = other.t
    r = np.searchsorted(to, ts, side="left")
    left = np.clip(r - 1, 0, m - 1)
    right = np.clip(r, 0, m - 1)
    big = np.iinfo(np.int64).max
    d_left = np.where(r > 0, ts - to[left], big)
    d_right = np.where(r < m, to[right] - ts, big)
    take_left = d_left <= d_right
    # first index of the left neighbor's timestamp group, so equal-time
    # partners resolve to the lowest index
    left_first = np.searchsorted(to, to[left], side="left")
    partner = np.where(take_left, left_first, right).astype(np.int64)
    delta = ts - to[partner]
    return CoincidenceSet(
        perspective,
        ts.copy(),
        delta,
        self_s.symbols,
        other.symbols[partner],
        partner,
    )


def tag_multiples(
    cset: CoincidenceSet, a: EventStream, b: EventStream, window_ps: int
) -> CoincidenceSet:
    """Flag records whose neighborhood is ambiguous within the window.

    A record is multiple when its own event sees two or more partner-station
    events within window_ps, or when its partner sees two or more events on
    the record's station within window_ps (|delta| <= window inclusive).
    """
    if window_ps <= 0:
        raise ValueError("window_ps must be positive")
    self_s, other = (a, b) if cset.perspective == ALICE else (b, a)
    if len(cset) == 0:
        return cset.replace(window_ps=window_ps)
    ts = self_s.t
    to = other.t
    w = np.int64(window_ps)
    n_other = np.searchsorted(to, ts + w, side="right") - np.searchsorted(
        to, ts - w, side="left"
    )
    tp = to[cset.partner_idx]
    n_self = np.searchsorted(ts, tp + w, side="right") - np.searchsorted(
        ts, tp - w, side="left"
    )
    multiple = (n_other >= 2) | (n_self >= 2)
    return cset.replace(multiple=multiple, window_ps=window_ps)


@dataclass
class MutualPairs:
    """Unambiguous coincidences: mutual nearest partners inside the window.

    index_a / index_b point into the adjusted streams; each event appears in
    at most one pair.
    """

    window_ps: int
    index_a: np.ndarray
    index_b: np.ndarray
    t_a: np.ndarray
    t_b: np.ndarray
    delta_ps: np.ndarray
    symbol_a: np.ndarray
    symbol_b: np.ndarray

    def __len__(self) -> int:
        return int(self.index_a.shape[0])

    def __getitem__(self, i: int) -> tuple[CoincidenceRecord, CoincidenceRecord]:
        rec_a = CoincidenceRecord(
            int(self.t_a[i]), int(self.delta_ps[i]),
            int(self.symbol_a[i]), int(self.symbol_b[i]), False,
        )
        rec_b = CoincidenceRecord(
            int(self.t_b[i]), -int(self.delta_ps[i]),
            int(self.symbol_b[i]), int(self.symbol_a[i]), False,
        )
        return rec_a, rec_b

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]


def mutual_pairs(
    set_a: CoincidenceSet, set_b: CoincidenceSet, window_ps: int
) -> MutualPairs:
    """Pair events that are each other's nearest partner, within the window,
    with neither record flagged multiple."""
    if window_ps <= 0:
        raise ValueError("window_ps must be positive")
    if set_a.perspective != ALICE or set_b.perspective != BOB:
        raise ValueError("mutual_pairs expects an alice-perspective and a bob-perspective set")
    n_a = len(set_a)
    if n_a == 0 or len(set_b) == 0:
        empty_i = np.empty(0, dtype=np.int64)
        empty_u = np.empty(0, dtype=np.uint8)
        return MutualPairs(window_ps, empty_i, empty_i.copy(), empty_i.copy(),
                           empty_i.copy(), empty_i.copy(), empty_u, empty_u.copy())
    ia = np.arange(n_a, dtype=np.int64)
    pa = set_a.partner_idx
    ok = (
        (set_b.partner_idx[pa] == ia)
        & (np.abs(set_a.delta_ps) <= window_ps)
        & ~set_a.multiple
        & ~set_b.multiple[pa]
    )
    idx_a = ia[ok]
    idx_b = pa[ok]
    return MutualPairs(
        window_ps,
        idx_a,
        idx_b,
        set_a.t[ok],
        set_b.t[idx_b],
        set_a.delta_ps[ok],
        set_a.symbol_self[ok],
        set_a.symbol_other[ok],
    )


def match(
    a: EventStream,
    b: EventStream,
    adjustments: AdjustmentSet | None = None,
    window_ps: int = 4000,
) -> tuple[CoincidenceSet, CoincidenceSet, MutualPairs]:
    """Adjust both streams, build both perspective sets, and extract pairs."""
    adj = adjustments if adjustments is not None else AdjustmentSet()
    a2 = adjust(a, adj)
    b2 = adjust(b, adj)
    set_a = tag_multiples(nearest_deltas(a2, b2, ALICE), a2, b2, window_ps)
    set_b = tag_multiples(nearest_deltas(a2, b2, BOB), a2, b2, window_ps)
    pairs = mutual_pairs(set_a, set_b, window_ps)
    return set_a, set_b, pairs
