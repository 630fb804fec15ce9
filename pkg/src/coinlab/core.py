"""Domain types shared by every stage: event streams, symbol codes, tick arithmetic.

Timestamps are integer picoseconds throughout.  A detector channel is named by
its station side ("alice" or "bob"), the analyzer setting bit, and the detector
bit; setting and detector combine into a single symbol code 0..3.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

ALICE = "alice"
BOB = "bob"
SIDES = (ALICE, BOB)

# Hardware clock granularity of the reference apparatus.
DEFAULT_TICK_PS = 75

# Analyzer base angles, degrees.  The detector bit selects the orthogonal
# output port of the same analyzer, which adds 90 degrees.
ALICE_BASE_ANGLES = (0.0, 45.0)
BOB_BASE_ANGLES = (22.5, 67.5)

PS_PER_S = 10**12


class CoinlabError(Exception):
    """Base class for errors raised by this package."""


class CoinlabWarning(UserWarning):
    """Base class for warnings issued by this package."""


def normalize_side(side: str) -> str:
    s = str(side).strip().lower()
    if s not in SIDES:
        raise ValueError(f"side must be 'alice' or 'bob', got {side!r}")
    return s


def symbol_code(setting: int, detector: int) -> int:
    """Pack a (setting, detector) bit pair into the symbol code setting + 2*detector."""
    if setting not in (0, 1):
        raise ValueError(f"setting must be 0 or 1, got {setting!r}")
    if detector not in (0, 1):
        raise ValueError(f"detector must be 0 or 1, got {detector!r}")
    return setting + 2 * detector


def decode_symbol(code: int) -> tuple[int, int]:
    """Inverse of symbol_code: return (setting, detector)."""
    if code not in (0, 1, 2, 3):
        raise ValueError(f"symbol code must be in 0..3, got {code!r}")
    return code & 1, code >> 1


def angle_of(side: str, code: int) -> float:
    """Effective analyzer angle in degrees for a symbol code on the given side."""
    setting, detector = decode_symbol(code)
    base = ALICE_BASE_ANGLES if normalize_side(side) == ALICE else BOB_BASE_ANGLES
    return base[setting] + 90.0 * detector


def quantize(t_ps: int, tick_ps: int) -> int:
    """Round t_ps to the nearest multiple of tick_ps, ties toward +infinity."""
    if tick_ps <= 0:
        raise ValueError("tick_ps must be positive")
    # floor((2t + tick) / 2 tick) * tick, exact in integers.
    return ((2 * int(t_ps) + tick_ps) // (2 * tick_ps)) * tick_ps


def quantize_array(t_ps: np.ndarray, tick_ps: int) -> np.ndarray:
    """Vectorized quantize for float picosecond arrays; returns int64."""
    if tick_ps <= 0:
        raise ValueError("tick_ps must be positive")
    return np.floor(np.asarray(t_ps, dtype=np.float64) / tick_ps + 0.5).astype(np.int64) * tick_ps


@dataclass(frozen=True)
class RunMetadata:
    """Provenance carried alongside an event stream."""

    run_id: str = ""
    tick_ps: int = DEFAULT_TICK_PS


@dataclass(frozen=True)
class EventRecord:
    """One detection: timestamp (ps), setting bit, detector bit."""

    t: int
    setting: int
    detector: int

    @property
    def symbol(self) -> int:
        return symbol_code(self.setting, self.detector)


@dataclass
class EventStream:
    """A station's recorded detections, time-ordered, as parallel arrays.

    Invariants: t is int64 picoseconds and non-decreasing; setting and
    detector are 0/1.  Raw streams read from disk or produced by the
    generator additionally contain no duplicate (t, detector) pair; adjusted
    working copies may collide after rounding, so that check is applied at
    ingest rather than here.
    """

    side: str
    t: np.ndarray
    setting: np.ndarray
    detector: np.ndarray
    meta: RunMetadata = RunMetadata()

    def __post_init__(self) -> None:
        self.side = normalize_side(self.side)
        self.t = np.ascontiguousarray(self.t, dtype=np.int64)
        self.setting = np.ascontiguousarray(self.setting, dtype=np.uint8)
        self.detector = np.ascontiguousarray(self.detector, dtype=np.uint8)
        n = self.t.shape[0]
        if self.setting.shape != (n,) or self.detector.shape != (n,):
            raise ValueError("t, setting, detector must be 1-D arrays of equal length")
        if n and (self.setting.max() > 1 or self.detector.max() > 1):
            raise ValueError("setting and detector must be 0 or 1")
        if n > 1 and np.any(np.diff(self.t) < 0):
            raise ValueError("timestamps must be non-decreasing")

    def __len__(self) -> int:
        return int(self.t.shape[0])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EventStream):
            return NotImplemented
        return (
            self.side == other.side
            and self.meta == other.meta
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.setting, other.setting)
            and np.array_equal(self.detector, other.detector)
        )

    @property
    def symbols(self) -> np.ndarray:
        return (self.setting + 2 * self.detector).astype(np.uint8)

    def record(self, i: int) -> EventRecord:
        return EventRecord(int(self.t[i]), int(self.setting[i]), int(self.detector[i]))

    def records(self):
        for i in range(len(self)):
            yield self.record(i)

    @classmethod
    def from_records(
        cls, side: str, records, meta: RunMetadata = RunMetadata()
    ) -> "EventStream":
        recs = list(records)
        t = np.array([r.t for r in recs], dtype=np.int64)
        s = np.array([r.setting for r in recs], dtype=np.uint8)
        d = np.array([r.detector for r in recs], dtype=np.uint8)
        return cls(side, t, s, d, meta)

    def replace(self, **changes) -> "EventStream":
        return dataclasses.replace(self, **changes)


def sort_canonical(
    t: np.ndarray, setting: np.ndarray, detector: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Order events by (t, detector); stable, so input order breaks remaining ties."""
    order = np.lexsort((detector, t))
    return t[order], setting[order], detector[order]


def check_no_duplicates(t: np.ndarray, detector: np.ndarray) -> np.ndarray:
    """Return a boolean mask of events that repeat an earlier (t, detector) pair.

    Expects canonical ordering.
    """
    if t.shape[0] < 2:
        return np.zeros(t.shape[0], dtype=bool)
    dup = np.zeros(t.shape[0], dtype=bool)
    dup[1:] = (t[1:] == t[:-1]) & (detector[1:] == detector[:-1])
    return dup
