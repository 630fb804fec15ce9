"""Synthetic two-station runs with controllable timing artifacts.

The generator draws Poisson pair emissions, gives each side an analyzer
setting from its own pseudo-random switching sequence, correlates the two
outcomes at visibility V through P(same outcome) = (1 + V cos 2(alpha-beta))/2,
and then distorts Bob's clock and both stations' channels per an
ArtifactConfig.  Everything is a pure function of (config, artifact): two
calls with equal inputs produce byte-identical streams.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, fields

import numpy as np

from .core import (
    ALICE,
    ALICE_BASE_ANGLES,
    BOB,
    BOB_BASE_ANGLES,
    CoinlabError,
    CoinlabWarning,
    DEFAULT_TICK_PS,
    EventStream,
    PS_PER_S,
    RunMetadata,
    check_no_duplicates,
    normalize_side,
    quantize_array,
)

_M64 = (1 << 64) - 1


class ConfigInvalid(CoinlabError):
    """A configuration value is out of its allowed range."""


def _splitmix64(x: int) -> int:
    # 64-bit finalizer; python ints, masked to 64 bits
    z = (x + 0x9E3779B97F4A7C15) & _M64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    return z ^ (z >> 31)


def _mix64(z: np.ndarray) -> np.ndarray:
    # vectorized counterpart of _splitmix64 on uint64 arrays (wrapping)
    z = z + np.uint64(0x9E3779B97F4A7C15)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def _side_salt(seed: int, side: str) -> int:
    tag = 0x41 if normalize_side(side) == ALICE else 0x42
    return _splitmix64(_splitmix64(seed & _M64) ^ tag)


@dataclass
class SynthConfig:
    """Source, detection, and switching parameters for one synthetic run.

    jitter_sigma_ps is the r.m.s. spread of the pair time difference; each
    side receives independent Gaussian jitter of jitter_sigma_ps / sqrt(2).
    background_rate_hz is the dark-count rate per detector, not gated by
    pair efficiency.
    """

    duration_s: float = 1.0
    pair_rate_hz: float = 10_000.0
    efficiency_a: float = 1.0
    efficiency_b: float = 1.0
    visibility: float = 1.0
    jitter_sigma_ps: float = 400.0
    background_rate_hz: float = 0.0
    switch_period_ps: int = 100_000
    switch_dead_ps: int = 14_000
    switching_enabled_a: bool = True
    switching_enabled_b: bool = True
    tick_ps: int = DEFAULT_TICK_PS
    seed: int = 1
    run_id: str = ""

    def validate(self) -> None:
        if self.duration_s < 0:
            raise ConfigInvalid("duration_s must be >= 0")
        if self.pair_rate_hz < 0:
            raise ConfigInvalid("pair_rate_hz must be >= 0")
        for name in ("efficiency_a", "efficiency_b"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigInvalid(f"{name} must be in [0, 1]")
        if not 0.0 <= self.visibility <= 1.0:
            raise ConfigInvalid("visibility must be in [0, 1]")
        if self.jitter_sigma_ps < 0:
            raise ConfigInvalid("jitter_sigma_ps must be >= 0")
        if self.background_rate_hz < 0:
            raise ConfigInvalid("background_rate_hz must be >= 0")
        if self.switch_period_ps <= 0:
            raise ConfigInvalid("switch_period_ps must be > 0")
        if not 0 <= self.switch_dead_ps <= self.switch_period_ps:
            raise ConfigInvalid("switch_dead_ps must be in [0, switch_period_ps]")
        if self.tick_ps <= 0:
            raise ConfigInvalid("tick_ps must be > 0")


@dataclass
class ArtifactConfig:
    """Instrumental distortions applied on top of the ideal run.

    clock_offset_ps and drift_ps_per_s act on Bob's recorded times:
    t_recorded = t_local + offset + drift * t_local / 1e12.  delay_a and
    delay_b add per-detector channel delays before the clock terms.  A
    broad_fraction of pairs has Bob's emission time smeared uniformly over
    +-broad_width_ps.
    """

    clock_offset_ps: float = 0.0
    drift_ps_per_s: float = 0.0
    delay_a: tuple[float, float] = (0.0, 0.0)
    delay_b: tuple[float, float] = (0.0, 0.0)
    broad_fraction: float = 0.0
    broad_width_ps: float = 20_000.0

    def validate(self) -> None:
        if not 0.0 <= self.broad_fraction <= 1.0:
            raise ConfigInvalid("broad_fraction must be in [0, 1]")
        if self.broad_width_ps < 0:
            raise ConfigInvalid("broad_width_ps must be >= 0")
        if len(self.delay_a) != 2 or len(self.delay_b) != 2:
            raise ConfigInvalid("delay_a and delay_b need one value per detector")
        if abs(self.drift_ps_per_s) > 200.0:
            warnings.warn(
                "drift_ps_per_s above 200 is outside the regime the single-pass "
                "calibration is built for",
                CoinlabWarning,
                stacklevel=2,
            )


@dataclass
class GroundTruth:
    """Echo of the generating configuration plus realized counts."""

    config: SynthConfig
    artifact: ArtifactConfig
    pairs_emitted: int
    events_a: int
    events_b: int
    background_a: int
    background_b: int

    def to_report(self) -> str:
        lines = []
        for f in fields(self.config):
            lines.append(f"{f.name} = {getattr(self.config, f.name)}")
        for f in fields(self.artifact):
            v = getattr(self.artifact, f.name)
            if isinstance(v, tuple):
                v = f"{v[0]},{v[1]}"
            lines.append(f"{f.name} = {v}")
        lines.append(f"pairs_emitted = {self.pairs_emitted}")
        lines.append(f"events_a = {self.events_a}")
        lines.append(f"events_b = {self.events_b}")
        lines.append(f"background_a = {self.background_a}")
        lines.append(f"background_b = {self.background_b}")
        return "\n".join(lines) + "\n"


def pair_correlation(angle_a_deg: float, angle_b_deg: float, visibility: float) -> float:
    """Expected product of the two +-1 outcomes: V cos 2(alpha - beta)."""
    return visibility * float(np.cos(2.0 * np.radians(angle_a_deg - angle_b_deg)))


def sample_outcome(angle_a_deg: float, angle_b_deg: float, visibility: float, rng) -> tuple[int, int]:
    """Draw one correlated outcome pair; each marginal is symmetric."""
    c = pair_correlation(angle_a_deg, angle_b_deg, visibility)
    o_a = 1 if rng.random() < 0.5 else -1
    o_b = o_a if rng.random() < (1.0 + c) / 2.0 else -o_a
    return o_a, o_b


def switching_bits(seed: int, side: str, period_index: np.ndarray) -> np.ndarray:
    """Setting bit of the given side's switching sequence at each period index.

    Stateless hash of the period index, so arbitrary run lengths never
    materialize the full sequence.
    """
    salt = np.uint64(_side_salt(seed, side))
    k = np.asarray(period_index, dtype=np.int64).astype(np.uint64)
    return (_mix64(k ^ salt) & np.uint64(1)).astype(np.uint8)


def _switch_state(
    t_ps: np.ndarray, cfg: SynthConfig, side: str, enabled: bool
) -> tuple[np.ndarray, np.ndarray]:
    """Setting bit at each time, and a mask of events falling in a dead window.

    A dead window opens at the start of a period whose bit differs from the
    previous period's: events with t - k*period < switch_dead_ps there are
    undetectable while the modulator settles.
    """
    n = t_ps.shape[0]
    if not enabled:
        return np.zeros(n, dtype=np.uint8), np.zeros(n, dtype=bool)
    period = float(cfg.switch_period_ps)
    # floor, not truncation: jitter can push times slightly negative
    k = np.floor(np.asarray(t_ps, dtype=np.float64) / period).astype(np.int64)
    bit = switching_bits(cfg.seed, side, k)
    prev = switching_bits(cfg.seed, side, k - 1)
    in_dead = (bit != prev) & ((t_ps - k * period) < cfg.switch_dead_ps)
    return bit, in_dead


def _angles(bits: np.ndarray, base: tuple[float, float]) -> np.ndarray:
    return np.where(bits == 0, base[0], base[1])


def generate_run(
    cfg: SynthConfig, artifact: ArtifactConfig | None = None
) -> tuple[EventStream, EventStream, GroundTruth]:
    """Produce (alice_stream, bob_stream, ground_truth) for one run."""
    art = artifact if artifact is not None else ArtifactConfig()
    cfg.validate()
    art.validate()
    rng = np.random.default_rng(cfg.seed)
    dur_ps = cfg.duration_s * float(PS_PER_S)

    # pair emissions; rng call order below is part of the determinism contract
    n = int(rng.poisson(cfg.pair_rate_hz * cfg.duration_s))
    t_pair = np.sort(rng.uniform(0.0, dur_ps, n))
    per_side_sigma = cfg.jitter_sigma_ps / np.sqrt(2.0)
    jitter_a = rng.normal(0.0, per_side_sigma, n)
    jitter_b = rng.normal(0.0, per_side_sigma, n)
    broad_mask = rng.random(n) < art.broad_fraction
    broad_shift = rng.uniform(-art.broad_width_ps, art.broad_width_ps, n)

    eom_a = t_pair + jitter_a
    eom_b = t_pair + jitter_b + np.where(broad_mask, broad_shift, 0.0)
    setting_a, dead_a = _switch_state(eom_a, cfg, ALICE, cfg.switching_enabled_a)
    setting_b, dead_b = _switch_state(eom_b, cfg, BOB, cfg.switching_enabled_b)

    corr = cfg.visibility * np.cos(
        2.0 * np.radians(_angles(setting_a, ALICE_BASE_ANGLES) - _angles(setting_b, BOB_BASE_ANGLES))
    )
    o_a = rng.integers(0, 2, n) * 2 - 1
    agree = rng.random(n) < (1.0 + corr) / 2.0
    o_b = np.where(agree, o_a, -o_a)
    det_a = (o_a < 0).astype(np.uint8)
    det_b = (o_b < 0).astype(np.uint8)

    keep_a = (rng.random(n) < cfg.efficiency_a) & ~dead_a
    keep_b = (rng.random(n) < cfg.efficiency_b) & ~dead_b

    delay_a = np.asarray(art.delay_a, dtype=np.float64)
    delay_b = np.asarray(art.delay_b, dtype=np.float64)

    def bob_clock(local: np.ndarray) -> np.ndarray:
        return local + art.clock_offset_ps + art.drift_ps_per_s * local / PS_PER_S

    pair_t_a = eom_a[keep_a] + delay_a[det_a[keep_a]]
    pair_t_b = bob_clock(eom_b[keep_b] + delay_b[det_b[keep_b]])

    def backgrounds(side: str, enabled: bool, delays: np.ndarray, on_bob: bool):
        ts, ss, ds = [], [], []
        for det in (0, 1):
            m = int(rng.poisson(cfg.background_rate_hz * cfg.duration_s))
            t_raw = rng.uniform(0.0, dur_ps, m)
            bits, dead = _switch_state(t_raw, cfg, side, enabled)
            t_raw, bits = t_raw[~dead], bits[~dead]
            t_rec = t_raw + delays[det]
            if on_bob:
                t_rec = bob_clock(t_rec)
            ts.append(t_rec)
            ss.append(bits)
            ds.append(np.full(t_rec.shape[0], det, dtype=np.uint8))
        return np.concatenate(ts), np.concatenate(ss), np.concatenate(ds)

    bg_t_a, bg_s_a, bg_d_a = backgrounds(ALICE, cfg.switching_enabled_a, delay_a, False)
    bg_t_b, bg_s_b, bg_d_b = backgrounds(BOB, cfg.switching_enabled_b, delay_b, True)

    def assemble(side: str, t_f, setting, detector, n_pair_events):
        origin_bg = np.zeros(t_f.shape[0], dtype=bool)
        origin_bg[n_pair_events:] = True
        t_q = quantize_array(t_f, cfg.tick_ps)
        keep = t_q >= 0
        t_q, setting, detector, origin_bg = t_q[keep], setting[keep], detector[keep], origin_bg[keep]
        order = np.lexsort((detector, t_q))
        t_q, setting, detector, origin_bg = (
            t_q[order], setting[order], detector[order], origin_bg[order]
        )
        dup = check_no_duplicates(t_q, detector)
        t_q, setting, detector, origin_bg = t_q[~dup], setting[~dup], detector[~dup], origin_bg[~dup]
        stream = EventStream(
            side, t_q, setting, detector, RunMetadata(cfg.run_id, cfg.tick_ps)
        )
        return stream, int(origin_bg.sum())

    stream_a, n_bg_a = assemble(
        ALICE,
        np.concatenate([pair_t_a, bg_t_a]),
        np.concatenate([setting_a[keep_a], bg_s_a]),
        np.concatenate([det_a[keep_a], bg_d_a]),
        pair_t_a.shape[0],
    )
    stream_b, n_bg_b = assemble(
        BOB,
        np.concatenate([pair_t_b, bg_t_b]),
        np.concatenate([setting_b[keep_b], bg_s_b]),
        np.concatenate([det_b[keep_b], bg_d_b]),
        pair_t_b.shape[0],
    )
    truth = GroundTruth(
        config=cfg,
        artifact=art,
        pairs_emitted=n,
        events_a=len(stream_a),
        events_b=len(stream_b),
        background_a=n_bg_a,
        background_b=n_bg_b,
    )
    return stream_a, stream_b, truth
