"""Estimate clock and channel corrections from the event streams themselves.

The chain runs coarse-to-fine: a histogram of pairwise time differences
locates the relative clock offset, a straight-line fit to the matched
residuals measures drift, and per-channel-class medians separate the four
detector delays from what remains of the offset.  Each stage works on the
streams as adjusted by the previous stages.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ALICE, CoinlabError, EventStream, PS_PER_S
from .matcher import AdjustmentSet, CoincidenceSet, adjust, nearest_deltas

# refinement half-window around the coarse histogram peak
MEDIAN_WINDOW_PS = 50_000
# a peak must stand this far above the typical bin to count, and must hold at
# least MIN_PEAK_COUNT entries so sparse noise cannot fake one
PEAK_FACTOR = 3.0
MIN_PEAK_COUNT = 30
MIN_CORE_RECORDS = 100
MIN_CLASS_RECORDS = 50


class CalibrationError(CoinlabError):
    pass


class NoPeak(CalibrationError):
    """The difference histogram shows no coincidence peak."""


class InsufficientData(CalibrationError):
    """Too few usable records for a stable estimate."""


class DegenerateFit(CalibrationError):
    """A detector class is absent, so the delay system cannot be solved."""


@dataclass(frozen=True)
class DelayFit:
    """Gauge-fixed per-detector delays: delay_a[0] = delay_b[0] = 0.

    residual_offset_ps is the constant the fit absorbs; it belongs to the
    global offset, not to any channel.
    """

    delay_a: tuple[float, float]
    delay_b: tuple[float, float]
    residual_offset_ps: float
    rms_residual_ps: float


def _pairwise_differences(a: EventStream, b: EventStream, search_range_ps: int) -> np.ndarray:
    """All values t_b - t_a with |difference| <= search_range_ps, flattened."""
    ta = a.t
    tb = b.t
    lo = np.searchsorted(tb, ta - search_range_ps, side="left")
    hi = np.searchsorted(tb, ta + search_range_ps, side="right")
    counts = hi - lo
    total = int(counts.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64)
    starts = np.repeat(np.cumsum(counts) - counts, counts)
    flat_b = np.arange(total, dtype=np.int64) - starts + np.repeat(lo, counts)
    return tb[flat_b] - np.repeat(ta, counts)


def estimate_offset(
    a: EventStream,
    b: EventStream,
    search_range_ps: int = 1_000_000,
    coarse_bin_ps: int = 1_000,
) -> float:
    """Locate the clock offset (typical t_b - t_a) of the coincidence peak.

    Stage one histograms all pairwise differences within the search range
    and takes the tallest bin; stage two returns the median of differences
    within 50 ns of that bin.  Raises NoPeak when no bin stands out.
    """
    if search_range_ps <= 0 or coarse_bin_ps <= 0:
        raise ValueError("search_range_ps and coarse_bin_ps must be positive")
    if len(a) == 0 or len(b) == 0:
        raise InsufficientData("both streams must be non-empty")
    diffs = _pairwise_differences(a, b, search_range_ps)
    if diffs.shape[0] == 0:
        raise NoPeak("no pairwise differences inside the search range")
    nbins = int(np.ceil(2 * search_range_ps / coarse_bin_ps))
    idx = (diffs + search_range_ps) // coarse_bin_ps
    np.clip(idx, 0, nbins - 1, out=idx)
    hist = np.bincount(idx, minlength=nbins)
    peak = int(hist.argmax())
    if hist[peak] < MIN_PEAK_COUNT or hist[peak] < PEAK_FACTOR * max(
        float(np.median(hist)), 1.0
    ):
        raise NoPeak("difference histogram is flat")
    center = -search_range_ps + (peak + 0.5) * coarse_bin_ps
    sel = np.abs(diffs - center) <= MEDIAN_WINDOW_PS
    if not sel.any():
        raise NoPeak("no differences near the peak bin")
    return float(np.median(diffs[sel]))


def estimate_drift(cset: CoincidenceSet, core_ps: int = 1_000) -> float:
    """Fit the linear growth of the residuals and return the drift rate.

    Only core records (within core_ps of the median residual) enter the fit.
    The sign is converted so the result is always the rate of Bob's clock
    relative to Alice's, the convention AdjustmentSet.drift_ps_per_s uses,
    whichever perspective the set was built from.
    """
    if core_ps <= 0:
        raise ValueError("core_ps must be positive")
    d = cset.delta_ps.astype(np.float64)
    if d.shape[0] == 0:
        raise InsufficientData("empty coincidence set")
    med = float(np.median(d))
    core = np.abs(d - med) <= core_ps
    n = int(core.sum())
    if n < MIN_CORE_RECORDS:
        raise InsufficientData(f"{n} core records, need {MIN_CORE_RECORDS}")
    x = cset.t[core].astype(np.float64) / PS_PER_S
    y = d[core]
    x = x - x.mean()
    var = float(np.dot(x, x))
    if var == 0.0:
        raise InsufficientData("all core records share one timestamp")
    slope = float(np.dot(x, y - y.mean())) / var
    # delta = t_self - t_other: drift makes the Alice-perspective residual
    # shrink and the Bob-perspective residual grow
    return -slope if cset.perspective == ALICE else slope


def _class_medians(cset: CoincidenceSet, core_ps: int) -> np.ndarray:
    """Median residual per (detector_a, detector_b) class, Alice-perspective sign.

    Two passes: a wide cut around the global median centers each class, a
    core_ps cut around that center rejects the tails that would otherwise
    bias the median.
    """
    sign = 1.0 if cset.perspective == ALICE else -1.0
    d = sign * cset.delta_ps.astype(np.float64)
    det_self = cset.symbol_self >> 1
    det_other = cset.symbol_other >> 1
    det_a, det_b = (det_self, det_other) if cset.perspective == ALICE else (det_other, det_self)
    if d.shape[0] == 0:
        raise DegenerateFit("empty coincidence set")
    global_med = float(np.median(d))
    medians = np.empty((2, 2), dtype=np.float64)
    for i in (0, 1):
        for j in (0, 1):
            cls = (det_a == i) & (det_b == j)
            if not cls.any():
                raise DegenerateFit(f"no records with detectors ({i}, {j})")
            wide = cls & (np.abs(d - global_med) <= 3.0 * core_ps)
            if not wide.any():
                raise InsufficientData(f"class ({i}, {j}) has no records near the peak")
            center = float(np.median(d[wide]))
            core = cls & (np.abs(d - center) <= core_ps)
            n = int(core.sum())
            if n < MIN_CLASS_RECORDS:
                raise InsufficientData(
                    f"class ({i}, {j}) has {n} core records, need {MIN_CLASS_RECORDS}"
                )
            medians[i, j] = float(np.median(d[core]))
    return medians


def estimate_channel_delays(cset: CoincidenceSet, core_ps: int = 1_000) -> DelayFit:
    """Solve per-detector delays from the four class medians.

    Model: median(i, j) = c + delay_a[i] - delay_b[j], with the gauge
    delay_a[0] = delay_b[0] = 0 fixing the three free parameters.
    """
    if core_ps <= 0:
        raise ValueError("core_ps must be positive")
    m = _class_medians(cset, core_ps)
    # rows: classes (0,0), (0,1), (1,0), (1,1); columns: c, delay_a[1], -delay_b[1]
    design = np.array(
        [
            [1.0, 0.0, 0.0],
            [1.0, 0.0, -1.0],
            [1.0, 1.0, 0.0],
            [1.0, 1.0, -1.0],
        ]
    )
    y = m.reshape(4)
    params, _, _, _ = np.linalg.lstsq(design, y, rcond=None)
    c, da1, db1 = (float(v) for v in params)
    resid = y - design @ params
    rms = float(np.sqrt(np.mean(resid**2)))
    return DelayFit(
        delay_a=(0.0, da1),
        delay_b=(0.0, db1),
        residual_offset_ps=c,
        rms_residual_ps=rms,
    )


def broad_fraction(
    cset: CoincidenceSet,
    core_ps: int = 1_000,
    broad_ps: int = 20_000,
    accidental_band_ps: tuple[int, int] = (25_000, 50_000),
) -> float:
    """Fraction of true coincidences in the broad band rather than the core.

    Bands on |residual|: core <= core_ps, broad (core_ps, broad_ps].  The
    accidental floor is estimated from the band beyond the broad edge and
    subtracted from both counts before taking the ratio.
    """
    if not core_ps < broad_ps <= accidental_band_ps[0] < accidental_band_ps[1]:
        raise ValueError("bands must be ordered: core < broad <= accidental range")
    use = ~cset.multiple if cset.window_ps is not None else np.ones(len(cset), dtype=bool)
    d = np.abs(cset.delta_ps[use]).astype(np.float64)
    if d.shape[0] == 0:
        raise InsufficientData("empty coincidence set")
    n_core = float(np.count_nonzero(d <= core_ps))
    n_broad = float(np.count_nonzero((d > core_ps) & (d <= broad_ps)))
    lo, hi = accidental_band_ps
    n_acc = float(np.count_nonzero((d > lo) & (d <= hi)))
    density = n_acc / float(hi - lo)
    core_corr = n_core - density * core_ps
    broad_corr = n_broad - density * (broad_ps - core_ps)
    total = core_corr + broad_corr
    if total <= 0:
        raise InsufficientData("no excess over the accidental floor")
    return float(broad_corr / total)


def calibrate_run(
    a: EventStream,
    b: EventStream,
    core_ps: int = 1_000,
    search_range_ps: int = 1_000_000,
    coarse_bin_ps: int = 1_000,
) -> tuple[AdjustmentSet, dict]:
    """Run the full offset -> drift -> delay chain on one pair of raw streams.

    Returns the final AdjustmentSet and a diagnostics dict.  The delay fit's
    constant is folded back into the offset so the adjusted residuals center
    on zero.
    """
    offset_stage = estimate_offset(a, b, search_range_ps, coarse_bin_ps)
    # the core cut clips a sliding residual comb asymmetrically, biasing the
    # slope low; re-fitting on the detrended set converges in a pass or two
    drift = 0.0
    a1 = adjust(a, AdjustmentSet(offset_ps=offset_stage))
    for _ in range(4):
        adj_k = AdjustmentSet(offset_ps=offset_stage, drift_ps_per_s=drift)
        set_k = nearest_deltas(a1, adjust(b, adj_k), ALICE)
        step = estimate_drift(set_k, core_ps)
        drift += step
        if abs(step) < 0.5:
            break
    adj2 = AdjustmentSet(offset_ps=offset_stage, drift_ps_per_s=drift)
    set2 = nearest_deltas(a1, adjust(b, adj2), ALICE)
    fit = estimate_channel_delays(set2, core_ps)
    final = AdjustmentSet(
        offset_ps=offset_stage - fit.residual_offset_ps,
        drift_ps_per_s=drift,
        delay_a=fit.delay_a,
        delay_b=fit.delay_b,
    )
    diagnostics = {
        "offset_stage_ps": offset_stage,
        "residual_offset_ps": fit.residual_offset_ps,
        "rms_residual_ps": fit.rms_residual_ps,
        "n_records": len(set2),
    }
    return final, diagnostics
