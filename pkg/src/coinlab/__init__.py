"""coinlab: coincidence timing analysis for two-station photon event streams.

The library follows one path end to end: generate or load a pair of
timestamped event streams, align Bob's clock onto Alice's, extract
nearest-partner coincidences, and compute CHSH correlation statistics with
diagnostic figures.
"""
from .bell import (
    EmptyClass,
    SettingCounts,
    chsh_S,
    chsh_stderr,
    correlation_E,
    correlation_stderr,
    tally,
)
from .calibrate import (
    CalibrationError,
    DegenerateFit,
    DelayFit,
    InsufficientData,
    NoPeak,
    broad_fraction,
    calibrate_run,
    estimate_channel_delays,
    estimate_drift,
    estimate_offset,
)
from .core import (
    ALICE,
    BOB,
    CoinlabError,
    CoinlabWarning,
    DEFAULT_TICK_PS,
    EventRecord,
    EventStream,
    RunMetadata,
    angle_of,
    decode_symbol,
    quantize,
    symbol_code,
)
from .io import read_events, write_coincidences_csv, write_events
from .matcher import (
    AdjustmentSet,
    CoincidenceRecord,
    CoincidenceSet,
    MutualPairs,
    adjust,
    match,
    mutual_pairs,
    nearest_deltas,
    tag_multiples,
)
from .plot import HistogramGrid, ScatterSpec, histogram_grid, grid_export, scatter_svg
from .synth import ArtifactConfig, ConfigInvalid, GroundTruth, SynthConfig, generate_run

__version__ = "0.1.0"

__all__ = [
    "ALICE",
    "BOB",
    "DEFAULT_TICK_PS",
    "AdjustmentSet",
    "ArtifactConfig",
    "CalibrationError",
    "CoinlabError",
    "CoinlabWarning",
    "CoincidenceRecord",
    "CoincidenceSet",
    "ConfigInvalid",
    "DegenerateFit",
    "DelayFit",
    "EmptyClass",
    "EventRecord",
    "EventStream",
    "GroundTruth",
    "HistogramGrid",
    "InsufficientData",
    "MutualPairs",
    "NoPeak",
    "RunMetadata",
    "ScatterSpec",
    "SettingCounts",
    "SynthConfig",
    "adjust",
    "angle_of",
    "broad_fraction",
    "calibrate_run",
    "chsh_S",
    "chsh_stderr",
    "correlation_E",
    "correlation_stderr",
    "decode_symbol",
    "estimate_channel_delays",
    "estimate_drift",
    "estimate_offset",
    "generate_run",
    "grid_export",
    "histogram_grid",
    "match",
    "mutual_pairs",
    "nearest_deltas",
    "quantize",
    "read_events",
    "scatter_svg",
    "symbol_code",
    "tag_multiples",
    "tally",
    "write_coincidences_csv",
    "write_events",
]
