"""Command line front end: synth, calibrate, analyze, plot, pipeline.

Exit codes: 0 success, 2 configuration or usage error, 3 file or I/O error,
4 analysis failure (no coincidence peak, too little data, empty setting
class).  Config files are flat ``key = value`` text; ``#`` starts a comment;
unknown keys are rejected.  When --config is absent the COINLAB_CONFIG
environment variable names the file.
"""
from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from pathlib import Path

from .bell import EmptyClass, chsh_S, chsh_stderr, render_report, tally, write_report_csv
from .calibrate import CalibrationError, calibrate_run
from .core import ALICE, BOB
from .io import FileFormatError, read_events, write_coincidences_csv, write_events
from .matcher import AdjustmentSet, match
from .plot import ScatterSpec, grid_export, histogram_grid, scatter_svg
from .synth import ArtifactConfig, ConfigInvalid, SynthConfig, generate_run

ENV_CONFIG = "COINLAB_CONFIG"


def _parse_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_pair(s: str) -> tuple[float, float]:
    parts = [p.strip() for p in s.split(",")]
    if len(parts) != 2:
        raise ValueError(f"expected two comma-separated numbers, got {s!r}")
    return float(parts[0]), float(parts[1])


_SYNTH_KEYS = {
    "duration_s": float,
    "pair_rate_hz": float,
    "efficiency_a": float,
    "efficiency_b": float,
    "visibility": float,
    "jitter_sigma_ps": float,
    "background_rate_hz": float,
    "switch_period_ps": int,
    "switch_dead_ps": int,
    "switching_enabled_a": _parse_bool,
    "switching_enabled_b": _parse_bool,
    "tick_ps": int,
    "seed": int,
    "run_id": str,
}

_ARTIFACT_KEYS = {
    "clock_offset_ps": float,
    "drift_ps_per_s": float,
    "delay_a": _parse_pair,
    "delay_b": _parse_pair,
    "broad_fraction": float,
    "broad_width_ps": float,
}

_EXTRA_KEYS = {
    "window_ps": int,
    "hist_window_ps": int,
    "t_range_s": _parse_pair,
    "delta_range_ns": float,
    "format": str,
    "core_ps": int,
    "search_range_ps": int,
    "coarse_bin_ps": int,
}

_EXTRA_DEFAULTS = {
    "window_ps": 4000,
    "hist_window_ps": 3000,
    "t_range_s": (0.0, 2.0),
    "delta_range_ns": 3.0,
    "format": "binary",
    "core_ps": 1000,
    "search_range_ps": 1_000_000,
    "coarse_bin_ps": 1000,
}

_ALL_KEYS = {**_SYNTH_KEYS, **_ARTIFACT_KEYS, **_EXTRA_KEYS}


def parse_config_text(text: str, source: str = "<config>") -> dict:
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise ConfigInvalid(f"{source}: line {lineno}: expected 'key = value'")
        key = key.strip()
        val = val.strip()
        if key not in _ALL_KEYS:
            raise ConfigInvalid(f"{source}: line {lineno}: unknown config key {key!r}")
        try:
            values[key] = _ALL_KEYS[key](val)
        except ValueError as e:
            raise ConfigInvalid(f"{source}: line {lineno}: bad value for {key}: {e}") from None
    return values


def load_config(path: str | None) -> dict:
    if path is None:
        path = os.environ.get(ENV_CONFIG) or None
    if path is None:
        return {}
    text = Path(path).read_text(encoding="ascii")
    return parse_config_text(text, source=str(path))


def _split_config(values: dict) -> tuple[SynthConfig, ArtifactConfig, dict]:
    cfg_kw = {k: v for k, v in values.items() if k in _SYNTH_KEYS}
    art_kw = {k: v for k, v in values.items() if k in _ARTIFACT_KEYS}
    extras = dict(_EXTRA_DEFAULTS)
    extras.update({k: v for k, v in values.items() if k in _EXTRA_KEYS})
    if extras["format"] not in ("binary", "text"):
        raise ConfigInvalid("format must be 'binary' or 'text'")
    return SynthConfig(**cfg_kw), ArtifactConfig(**art_kw), extras


def _add_override_flags(p: argparse.ArgumentParser) -> None:
    for key, conv in _ALL_KEYS.items():
        flag = "--" + key.replace("_", "-")
        p.add_argument(flag, dest=key, type=conv, default=None, help=argparse.SUPPRESS)


def _collect_values(args: argparse.Namespace) -> dict:
    values = load_config(getattr(args, "config", None))
    for key in _ALL_KEYS:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    return values


def _add_adjust_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--adjust", metavar="FILE", help="calibration report with the corrections to apply")
    p.add_argument("--offset-ps", type=float, default=None)
    p.add_argument("--drift-ps-per-s", type=float, default=None)
    p.add_argument("--delay-a", type=_parse_pair, default=None)
    p.add_argument("--delay-b", type=_parse_pair, default=None)


def _resolve_adjustments(args: argparse.Namespace) -> AdjustmentSet:
    adj = AdjustmentSet()
    if args.adjust:
        try:
            adj = AdjustmentSet.from_report(Path(args.adjust).read_text(encoding="ascii"))
        except (ValueError, TypeError) as e:
            raise ConfigInvalid(f"{args.adjust}: {e}") from None
    changes = {}
    if args.offset_ps is not None:
        changes["offset_ps"] = args.offset_ps
    if args.drift_ps_per_s is not None:
        changes["drift_ps_per_s"] = args.drift_ps_per_s
    if args.delay_a is not None:
        changes["delay_a"] = args.delay_a
    if args.delay_b is not None:
        changes["delay_b"] = args.delay_b
    return dataclasses.replace(adj, **changes) if changes else adj


def _read_pair_of_streams(args: argparse.Namespace):
    a = read_events(args.in_a, side=ALICE, allow_unsorted=args.allow_unsorted)
    b = read_events(args.in_b, side=BOB, allow_unsorted=args.allow_unsorted)
    return a, b


def _calibration_report(adj: AdjustmentSet, diag: dict) -> str:
    lines = [adj.to_report().rstrip("\n")]
    for key in ("offset_stage_ps", "residual_offset_ps", "rms_residual_ps", "n_records"):
        lines.append(f"# {key} = {diag[key]}")
    return "\n".join(lines) + "\n"


def cmd_synth(args: argparse.Namespace) -> int:
    cfg, art, extras = _split_config(_collect_values(args))
    fmt = extras["format"]
    ext = "bin" if fmt == "binary" else "txt"
    out_a = args.out_a or f"events_a.{ext}"
    out_b = args.out_b or f"events_b.{ext}"
    out_truth = args.out_truth or "ground_truth.txt"
    a, b, truth = generate_run(cfg, art)
    write_events(a, out_a, fmt)
    write_events(b, out_b, fmt)
    Path(out_truth).write_bytes(truth.to_report().encode("ascii"))
    print(f"wrote {len(a)} alice events, {len(b)} bob events ({truth.pairs_emitted} pairs emitted)")
    return 0


def cmd_calibrate(args: argparse.Namespace) -> int:
    a, b = _read_pair_of_streams(args)
    adj, diag = calibrate_run(
        a,
        b,
        core_ps=args.core_ps,
        search_range_ps=args.search_range_ps,
        coarse_bin_ps=args.coarse_bin_ps,
    )
    report = _calibration_report(adj, diag)
    sys.stdout.write(report)
    if args.out:
        Path(args.out).write_bytes(report.encode("ascii"))
    return 0


def cmd_analyze(args: argparse.Namespace) -> int:
    a, b = _read_pair_of_streams(args)
    adj = _resolve_adjustments(args)
    set_a, set_b, pairs = match(a, b, adj, args.window_ps)
    counts = tally(pairs)
    n_multiple = int(set_a.multiple.sum())
    print(f"pairs = {len(pairs)}  (alice records flagged multiple: {n_multiple})")
    sys.stdout.write(render_report(counts))
    if args.csv:
        write_report_csv(counts, args.csv)
    if args.coincidences_csv:
        write_coincidences_csv(set_a, args.coincidences_csv)
    return 0


def cmd_plot(args: argparse.Namespace) -> int:
    a, b = _read_pair_of_streams(args)
    adj = _resolve_adjustments(args)
    set_a, set_b, pairs = match(a, b, adj, args.window_ps)
    cset = set_a if args.perspective == ALICE else set_b
    wrote = []
    if args.scatter:
        spec = ScatterSpec(
            t_range_s=args.t_range_s,
            delta_range_ns=args.delta_range_ns,
            title=args.title,
        )
        scatter_svg(cset, args.scatter, spec)
        wrote.append(args.scatter)
    if args.hist_svg or args.hist_csv:
        grid = histogram_grid(cset, pairs, args.hist_window_ps)
        grid_export(grid, args.hist_svg, args.hist_csv)
        wrote.extend(p for p in (args.hist_svg, args.hist_csv) if p)
    if not wrote:
        raise ConfigInvalid("nothing to do: pass --scatter, --hist-svg, or --hist-csv")
    for p in wrote:
        print(f"wrote {p}")
    return 0


def _pipeline_once(cfg: SynthConfig, art: ArtifactConfig, extras: dict, outdir: Path) -> float:
    outdir.mkdir(parents=True, exist_ok=True)
    fmt = extras["format"]
    ext = "bin" if fmt == "binary" else "txt"
    a, b, truth = generate_run(cfg, art)
    write_events(a, outdir / f"events_a.{ext}", fmt)
    write_events(b, outdir / f"events_b.{ext}", fmt)
    (outdir / "ground_truth.txt").write_bytes(truth.to_report().encode("ascii"))

    adj, diag = calibrate_run(
        a,
        b,
        core_ps=extras["core_ps"],
        search_range_ps=extras["search_range_ps"],
        coarse_bin_ps=extras["coarse_bin_ps"],
    )
    (outdir / "calibration.txt").write_bytes(_calibration_report(adj, diag).encode("ascii"))

    window = extras["window_ps"]
    # the uncalibrated reference keeps the single uniform offset only
    adj_raw = AdjustmentSet(offset_ps=diag["offset_stage_ps"])
    set_a_raw, _, pairs_raw = match(a, b, adj_raw, window)
    set_a, _, pairs = match(a, b, adj, window)
    counts_raw = tally(pairs_raw)
    counts = tally(pairs)
    s_raw, e_raw = chsh_S(counts_raw), chsh_stderr(counts_raw)
    s_adj, e_adj = chsh_S(counts), chsh_stderr(counts)

    write_coincidences_csv(set_a, outdir / "coincidences.csv")
    write_report_csv(counts, outdir / "bell.csv")
    spec = ScatterSpec(t_range_s=extras["t_range_s"], delta_range_ns=extras["delta_range_ns"])
    scatter_svg(set_a_raw, outdir / "scatter_offset.svg", dataclasses.replace(spec, title="offset only"))
    scatter_svg(set_a, outdir / "scatter_adjusted.svg", dataclasses.replace(spec, title="calibrated"))
    grid = histogram_grid(set_a, pairs, extras["hist_window_ps"])
    grid_export(grid, outdir / "histogram.svg", outdir / "histogram.csv")

    summary = (
        f"events_a = {len(a)}\n"
        f"events_b = {len(b)}\n"
        f"pairs_raw = {len(pairs_raw)}\n"
        f"pairs_adjusted = {len(pairs)}\n"
        f"s_raw = {s_raw:.4f}\n"
        f"s_raw_stderr = {e_raw:.4f}\n"
        f"s_adjusted = {s_adj:.4f}\n"
        f"s_adjusted_stderr = {e_adj:.4f}\n"
        f"delta_s = {s_adj - s_raw:.4f}\n"
        f"offset_ps = {adj.offset_ps}\n"
        f"drift_ps_per_s = {adj.drift_ps_per_s}\n"
        f"delay_a = {adj.delay_a[0]},{adj.delay_a[1]}\n"
        f"delay_b = {adj.delay_b[0]},{adj.delay_b[1]}\n"
    )
    (outdir / "summary.txt").write_bytes(summary.encode("ascii"))
    return s_adj


def cmd_pipeline(args: argparse.Namespace) -> int:
    cfg, art, extras = _split_config(_collect_values(args))
    outdir = Path(args.outdir)
    if args.runs < 1:
        raise ConfigInvalid("--runs must be at least 1")
    if args.runs == 1:
        s = _pipeline_once(cfg, art, extras, outdir)
        print(f"S = {s:.4f}  ({outdir}/summary.txt)")
        return 0
    for k in range(args.runs):
        cfg_k = dataclasses.replace(cfg, seed=cfg.seed + k)
        sub = outdir / f"run_{k:04d}"
        s = _pipeline_once(cfg_k, art, extras, sub)
        print(f"run_{k:04d}: S = {s:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coinlab",
        description="Coincidence timing analysis for two-station event streams.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic run")
    p.add_argument("--config", metavar="FILE")
    p.add_argument("--out-a", metavar="FILE")
    p.add_argument("--out-b", metavar="FILE")
    p.add_argument("--out-truth", metavar="FILE")
    _add_override_flags(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("calibrate", help="estimate offset, drift, and channel delays")
    p.add_argument("--in-a", required=True, metavar="FILE")
    p.add_argument("--in-b", required=True, metavar="FILE")
    p.add_argument("--out", metavar="FILE")
    p.add_argument("--allow-unsorted", action="store_true")
    p.add_argument("--core-ps", type=int, default=1000)
    p.add_argument("--search-range-ps", type=int, default=1_000_000)
    p.add_argument("--coarse-bin-ps", type=int, default=1000)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("analyze", help="match streams and print the CHSH table")
    p.add_argument("--in-a", required=True, metavar="FILE")
    p.add_argument("--in-b", required=True, metavar="FILE")
    p.add_argument("--allow-unsorted", action="store_true")
    p.add_argument("--window-ps", type=int, default=4000)
    p.add_argument("--csv", metavar="FILE", help="write the E/S table as CSV")
    p.add_argument("--coincidences-csv", metavar="FILE", help="dump matched records as CSV")
    _add_adjust_flags(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("plot", help="render scatter and histogram figures")
    p.add_argument("--in-a", required=True, metavar="FILE")
    p.add_argument("--in-b", required=True, metavar="FILE")
    p.add_argument("--allow-unsorted", action="store_true")
    p.add_argument("--window-ps", type=int, default=4000)
    p.add_argument("--perspective", choices=[ALICE, BOB], default=ALICE)
    p.add_argument("--scatter", metavar="FILE.svg")
    p.add_argument("--t-range-s", type=_parse_pair, default=(0.0, 2.0))
    p.add_argument("--delta-range-ns", type=float, default=3.0)
    p.add_argument("--title", default="")
    p.add_argument("--hist-svg", metavar="FILE.svg")
    p.add_argument("--hist-csv", metavar="FILE.csv")
    p.add_argument("--hist-window-ps", type=int, default=3000)
    _add_adjust_flags(p)
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("pipeline", help="synth, calibrate, analyze, and plot in one pass")
    p.add_argument("--config", metavar="FILE")
    p.add_argument("--outdir", required=True, metavar="DIR")
    p.add_argument("--runs", type=int, default=1)
    _add_override_flags(p)
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigInvalid, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (FileFormatError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except (CalibrationError, EmptyClass) as e:
        print(f"error: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
