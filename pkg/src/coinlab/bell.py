"""Correlation and CHSH statistics over matched coincidence pairs.

Outcomes map detector 0 to +1 and detector 1 to -1.  With the analyzer
angles used here the four setting pairs (0,0), (0,1), (1,0), (1,1) enter the
CHSH combination S = E(0,0) - E(0,1) + E(1,0) + E(1,1), which an ideal run
at visibility V drives to 2 sqrt(2) V.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import CoinlabError

CSV_HEADER = "row,setting_a,setting_b,n_pp,n_pm,n_mp,n_mm,value,stderr"


class EmptyClass(CoinlabError):
    """A setting pair has no coincidences, so E is undefined."""


@dataclass(frozen=True)
class SettingCounts:
    """Coincidence counts indexed [setting_a, setting_b, detector_a, detector_b]."""

    counts: np.ndarray

    def __post_init__(self) -> None:
        c = np.ascontiguousarray(self.counts, dtype=np.int64)
        if c.shape != (2, 2, 2, 2):
            raise ValueError("counts must have shape (2, 2, 2, 2)")
        if (c < 0).any():
            raise ValueError("counts must be non-negative")
        object.__setattr__(self, "counts", c)

    def n_total(self, setting_a: int, setting_b: int) -> int:
        return int(self.counts[setting_a, setting_b].sum())

    def total(self) -> int:
        return int(self.counts.sum())


def tally(pairs) -> SettingCounts:
    """Count pairs per (setting_a, setting_b, detector_a, detector_b).

    Accepts a MutualPairs (fast path over its arrays) or any iterable of
    (record_a, record_b) pairs carrying either .symbol_a/.symbol_b (the a-side
    coincidence record) or a plain .symbol each.
    """
    if hasattr(pairs, "symbol_a") and hasattr(pairs, "symbol_b"):
        sym_a = np.asarray(pairs.symbol_a, dtype=np.int64)
        sym_b = np.asarray(pairs.symbol_b, dtype=np.int64)
    else:
        records = [
            (int(ra.symbol_a), int(ra.symbol_b))
            if hasattr(ra, "symbol_a")
            else (int(ra.symbol), int(rb.symbol))
            for ra, rb in pairs
        ]
        sym_a = np.array([r[0] for r in records], dtype=np.int64)
        sym_b = np.array([r[1] for r in records], dtype=np.int64)
    sa, da = sym_a & 1, sym_a >> 1
    sb, db = sym_b & 1, sym_b >> 1
    idx = ((sa * 2 + sb) * 2 + da) * 2 + db
    counts = np.bincount(idx, minlength=16).reshape(2, 2, 2, 2)
    return SettingCounts(counts)


def correlation_E(counts: SettingCounts, setting_a: int, setting_b: int) -> float:
    """E = <outcome_a * outcome_b> for one setting pair."""
    c = counts.counts[setting_a, setting_b]
    n = c.sum()
    if n == 0:
        raise EmptyClass(f"no coincidences with settings ({setting_a}, {setting_b})")
    return float(c[0, 0] + c[1, 1] - c[0, 1] - c[1, 0]) / float(n)


def correlation_stderr(counts: SettingCounts, setting_a: int, setting_b: int) -> float:
    """Binomial standard error of E: sqrt((1 - E^2) / n)."""
    n = counts.n_total(setting_a, setting_b)
    if n == 0:
        raise EmptyClass(f"no coincidences with settings ({setting_a}, {setting_b})")
    e = correlation_E(counts, setting_a, setting_b)
    return float(np.sqrt(max(1.0 - e * e, 0.0) / n))


def chsh_S(counts: SettingCounts) -> float:
    """S = E(0,0) - E(0,1) + E(1,0) + E(1,1)."""
    return (
        correlation_E(counts, 0, 0)
        - correlation_E(counts, 0, 1)
        + correlation_E(counts, 1, 0)
        + correlation_E(counts, 1, 1)
    )


def chsh_stderr(counts: SettingCounts) -> float:
    """Propagated standard error of S, treating the four classes as independent."""
    var = sum(
        correlation_stderr(counts, sa, sb) ** 2 for sa in (0, 1) for sb in (0, 1)
    )
    return float(np.sqrt(var))


def correlation_table(counts: SettingCounts) -> list[dict]:
    """One row per setting pair: counts by outcome, E, and its standard error."""
    rows = []
    for sa in (0, 1):
        for sb in (0, 1):
            c = counts.counts[sa, sb]
            rows.append(
                {
                    "setting_a": sa,
                    "setting_b": sb,
                    "n_pp": int(c[0, 0]),
                    "n_pm": int(c[0, 1]),
                    "n_mp": int(c[1, 0]),
                    "n_mm": int(c[1, 1]),
                    "E": correlation_E(counts, sa, sb),
                    "stderr": correlation_stderr(counts, sa, sb),
                }
            )
    return rows


def render_report(counts: SettingCounts) -> str:
    """Fixed-width text report of the four correlations and S."""
    lines = ["setting_a setting_b     n_pp     n_pm     n_mp     n_mm        E   stderr"]
    for r in correlation_table(counts):
        lines.append(
            f"{r['setting_a']:9d} {r['setting_b']:9d} {r['n_pp']:8d} {r['n_pm']:8d} "
            f"{r['n_mp']:8d} {r['n_mm']:8d} {r['E']:8.4f} {r['stderr']:8.4f}"
        )
    s = chsh_S(counts)
    err = chsh_stderr(counts)
    lines.append(f"S = {s:.4f} +- {err:.4f}  (n = {counts.total()})")
    return "\n".join(lines) + "\n"


def write_report_csv(counts: SettingCounts, path) -> None:
    """CSV with one E row per setting pair and a final S row."""
    lines = [CSV_HEADER + "\n"]
    for r in correlation_table(counts):
        lines.append(
            f"E,{r['setting_a']},{r['setting_b']},{r['n_pp']},{r['n_pm']},"
            f"{r['n_mp']},{r['n_mm']},{r['E']:.6f},{r['stderr']:.6f}\n"
        )
    lines.append(f"S,,,,,,,{chsh_S(counts):.6f},{chsh_stderr(counts):.6f}\n")
    with open(path, "wb") as fh:
        fh.write("".join(lines).encode("ascii"))
