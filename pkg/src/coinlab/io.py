"""Reading and writing event streams and coincidence tables.

Two on-disk layouts carry the same information:

Binary: a 16-byte magic (``COINLAB1`` padded with NULs), then tick_ps and the
record count as little-endian u32, then ``count`` packed 10-byte records of
(u64 LE timestamp in ticks, u8 setting, u8 detector).  File length is exactly
``24 + 10 * count`` bytes.

Text: three header lines ``# side=<Alice|Bob>``, ``# run_id=<string>``,
``# tick_ps=<int>`` followed by one ``<t_ticks> <setting> <detector>`` line
per event, single spaces, LF terminated.
"""
from __future__ import annotations

import re
import struct
import warnings

import numpy as np

from .core import (
    ALICE,
    CoinlabError,
    CoinlabWarning,
    DEFAULT_TICK_PS,
    EventStream,
    RunMetadata,
    check_no_duplicates,
    normalize_side,
    sort_canonical,
)

MAGIC = b"COINLAB1" + bytes(8)
_HEADER = struct.Struct("<II")
_RECORD_DTYPE = np.dtype([("t", "<u8"), ("setting", "u1"), ("detector", "u1")])
_RECORD_SIZE = 10

_TEXT_LINE = re.compile(rb"^(0|[1-9][0-9]*) ([01]) ([01])$")

CSV_HEADER = "t_a_ps,delta_ps,symbol_a,symbol_b,multiple"


class FileFormatError(CoinlabError):
    """A file does not conform to one of the stream layouts."""


class BadMagic(FileFormatError):
    pass


class TruncatedFile(FileFormatError):
    pass


class MalformedRecord(FileFormatError):
    pass


class NonMonotonic(FileFormatError):
    pass


def _finish_stream(
    path,
    side: str,
    t_ps: np.ndarray,
    setting: np.ndarray,
    detector: np.ndarray,
    meta: RunMetadata,
    allow_unsorted: bool,
) -> EventStream:
    if t_ps.shape[0] > 1 and np.any(np.diff(t_ps) < 0):
        if not allow_unsorted:
            raise NonMonotonic(f"{path}: timestamps decrease; pass allow_unsorted to sort")
        warnings.warn(f"{path}: unsorted timestamps, sorting", CoinlabWarning, stacklevel=3)
        t_ps, setting, detector = sort_canonical(t_ps, setting, detector)
    dup = check_no_duplicates(t_ps, detector)
    if dup.any():
        i = int(np.flatnonzero(dup)[0])
        raise MalformedRecord(f"{path}: duplicate (timestamp, detector) at record {i}")
    return EventStream(side, t_ps, setting, detector, meta)


def _read_binary(path, data: bytes, side: str | None, allow_unsorted: bool) -> EventStream:
    if len(data) < 24:
        raise TruncatedFile(f"{path}: {len(data)} bytes, header needs 24")
    if data[:16] != MAGIC:
        raise BadMagic(f"{path}: bad magic {data[:16]!r}")
    tick_ps, count = _HEADER.unpack_from(data, 16)
    if tick_ps == 0:
        raise MalformedRecord(f"{path}: tick_ps is zero")
    expected = 24 + _RECORD_SIZE * count
    if len(data) < expected:
        raise TruncatedFile(f"{path}: {len(data)} bytes, {count} records need {expected}")
    if len(data) > expected:
        raise MalformedRecord(f"{path}: {len(data) - expected} trailing bytes")
    recs = np.frombuffer(data, dtype=_RECORD_DTYPE, count=count, offset=24)
    bad = (recs["setting"] > 1) | (recs["detector"] > 1)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise MalformedRecord(f"{path}: setting/detector out of range at record {i}")
    if count and int(recs["t"].max()) > (2**63 - 1) // tick_ps:
        raise MalformedRecord(f"{path}: timestamp overflows int64 picoseconds")
    t_ps = recs["t"].astype(np.int64) * tick_ps
    meta = RunMetadata(run_id="", tick_ps=int(tick_ps))
    return _finish_stream(
        path, side or ALICE, t_ps, recs["setting"].copy(), recs["detector"].copy(),
        meta, allow_unsorted,
    )


def _read_text(path, data: bytes, side: str | None, allow_unsorted: bool) -> EventStream:
    lines = data.split(b"\n")
    if lines and lines[-1] == b"":
        lines.pop()
    headers: dict[str, str] = {}
    body_start = 0
    for i, line in enumerate(lines):
        if not line.startswith(b"#"):
            body_start = i
            break
        body_start = i + 1
        m = re.match(rb"^# ([a-z_]+)=(.*)$", line)
        if m is None:
            raise MalformedRecord(f"{path}: line {i + 1}: bad header line")
        headers[m.group(1).decode()] = m.group(2).decode()
    for key in ("side", "tick_ps"):
        if key not in headers:
            raise MalformedRecord(f"{path}: missing '# {key}=' header")
    if headers["side"] not in ("Alice", "Bob"):
        raise MalformedRecord(f"{path}: side must be Alice or Bob, got {headers['side']!r}")
    try:
        tick_ps = int(headers["tick_ps"])
    except ValueError:
        raise MalformedRecord(f"{path}: tick_ps is not an integer") from None
    if tick_ps <= 0:
        raise MalformedRecord(f"{path}: tick_ps must be positive")

    body = lines[body_start:]
    n = len(body)
    t_ticks = np.empty(n, dtype=np.uint64)
    setting = np.empty(n, dtype=np.uint8)
    detector = np.empty(n, dtype=np.uint8)
    for j, line in enumerate(body):
        m = _TEXT_LINE.match(line)
        if m is None:
            raise MalformedRecord(f"{path}: line {body_start + j + 1}: malformed record {line!r}")
        t_ticks[j] = int(m.group(1))
        setting[j] = int(m.group(2))
        detector[j] = int(m.group(3))
    if n and int(t_ticks.max()) > (2**63 - 1) // tick_ps:
        raise MalformedRecord(f"{path}: timestamp overflows int64 picoseconds")
    t_ps = t_ticks.astype(np.int64) * tick_ps
    meta = RunMetadata(run_id=headers.get("run_id", ""), tick_ps=tick_ps)
    stream_side = side if side is not None else headers["side"]
    return _finish_stream(path, stream_side, t_ps, setting, detector, meta, allow_unsorted)


def read_events(
    path,
    format: str = "auto",
    side: str | None = None,
    allow_unsorted: bool = False,
) -> EventStream:
    """Load an event stream, sniffing the layout from the magic by default.

    ``side`` overrides the station label (binary files carry none and default
    to alice).  Out-of-order records raise NonMonotonic unless
    ``allow_unsorted`` is set, in which case they are sorted with a warning.
    """
    if side is not None:
        side = normalize_side(side)
    with open(path, "rb") as fh:
        data = fh.read()
    if format == "auto":
        format = "binary" if data[:8] == MAGIC[:8] else "text"
    if format == "binary":
        return _read_binary(path, data, side, allow_unsorted)
    if format == "text":
        return _read_text(path, data, side, allow_unsorted)
    raise ValueError(f"format must be 'auto', 'binary' or 'text', got {format!r}")


def write_events(stream: EventStream, path, format: str = "binary") -> None:
    """Write a stream to disk.  Timestamps must be multiples of meta.tick_ps."""
    tick = stream.meta.tick_ps
    if tick <= 0:
        raise ValueError("stream.meta.tick_ps must be positive")
    if len(stream) and np.any(stream.t % tick):
        raise ValueError(f"timestamps are not aligned to the {tick} ps tick")
    t_ticks = (stream.t // tick).astype(np.uint64)
    if format == "binary":
        recs = np.empty(len(stream), dtype=_RECORD_DTYPE)
        recs["t"] = t_ticks
        recs["setting"] = stream.setting
        recs["detector"] = stream.detector
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(_HEADER.pack(tick, len(stream)))
            fh.write(recs.tobytes())
        return
    if format == "text":
        side = "Alice" if stream.side == ALICE else "Bob"
        parts = [f"# side={side}\n# run_id={stream.meta.run_id}\n# tick_ps={tick}\n"]
        for i in range(len(stream)):
            parts.append(f"{t_ticks[i]} {stream.setting[i]} {stream.detector[i]}\n")
        with open(path, "wb") as fh:
            fh.write("".join(parts).encode("ascii"))
        return
    raise ValueError(f"format must be 'binary' or 'text', got {format!r}")


def write_coincidences_csv(cset, path) -> None:
    """Dump a coincidence set as CSV: t_a_ps, delta_ps, symbols, multiple flag.

    Column names follow the set's perspective: t_a_ps and symbol_a describe
    the perspective station, symbol_b its partner.
    """
    lines = [CSV_HEADER + "\n"]
    t = cset.t
    delta = cset.delta_ps
    sym_a = cset.symbol_self
    sym_b = cset.symbol_other
    mult = cset.multiple.astype(np.uint8)
    for i in range(len(cset)):
        lines.append(f"{t[i]},{delta[i]},{sym_a[i]},{sym_b[i]},{mult[i]}\n")
    with open(path, "wb") as fh:
        fh.write("".join(lines).encode("ascii"))
