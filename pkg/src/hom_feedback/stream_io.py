"""Reading and writing detector timestamp files.

CSV files have the header ``detector,cycle_index,timestamp_ps``.  Binary
files start with an 8-byte magic string followed by a little-endian record
array of the same three columns.  A ``<file>.meta.json`` sidecar carries
run metadata (cycle count, period, delay transmission, scenario).
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .event_sim import TimestampStream

__all__ = ["ParseError", "RECORD_DTYPE", "MAGIC", "write_streams", "read_streams", "meta_path"]

MAGIC = b"HOMFBTS1"
RECORD_DTYPE = np.dtype([("detector", "u1"), ("cycle_index", "<i8"), ("timestamp_ps", "<i8")])
CSV_HEADER = "detector,cycle_index,timestamp_ps"


class ParseError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def meta_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta.json")


def _records(streams) -> np.ndarray:
    parts = []
    for s in streams:
        code = {"C": 0, "D": 1}[s.detector]
        rec = np.empty(len(s), RECORD_DTYPE)
        rec["detector"] = code
        rec["cycle_index"] = s.cycle_index
        rec["timestamp_ps"] = s.timestamps_ps
        parts.append(rec)
    rec = np.concatenate(parts)
    return rec[np.lexsort((rec["detector"], rec["timestamp_ps"]))]


def write_streams(path, streams, fmt: str = "csv", meta: dict | None = None) -> Path:
    path = Path(path)
    rec = _records(streams)
    if fmt == "csv":
        with path.open("w", newline="") as fh:
            fh.write(CSV_HEADER + "\n")
            names = np.array(["C", "D"])[rec["detector"]]
            lines = [f"{d},{c},{t}" for d, c, t in zip(names, rec["cycle_index"].tolist(), rec["timestamp_ps"].tolist())]
            if lines:
                fh.write("\n".join(lines) + "\n")
    elif fmt == "binary":
        with path.open("wb") as fh:
            fh.write(MAGIC)
            fh.write(rec.tobytes())
    else:
        raise ValueError(f"unknown stream format {fmt!r}")
    if meta is not None:
        meta_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path


def _from_records(rec, resolution_ps):
    out = []
    for code, name in ((0, "C"), (1, "D")):
        sel = rec[rec["detector"] == code]
        order = np.argsort(sel["timestamp_ps"], kind="stable")
        out.append(TimestampStream(name, sel["timestamp_ps"][order], sel["cycle_index"][order], resolution_ps))
    return tuple(out)


def _parse_csv(path: Path) -> np.ndarray:
    with path.open() as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip().replace(" ", "") != CSV_HEADER:
        raise ParseError(f"expected header {CSV_HEADER!r}", 1)
    rec = np.empty(len(lines) - 1, RECORD_DTYPE)
    n = 0
    for i, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cols = [c.strip() for c in line.split(",")]
        if len(cols) != 3:
            raise ParseError(f"expected 3 columns, got {len(cols)}", i)
        det, cyc, ts = cols
        if det not in ("C", "D"):
            raise ParseError(f"unknown detector {det!r}", i)
        try:
            cyc_i, ts_i = int(cyc), int(ts)
        except ValueError:
            raise ParseError("cycle_index and timestamp_ps must be integers", i) from None
        if cyc_i < 0 or ts_i < 0:
            raise ParseError("negative cycle index or timestamp", i)
        rec[n] = (0 if det == "C" else 1, cyc_i, ts_i)
        n += 1
    return rec[:n]


def read_streams(path, meta: dict | None = None):
    """Return ``(stream_c, stream_d, meta)``; metadata comes from the sidecar unless given."""
    path = Path(path)
    if meta is None:
        mp = meta_path(path)
        if not mp.exists():
            raise ParseError(f"missing metadata sidecar {mp.name}")
        try:
            meta = json.loads(mp.read_text())
        except json.JSONDecodeError as exc:
            raise ParseError(f"{mp.name}: {exc.msg}", exc.lineno) from exc
    with path.open("rb") as fh:
        head = fh.read(len(MAGIC))
    if head == MAGIC:
        raw = path.read_bytes()[len(MAGIC):]
        if len(raw) % RECORD_DTYPE.itemsize:
            raise ParseError("truncated binary record")
        rec = np.frombuffer(raw, RECORD_DTYPE)
        if rec.size and rec["detector"].max() > 1:
            raise ParseError("unknown detector code in binary file")
    else:
        rec = _parse_csv(path)
    c, d = _from_records(rec, float(meta.get("resolution_ps", 81.0)))
    return c, d, meta
