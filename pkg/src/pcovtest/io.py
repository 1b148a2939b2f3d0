"""Data files, run configuration, and report serialization.

Observation matrices load from two formats: CSV with a header row
(rows = subjects) and a binary container for large inputs — magic
"PCV1", then row and column counts as little-endian u64, then the
values as little-endian float64 in row-major order.  The binary writer
and reader round-trip bit-exactly.

Column layouts (which columns form block Y_{j,g}) travel as JSON with
fields J, G, and a "columns" object keyed "j,g"; Layout's own
validation rejects overlaps, gaps, and out-of-range entries.

Reports serialize as canonical JSON: keys sorted, floats printed with
17 significant digits so float64 values survive a round trip, and
non-finite numbers rejected rather than written.  Re-running a command
with the same inputs and seed reproduces the report byte-for-byte
except the "timing" block, which is excluded from that contract.
"""
from __future__ import annotations

import csv
import json
import math
import struct
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np

from .errors import MatrixLoadError, ValidationError
from .families import Layout

MAGIC = b"PCV1"
_HEADER = struct.Struct("<8sQQ")  # magic padded to 8 bytes, n, p


def save_matrix(data, path: str) -> None:
    """Write an observation matrix; ".csv" suffix selects CSV, else binary."""
    data = np.ascontiguousarray(np.asarray(data, dtype="<f8"))
    if data.ndim != 2:
        raise ValidationError("observation data must be a 2-D matrix (rows = subjects)")
    if str(path).endswith(".csv"):
        header = ",".join(f"c{j}" for j in range(data.shape[1]))
        np.savetxt(path, data, delimiter=",", header=header, comments="",
                   fmt="%.17g")
        return
    n, p = data.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC.ljust(8, b"\0"), n, p))
        fh.write(data.tobytes())


def load_matrix(path: str) -> np.ndarray:
    """Read a matrix from CSV (header row) or the binary container.

    The format is detected from the leading magic bytes, not the file
    name.  Non-finite entries are rejected with their row/column.
    """
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == MAGIC:
        data = _load_binary(path)
    else:
        data = _load_csv(path)
    bad = np.argwhere(~np.isfinite(data))
    if bad.size:
        r, c = (int(x) for x in bad[0])
        raise MatrixLoadError(
            f"{path}: non-finite value at row {r}, column {c}"
        )
    return data


def _load_binary(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise MatrixLoadError(f"{path}: truncated header ({len(header)} bytes)")
        magic, n, p = _HEADER.unpack(header)
        if magic.rstrip(b"\0") != MAGIC:
            raise MatrixLoadError(f"{path}: bad magic {magic[:4]!r}")
        payload = fh.read()
    expected = n * p * 8
    if len(payload) != expected:
        raise MatrixLoadError(
            f"{path}: expected {expected} payload bytes for a {n}x{p} "
            f"matrix, found {len(payload)}"
        )
    return np.frombuffer(payload, dtype="<f8").reshape(n, p).copy()


def _load_csv(path: str) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise MatrixLoadError(f"{path}: need a header row plus at least one data row")
    width = len(rows[0])
    out = np.empty((len(rows) - 1, width))
    for i, row in enumerate(rows[1:]):
        if len(row) != width:
            raise MatrixLoadError(
                f"{path}: row {i} has {len(row)} fields, header has {width}"
            )
        for j, cell in enumerate(row):
            try:
                out[i, j] = float(cell)
            except ValueError:
                raise MatrixLoadError(
                    f"{path}: row {i}, column {j}: not a number: {cell!r}"
                ) from None
    return out


def save_layout(layout: Layout, path: str) -> None:
    """Write a layout as JSON with "j,g"-keyed column lists."""
    obj = {
        "J": layout.J,
        "G": layout.G,
        "columns": {f"{j},{g}": list(cols)
                    for (j, g), cols in sorted(layout.columns.items())},
    }
    with open(path, "w") as fh:
        fh.write(canonical_json(obj) + "\n")


def load_layout(path: str) -> Layout:
    """Read and validate a layout JSON file."""
    with open(path) as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: not valid JSON: {exc}") from None
    for key in ("J", "G", "columns"):
        if key not in obj:
            raise ValidationError(f"{path}: layout is missing field {key!r}")
    columns = {}
    for key, cols in obj["columns"].items():
        try:
            j, g = (int(x) for x in key.split(","))
        except ValueError:
            raise ValidationError(
                f"{path}: column key {key!r} is not of the form \"j,g\""
            ) from None
        columns[(j, g)] = cols
    return Layout(J=int(obj["J"]), G=int(obj["G"]), columns=columns)


def canonical_json(obj) -> str:
    """Deterministic JSON: sorted keys, floats at 17 significant digits.

    Non-finite floats are an error — a NaN in a report means some
    upstream computation went wrong, and writing it out would only move
    the failure to whoever parses the file.
    """
    pieces = []
    _write_canonical(obj, pieces)
    return "".join(pieces)


def _write_canonical(obj, out: list) -> None:
    if obj is None or obj is True or obj is False:
        out.append(json.dumps(obj))
    elif isinstance(obj, (int, np.integer)) and not isinstance(obj, bool):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            raise ValidationError(f"cannot serialize non-finite value {x!r}")
        out.append(f"{x:.17g}")
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, dict):
        out.append("{")
        for i, key in enumerate(sorted(obj)):
            if not isinstance(key, str):
                raise ValidationError(f"JSON object keys must be strings, got {key!r}")
            if i:
                out.append(",")
            out.append(json.dumps(key))
            out.append(":")
            _write_canonical(obj[key], out)
        out.append("}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        out.append("[")
        seq = obj.tolist() if isinstance(obj, np.ndarray) else obj
        for i, item in enumerate(seq):
            if i:
                out.append(",")
            _write_canonical(item, out)
        out.append("]")
    else:
        raise ValidationError(f"cannot serialize {type(obj).__name__} to JSON")


@dataclass
class RunConfig:
    """One resolved command invocation; CLI flags override config-file values.

    K=0 selects the monolithic engine, K >= 1 the distributed one with
    that many blocks; block_sizes (explicit per-block row counts)
    overrides K for uneven splits.
    """

    command: str                      # global-test | multiple-test | simulate
    data: Optional[str] = None        # matrix path (test commands)
    layout: Optional[str] = None      # layout JSON path
    problem: str = "a"                # a | b | c | custom
    pairs: Optional[str] = None       # pairs JSON path (problem=custom)
    B: int = 5
    K: int = 0
    block_sizes: Optional[list] = None
    L: list = field(default_factory=lambda: [1])
    N: int = 5000
    alpha: float = 0.05
    seed: int = 0
    threads: Optional[int] = None
    out: Optional[str] = None
    format: str = "json"              # json | csv | text
    figures: bool = True
    # simulate-only knobs
    scenario: Optional[str] = None
    test: str = "global"              # global | multiple
    G: int = 16
    V: int = 1600
    n: int = 300
    J: int = 3
    reps: int = 500

    def __post_init__(self):
        if self.command not in ("global-test", "multiple-test", "simulate"):
            raise ValidationError(f"unknown command {self.command!r}")
        if self.command == "simulate":
            if self.scenario is None:
                raise ValidationError("simulate requires a scenario")
        else:
            if self.data is None:
                raise ValidationError(f"{self.command} requires --data")
            if self.problem == "custom":
                if self.pairs is None:
                    raise ValidationError("problem 'custom' requires --pairs")
            elif self.layout is None:
                raise ValidationError(
                    f"problem {self.problem!r} requires --layout"
                )
        if self.problem not in ("a", "b", "c", "custom"):
            raise ValidationError(f"unknown problem {self.problem!r}")
        if self.K < 0:
            raise ValidationError(f"K must be >= 0, got {self.K}")
        if not self.L:
            raise ValidationError("need at least one L value")

    @classmethod
    def from_sources(cls, command: str, file_values: dict, cli_values: dict) -> "RunConfig":
        """Merge config-file values with CLI overrides (CLI wins)."""
        known = {f.name for f in fields(cls)} - {"command"}
        unknown = set(file_values) - known
        if unknown:
            raise ValidationError(
                f"unknown config-file keys: {', '.join(sorted(unknown))}"
            )
        merged = dict(file_values)
        merged.update({k: v for k, v in cli_values.items() if v is not None})
        return cls(command=command, **merged)


def load_config_file(path: str) -> dict:
    """JSON config file with the same keys as the CLI flags."""
    with open(path) as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: not valid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise ValidationError(f"{path}: config file must hold a JSON object")
    return obj


def config_echo(config: RunConfig) -> dict:
    """The config block echoed into every report."""
    out = {}
    for f in fields(config):
        v = getattr(config, f.name)
        out[f.name] = list(v) if isinstance(v, (tuple, list)) else v
    return out


def global_report(results, config: RunConfig, elapsed_seconds: float) -> dict:
    """Report dict for one or more (shared-draw) global test results."""
    results = results if isinstance(results, list) else [results]
    first = results[0]
    return {
        "kind": "global-test",
        "engine": first.engine,
        "config": config_echo(config),
        "results": [r.to_dict() for r in results],
        "timing": {"elapsed_seconds": float(elapsed_seconds)},
    }


def multiple_report(result, labels, config: RunConfig,
                    elapsed_seconds: float) -> dict:
    """Report dict for a multiple-test run, one record per hypothesis."""
    records = []
    for m in result.marginals:
        rec = m.to_dict()
        rec["label"] = labels[m.q]
        rec["rejected"] = bool(m.q in result.rejected)
        records.append(rec)
    return {
        "kind": "multiple-test",
        "engine": result.engine,
        "config": config_echo(config),
        "t_hat": float(result.t_hat),
        "t_max": float(result.t_max),
        "fallback_used": bool(result.fallback_used),
        "alpha": float(result.alpha),
        "rejected": sorted(int(q) for q in result.rejected),
        "hypotheses": records,
        "timing": {"elapsed_seconds": float(elapsed_seconds)},
    }


def emit_report(report: dict, path: str, format: str = "json") -> None:
    """Write a report as canonical JSON, CSV records, or an aligned table."""
    if format == "json":
        with open(path, "w") as fh:
            fh.write(canonical_json(report) + "\n")
    elif format == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            for row in _report_rows(report):
                writer.writerow(row)
    elif format == "text":
        with open(path, "w") as fh:
            fh.write(report_text(report))
    else:
        raise ValidationError(f"unknown report format {format!r}")


def _report_rows(report: dict) -> list:
    if report["kind"] == "global-test":
        head = ["L", "statistic", "critical_value", "mc_pvalue", "reject"]
        return [head] + [
            [r["L"], r["statistic"], r["critical_value"], r["mc_pvalue"],
             r["reject"]]
            for r in report["results"]
        ]
    head = ["q", "label", "statistic", "pvalue", "score", "rejected"]
    return [head] + [
        [h["q"], h["label"], h["statistic"], h["pvalue"], h["score"],
         h["rejected"]]
        for h in report["hypotheses"]
    ]


def report_text(report: dict) -> str:
    """Aligned text rendering of a report's result rows."""
    rows = _report_rows(report)
    head, body = rows[0], rows[1:]
    cells = [[_fmt_cell(v) for v in row] for row in body]
    widths = [max(len(h), *(len(c[i]) for c in cells)) if cells else len(h)
              for i, h in enumerate(head)]
    lines = [
        f"{report['kind']}  engine={report['engine']}",
        "  ".join(h.rjust(w) for h, w in zip(head, widths)),
    ]
    for row in cells:
        lines.append("  ".join(c.rjust(w) for c, w in zip(row, widths)))
    if report["kind"] == "multiple-test":
        lines.append(
            f"t_hat={report['t_hat']:.4f}  rejected {len(report['rejected'])} "
            f"of {len(report['hypotheses'])}"
            + ("  (max-threshold fallback)" if report["fallback_used"] else "")
        )
    return "\n".join(lines) + "\n"


def _fmt_cell(v) -> str:
    if isinstance(v, bool):
        return str(v)
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)
