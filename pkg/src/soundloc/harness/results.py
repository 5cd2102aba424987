"""CSV / JSON-lines emission of metric reports and per-trial records."""
from __future__ import annotations

import csv
import io
import json
from pathlib import Path

from ..errors import FormatError
from .metrics import MetricRow, MetricsReport, round_sig

COLUMNS = ("method", "target", "n_trials", "n_failed", "mae_cm", "mae_std_cm", "acc_at_30cm", "acc_std")
_INT = {"n_trials", "n_failed"}
_FLOAT = {"mae_cm", "mae_std_cm", "acc_at_30cm", "acc_std"}
FORMATS = ("csv", "jsonl")


def _fmt(x: float) -> str:
    return f"{x:.4g}"


def _header_lines(report: MetricsReport) -> list:
    return [
        f"scenario={report.scenario}",
        f"runtime_s={_fmt(report.runtime_s)}",
        f"threshold_cm={_fmt(report.threshold_cm)}",
        "acc_at_30cm counts errors <= threshold_cm as correct (boundary inclusive)",
    ]


def render_report(report: MetricsReport, fmt: str = "csv") -> str:
    """Text of a report; floats carry 4 significant digits and the layout is fixed."""
    if fmt == "csv":
        buf = io.StringIO()
        for line in _header_lines(report):
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in report.rows:
            w.writerow([_fmt(getattr(r, c)) if c in _FLOAT else getattr(r, c) for c in COLUMNS])
        return buf.getvalue()
    if fmt == "jsonl":
        meta = {"kind": "report", "scenario": report.scenario, "runtime_s": round_sig(report.runtime_s),
                "threshold_cm": round_sig(report.threshold_cm), "boundary": "inclusive"}
        lines = [json.dumps(meta)]
        for r in report.rows:
            row = {"kind": "row"}
            row.update({c: round_sig(getattr(r, c)) if c in _FLOAT else getattr(r, c) for c in COLUMNS})
            lines.append(json.dumps(row))
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")


def emit_results(report: MetricsReport, path, fmt: str | None = None) -> Path:
    """Write ``report`` to ``path``; the format defaults from the suffix (.csv or .jsonl)."""
    path = Path(path)
    fmt = fmt or ("csv" if path.suffix == ".csv" else "jsonl")
    text = render_report(report, fmt)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return path


def _row_from(d: dict) -> MetricRow:
    kw = {}
    for c in COLUMNS:
        v = d[c]
        kw[c] = int(v) if c in _INT else float(v) if c in _FLOAT else str(v)
    return MetricRow(**kw)


def parse_report(text: str, fmt: str = "csv") -> MetricsReport:
    try:
        if fmt == "csv":
            meta, body = {}, []
            for line in text.splitlines():
                if line.startswith("# "):
                    key, sep, value = line[2:].partition("=")
                    if sep:
                        meta[key] = value
                else:
                    body.append(line)
            reader = csv.DictReader(body)
            if tuple(reader.fieldnames or ()) != COLUMNS:
                raise FormatError(f"unexpected columns {reader.fieldnames}")
            rows = [_row_from(d) for d in reader]
            return MetricsReport(meta["scenario"], rows, float(meta["runtime_s"]), float(meta["threshold_cm"]))
        if fmt == "jsonl":
            objs = [json.loads(line) for line in text.splitlines() if line.strip()]
            meta = objs[0]
            if meta.get("kind") != "report":
                raise FormatError("first line must be the report header")
            rows = [_row_from(o) for o in objs[1:]]
            return MetricsReport(meta["scenario"], rows, float(meta["runtime_s"]), float(meta["threshold_cm"]))
    except (KeyError, ValueError, IndexError) as exc:
        raise FormatError(f"malformed {fmt} report: {exc}") from exc
    raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")


def read_results(path, fmt: str | None = None) -> MetricsReport:
    path = Path(path)
    fmt = fmt or ("csv" if path.suffix == ".csv" else "jsonl")
    return parse_report(path.read_text(), fmt)


def write_trials(records, path) -> Path:
    """Per-trial records as JSON lines at full float precision, sorted by trial key."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    ordered = sorted(records, key=lambda r: (r["trial"], r["method"], r["target"], r["index"]))
    with open(path, "w") as fh:
        for r in ordered:
            fh.write(json.dumps(r, sort_keys=True) + "\n")
    return path


def read_trials(path) -> list:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
