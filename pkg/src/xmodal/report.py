"""Serializing run reports and loss comparisons (JSON, CSV, markdown)."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

from .trainer import CURVE_COLUMNS, METRIC_KEYS, REPORT_SCHEMA_VERSION, Comparison, RunReport

FORMATS = ("json", "csv", "markdown")


def dumps_json(doc) -> str:
    # insertion order is the field order; no key sorting so sections stay grouped
    return json.dumps(doc, indent=2) + "\n"


def _fmt(v) -> str:
    return "" if v is None else repr(float(v)) if isinstance(v, float) else str(v)


def curve_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CURVE_COLUMNS)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in CURVE_COLUMNS])
    return buf.getvalue()


def metrics_csv(rows: list[dict]) -> str:
    cols = ("step", "seed") + METRIC_KEYS
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in cols])
    return buf.getvalue()


def _pct(v) -> str:
    return "-" if v is None else f"{100 * v:.2f}%"


def markdown_table(rows: list[tuple[str, dict]], task: str, recall_k: int = 10, probe_k: int = 5) -> str:
    """Method rows with EER columns (biometric) or top-k accuracy columns (sync)."""
    if task == "sync":
        cols = [("R@1", "probe_top1"), (f"R@{probe_k}", "probe_topk")]
    else:
        cols = [("CBM EER", "cbm_eer"), ("SV EER", "sv_eer")]
    lines = [f"<!-- xmodal report schema_version: {REPORT_SCHEMA_VERSION} -->",
             "| Method | " + " | ".join(c for c, _ in cols) + " |",
             "|---" * (len(cols) + 1) + "|"]
    for name, metrics in rows:
        lines.append(f"| {name} | " + " | ".join(_pct(metrics.get(k)) for _, k in cols) + " |")
    return "\n".join(lines) + "\n"


def _method_name(config: dict) -> str:
    loss = config["loss"]
    content = config.get("content_loss") or loss
    if config["task"] == "sync":
        return f"PT - {loss}"
    if config["lambda_content"] > 0:
        return f"IL + CL ({loss})" if content == loss else f"IL ({loss}) + CL ({content})"
    return f"IL ({loss})"


def emit_report(report: RunReport, fmt: str, out_dir) -> list[Path]:
    """Write ``report`` in one format; returns the files written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if fmt == "json":
        p = out / "report.json"
        p.write_text(dumps_json(report.to_json()))
        return [p]
    if fmt == "csv":
        p1, p2 = out / "curve.csv", out / "metrics.csv"
        p1.write_text(curve_csv(report.curve))
        p2.write_text(metrics_csv(report.metrics))
        return [p1, p2]
    if fmt == "markdown":
        p = out / "report.md"
        rows = [(_method_name(report.config), report.final)] if report.metrics else []
        ev = report.config["eval"]
        p.write_text(markdown_table(rows, report.config["task"], ev["recall_k"], ev["probe_k"]))
        return [p]
    raise ValueError(f"unknown report format {fmt!r}; choose from {FORMATS}")


def emit_comparison(comp: Comparison, task: str, out_dir, probe_k: int = 5) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    p1, p2 = out / "comparison.json", out / "comparison.md"
    p1.write_text(dumps_json(comp.to_json()))
    p2.write_text(markdown_table([(n, comp.means[n]) for n in comp.names], task, probe_k=probe_k))
    return [p1, p2]
