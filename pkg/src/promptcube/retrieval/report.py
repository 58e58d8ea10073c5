"""CSV / JSON / tab-separated plot data for cost reports, plus the rendered figure."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

from .cost import CostReport

CSV_COLUMNS = ("strategy", "Nv", "Nt", "Nf", "Nw", "analytic_ops", "time_ms", "peak_bytes")
SERIES_COLUMNS = ("Nv", "Nt", "Nf", "Nw", "log10_analytic_ops", "log10_time_ms", "log10_peak_bytes")


def sort_reports(reports) -> list[CostReport]:
    return sorted(reports, key=lambda r: (r.strategy, r.Nv, r.Nt, r.Nf, r.Nw))


def reports_to_csv(reports) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in sort_reports(reports):
        writer.writerow([r.strategy, r.Nv, r.Nt, r.Nf, r.Nw, r.analytic_ops, f"{r.time_ms:.6f}", r.peak_bytes])
    return buf.getvalue()


def reports_to_json(reports) -> str:
    return json.dumps([r.to_dict() for r in sort_reports(reports)], indent=2, sort_keys=True) + "\n"


def reports_from_json(text: str) -> list[CostReport]:
    return [CostReport(**d) for d in json.loads(text)]


def _lg(v: float) -> str:
    return f"{math.log10(v):.6f}" if v > 0 else "nan"


def series_tables(reports) -> dict[str, str]:
    """One tab-separated table per strategy with log10-scaled axes."""
    tables: dict[str, list[str]] = {}
    for r in sort_reports(reports):
        lines = tables.setdefault(r.strategy, ["\t".join(SERIES_COLUMNS)])
        lines.append("\t".join([str(r.Nv), str(r.Nt), str(r.Nf), str(r.Nw), _lg(r.analytic_ops),
                                _lg(r.time_ms), _lg(r.peak_bytes)]))
    return {k: "\n".join(v) + "\n" for k, v in tables.items()}


def emit_report(reports, out_dir, figure: bool = True) -> dict[str, Path]:
    """Write ``cost_report.csv``, ``cost_report.json``, ``series_<strategy>.tsv``
    and (optionally) ``cost_report.png`` under ``out_dir``."""
    reports = list(reports)
    if not reports:
        raise ValueError("emit_report needs at least one report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"csv": out / "cost_report.csv", "json": out / "cost_report.json"}
    paths["csv"].write_text(reports_to_csv(reports), encoding="utf-8")
    paths["json"].write_text(reports_to_json(reports), encoding="utf-8")
    for strategy, table in series_tables(reports).items():
        p = out / f"series_{strategy}.tsv"
        p.write_text(table, encoding="utf-8")
        paths[f"series_{strategy}"] = p
    if figure:
        from .plotting import render_cost_figure

        paths["figure"] = out / "cost_report.png"
        render_cost_figure(reports, paths["figure"])
    return paths
