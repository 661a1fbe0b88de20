"""Markdown/CSV result tables laid out like the published result tables."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .metrics import SDR_THRESHOLDS_MM, MetricReport
from .scoring import sdr_name

MISSING = "-"


@dataclass
class Table:
    name: str
    title: str
    header: list[str]
    rows: list[list[str]]

    def to_markdown(self) -> str:
        lines = [f"## {self.title}", ""]
        lines.append("| " + " | ".join(self.header) + " |")
        lines.append("|" + "|".join(" --- " for _ in self.header) + "|")
        for row in self.rows:
            lines.append("| " + " | ".join(row) + " |")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.header)
        writer.writerows(self.rows)
        return buf.getvalue()


def fmt(v: Optional[float]) -> str:
    return MISSING if v is None else f"{v:.2f}"


def _index(reports: Iterable[MetricReport], task: str):
    cells = {}
    for r in reports:
        if r.task == task:
            cells[(r.model_id, r.dataset_id)] = r
    models = sorted({m for m, _ in cells})
    datasets = sorted({d for _, d in cells})
    return cells, models, datasets


def _model_rows(reports, task, metrics, name, title, per_dataset_header=True) -> Optional[Table]:
    """Models as rows, one column group of ``metrics`` per dataset."""
    cells, models, datasets = _index(reports, task)
    if not cells:
        return None
    header = ["Model"]
    for d in datasets:
        if per_dataset_header and len(metrics) > 1:
            header.extend(f"{d} {m}" for m in metrics)
        else:
            header.append(d)
    rows = []
    for model in models:
        row = [model or MISSING]
        for d in datasets:
            r = cells.get((model, d))
            row.extend(fmt(r.get(m) if r else None) for m in metrics)
        rows.append(row)
    return Table(name, title, header, rows)


def _dataset_rows(reports, task, metric, name, title) -> Optional[Table]:
    """Datasets as rows, one column per model."""
    cells, models, datasets = _index(reports, task)
    if not cells:
        return None
    header = ["Dataset"] + [m or MISSING for m in models]
    rows = []
    for d in datasets:
        row = [d]
        for model in models:
            r = cells.get((model, d))
            row.append(fmt(r.get(metric) if r else None))
        rows.append(row)
    return Table(name, title, header, rows)


def _landmark_table(reports) -> Optional[Table]:
    cells, models, datasets = _index(reports, "landmark")
    if not cells:
        return None
    metrics = ["MRE"] + [sdr_name(t) for t in SDR_THRESHOLDS_MM]
    header = ["Model", "MRE"] + [f"SDR {t:g}mm" for t in SDR_THRESHOLDS_MM]
    rows = []
    for model in models:
        for d in datasets:
            r = cells.get((model, d))
            if r is None:
                continue
            label = model or MISSING
            if len(datasets) > 1:
                label = f"{label} ({d})"
            rows.append([label] + [fmt(r.get(m)) for m in metrics])
    return Table("landmark", "Landmark detection", header, rows)


def build_tables(reports: Sequence[MetricReport]) -> list[Table]:
    candidates = [
        _model_rows(reports, "vqa", ["open", "close", "total"], "vqa", "Medical VQA"),
        _model_rows(reports, "classification", ["accuracy"], "classification", "Classification"),
        _model_rows(
            reports, "report_gen", ["ROUGE-L", "METEOR", "CIDEr"], "report_gen", "Report generation"
        ),
        _model_rows(
            reports, "report_gen", ["BLEU", "ROUGE-L", "METEOR"], "report_gen_bleu",
            "Report generation (BLEU)",
        ),
        _dataset_rows(reports, "detect_2d", "mIoU", "detect_2d", "2D disease detection (IoU)"),
        _dataset_rows(reports, "detect_3d", "mIoU", "detect_3d", "3D disease detection"),
        _landmark_table(reports),
    ]
    return [t for t in candidates if t is not None]


def render_markdown(tables: Sequence[Table]) -> str:
    if not tables:
        return "# Results\n\nNo results.\n"
    return "# Results\n\n" + "\n".join(t.to_markdown() for t in tables)


def write_report(reports: Sequence[MetricReport], out_dir) -> list[Path]:
    """Write ``report.md`` plus one CSV per table; returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tables = build_tables(reports)
    written = [out / "report.md"]
    written[0].write_text(render_markdown(tables), encoding="utf-8")
    for t in tables:
        p = out / f"{t.name}.csv"
        p.write_text(t.to_csv(), encoding="utf-8")
        written.append(p)
    return written
