"""Metrics CSV interchange and chart emission.

The CSV schema is one row per metric value: metric,ordering,persona,n,value.
Reports merge any number of such files (one per run, named by file stem)
into a single CSV and one grouped bar chart per metric family. Charts are
hand-built SVG text with fixed-precision coordinates, so identical inputs
produce identical bytes.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Iterable, Sequence
from xml.sax.saxutils import escape

from .errors import ParseError
from .evaluation import MetricRow

CSV_HEADER = ["metric", "ordering", "persona", "n", "value"]
METRIC_FAMILIES = ("mean_relevance", "precision", "dcg", "ndcg", "rho12", "overlap_percent")

_PALETTE = ("#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2", "#edc948")


def format_value(value: float) -> str:
    return f"{value:.6f}"


def write_metrics_csv(path: str | Path, rows: Sequence[MetricRow]) -> None:
    Path(path).write_text(metrics_csv_text(rows), encoding="utf-8")


def metrics_csv_text(rows: Sequence[MetricRow]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in rows:
        writer.writerow([row.metric, row.ordering, row.persona, row.n, format_value(row.value)])
    return out.getvalue()


def read_metrics_csv(path: str | Path) -> list[MetricRow]:
    source = Path(path)
    if not source.is_file():
        raise ParseError(f"no such metrics file: {source}")
    with open(source, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{source}: empty file, expected header") from None
        if header != CSV_HEADER:
            raise ParseError(f"{source}: header must be {','.join(CSV_HEADER)}")
        rows = []
        for line_no, record in enumerate(reader, start=2):
            if not record:
                continue
            if len(record) != len(CSV_HEADER):
                raise ParseError(f"expected {len(CSV_HEADER)} columns", line_no)
            metric, ordering, persona, n_text, value_text = record
            if not metric:
                raise ParseError("empty metric name", line_no)
            try:
                n = int(n_text)
            except ValueError:
                raise ParseError(f"n must be an integer, got {n_text!r}", line_no) from None
            try:
                value = float(value_text)
            except ValueError:
                raise ParseError(f"value must be a number, got {value_text!r}", line_no) from None
            rows.append(MetricRow(metric=metric, ordering=ordering, persona=persona, n=n, value=value))
    return rows


def merged_csv_text(runs: dict[str, list[MetricRow]]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["run"] + CSV_HEADER)
    for run in sorted(runs):
        ordered = sorted(runs[run], key=lambda r: (r.metric, r.ordering, r.persona, r.n))
        for row in ordered:
            writer.writerow(
                [run, row.metric, row.ordering, row.persona, row.n, format_value(row.value)]
            )
    return out.getvalue()


def _chart_groups(runs: dict[str, list[MetricRow]], family: str) -> list[tuple[str, str, int]]:
    groups = {
        (row.ordering, row.persona, row.n)
        for rows in runs.values()
        for row in rows
        if row.metric == family
    }
    return sorted(groups)


def svg_bar_chart(
    title: str,
    group_labels: Sequence[str],
    series: Sequence[tuple[str, Sequence[float | None]]],
) -> str:
    """Grouped bar chart; None leaves a gap where a run has no value."""
    left, right, top, bottom = 70, 30, 46, 70
    plot_height = 240
    bar_width, bar_gap, group_gap = 26, 6, 34

    values = [v for _, vs in series for v in vs if v is not None]
    y_max = max([1e-9] + values)
    y_min = min([0.0] + values)
    span = y_max - y_min or 1e-9

    group_width = len(series) * bar_width + (len(series) - 1) * bar_gap
    plot_width = max(1, len(group_labels)) * (group_width + group_gap) - group_gap
    width = left + plot_width + right
    height = top + plot_height + bottom

    def y_of(value: float) -> float:
        return top + plot_height * (y_max - value) / span

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif">',
        f"<title>{escape(title)}</title>",
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>',
        f'<text x="{left}" y="24" font-size="15" fill="#222222">{escape(title)}</text>',
    ]
    for i in range(5):
        tick = y_min + span * i / 4
        y = y_of(tick)
        parts.append(
            f'<line x1="{left}" y1="{y:.2f}" x2="{left + plot_width}" y2="{y:.2f}" '
            f'stroke="#dddddd" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{left - 8}" y="{y + 4:.2f}" font-size="10" text-anchor="end" '
            f'fill="#444444">{tick:.2f}</text>'
        )
    baseline = y_of(max(0.0, y_min))
    for g, label in enumerate(group_labels):
        group_x = left + g * (group_width + group_gap)
        for s, (_, series_values) in enumerate(series):
            value = series_values[g]
            if value is None:
                continue
            x = group_x + s * (bar_width + bar_gap)
            y = y_of(value)
            bar_top = min(y, baseline)
            bar_height = abs(y - baseline)
            parts.append(
                f'<rect x="{x:.2f}" y="{bar_top:.2f}" width="{bar_width}" '
                f'height="{bar_height:.2f}" fill="{_PALETTE[s % len(_PALETTE)]}"/>'
            )
            parts.append(
                f'<text x="{x + bar_width / 2:.2f}" y="{bar_top - 4:.2f}" font-size="9" '
                f'text-anchor="middle" fill="#333333">{value:.4f}</text>'
            )
        parts.append(
            f'<text x="{group_x + group_width / 2:.2f}" y="{top + plot_height + 16}" '
            f'font-size="10" text-anchor="middle" fill="#333333">{escape(label)}</text>'
        )
    for s, (name, _) in enumerate(series):
        y = top + plot_height + 34 + s * 16
        parts.append(
            f'<rect x="{left}" y="{y - 9}" width="10" height="10" '
            f'fill="{_PALETTE[s % len(_PALETTE)]}"/>'
        )
        parts.append(
            f'<text x="{left + 16}" y="{y}" font-size="11" fill="#333333">{escape(name)}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def family_chart(runs: dict[str, list[MetricRow]], family: str) -> str | None:
    groups = _chart_groups(runs, family)
    if not groups:
        return None
    labels = [f"{ordering}/{persona}@{n}" for ordering, persona, n in groups]
    series = []
    for run in sorted(runs):
        by_group = {
            (row.ordering, row.persona, row.n): row.value
            for row in runs[run]
            if row.metric == family
        }
        series.append((run, [by_group.get(group) for group in groups]))
    return svg_bar_chart(family, labels, series)


def write_report(
    runs: dict[str, list[MetricRow]],
    out_dir: str | Path,
    formats: Iterable[str] = ("csv", "svg"),
) -> list[Path]:
    directory = Path(out_dir)
    directory.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    wanted = set(formats)
    if "csv" in wanted:
        target = directory / "merged.csv"
        target.write_text(merged_csv_text(runs), encoding="utf-8")
        written.append(target)
    if "svg" in wanted:
        for family in METRIC_FAMILIES:
            chart = family_chart(runs, family)
            if chart is None:
                continue
            target = directory / f"{family}.svg"
            target.write_text(chart, encoding="utf-8")
            written.append(target)
    return written
