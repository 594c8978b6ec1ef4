from __future__ import annotations

import csv
import html
import io
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Union

from openpyxl import Workbook
from openpyxl.styles import Alignment, Font, PatternFill
from openpyxl.worksheet.table import Table as SheetTable
from openpyxl.worksheet.table import TableStyleInfo
from rich.console import Console
from rich.table import Table

from .errors import InvalidParameter
from .store import atomic_write, atomic_write_text

logger = logging.getLogger(__name__)

CSV_COLUMNS = [
    "experiment",
    "estimator",
    "sweep_param",
    "sweep_value",
    "mean_infidelity",
    "std_error",
    "n_samples",
    "seconds",
]
# Extra columns carried in ResultRow.details and shown in the workbook/HTML only.
DETAIL_COLUMNS = ["seconds_wall", "purity", "failures", "mle_not_converged"]

RESULTS_SHEET = "Results"
MANIFEST_SHEET = "Manifest"


@dataclass
class ResultRow:
    experiment: str
    estimator: str
    sweep_param: str
    sweep_value: float
    mean_infidelity: float
    std_error: float
    n_samples: int
    seconds: float = 0.0
    details: Dict[str, object] = field(default_factory=dict, compare=False)

    def csv_values(self) -> List[str]:
        return [
            self.experiment,
            self.estimator,
            self.sweep_param,
            repr(float(self.sweep_value)),
            repr(float(self.mean_infidelity)),
            repr(float(self.std_error)),
            str(int(self.n_samples)),
            repr(float(self.seconds)),
        ]


def _require_rows(rows: Sequence[ResultRow]) -> None:
    if not rows:
        raise InvalidParameter("no result rows to write")


def render_csv(rows: Sequence[ResultRow]) -> str:
    _require_rows(rows)
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow(row.csv_values())
    return buffer.getvalue()


def emit_csv(rows: Sequence[ResultRow], path: Union[str, Path]) -> Path:
    target = atomic_write_text(path, render_csv(rows))
    logger.info("wrote %d result rows to %s", len(rows), target)
    return target


def parse_csv(path: Union[str, Path]) -> List[ResultRow]:
    text = Path(path).read_text(encoding="utf-8")
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames != CSV_COLUMNS:
        raise InvalidParameter(f"{path}: unexpected CSV header {reader.fieldnames}")
    return [
        ResultRow(
            experiment=rec["experiment"],
            estimator=rec["estimator"],
            sweep_param=rec["sweep_param"],
            sweep_value=float(rec["sweep_value"]),
            mean_infidelity=float(rec["mean_infidelity"]),
            std_error=float(rec["std_error"]),
            n_samples=int(rec["n_samples"]),
            seconds=float(rec["seconds"]),
        )
        for rec in reader
    ]


def render_plotdata(rows: Sequence[ResultRow]) -> str:
    """gnuplot data: one index block per estimator, separated by two blank lines."""
    _require_rows(rows)
    series: Dict[str, List[ResultRow]] = defaultdict(list)
    for row in rows:
        series[row.estimator].append(row)
    first = rows[0]
    lines = [f"# experiment {first.experiment}", f"# columns: {first.sweep_param} mean_infidelity std_error n_samples"]
    blocks = []
    for estimator, points in series.items():
        block = [f"# estimator {estimator}"]
        for row in sorted(points, key=lambda r: r.sweep_value):
            block.append(f"{row.sweep_value!r} {row.mean_infidelity!r} {row.std_error!r} {row.n_samples}")
        blocks.append("\n".join(block))
    return "\n".join(lines) + "\n" + "\n\n\n".join(blocks) + "\n"


def emit_plotdata(rows: Sequence[ResultRow], path: Union[str, Path]) -> Path:
    return atomic_write_text(path, render_plotdata(rows))


def _style_headers(ws) -> None:
    header_fill = PatternFill(start_color="F4F6F8", end_color="F4F6F8", fill_type="solid")
    for cell in ws[1]:
        cell.font = Font(bold=True)
        cell.fill = header_fill
        cell.alignment = Alignment(vertical="center")


def _apply_table(ws, name: str) -> None:
    if ws.max_row < 2:
        return  # need at least header + one row for a valid table ref
    ref = f"A1:{ws.cell(row=ws.max_row, column=ws.max_column).coordinate}"
    table = SheetTable(displayName=name, ref=ref)
    table.tableStyleInfo = TableStyleInfo(
        name="TableStyleMedium2", showFirstColumn=False, showLastColumn=False, showRowStripes=True, showColumnStripes=False
    )
    ws.add_table(table)


def _freeze_header(ws) -> None:
    # The table carries its own auto-filter; a sheet-level one on the same range corrupts the file.
    ws.freeze_panes = "A2"


def _detail(row: ResultRow, key: str) -> object:
    value = row.details.get(key, "")
    return "" if value is None else value


def write_results_workbook(rows: Sequence[ResultRow], path: Union[str, Path], manifest: Mapping[str, str]) -> Path:
    """Results sheet (one line per row, detail columns appended) plus a Manifest sheet."""
    _require_rows(rows)
    wb = Workbook()
    ws = wb.active
    ws.title = RESULTS_SHEET
    ws.append(CSV_COLUMNS + DETAIL_COLUMNS)
    for row in rows:
        ws.append(
            [row.experiment, row.estimator, row.sweep_param, row.sweep_value, row.mean_infidelity, row.std_error, row.n_samples, row.seconds]
            + [_detail(row, key) for key in DETAIL_COLUMNS]
        )
    _style_headers(ws)
    _freeze_header(ws)
    _apply_table(ws, "ResultsTable")
    for column, width in zip("ABCDEFGHIJKL", (22, 10, 12, 12, 18, 14, 10, 10, 12, 10, 10, 18)):
        ws.column_dimensions[column].width = width

    meta = wb.create_sheet(MANIFEST_SHEET)
    meta.append(["key", "value"])
    for key, value in manifest.items():
        meta.append([key, value])
    _style_headers(meta)
    meta.column_dimensions["A"].width = 22
    meta.column_dimensions["B"].width = 60

    target = atomic_write(path, lambda tmp: wb.save(tmp))
    logger.info("wrote workbook %s", target)
    return target


def _rows_to_table(headers: List[str], rows: Iterable[List[object]]) -> str:
    head_html = "".join(f"<th>{html.escape(h)}</th>" for h in headers)
    body_parts = ["<tr>" + "".join(f"<td>{html.escape(str(c))}</td>" for c in row) + "</tr>" for row in rows]
    body_html = "\n".join(body_parts) if body_parts else "<tr><td colspan='99'>No data</td></tr>"
    return f"<table><thead><tr>{head_html}</tr></thead><tbody>{body_html}</tbody></table>"


def write_html_report(
    rows: Sequence[ResultRow],
    path: Union[str, Path],
    manifest: Mapping[str, str],
    warnings: Sequence[str] = (),
    updated_at: Optional[datetime] = None,
) -> Path:
    _require_rows(rows)
    updated_text = (updated_at or datetime.now()).isoformat(timespec="seconds")
    by_estimator: Dict[str, List[ResultRow]] = defaultdict(list)
    for row in rows:
        by_estimator[row.estimator].append(row)

    sections = []
    for estimator, points in by_estimator.items():
        table = _rows_to_table(
            [points[0].sweep_param, "mean_infidelity", "std_error", "n_samples", "seconds", "purity", "failures"],
            [
                [
                    f"{r.sweep_value:g}",
                    f"{r.mean_infidelity:.4e}",
                    f"{r.std_error:.2e}",
                    r.n_samples,
                    f"{float(r.details.get('seconds_wall', r.seconds)):.3f}",
                    _detail(r, "purity"),
                    _detail(r, "failures"),
                ]
                for r in points
            ],
        )
        sections.append(f"<h2>{html.escape(estimator.upper())}</h2>\n  {table}")
    manifest_table = _rows_to_table(["key", "value"], [[k, v] for k, v in manifest.items()])
    warning_html = "<br/>".join(html.escape(w) for w in warnings)
    title = html.escape(rows[0].experiment)

    page = f"""
<!doctype html>
<html lang="en">
<head>
  <meta charset="utf-8" />
  <title>{title} results</title>
  <style>
    body {{ font-family: Segoe UI, Arial, sans-serif; margin: 24px; color: #111; }}
    h1, h2 {{ margin-bottom: 8px; }}
    table {{ border-collapse: collapse; width: 100%; margin: 12px 0 24px; }}
    th, td {{ border: 1px solid #ddd; padding: 8px; font-size: 13px; vertical-align: top; }}
    th {{ background: #f4f6f8; text-align: left; position: sticky; top: 0; }}
    .muted {{ color: #555; font-size: 12px; }}
    .warn {{ color: #8a4b00; font-size: 13px; }}
  </style>
</head>
<body>
  <h1>{title}</h1>
  <p class="muted">Report written at {updated_text} (local time).</p>
  <p class="warn">{warning_html}</p>

  {chr(10).join(sections)}

  <h2>Configuration</h2>
  {manifest_table}
</body>
</html>
"""
    target = atomic_write_text(path, page.strip() + "\n")
    logger.info("wrote HTML report %s", target)
    return target


def print_results_table(rows: Sequence[ResultRow], console: Optional[Console] = None) -> None:
    console = console or Console()
    if not rows:
        console.print("[red]No result rows.[/red]")
        return
    table = Table(title=rows[0].experiment, show_header=True, header_style="bold cyan")
    table.add_column("Estimator", style="bold")
    table.add_column(rows[0].sweep_param, justify="right")
    table.add_column("Infidelity", justify="right")
    table.add_column("Std err", justify="right")
    table.add_column("N", justify="right")
    table.add_column("Failures", justify="right")
    table.add_column("Seconds", justify="right")
    for row in rows:
        failures = int(row.details.get("failures", 0) or 0)
        table.add_row(
            row.estimator,
            f"{row.sweep_value:g}",
            f"{row.mean_infidelity:.3e}",
            f"{row.std_error:.1e}",
            str(row.n_samples),
            f"[red]{failures}[/red]" if failures else "0",
            f"{float(row.details.get('seconds_wall', row.seconds)):.2f}",
        )
    console.print(table)
