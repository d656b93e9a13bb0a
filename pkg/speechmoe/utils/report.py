"""
Run report files.

A report is the JSON form of `RunReport`: a config echo, the seed, one row per (run, fold) with
fractional metrics and confusion counts, and an `aggregate` block mapping each metric name to
`{"mean", "std"}` in percent rounded to two decimals. Incomplete reports carry
`"partial": true` and no aggregate.
"""

from pathlib import Path
from typing import Sequence

import pydantic

from speechmoe.constants import METRIC_NAMES
from speechmoe.errors import ValidationError
from speechmoe.logger import get_logger
from speechmoe.schema import RunReport
from speechmoe.utils.path import ensure_parent

_logger = get_logger()

COLUMN_TITLES = {
    "precision": "Precision",
    "recall": "Recall",
    "f1": "F1-score",
    "accuracy": "Accuracy",
    "specificity": "Specificity",
}


def emit_report(report: RunReport, path: str | Path) -> Path:
    """
    Write `report` as JSON. A report missing any (run, fold) entry is written with
    `partial` set and its aggregate dropped.
    """
    missing = report.missing()
    if missing:
        _logger.warning(
            f"Report {report.name!r} is missing {len(missing)} of {report.expected_entries()} "
            f"entries; writing it as partial without an aggregate"
        )
        report = report.model_copy(update={"partial": True, "aggregate": None})
    path = ensure_parent(path)
    path.write_text(report.model_dump_json(indent=2) + "\n", encoding="utf-8")
    _logger.info(f"Wrote report {report.name!r} to {path}")
    return path


def read_report(path: str | Path) -> RunReport:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ValidationError(f"cannot read report {path}: {e}")
    try:
        return RunReport.model_validate_json(text)
    except pydantic.ValidationError as e:
        raise ValidationError(f"{path}: not a run report: {e.error_count()} problem(s): {e}")


def render_table(reports: Sequence[RunReport]) -> str:
    """Architecture rows with `mean ± std` per metric; partial reports show `n/a`."""
    header = ["Architecture"] + [COLUMN_TITLES[m] for m in METRIC_NAMES]
    rows = [header]
    for report in reports:
        cells = [report.name]
        for metric in METRIC_NAMES:
            summary = report.aggregate.get(metric) if report.aggregate else None
            cells.append(str(summary) if summary is not None else "n/a")
        rows.append(cells)
    widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)
