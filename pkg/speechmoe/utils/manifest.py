import csv
import io
from pathlib import Path
from typing import Iterable

from speechmoe.constants import LABELS
from speechmoe.errors import ManifestError
from speechmoe.logger import get_logger
from speechmoe.schema import ManifestEntry
from speechmoe.utils.path import ensure_parent, resolve_path

_logger = get_logger()

MANIFEST_COLUMNS = ("subject_id", "reading_path", "interview_path", "label")


def parse_manifest(path: str | Path, resolve: bool = True) -> list[ManifestEntry]:
    """
    Read a `subject_id,reading_path,interview_path,label` CSV into validated entries.

    Row numbers in errors are file line numbers (the header is row 1). With `resolve`,
    relative audio paths are made absolute against the manifest's directory.

    Raises:
        ManifestError: unreadable file, missing column, unknown label, duplicate subject
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise ManifestError(f"cannot read manifest {path}: {e}")
    entries = parse_manifest_text(text)
    if resolve:
        base = path.parent
        entries = [
            entry.model_copy(
                update={
                    key: str(resolve_path(getattr(entry, key), base))
                    for key in ("reading_path", "interview_path")
                    if getattr(entry, key)
                }
            )
            for entry in entries
        ]
    _logger.info(f"Parsed {len(entries)} manifest entries from {path}")
    return entries


def parse_manifest_text(text: str) -> list[ManifestEntry]:
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise ManifestError("manifest is empty", row=1)
    missing = [c for c in MANIFEST_COLUMNS if c not in header]
    if missing:
        raise ManifestError(f"missing column(s): {', '.join(missing)}", row=1)
    index = {name: header.index(name) for name in MANIFEST_COLUMNS}

    entries: list[ManifestEntry] = []
    seen: dict[str, int] = {}
    for row_number, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            raise ManifestError(f"expected {len(header)} fields, found {len(row)}", row=row_number)
        cells = {name: row[i].strip() for name, i in index.items()}
        if cells["label"] not in LABELS:
            raise ManifestError(
                f"unknown label {cells['label']!r} (expected one of {', '.join(LABELS)})",
                row=row_number,
            )
        subject = cells["subject_id"]
        if not subject:
            raise ManifestError("empty subject_id", row=row_number)
        if subject in seen:
            raise ManifestError(
                f"duplicate subject_id {subject!r} (first seen in row {seen[subject]})",
                row=row_number,
            )
        seen[subject] = row_number
        entries.append(
            ManifestEntry(
                subject_id=subject,
                reading_path=cells["reading_path"] or None,
                interview_path=cells["interview_path"] or None,
                label=cells["label"],
            )
        )
    return entries


def write_manifest(path: str | Path, entries: Iterable[ManifestEntry]) -> Path:
    path = ensure_parent(path)
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(MANIFEST_COLUMNS)
    count = 0
    for entry in entries:
        writer.writerow(
            [entry.subject_id, entry.reading_path or "", entry.interview_path or "", entry.label]
        )
        count += 1
    path.write_text(buffer.getvalue(), encoding="utf-8")
    _logger.info(f"Wrote manifest with {count} rows to {path}")
    return path


def check_tasks(entries: Iterable[ManifestEntry], tasks: Iterable[str]) -> None:
    """Every entry must carry a path for each task in `tasks` ("reading", "interview")."""
    for entry in entries:
        for task in tasks:
            if not getattr(entry, f"{task}_path"):
                raise ManifestError(f"subject {entry.subject_id!r} has no {task} recording")
