"""
Record Store

Reads and writes bench trial records (CSV), summaries and line fits (JSON).
"""

import csv
import json
from pathlib import Path
from typing import Any, Iterable, List

from models import CellSummary, LineFit, TrialRecord


RECORD_COLUMNS = list(TrialRecord.model_fields)


def _open_for_write(path: Path):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        return open(path, "w", newline="")
    except OSError as e:
        raise OSError(f"cannot write to {path}: {e.strerror or e}") from e


def _cell(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value) if isinstance(value, float) else str(value)


def emit_csv(records: Iterable[TrialRecord], path) -> Path:
    """
    Write trial records, one row per record, header always present

    Args:
        records: TrialRecord instances
        path: Destination CSV file

    Returns:
        The path written
    """
    path = Path(path)
    with _open_for_write(path) as f:
        writer = csv.writer(f)
        writer.writerow(RECORD_COLUMNS)
        for record in records:
            row = record.model_dump()
            writer.writerow([_cell(row[col]) for col in RECORD_COLUMNS])
    return path


def read_csv(path) -> List[TrialRecord]:
    """Parse a records CSV written by emit_csv"""
    path = Path(path)
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != RECORD_COLUMNS:
            raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
        return [TrialRecord.model_validate(row) for row in reader]


def _dump_json(payload: Any, path: Path) -> Path:
    with _open_for_write(path) as f:
        json.dump(payload, f, indent=2, default=str)
    return path


def emit_summary_json(summary: Iterable[CellSummary], path, notes: dict | None = None) -> Path:
    """Write per-cell summaries; `notes` carries run metadata (rule substitutions, reference scales)"""
    payload = {"cells": [cell.model_dump() for cell in summary]}
    if notes:
        payload["notes"] = notes
    return _dump_json(payload, Path(path))


def read_summary_json(path) -> List[CellSummary]:
    with open(path) as f:
        payload = json.load(f)
    return [CellSummary.model_validate(cell) for cell in payload["cells"]]


def emit_linefits_json(fits: Iterable[LineFit], path, extra: dict | None = None) -> Path:
    payload = {"fits": [fit.model_dump() for fit in fits]}
    if extra:
        payload.update(extra)
    return _dump_json(payload, Path(path))
