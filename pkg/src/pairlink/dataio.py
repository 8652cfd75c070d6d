"""File formats: pairs CSV, scores CSV, report JSON, PR-curve CSV.

The pairs reader is a small RFC 4180 state machine rather than the csv
module because the format trims unquoted fields while preserving quoted
fields byte for byte, and csv.reader cannot report which fields were
quoted. Writers go through a temp file plus rename so a crash never
leaves a half-written output behind.
"""

from __future__ import annotations

import csv
import json
import os
import tempfile
from dataclasses import asdict
from pathlib import Path
from typing import Iterator, Sequence

from .evaluation import EvalReport, PrPoint
from .llm import ScoreError
from .types import PairRecord, ScoredPair

__all__ = [
    "PairsFileError",
    "InvalidLabelError",
    "read_pairs",
    "read_scores",
    "write_scores",
    "write_report",
    "write_pr_curve_csv",
    "atomic_write_text",
    "SCORES_HEADER",
]

SCORES_HEADER = ("id", "left", "right", "label", "score", "scorer_id", "error")


class PairsFileError(ValueError):
    """Raised for malformed pairs or scores files; messages name the row."""


class InvalidLabelError(PairsFileError):
    """Raised when a label cell holds anything but 0, 1, or empty."""


def _parse_csv(text: str) -> Iterator[list[str]]:
    """RFC 4180 records from text.

    Quoted fields keep their content exactly, with doubled quotes
    collapsed. Unquoted fields are trimmed of surrounding spaces and tabs.
    Records end at newlines outside quotes; CRLF and LF both work.
    """
    record: list[str] = []
    buf: list[str] = []
    i = 0
    n = len(text)
    row = 1

    def fail(message: str) -> PairsFileError:
        return PairsFileError(f"row {row}: {message}")

    while i < n:
        # Start of a field. Skip indentation so ` "x"` parses as quoted.
        start = i
        while i < n and text[i] in " \t":
            i += 1
        if i < n and text[i] == '"':
            i += 1
            while True:
                if i >= n:
                    raise fail("unterminated quoted field")
                ch = text[i]
                if ch == '"':
                    if i + 1 < n and text[i + 1] == '"':
                        buf.append('"')
                        i += 2
                    else:
                        i += 1
                        break
                else:
                    buf.append(ch)
                    i += 1
            while i < n and text[i] in " \t":
                i += 1
            if i < n and text[i] not in ",\r\n":
                raise fail("unexpected text after closing quote")
            field = "".join(buf)
        else:
            i = start
            while i < n and text[i] not in ",\r\n":
                buf.append(text[i])
                i += 1
            field = "".join(buf).strip(" \t")
        buf.clear()
        record.append(field)
        if i >= n:
            break
        if text[i] == ",":
            i += 1
            if i >= n:
                record.append("")
            continue
        if text[i] == "\r":
            i += 2 if i + 1 < n and text[i + 1] == "\n" else 1
        elif text[i] == "\n":
            i += 1
        yield record
        record = []
        row += 1
    if record:
        yield record


def _read_table(path: str | Path) -> tuple[dict[str, int], list[list[str]]]:
    with open(path, "r", encoding="utf-8-sig", newline="") as fh:
        text = fh.read()
    rows = [r for r in _parse_csv(text) if r != [""]]
    if not rows:
        raise PairsFileError("file has no header row")
    header = [name.strip().lower() for name in rows[0]]
    columns: dict[str, int] = {}
    for position, name in enumerate(header):
        if name in columns:
            raise PairsFileError(f"duplicate column {name!r} in header")
        columns[name] = position
    body = rows[1:]
    for r, cells in enumerate(body, start=1):
        if len(cells) != len(header):
            raise PairsFileError(f"row {r}: expected {len(header)} fields, found {len(cells)}")
    return columns, body


def _parse_label(cell: str, r: int) -> int | None:
    if cell == "":
        return None
    if cell == "0":
        return 0
    if cell == "1":
        return 1
    raise InvalidLabelError(f"row {r}: invalid label {cell!r}, expected 0, 1, or empty")


def read_pairs(path: str | Path) -> list[PairRecord]:
    """Load pairs from CSV with columns left, right, and optional label.

    Header names match case-insensitively; extra columns are ignored. Ids
    are assigned by position, starting at 0.
    """
    columns, body = _read_table(path)
    for required in ("left", "right"):
        if required not in columns:
            raise PairsFileError(f"missing required column: {required}")
    label_col = columns.get("label")
    records = []
    for r, cells in enumerate(body, start=1):
        label = _parse_label(cells[label_col], r) if label_col is not None else None
        try:
            records.append(PairRecord(cells[columns["left"]], cells[columns["right"]], label=label, id=r - 1))
        except ValueError as exc:
            raise PairsFileError(f"row {r}: {exc}") from exc
    return records


def read_scores(path: str | Path) -> list[ScoredPair | ScoreError]:
    """Load a scores file back into scored entries and error entries."""
    columns, body = _read_table(path)
    for required in ("left", "right", "score", "scorer_id"):
        if required not in columns:
            raise PairsFileError(f"missing required column: {required}")
    label_col = columns.get("label")
    error_col = columns.get("error")
    entries: list[ScoredPair | ScoreError] = []
    for r, cells in enumerate(body, start=1):
        label = _parse_label(cells[label_col], r) if label_col is not None else None
        try:
            pair = PairRecord(cells[columns["left"]], cells[columns["right"]], label=label, id=r - 1)
        except ValueError as exc:
            raise PairsFileError(f"row {r}: {exc}") from exc
        score_cell = cells[columns["score"]]
        error_cell = cells[error_col] if error_col is not None else ""
        scorer_id = cells[columns["scorer_id"]]
        if error_cell and score_cell:
            raise PairsFileError(f"row {r}: score and error are mutually exclusive")
        if error_cell:
            entries.append(ScoreError(pair=pair, scorer_id=scorer_id, message=error_cell))
            continue
        try:
            score = float(score_cell)
        except ValueError as exc:
            raise PairsFileError(f"row {r}: invalid score {score_cell!r}") from exc
        try:
            entries.append(ScoredPair(pair, score, scorer_id))
        except ValueError as exc:
            raise PairsFileError(f"row {r}: {exc}") from exc
    return entries


def atomic_write_text(path: str | Path, text: str) -> None:
    """Write text to path via a same-directory temp file and rename."""
    path = Path(path)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp_name, path)
    except BaseException:
        try:
            os.unlink(tmp_name)
        except OSError:
            pass
        raise


def _csv_text(rows: Sequence[Sequence[str]]) -> str:
    import io as _io

    out = _io.StringIO()
    # QUOTE_ALL so every field survives the quote-aware reader untouched,
    # including fields with surrounding whitespace.
    writer = csv.writer(out, quoting=csv.QUOTE_ALL, lineterminator="\n")
    for r, row in enumerate(rows):
        for cell in row:
            if "\x00" in cell:
                raise ValueError(f"row {r}: NUL character is not representable in CSV")
        writer.writerow(row)
    return out.getvalue()


def write_scores(path: str | Path, entries: Sequence[ScoredPair | ScoreError]) -> None:
    """Write scored entries and error entries to the scores CSV format.

    One row per entry, in the given order. A row carries either a score
    formatted to six decimal places or an error message, never both.
    """
    rows: list[Sequence[str]] = [SCORES_HEADER]
    for entry in entries:
        pair = entry.pair
        label = "" if pair.label is None else str(pair.label)
        if isinstance(entry, ScoredPair):
            rows.append((str(pair.id), pair.left, pair.right, label, f"{entry.score:.6f}", entry.scorer_id, ""))
        elif isinstance(entry, ScoreError):
            rows.append((str(pair.id), pair.left, pair.right, label, "", entry.scorer_id, entry.message))
        else:
            raise TypeError(f"expected ScoredPair or ScoreError, got {type(entry).__name__}")
    atomic_write_text(path, _csv_text(rows))


def write_report(path: str | Path, report: EvalReport) -> None:
    """Write the evaluation report as pretty-printed JSON with sorted keys."""
    doc = asdict(report)
    atomic_write_text(path, json.dumps(doc, sort_keys=True, indent=2, ensure_ascii=False) + "\n")


def write_pr_curve_csv(path: str | Path, points: Sequence[PrPoint]) -> None:
    rows: list[Sequence[str]] = [("threshold", "precision", "recall", "tp", "fp", "fn")]
    for p in points:
        rows.append(
            (f"{p.threshold:.6f}", f"{p.precision:.6f}", f"{p.recall:.6f}", str(p.tp), str(p.fp), str(p.fn))
        )
    atomic_write_text(path, _csv_text(rows))
