"""Readers and writers for the three supported table formats.

* long CSV: header ``subject,rater,category``, one rating per line.
* wide CSV: header ``subject,r1,...,rR``, one subject per line.
* counts:   lines ``i1,...,iR,count`` with 1-based category indices;
  blank lines and ``#`` comments are ignored.

All readers insist on UTF-8, rectangular rows, and nonnegative counts.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path

from .data import JointCountTable, RatingMatrix, ingest_long, joint_counts
from .errors import DataError

FORMATS = ("long", "wide", "counts")


def _read_text(path: str | Path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise DataError(f"{path}: not valid UTF-8: {exc}") from exc
    except OSError as exc:
        raise DataError(f"{path}: {exc}") from exc


def _csv_rows(text: str, path: str | Path) -> list[list[str]]:
    rows = [row for row in csv.reader(io.StringIO(text)) if row]
    if not rows:
        raise DataError(f"{path}: empty file")
    width = len(rows[0])
    for k, row in enumerate(rows):
        if len(row) != width:
            raise DataError(f"{path}: ragged row {k + 1} (expected {width} fields)")
    return rows


def read_long_csv(path: str | Path) -> RatingMatrix:
    """Read ``subject,rater,category`` records into a RatingMatrix."""
    rows = _csv_rows(_read_text(path), path)
    header = [h.strip().lower() for h in rows[0]]
    if header != ["subject", "rater", "category"]:
        raise DataError(f"{path}: expected header subject,rater,category")
    records = [(r[0].strip(), r[1].strip(), r[2].strip()) for r in rows[1:]]
    if not records:
        raise DataError(f"{path}: no data rows")
    return ingest_long(records)


def read_wide_csv(path: str | Path) -> RatingMatrix:
    """Read one-subject-per-line ratings; columns after the first are raters."""
    rows = _csv_rows(_read_text(path), path)
    header = [h.strip() for h in rows[0]]
    if len(header) < 3 or header[0].lower() != "subject":
        raise DataError(f"{path}: expected header subject,r1,...,rR with at least 2 raters")
    raters = header[1:]
    records = []
    seen: set[str] = set()
    for row in rows[1:]:
        subject = row[0].strip()
        if subject in seen:
            raise DataError(f"{path}: subject {subject!r} appears twice")
        seen.add(subject)
        for rater, cat in zip(raters, row[1:]):
            records.append((subject, rater, cat.strip()))
    if not records:
        raise DataError(f"{path}: no data rows")
    return ingest_long(records, rater_order=raters)


def read_counts(path: str | Path) -> JointCountTable:
    """Read ``i1,...,iR,count`` lines into a joint count table.

    The category count K is the largest index mentioned; zero-count lines
    may be used to declare categories that never occur.
    """
    cells: dict[tuple[int, ...], float] = {}
    arity: int | None = None
    kmax = 0
    for lineno, line in enumerate(_read_text(path).splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        fields = [f.strip() for f in body.split(",")]
        if arity is None:
            arity = len(fields)
            if arity < 3:
                raise DataError(f"{path}:{lineno}: need at least 2 raters plus a count")
        elif len(fields) != arity:
            raise DataError(f"{path}:{lineno}: ragged line (expected {arity} fields)")
        try:
            key = tuple(int(f) for f in fields[:-1])
            cnt = float(fields[-1])
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
        if any(c < 1 for c in key):
            raise DataError(f"{path}:{lineno}: category indices are 1-based")
        if cnt < 0:
            raise DataError(f"{path}:{lineno}: negative count {cnt}")
        kmax = max(kmax, *key)
        if cnt > 0:
            cells[key] = cells.get(key, 0.0) + cnt
    if arity is None or not cells:
        raise DataError(f"{path}: no counts found")
    if kmax < 2:
        raise DataError(f"{path}: at least 2 categories are required")
    return JointCountTable(kmax, arity - 1, cells)


def load_table(path: str | Path, format: str) -> JointCountTable:
    """Load any supported format and return the joint count table."""
    if format == "long":
        return joint_counts(read_long_csv(path))
    if format == "wide":
        return joint_counts(read_wide_csv(path))
    if format == "counts":
        return read_counts(path)
    raise DataError(f"unknown format {format!r}; expected one of {', '.join(FORMATS)}")


def write_long_csv(m: RatingMatrix, path: str | Path) -> None:
    """Write a RatingMatrix as long-format CSV with 1-based integer ids."""
    cats = m.category_names or tuple(str(i) for i in range(1, m.n_categories + 1))
    raters = m.rater_names or tuple(str(r) for r in range(1, m.n_raters + 1))
    lines = ["subject,rater,category"]
    for s in range(m.n_subjects):
        for r in range(m.n_raters):
            lines.append(f"{s + 1},{raters[r]},{cats[m.labels[s, r] - 1]}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_counts(table: JointCountTable, path: str | Path) -> None:
    """Write a joint table in the counts format, cells in index order."""
    lines = []
    for key in sorted(table.cells):
        cnt = table.cells[key]
        text = f"{cnt:.10g}"
        lines.append(",".join(str(c) for c in key) + f",{text}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
