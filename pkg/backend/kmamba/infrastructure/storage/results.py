"""
CSV result files.

Every record type carries its header; the writer always emits it, even for
an empty table.
"""

import csv
import logging
from collections.abc import Iterable
from pathlib import Path
from typing import Any, Protocol

logger = logging.getLogger(__name__)


class CsvRecord(Protocol):
    CSV_HEADER: tuple[str, ...]

    def to_row(self) -> list[Any]: ...


def _format(value: Any) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_records(path: Path, header: tuple[str, ...], records: Iterable[CsvRecord]) -> int:
    """
    Write ``records`` under ``header``.

    Returns:
        Number of data rows written
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for record in records:
            writer.writerow([_format(v) for v in record.to_row()])
            count += 1
    logger.info(f"Wrote {count} rows to {path}")
    return count


class CsvAppender:
    """Appends rows one at a time (per-step training logs)."""

    def __init__(self, path: Path, header: tuple[str, ...]) -> None:
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = self.path.open("w", newline="", encoding="utf-8")
        self._writer = csv.writer(self._fh)
        self._writer.writerow(header)

    def append(self, record: CsvRecord) -> None:
        self._writer.writerow([_format(v) for v in record.to_row()])
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> "CsvAppender":
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()


def read_rows(path: Path) -> list[dict[str, str]]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
