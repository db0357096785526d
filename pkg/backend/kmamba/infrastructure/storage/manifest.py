"""
Dataset manifest: one JSON record per line.

    {"case_id": "case_00007", "image": "cases/case_00007_image.vvol",
     "label": "cases/case_00007_label.vvol", "split": "train", "seed": 7}

Paths are relative to the manifest's directory.
"""

import logging
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from kmamba.core.exceptions import DatasetNotFoundError, ManifestFormatError

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.jsonl"

Split = Literal["train", "val"]


class ManifestRecord(BaseModel):
    """One case of a dataset."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    case_id: str = Field(min_length=1)
    image: str
    label: str
    split: Split = "train"
    seed: int = Field(ge=0)


def write_manifest(path: Path, records: list[ManifestRecord]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(r.model_dump_json() + "\n" for r in records), encoding="utf-8")
    logger.info(f"Manifest written: {path} ({len(records)} cases)")


def read_manifest(path: Path) -> list[ManifestRecord]:
    """
    Raises:
        DatasetNotFoundError: Manifest missing
        ManifestFormatError: A line is not a valid record, or case ids repeat
    """
    path = Path(path)
    if not path.is_file():
        raise DatasetNotFoundError(str(path))
    records: list[ManifestRecord] = []
    seen: set[str] = set()
    for number, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = ManifestRecord.model_validate_json(line)
        except ValidationError as e:
            raise ManifestFormatError(str(path), number, str(e.errors()[0]["msg"])) from e
        if record.case_id in seen:
            raise ManifestFormatError(str(path), number, f"duplicate case id {record.case_id}")
        seen.add(record.case_id)
        records.append(record)
    return records
