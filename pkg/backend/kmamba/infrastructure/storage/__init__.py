"""
Storage adapters.

- VvolStore: VVOL1 volume container and PGM slice export
- NpzCheckpointStore: named tensors with a shape manifest
- manifest: JSONL dataset manifest
- nifti: uncompressed single-file NIfTI-1 reader/writer
- results: CSV result tables
"""

from kmamba.infrastructure.storage.checkpoint import NpzCheckpointStore
from kmamba.infrastructure.storage.manifest import ManifestRecord, read_manifest, write_manifest
from kmamba.infrastructure.storage.nifti import read_nifti, write_nifti
from kmamba.infrastructure.storage.results import CsvAppender, read_rows, write_records
from kmamba.infrastructure.storage.vvol import VvolStore, export_pgm, read_volume, write_volume

__all__ = [
    "CsvAppender",
    "ManifestRecord",
    "NpzCheckpointStore",
    "VvolStore",
    "export_pgm",
    "read_manifest",
    "read_nifti",
    "read_rows",
    "read_volume",
    "write_manifest",
    "write_nifti",
    "write_records",
    "write_volume",
]
