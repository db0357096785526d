"""
Phantom dataset on disk.

Layout under the dataset root::

    manifest.jsonl
    cases/<case_id>_image.vvol     float32, one channel per modality
    cases/<case_id>_label.vvol     uint8 labels
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional

import numpy as np

from kmamba.core.domain.phantom import NUM_PHANTOM_CLASSES, Phantom
from kmamba.core.domain.volume import LabelVolume
from kmamba.core.exceptions import DatasetNotFoundError, InvalidConfigurationError
from kmamba.core.interfaces.storage import IDatasetRepository, IVolumeStore
from kmamba.infrastructure.data.phantom import generate_phantom
from kmamba.infrastructure.storage.manifest import (
    MANIFEST_NAME,
    ManifestRecord,
    read_manifest,
    write_manifest,
)
from kmamba.infrastructure.storage.vvol import VvolStore

logger = logging.getLogger(__name__)

CASES_DIR = "cases"


def zscore(image: np.ndarray) -> np.ndarray:
    """Per-modality zero mean, unit variance (constant channels are only centred)."""
    out = np.empty_like(image, dtype=np.float32)
    for m, channel in enumerate(image):
        centred = channel.astype(np.float64) - channel.mean()
        std = centred.std()
        out[m] = centred / std if std > 0 else centred
    return out


def assign_splits(n: int, val_fraction: float, seed: int) -> list[str]:
    """
    Seeded train/val assignment with ``round(n * val_fraction)`` validation cases.

    Raises:
        InvalidConfigurationError: Fraction outside [0, 1)
    """
    if not 0.0 <= val_fraction < 1.0:
        raise InvalidConfigurationError("val_fraction", val_fraction, "must lie in [0, 1)")
    n_val = int(round(n * val_fraction))
    order = np.random.default_rng(seed).permutation(n)
    splits = ["train"] * n
    for index in order[:n_val]:
        splits[int(index)] = "val"
    return splits


def generate_dataset(
    root: Path,
    n: int,
    size: int = 32,
    seed: int = 0,
    val_fraction: float = 0.25,
    noise_sigma: float = 0.05,
    threads: int = 1,
    store: Optional[IVolumeStore] = None,
) -> list[ManifestRecord]:
    """
    Write ``n`` phantoms (seeds ``seed .. seed + n - 1``) and the manifest.

    Cases are generated in parallel on ``threads`` workers; the manifest keeps
    seed order.
    """
    root = Path(root)
    store = store or VvolStore()
    splits = assign_splits(n, val_fraction, seed)

    def build(index: int) -> ManifestRecord:
        phantom = generate_phantom(seed + index, size, noise_sigma)
        image_rel = f"{CASES_DIR}/{phantom.case_id}_image.vvol"
        label_rel = f"{CASES_DIR}/{phantom.case_id}_label.vvol"
        store.write(root / image_rel, phantom.image_volume())
        store.write(root / label_rel, phantom.label_volume())
        return ManifestRecord(case_id=phantom.case_id, image=image_rel, label=label_rel,
                              split=splits[index], seed=phantom.seed)  # type: ignore[arg-type]

    with ThreadPoolExecutor(max_workers=max(threads, 1)) as pool:
        records = list(pool.map(build, range(n)))
    write_manifest(root / MANIFEST_NAME, records)
    logger.info(
        f"Generated {n} phantoms of size {size} in {root} "
        f"({splits.count('val')} val, {threads} threads)"
    )
    return records


class PhantomDatasetRepository(IDatasetRepository):
    """
    Reads cases listed in a dataset manifest.

    Args:
        root: Dataset directory
        normalize: Z-score every modality on load
        store: Volume reader
    """

    def __init__(self, root: Path, normalize: bool = True,
                 store: Optional[IVolumeStore] = None) -> None:
        self.root = Path(root)
        if not (self.root / MANIFEST_NAME).is_file():
            raise DatasetNotFoundError(str(self.root / MANIFEST_NAME))
        self.normalize = normalize
        self.store = store or VvolStore()
        self.records = {r.case_id: r for r in read_manifest(self.root / MANIFEST_NAME)}
        logger.info(f"Dataset {self.root}: {len(self.records)} cases")

    def case_ids(self, split: Optional[str] = None) -> list[str]:
        return [cid for cid, r in self.records.items() if split is None or r.split == split]

    def load_case(self, case_id: str) -> Phantom:
        record = self.records.get(case_id)
        if record is None:
            raise DatasetNotFoundError(f"{self.root}#{case_id}")
        image = self.store.read(self.root / record.image, expected_dtype="f32")
        labels = self.store.read(self.root / record.label, expected_dtype="u8")
        data = zscore(image.data) if self.normalize else image.data
        return Phantom(
            image=data,
            labels=LabelVolume(labels.data[0], labels.spacing, num_classes=NUM_PHANTOM_CLASSES),
            seed=record.seed,
            case_id=record.case_id,
        )

    def load_split(self, split: Optional[str] = None, threads: int = 1) -> list[Phantom]:
        """All cases of ``split`` in manifest order, read on ``threads`` workers."""
        with ThreadPoolExecutor(max_workers=max(threads, 1)) as pool:
            return list(pool.map(self.load_case, self.case_ids(split)))
