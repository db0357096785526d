"""
Data adapters.

- phantom: seeded synthetic multi-modal phantoms
- augment: flips, crops and noise
- dataset: on-disk phantom datasets with a manifest
"""

from kmamba.infrastructure.data.augment import augment
from kmamba.infrastructure.data.dataset import PhantomDatasetRepository, generate_dataset
from kmamba.infrastructure.data.phantom import generate_phantom

__all__ = ["PhantomDatasetRepository", "augment", "generate_dataset", "generate_phantom"]
