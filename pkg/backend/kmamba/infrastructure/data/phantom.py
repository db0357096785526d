"""
Synthetic multi-modal phantoms.

Each phantom nests three structures inside a cubic field of view:

- whole: an axis-aligned ellipsoid near the centre
- core: a smaller ellipsoid inside it (clipped to the whole)
- enhancing: a sphere inside the core (clipped to the core)

Every modality has its own contrast per structure, a smooth multiplicative
bias field and additive Gaussian noise. All randomness comes from the seed.
"""

import logging

import numpy as np

from kmamba.core.domain.phantom import NUM_PHANTOM_CLASSES, Phantom
from kmamba.core.domain.volume import LabelVolume
from kmamba.core.exceptions import PhantomSizeError

logger = logging.getLogger(__name__)

MIN_SIZE = 16
DEFAULT_MODALITIES = 4

# rows: modality; columns: background, whole, core, enhancing
CONTRAST_PROFILES = np.array([
    [0.20, 0.55, 0.45, 0.95],
    [0.25, 0.80, 0.60, 0.70],
    [0.30, 0.45, 0.85, 0.50],
    [0.15, 0.90, 0.40, 0.60],
])


def _ellipsoid(coords: tuple[np.ndarray, ...], centre: np.ndarray, axes: np.ndarray) -> np.ndarray:
    return sum(((c - m) / a) ** 2 for c, m, a in zip(coords, centre, axes, strict=True)) <= 1.0


def generate_phantom(
    seed: int,
    size: int = 32,
    noise_sigma: float = 0.05,
    modalities: int = DEFAULT_MODALITIES,
) -> Phantom:
    """
    Build one phantom.

    Args:
        seed: Sole source of randomness
        size: Edge length of the cubic volume
        noise_sigma: Standard deviation of the additive noise
        modalities: Number of intensity channels

    Raises:
        PhantomSizeError: ``size`` below 16
    """
    if size < MIN_SIZE:
        raise PhantomSizeError(size, MIN_SIZE)
    rng = np.random.default_rng(seed)
    axis = (np.arange(size) + 0.5) / size * 2.0 - 1.0
    coords = np.meshgrid(axis, axis, axis, indexing="ij")

    whole_centre = rng.uniform(-0.15, 0.15, size=3)
    whole_axes = rng.uniform(0.25, 0.40, size=3)
    core_centre = whole_centre + rng.uniform(-0.05, 0.05, size=3)
    core_axes = whole_axes * rng.uniform(0.45, 0.65, size=3)
    enhancing_radius = core_axes.min() * rng.uniform(0.45, 0.6)

    whole = _ellipsoid(coords, whole_centre, whole_axes)
    core = _ellipsoid(coords, core_centre, core_axes) & whole
    enhancing = _ellipsoid(coords, core_centre, np.full(3, enhancing_radius)) & core

    labels = np.zeros((size, size, size), dtype=np.uint8)
    labels[whole] = 1
    labels[core] = 2
    labels[enhancing] = 3

    jitter = rng.uniform(-0.05, 0.05, size=(modalities, NUM_PHANTOM_CLASSES))
    profiles = CONTRAST_PROFILES[np.arange(modalities) % len(CONTRAST_PROFILES)] + jitter
    image = np.empty((modalities, size, size, size), dtype=np.float64)
    for m in range(modalities):
        gradient = rng.uniform(-0.1, 0.1, size=3)
        bias = 1.0 + sum(g * c for g, c in zip(gradient, coords, strict=True))
        image[m] = profiles[m][labels] * bias
    if noise_sigma > 0:
        image += rng.normal(0.0, noise_sigma, size=image.shape)

    phantom = Phantom(
        image=image.astype(np.float32),
        labels=LabelVolume(labels, num_classes=NUM_PHANTOM_CLASSES),
        seed=seed,
    )
    logger.debug(f"Phantom {phantom.case_id}: foreground {phantom.foreground_fraction:.3%}")
    return phantom
