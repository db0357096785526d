"""
Training augmentations: random flips, random crops and Gaussian noise.

Geometric transforms apply identically to intensities and labels; noise
touches intensities only.
"""

from typing import Optional

import numpy as np

from kmamba.core.config import AugmentConfig
from kmamba.core.exceptions import InvalidCropError, ShapeMismatchError


def flip(image: np.ndarray, labels: np.ndarray, axes: tuple[int, ...]) -> tuple[np.ndarray, np.ndarray]:
    """Mirror spatial ``axes`` (0=H, 1=W, 2=D) of both arrays."""
    if not axes:
        return image, labels
    return (np.flip(image, axis=tuple(1 + a for a in axes)).copy(),
            np.flip(labels, axis=tuple(axes)).copy())


def crop(
    image: np.ndarray, labels: np.ndarray, size: tuple[int, int, int], origin: tuple[int, int, int]
) -> tuple[np.ndarray, np.ndarray]:
    """Sub-volume of ``size`` starting at ``origin``."""
    window = tuple(slice(o, o + s) for o, s in zip(origin, size, strict=True))
    return image[(slice(None), *window)].copy(), labels[window].copy()


def augment(
    image: np.ndarray,
    labels: np.ndarray,
    seed: int,
    cfg: Optional[AugmentConfig] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Apply the configured augmentations.

    Args:
        image: ``[M, H, W, D]`` intensities
        labels: ``[H, W, D]`` labels
        seed: Sole source of randomness
        cfg: Flip/crop/noise settings

    Raises:
        InvalidCropError: Crop edge larger than a source dim or below 1
    """
    cfg = cfg or AugmentConfig()
    if image.shape[1:] != labels.shape:
        raise ShapeMismatchError("augment", labels.shape, image.shape[1:])
    rng = np.random.default_rng(seed)
    dims = labels.shape

    if cfg.flip:
        axes = tuple(int(a) for a in np.flatnonzero(rng.random(3) < 0.5))
        image, labels = flip(image, labels, axes)

    if cfg.crop is not None:
        size = (cfg.crop,) * 3
        if cfg.crop < 1 or any(s > n for s, n in zip(size, dims, strict=True)):
            raise InvalidCropError(size, dims)
        origin = tuple(int(rng.integers(0, n - s + 1)) for s, n in zip(size, dims, strict=True))
        image, labels = crop(image, labels, size, origin)  # type: ignore[arg-type]

    if cfg.noise_sigma > 0:
        noise = rng.normal(0.0, cfg.noise_sigma, size=image.shape)
        image = (image + noise).astype(image.dtype)

    return image, labels
