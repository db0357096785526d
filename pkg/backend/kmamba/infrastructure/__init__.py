"""
Infrastructure layer: adapters with side effects.

- storage: volume files, checkpoints, manifests, NIfTI, CSV results
- data: phantom generation, augmentation, dataset repository
"""
