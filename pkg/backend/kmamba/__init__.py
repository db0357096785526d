"""
kmamba - desk-scale volumetric segmentation toolkit.

Bidirectional state-space scans, spline-based KAN operators, hierarchical
attention and multi-scale self-distillation on a small numpy autograd engine.
"""

__version__ = "0.1.0"
