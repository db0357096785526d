"""Segmentation metrics: Dice, IoU and HD95."""

from kmamba.metrics.segmentation import dice, hd95, iou, nearest_rank, score, surface

__all__ = ["dice", "hd95", "iou", "nearest_rank", "score", "surface"]
