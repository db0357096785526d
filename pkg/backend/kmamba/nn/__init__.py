"""Network components: module system, layers and the segmentation blocks."""

from kmamba.nn.bkm import BkmBlock
from kmamba.nn.hsa import HsaBlock
from kmamba.nn.kan import KanLayer, eval_univariate
from kmamba.nn.losses import origin_loss, total_loss
from kmamba.nn.mda import DistillResult, MdaModule, ScaleFeatureSet, distill_loss
from kmamba.nn.model import ModelOutput, MsdKMamba, build_model, param_count
from kmamba.nn.module import Module, ModuleList, Parameter, Sequential
from kmamba.nn.ssm import ScanOrder, SsmParameters, flatten_volume, scan_chunked, scan_naive

__all__ = [
    "BkmBlock",
    "DistillResult",
    "HsaBlock",
    "KanLayer",
    "MdaModule",
    "ModelOutput",
    "Module",
    "ModuleList",
    "MsdKMamba",
    "Parameter",
    "ScaleFeatureSet",
    "ScanOrder",
    "Sequential",
    "SsmParameters",
    "build_model",
    "distill_loss",
    "eval_univariate",
    "flatten_volume",
    "origin_loss",
    "param_count",
    "scan_chunked",
    "scan_naive",
    "total_loss",
]
