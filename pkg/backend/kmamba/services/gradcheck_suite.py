"""
Finite-difference suites for every differentiable component.

All suites run in float64 with fixed seeds. Block suites pass below a
relative error of 1e-4; the end-to-end network below 1e-3.
"""

import logging
from collections.abc import Callable, Iterable, Mapping
from typing import Optional

import numpy as np

from kmamba.core.config import DistillConfig, LossWeights, ModelConfig
from kmamba.core.exceptions import InvalidConfigurationError
from kmamba.engine import ops
from kmamba.engine.gradcheck import GradcheckResult, gradcheck
from kmamba.engine.tensor import Tensor, default_dtype
from kmamba.nn.bkm import BkmBlock
from kmamba.nn.hsa import HsaBlock
from kmamba.nn.kan import KanLayer
from kmamba.nn.layers import Conv3d, ConvTranspose3d
from kmamba.nn.losses import origin_loss, total_loss
from kmamba.nn.mda import MdaModule, ScaleFeatureSet, distill_loss
from kmamba.nn.model import MsdKMamba
from kmamba.nn.module import Module
from kmamba.nn.ssm import SsmParameters, scan_chunked, scan_naive

logger = logging.getLogger(__name__)

BLOCK_RTOL = 1e-4
MODEL_RTOL = 1e-3
MODEL_SAMPLE = 50
COORDS_PER_PARAM = 12


def _input(rng: np.random.Generator, shape: tuple[int, ...], name: str = "x") -> Tensor:
    return Tensor(rng.standard_normal(shape), requires_grad=True, name=name)


def _with_module(module: Module, **inputs: Tensor) -> dict[str, Tensor]:
    params: dict[str, Tensor] = dict(inputs)
    params.update(module.named_parameters())
    return params


# =============================================================================
# Suites
# =============================================================================

def suite_conv3d(seed: int = 0) -> list[GradcheckResult]:
    rng = np.random.default_rng(seed)
    strided = Conv3d(2, 3, 3, stride=2, padding=1, rng=rng)
    grouped = Conv3d.same(4, 4, 3, groups=2, rng=rng)
    dilated = Conv3d(2, 2, 3, padding=2, dilation=2, rng=rng)
    transposed = ConvTranspose3d(3, 2, rng=rng)
    x2 = _input(rng, (2, 2, 5, 5, 5))
    x4 = _input(rng, (4, 4, 4, 4))
    x3 = _input(rng, (3, 3, 3, 3))
    return [
        gradcheck(lambda: strided(x2), _with_module(strided, x=x2), rtol=BLOCK_RTOL,
                  seed=seed, name="conv3d.strided"),
        gradcheck(lambda: grouped(x4), _with_module(grouped, x=x4), rtol=BLOCK_RTOL,
                  seed=seed, name="conv3d.grouped"),
        gradcheck(lambda: dilated(x2), _with_module(dilated, x=x2), rtol=BLOCK_RTOL,
                  seed=seed, name="conv3d.dilated"),
        gradcheck(lambda: transposed(x3), _with_module(transposed, x=x3), rtol=BLOCK_RTOL,
                  seed=seed, name="conv_transpose3d"),
    ]


def suite_softmax(seed: int = 0) -> list[GradcheckResult]:
    rng = np.random.default_rng(seed)
    x = _input(rng, (3, 2, 3, 2))
    return [
        gradcheck(lambda: ops.softmax_channels(x, 0), {"x": x}, rtol=BLOCK_RTOL,
                  seed=seed, name="softmax"),
        gradcheck(lambda: ops.log_softmax(x, 0), {"x": x}, rtol=BLOCK_RTOL,
                  seed=seed, name="log_softmax"),
    ]


def suite_ssm(seed: int = 0) -> list[GradcheckResult]:
    rng = np.random.default_rng(seed)
    results = []
    for direction in ("forward", "backward"):
        params = SsmParameters(3, 4, 2, direction, rng=rng)  # type: ignore[arg-type]
        u = _input(rng, (11, 3), "u")
        results.append(gradcheck(lambda u=u, p=params: scan_chunked(u, p, chunk=4),
                                 _with_module(params, u=u), rtol=BLOCK_RTOL, seed=seed,
                                 name=f"scan_chunked.{direction}"))
        results.append(gradcheck(lambda u=u, p=params: scan_naive(u, p),
                                 _with_module(params, u=u), rtol=BLOCK_RTOL, seed=seed,
                                 name=f"scan_naive.{direction}"))
    return results


def suite_kan(seed: int = 0) -> list[GradcheckResult]:
    rng = np.random.default_rng(seed)
    layer = KanLayer(3, hidden_width=4, grid_size=4, grid_range=2.0, rng=rng)
    # spans the grid and the linear extrapolation beyond it
    x = Tensor(rng.uniform(-3.0, 3.0, size=(6, 3)), requires_grad=True, name="x")
    return [gradcheck(lambda: layer(x), _with_module(layer, x=x), rtol=BLOCK_RTOL,
                      seed=seed, name="kan")]


def suite_bkm(seed: int = 0) -> list[GradcheckResult]:
    rng = np.random.default_rng(seed)
    block = BkmBlock(3, d_state=4, kan_hidden=4, kan_grid=4, chunk=5, rng=rng)
    x = _input(rng, (3, 2, 3, 2))
    return [gradcheck(lambda: block(x), _with_module(block, x=x), eps=1e-4, rtol=BLOCK_RTOL,
                      max_coords=COORDS_PER_PARAM, seed=seed, name="bkm")]


def suite_hsa(seed: int = 0) -> list[GradcheckResult]:
    rng = np.random.default_rng(seed)
    block = HsaBlock(4, expand=2.0, rng=rng)
    x = _input(rng, (4, 4, 4, 4))
    return [gradcheck(lambda: block(x), _with_module(block, x=x), rtol=BLOCK_RTOL,
                      max_coords=COORDS_PER_PARAM, seed=seed, name="hsa")]


def suite_mda(seed: int = 0) -> list[GradcheckResult]:
    rng = np.random.default_rng(seed)
    widths = (2, 3, 4, 5, 6)
    module = MdaModule(widths, num_classes=3, rng=rng)
    features = [_input(rng, (c, n, n, n), f"x{i + 1}")
                for i, (c, n) in enumerate(zip(widths, (16, 8, 4, 2, 1), strict=True))]

    def refined() -> Tensor:
        out = module(ScaleFeatureSet(features))
        return ops.concat([r.reshape(-1) for r in out.refined or []], axis=0)

    teacher = [_input(rng, (3, n, n, n), f"t{i + 1}") for i, n in enumerate((4, 3, 2, 1))]
    student = [_input(rng, (3, n, n, n), f"s{i + 1}") for i, n in enumerate((4, 3, 2, 1))]
    logits = {t.name or "": t for t in teacher + student}
    params = _with_module(module, **{f.name or "": f for f in features})
    both = DistillConfig(alpha=0.5, stop_gradient_teacher=False)
    return [
        gradcheck(refined, params, rtol=BLOCK_RTOL, max_coords=COORDS_PER_PARAM,
                  seed=seed, name="mda.aggregate"),
        gradcheck(lambda: distill_loss(teacher, student, both).total, logits,
                  rtol=BLOCK_RTOL, seed=seed, name="mda.distill"),
        gradcheck(lambda: distill_loss(teacher, student, DistillConfig()).total,
                  {s.name or "": s for s in student}, rtol=BLOCK_RTOL, seed=seed,
                  name="mda.distill_stop_gradient"),
    ]


def suite_losses(seed: int = 0) -> list[GradcheckResult]:
    rng = np.random.default_rng(seed)
    logits = _input(rng, (3, 3, 3, 3), "logits")
    target = rng.integers(0, 3, size=(3, 3, 3))
    sd = Tensor(np.array([0.7]), requires_grad=True, name="sd")
    weights = LossWeights(beta=0.4, lambda1=1.0, lambda2=0.1)
    return [
        gradcheck(lambda: origin_loss(logits, target, weights), {"logits": logits},
                  rtol=BLOCK_RTOL, seed=seed, name="origin_loss"),
        gradcheck(lambda: total_loss(origin_loss(logits, target, weights), sd, weights),
                  {"logits": logits, "sd": sd}, rtol=BLOCK_RTOL, seed=seed, name="total_loss"),
    ]


def tiny_model_config() -> ModelConfig:
    return ModelConfig(in_channels=4, num_classes=3, stage_channels=(2, 3, 4, 5, 6),
                       kan_hidden=4, kan_grid=4, d_state=4, patch_size=16)


def suite_model(seed: int = 0) -> list[GradcheckResult]:
    """Total loss of the tiny network against a random sample of parameters."""
    rng = np.random.default_rng(seed)
    model = MsdKMamba(tiny_model_config(), scan_chunk=64, seed=seed)
    x = Tensor(rng.standard_normal((4, 16, 16, 16)))
    target = rng.integers(0, 3, size=(16, 16, 16))
    weights, distill = LossWeights(), DistillConfig()

    def objective() -> Tensor:
        out = model(x)
        sd = distill_loss(out.teacher_logits, out.student_logits, distill).total
        return total_loss(origin_loss(out.logits, target, weights), sd, weights)

    named = dict(model.named_parameters())
    names = sorted(named)
    chosen = rng.choice(len(names), size=min(MODEL_SAMPLE, len(names)), replace=False)
    sample = {names[i]: named[names[i]] for i in sorted(chosen)}
    return [gradcheck(objective, sample, eps=1e-7, rtol=MODEL_RTOL, max_coords=1,
                      seed=seed, name="model")]


SUITES: dict[str, Callable[[int], list[GradcheckResult]]] = {
    "conv3d": suite_conv3d,
    "softmax": suite_softmax,
    "ssm": suite_ssm,
    "kan": suite_kan,
    "bkm": suite_bkm,
    "hsa": suite_hsa,
    "mda": suite_mda,
    "losses": suite_losses,
    "model": suite_model,
}


def run_suites(names: Optional[Iterable[str]] = None, seed: int = 0) -> list[GradcheckResult]:
    """
    Run the named suites (all when None) in double precision.

    Raises:
        InvalidConfigurationError: Unknown suite name
    """
    selected = list(names) if names else list(SUITES)
    unknown = [n for n in selected if n not in SUITES]
    if unknown:
        raise InvalidConfigurationError("gradcheck.module", ",".join(unknown),
                                        f"expected one of {','.join(SUITES)}")
    results: list[GradcheckResult] = []
    with default_dtype("float64"):
        for name in selected:
            logger.info(f"gradcheck suite {name}")
            results.extend(SUITES[name](seed))
    return results


def all_passed(results: Iterable[GradcheckResult]) -> bool:
    return all(r.passed for r in results)


def failures(results: Iterable[GradcheckResult]) -> Mapping[str, float]:
    return {r.name: r.max_rel_error for r in results if not r.passed}
