"""
Training loop.

Every step draws a seeded batch of training cases, augments and crops them,
runs the network and minimizes

    L_total = λ1·L_origin + λ2·L_SD

with Adam. One CSV row per step; checkpoints every ``train.checkpoint_every``
steps and at the end.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from kmamba.core.config import RunConfig, parse_run_config
from kmamba.core.domain.phantom import Phantom
from kmamba.core.domain.records import TrainStepRecord
from kmamba.core.exceptions import DatasetNotFoundError, MissingConfigurationError
from kmamba.core.interfaces.storage import ICheckpointStore
from kmamba.engine.tensor import Tensor, default_dtype
from kmamba.infrastructure.data.augment import augment, crop
from kmamba.infrastructure.storage.checkpoint import NpzCheckpointStore
from kmamba.infrastructure.storage.results import CsvAppender
from kmamba.nn.losses import origin_loss, total_loss
from kmamba.nn.mda import distill_loss
from kmamba.nn.model import MsdKMamba, build_model
from kmamba.services.optimizer import Adam

logger = logging.getLogger(__name__)

FINAL_CHECKPOINT = "model.npz"
STEPS_CSV = "train_steps.csv"


@dataclass
class TrainResult:
    """Trained model and its loss curve."""

    model: MsdKMamba
    history: list[TrainStepRecord] = field(default_factory=list)
    checkpoint: Optional[Path] = None

    @property
    def final_l_total(self) -> float:
        return self.history[-1].l_total if self.history else float("nan")


def sample_batch(num_cases: int, batch_size: int, seed: int, step: int) -> list[int]:
    """Case indices for one step; without replacement unless the batch exceeds the pool."""
    rng = np.random.default_rng([seed, step])
    replace = batch_size > num_cases
    return [int(i) for i in rng.choice(num_cases, size=batch_size, replace=replace)]


def load_model(path: Path, store: Optional[ICheckpointStore] = None) -> tuple[MsdKMamba, RunConfig]:
    """
    Rebuild a network from a checkpoint written by ``Trainer``.

    Raises:
        DatasetNotFoundError: File missing
        CheckpointFormatError: Corrupt file or parameter mismatch
        MissingConfigurationError: Checkpoint carries no run config
    """
    store = store or NpzCheckpointStore()
    state, metadata = store.load(path)
    lines = metadata.get("config")
    if not lines:
        raise MissingConfigurationError(f"{path}: config")
    cfg = parse_run_config("\n".join(lines))
    with default_dtype(cfg.train.precision):
        model = build_model(cfg.model, scan_chunk=cfg.train.scan_chunk, seed=cfg.train.seed)
    model.load_state_dict(state, source=str(path))
    logger.info(f"Loaded model from {path} (step {metadata.get('step')})")
    return model, cfg


class Trainer:
    """
    Optimizes one network on a fixed list of training cases.

    Args:
        cfg: Run configuration
        cases: Training cases (already normalized)
        out_dir: Where CSV and checkpoints go; nothing is written when None
        store: Checkpoint writer
    """

    def __init__(
        self,
        cfg: RunConfig,
        cases: list[Phantom],
        out_dir: Optional[Path] = None,
        store: Optional[ICheckpointStore] = None,
    ) -> None:
        if not cases:
            raise DatasetNotFoundError("<train split>")
        self.cfg = cfg
        self.cases = cases
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.store = store or NpzCheckpointStore()
        self.dtype = np.dtype(cfg.train.precision)
        with default_dtype(self.dtype):
            self.model = build_model(cfg.model, scan_chunk=cfg.train.scan_chunk, seed=cfg.train.seed)
        self.optimizer = Adam(self.model.named_parameters(), cfg.train.learning_rate)

    # =========================================================================
    # Batches
    # =========================================================================

    def _patch(self, image: np.ndarray, labels: np.ndarray,
               rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        edge = self.cfg.model.patch_size
        dims = labels.shape
        if all(n <= edge for n in dims):
            return image, labels
        size = tuple(min(edge, n) for n in dims)
        origin = tuple(int(rng.integers(0, n - s + 1)) for s, n in zip(size, dims, strict=True))
        return crop(image, labels, size, origin)  # type: ignore[arg-type]

    def batch(self, step: int) -> tuple[Tensor, np.ndarray]:
        """Stacked ``[N, M, S, S, S]`` inputs and ``[N, S, S, S]`` labels for ``step``."""
        seed = self.cfg.train.seed
        images, labels = [], []
        for slot, index in enumerate(sample_batch(len(self.cases), self.cfg.train.batch_size,
                                                  seed, step)):
            case = self.cases[index]
            item_seed = int(np.random.default_rng([seed, step, slot]).integers(2 ** 31))
            image, label = augment(case.image, case.labels.labels, item_seed, self.cfg.augment)
            image, label = self._patch(image, label, np.random.default_rng(item_seed))
            images.append(image)
            labels.append(label)
        return Tensor(np.stack(images), dtype=self.dtype), np.stack(labels)

    # =========================================================================
    # Optimization
    # =========================================================================

    def step(self, step: int) -> TrainStepRecord:
        """One forward/backward/update; ``step`` is 1-based."""
        cfg = self.cfg
        x, target = self.batch(step)
        self.optimizer.zero_grad()
        with default_dtype(self.dtype):
            out = self.model(x)
            origin = origin_loss(out.logits, target, cfg.loss)
            record = TrainStepRecord(step=step, l_origin=origin.item(), l_sd=0.0, l_total=0.0)
            sd = None
            if out.teacher_logits:
                distill = distill_loss(out.teacher_logits, out.student_logits, cfg.distill)
                sd = distill.total
                record.l_sd = distill.total.item()
                record.struct = list(distill.struct)
                record.dist = list(distill.distribution)
            loss = total_loss(origin, sd, cfg.loss)
            loss.backward()
        self.optimizer.step()
        record.l_total = loss.item()
        return record

    def _checkpoint(self, path: Path, step: int, l_total: float) -> None:
        metadata = {"config": self.cfg.to_lines(), "step": step, "l_total": l_total}
        self.store.save(path, dict(self.model.state_dict()), metadata)
        logger.info(f"Checkpoint saved: {path}")

    def fit(self) -> TrainResult:
        """Run ``train.steps`` updates."""
        cfg = self.cfg.train
        result = TrainResult(model=self.model)
        logger.info(
            f"Training {self.model} on {len(self.cases)} cases: {cfg.steps} steps, "
            f"batch {cfg.batch_size}, lr {cfg.learning_rate}, seed {cfg.seed}, {cfg.precision}"
        )
        self.model.train()
        appender = CsvAppender(self.out_dir / STEPS_CSV, TrainStepRecord.CSV_HEADER) \
            if self.out_dir is not None else None
        try:
            for step in range(1, cfg.steps + 1):
                record = self.step(step)
                result.history.append(record)
                if appender is not None:
                    appender.append(record)
                if step % cfg.log_every == 0 or step == cfg.steps:
                    logger.info(
                        f"step {step}/{cfg.steps}: L_origin={record.l_origin:.4f} "
                        f"L_SD={record.l_sd:.4f} L_total={record.l_total:.4f}"
                    )
                if (self.out_dir is not None and cfg.checkpoint_every
                        and step % cfg.checkpoint_every == 0 and step != cfg.steps):
                    self._checkpoint(self.out_dir / "checkpoints" / f"step_{step:06d}.npz",
                                     step, record.l_total)
        finally:
            if appender is not None:
                appender.close()

        if self.out_dir is not None:
            result.checkpoint = self.out_dir / FINAL_CHECKPOINT
            self._checkpoint(result.checkpoint, cfg.steps, result.final_l_total)
        return result


def train(cfg: RunConfig, cases: list[Phantom], out_dir: Optional[Path] = None) -> TrainResult:
    return Trainer(cfg, cases, out_dir).fit()
