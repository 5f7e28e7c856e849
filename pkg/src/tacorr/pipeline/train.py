from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..diffcore import AdamW, NumericError
from .config import TrainConfig
from .model import TERMS, CorrespondenceModel, save_checkpoint, total_loss

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainResult:
    model: CorrespondenceModel
    history: list = field(default_factory=list)  # one breakdown dict per step
    checkpoints: list = field(default_factory=list)

    def losses(self):
        return np.array([h["total"] for h in self.history])


def _batches(n_pairs, batch_size, rng):
    order = np.array([], dtype=int)
    while True:
        while len(order) < batch_size:
            order = np.concatenate([order, rng.permutation(n_pairs)])
        yield order[:batch_size]
        order = order[batch_size:]


def train(dataset, config: TrainConfig, out_dir=None, model=None):
    """AdamW over every parameter; one pair per micro-step, averaged per batch.

    Deterministic for a fixed ``config.seed``. Writes ``checkpoint.npz`` (and
    ``checkpoint_step<N>.npz`` every ``checkpoint_every`` steps) when
    ``out_dir`` is given.
    """
    if not dataset:
        raise ValueError("train: empty dataset")
    rng = np.random.default_rng(config.seed)
    if model is None:
        model = CorrespondenceModel(config, [p.source for p in dataset], rng)
    data_rng = np.random.default_rng([config.seed, 1])
    noise_rng = np.random.default_rng([config.seed, 2])
    opt = AdamW(model.parameters(), lr=config.lr, weight_decay=config.weight_decay)
    result = TrainResult(model)
    batches = _batches(len(dataset), config.batch_size, data_rng)
    scale = 1.0 / config.batch_size
    for step in range(1, config.steps + 1):
        opt.zero_grad()
        sums = dict.fromkeys(TERMS + ("total",), 0.0)
        try:
            for i in next(batches):
                loss, parts = total_loss(model, dataset[i], rng=noise_rng, mode="train")
                if loss.requires_grad:
                    (loss * scale).backward()
                for k, v in parts.items():
                    sums[k] += v * scale
        except NumericError as exc:
            raise TrainingDiverged(f"non-finite value at step {step}: {exc}") from exc
        if not np.isfinite(sums["total"]):
            raise TrainingDiverged(f"non-finite loss at step {step}: {sums}")
        if any(p.grad is not None for p in opt.params):
            opt.step()
        sums["step"] = step
        result.history.append(sums)
        if step % 50 == 0:
            log.info("step %d loss %.5f", step, sums["total"])
        if out_dir is not None and config.checkpoint_every and step % config.checkpoint_every == 0:
            result.checkpoints.append(
                save_checkpoint(model, Path(out_dir) / f"checkpoint_step{step}.npz"))
    if out_dir is not None:
        result.checkpoints.append(save_checkpoint(model, Path(out_dir) / "checkpoint.npz"))
    return result


def write_loss_csv(history, path):
    lines = ["step,total,trans,align,tc,constr"]
    for h in history:
        lines.append(",".join([str(h["step"])] + [repr(float(h[k])) for k in ("total",) + TERMS]))
    Path(path).write_text("\n".join(lines) + "\n")
