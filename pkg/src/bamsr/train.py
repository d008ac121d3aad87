"""Training loop: random aligned patches, L1 loss, Adam with a halving schedule."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, List, Optional

import numpy as np

from . import ops
from .autograd import Tensor, backward
from .data import Dataset, sample_batch
from .network import SRNetwork
from .optim import Adam, lr_at

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainSpec:
    patch_size: int = 64
    batch: int = 16
    epochs: int = 1000
    lr0: float = 1e-4
    halve_period: int = 200
    seed: int = 0
    scale: int = 2

    def __post_init__(self):
        if self.patch_size < 1 or self.batch < 1 or self.epochs < 0:
            raise ValueError(f"invalid train spec {self}")
        if self.halve_period < 1 or self.lr0 <= 0:
            raise ValueError(f"invalid learning-rate schedule {self}")

    def lr_at(self, epoch: int) -> float:
        return lr_at(epoch, self.lr0, self.halve_period)

    def steps_per_epoch(self, n_pairs: int) -> int:
        return math.ceil(n_pairs / self.batch)

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    mean_l1: float


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainResult:
    net: SRNetwork
    trace: List[EpochRecord]
    optimizer: Adam
    rng: np.random.Generator
    epoch: int  # number of completed epochs


def train(
    net: SRNetwork,
    dataset: Dataset,
    spec: TrainSpec,
    *,
    optimizer: Optional[Adam] = None,
    rng: Optional[np.random.Generator] = None,
    start_epoch: int = 0,
    stop_epoch: Optional[int] = None,
    checkpoint_path=None,
    checkpoint_every: int = 0,
    on_epoch: Optional[Callable[[EpochRecord], None]] = None,
) -> TrainResult:
    """Run epochs ``start_epoch .. stop_epoch-1`` (default: up to ``spec.epochs``).

    An epoch is ``ceil(len(dataset) / batch)`` sampled batches. Passing the
    optimizer and generator restored from a checkpoint resumes a run exactly.
    """
    if dataset.scale != net.spec.scale or spec.scale != net.spec.scale:
        raise ValueError(
            f"scale mismatch: network x{net.spec.scale}, dataset x{dataset.scale}, spec x{spec.scale}"
        )
    optimizer = optimizer or Adam(net.named_parameters())
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    stop_epoch = spec.epochs if stop_epoch is None else stop_epoch
    steps = spec.steps_per_epoch(len(dataset))
    dtype = net.dtype
    trace: List[EpochRecord] = []

    for epoch in range(start_epoch, stop_epoch):
        lr = spec.lr_at(epoch)
        total = 0.0
        for step in range(steps):
            lr_b, hr_b = sample_batch(dataset, spec, rng, dtype)
            loss = ops.l1_loss(net(Tensor(lr_b)), Tensor(hr_b))
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingError(f"non-finite loss at epoch {epoch}, step {step}")
            backward(loss)
            optimizer.step(lr)
            total += value
        record = EpochRecord(epoch, lr, total / steps)
        trace.append(record)
        if on_epoch is not None:
            on_epoch(record)
        done = epoch + 1
        if checkpoint_path and checkpoint_every and (done % checkpoint_every == 0 or done == stop_epoch):
            from .checkpoint import save_checkpoint

            save_checkpoint(checkpoint_path, net, optimizer, done, rng, spec)
    return TrainResult(net, trace, optimizer, rng, stop_epoch)


def write_trace_csv(path, trace: List[EpochRecord], append: bool = False) -> None:
    path = Path(path)
    new = not append or not path.exists()
    with open(path, "a" if append else "w", newline="") as fh:
        writer = csv.writer(fh)
        if new:
            writer.writerow(["epoch", "lr", "mean_l1"])
        for r in trace:
            writer.writerow([r.epoch, repr(r.lr), repr(r.mean_l1)])


def smoothed_final(trace: List[EpochRecord], window: int = 10) -> float:
    tail = trace[-window:]
    return sum(r.mean_l1 for r in tail) / len(tail)
