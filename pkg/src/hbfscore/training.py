"""Shared AdamW mini-batch loop with best-validation checkpointing."""

from __future__ import annotations

import copy
import csv
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
import torch
from torch import nn

log = logging.getLogger(__name__)


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""


@dataclass
class TrainSettings:
    lr: float = 5e-4
    weight_decay: float = 1e-4
    batch_size: int = 32
    epochs: int = 100
    dropout: float = 0.1
    seed: int = 0

    def to_dict(self):
        return asdict(self)


@dataclass
class TrainResult:
    model: nn.Module
    trace: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_val: float = float("nan")
    val_name: str = "val"

    def write_trace(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "train_loss", self.val_name])
            for row in self.trace:
                w.writerow([row["epoch"], repr(row["train_loss"]), repr(row["val"])])


def fit(model: nn.Module, train: np.ndarray,
        loss_fn: Callable[[np.ndarray, torch.Generator], torch.Tensor],
        val_fn: Callable[[], float], settings: TrainSettings,
        higher_is_better: bool = False, val_name: str = "val_sum_rate") -> TrainResult:
    """Minimize ``loss_fn`` over shuffled mini-batches of ``train``.

    ``loss_fn`` receives the batch and a torch generator for any noise it draws, so
    a fixed seed reproduces the whole trace. The returned model holds the parameters
    of the best validation epoch.
    """
    result = TrainResult(model, val_name=val_name)
    if settings.epochs <= 0:
        return result
    torch.manual_seed(settings.seed)
    order_rng = np.random.default_rng(settings.seed)
    gen = torch.Generator().manual_seed(settings.seed)
    opt = torch.optim.AdamW(model.parameters(), lr=settings.lr, weight_decay=settings.weight_decay)
    sign = 1.0 if higher_is_better else -1.0
    best_state, best_score = None, -math.inf
    n = len(train)
    for epoch in range(1, settings.epochs + 1):
        model.train()
        perm = order_rng.permutation(n)
        total, seen = 0.0, 0
        for start in range(0, n, settings.batch_size):
            batch = train[perm[start:start + settings.batch_size]]
            loss = loss_fn(batch, gen)
            if not torch.isfinite(loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch}, batch starting {start}")
            opt.zero_grad(set_to_none=True)
            loss.backward()
            opt.step()
            total += loss.item() * len(batch)
            seen += len(batch)
        model.eval()
        val = float(val_fn())
        if not math.isfinite(val):
            raise DivergenceError(f"non-finite validation metric at epoch {epoch}")
        result.trace.append({"epoch": epoch, "train_loss": total / max(seen, 1), "val": val})
        log.info("epoch %d train_loss %.5f %s %.5f", epoch, total / max(seen, 1), val_name, val)
        if sign * val > best_score:
            best_score = sign * val
            best_state = copy.deepcopy(model.state_dict())
            result.best_epoch, result.best_val = epoch, val
    model.load_state_dict(best_state)
    model.eval()
    return result
