"""Training loop: mini-batch Adam, halving schedule, early stopping on val MSE."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import ContractError
from .data import NormalizationStats, denormalize
from .metrics import mae, mse, mse_loss
from .model import Model
from .optim import AdamState, adam_step


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    lr0: float = 1e-4
    halve_every: int = 2  # epochs between halvings
    patience: int = 10  # epochs without val-MSE improvement before stopping
    batch_size: int = 32
    max_epochs: int = 50
    seed: int = 0
    backcast_loss_weight: float = 0.0  # optional auxiliary penalty on the final residual

    def __post_init__(self):
        for name in ("halve_every", "patience", "batch_size", "max_epochs"):
            if getattr(self, name) <= 0:
                raise ContractError(f"{name} must be positive")
        if self.lr0 < 0:  # 0 freezes the model, useful for schedule diagnostics
            raise ContractError("lr0 must be >= 0")


def lr_schedule(epoch: int, lr0: float = 1e-4, halve_every: int = 2) -> float:
    """lr0 halved every ``halve_every`` epochs (epochs count from 0)."""
    if epoch < 0:
        raise ContractError(f"epoch must be >= 0, got {epoch}")
    return lr0 * 0.5 ** (epoch // halve_every)


@dataclass
class EpochStats:
    epoch: int
    lr: float
    train_loss: float
    val_mse: float


@dataclass
class TrainResult:
    history: list[EpochStats]
    best_val_mse: float
    best_epoch: int
    epochs_run: int
    wall_s: float
    stopped_early: bool

    def history_csv(self) -> str:
        lines = ["epoch,lr,train_loss,val_mse"]
        for row in self.history:
            lines.append(f"{row.epoch},{row.lr!r},{row.train_loss!r},{row.val_mse!r}")
        return "\n".join(lines) + "\n"


@dataclass
class _Batcher:
    windows: list
    batch_size: int
    rng_seed: int

    def epoch_batches(self, epoch: int):
        order = np.random.default_rng(np.random.SeedSequence([self.rng_seed, epoch])).permutation(
            len(self.windows)
        )
        for lo in range(0, len(order), self.batch_size):
            yield [self.windows[i] for i in order[lo : lo + self.batch_size]]


def train(model: Model, train_windows: list, val_windows: list, cfg: TrainConfig) -> TrainResult:
    """Mini-batch Adam with the halving schedule; returns best-validation weights.

    The model is left holding the parameters of its best validation epoch.
    """
    if not train_windows:
        raise ContractError("train requires at least one training window")
    t0 = time.perf_counter()
    params = model.parameters()
    adam = AdamState(params, lr=cfg.lr0)
    batcher = _Batcher(train_windows, cfg.batch_size, cfg.seed)
    history: list[EpochStats] = []
    best_val = float("inf")
    best_epoch = -1
    best_values = model.registry.named_values()
    stale = 0
    stopped_early = False

    for epoch in range(cfg.max_epochs):
        adam.lr = lr_schedule(epoch, cfg.lr0, cfg.halve_every)
        losses = []
        for batch_idx, batch in enumerate(batcher.epoch_batches(epoch)):
            xs = np.stack([x for x, _ in batch])
            ys = np.concatenate([y for _, y in batch], axis=0)
            forecast, residual, _ = model.forward_batch(xs)
            loss = mse_loss(forecast, ys)
            if cfg.backcast_loss_weight > 0:
                loss = ad.add(loss, ad.mul(ad.mean(ad.mul(residual, residual)),
                                           cfg.backcast_loss_weight))
            value = loss.item()
            if not np.isfinite(value):
                raise TrainingDiverged(
                    f"non-finite loss {value} at epoch {epoch}, batch {batch_idx}; "
                    f"parameter norm {model.registry.value_norm():.4g}"
                )
            ad.backward(loss)
            for p in params:  # heads feeding only the unused final residual get zero grad
                if p.tensor.grad is None:
                    p.tensor.grad = np.zeros_like(p.values)
            adam_step(adam, params)
            losses.append(value)

        val = evaluate(model, val_windows)[0] if val_windows else float(np.mean(losses))
        history.append(EpochStats(epoch=epoch, lr=adam.lr, train_loss=float(np.mean(losses)),
                                  val_mse=val))
        if val < best_val:
            best_val = val
            best_epoch = epoch
            best_values = model.registry.named_values()
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                stopped_early = True
                break

    model.registry.load_values(best_values)
    return TrainResult(
        history=history,
        best_val_mse=best_val,
        best_epoch=best_epoch,
        epochs_run=len(history),
        wall_s=time.perf_counter() - t0,
        stopped_early=stopped_early,
    )


def evaluate(model: Model, eval_windows: list, stats: NormalizationStats | None = None,
             raw_space: bool = False, batch_size: int = 32) -> tuple[float, float]:
    """Mean (MSE, MAE) over windows; optionally in de-normalized units."""
    if not eval_windows:
        raise ContractError("evaluate requires at least one window")
    if raw_space and stats is None:
        raise ContractError("raw_space evaluation needs normalization stats")
    n = model.cfg.n_nodes
    mses, maes = [], []
    for lo in range(0, len(eval_windows), batch_size):
        chunk = eval_windows[lo : lo + batch_size]
        xs = np.stack([x for x, _ in chunk])
        forecast, _, _ = model.forward_batch(xs)
        preds = forecast.values
        for wi, (_, y) in enumerate(chunk):
            pred = preds[wi * n : (wi + 1) * n]
            if raw_space:
                pred = denormalize(pred, stats)
                y = denormalize(y, stats)
            mses.append(mse(y, pred))
            maes.append(mae(y, pred))
    return float(np.mean(mses)), float(np.mean(maes))
