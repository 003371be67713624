"""Training loop (MSE + Adam + early stopping), evaluation, and baselines.

Metrics follow the long-horizon benchmark convention: the dataset is z-scored
per channel with training-split statistics before windowing, and MSE/MAE are
computed in that standardized space after undoing each window's reversible
normalization.  The training loss itself lives in revin space.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .data import (SeriesWindow, TimeSeriesTable, WindowSpec, make_windows,
                   window_batches)
from .grad import AdamState, Param, adam_step
from .model import Forecaster, ModelConfig
from .rng import Rng

STD_FLOOR = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    epochs: int = 20
    batch_size: int = 32
    patience: int = 5
    seed: int = 2021

    def __post_init__(self):
        # lr=0 is allowed: it must leave parameters untouched (no-op training)
        if self.lr < 0:
            raise ValueError(f"learning rate must be nonnegative, got {self.lr}")
        if self.patience < 1:
            raise ValueError(f"patience must be >= 1, got {self.patience}")


@dataclass
class EpochStats:
    epoch: int
    train_mse: float
    val_mse: float
    val_mae: float
    seconds: float


@dataclass
class RunHistory:
    epochs: list[EpochStats] = field(default_factory=list)
    best_epoch: int = -1


def mse(pred, target) -> float:
    pred = np.asarray(pred, dtype=np.float64).ravel()
    target = np.asarray(target, dtype=np.float64).ravel()
    if pred.size != target.size or pred.size == 0:
        raise ValueError(f"length mismatch: {pred.size} vs {target.size}")
    return float(np.mean((pred - target) ** 2))


def mae(pred, target) -> float:
    pred = np.asarray(pred, dtype=np.float64).ravel()
    target = np.asarray(target, dtype=np.float64).ravel()
    if pred.size != target.size or pred.size == 0:
        raise ValueError(f"length mismatch: {pred.size} vs {target.size}")
    return float(np.mean(np.abs(pred - target)))


def standardize_splits(train: TimeSeriesTable, val: TimeSeriesTable,
                       test: TimeSeriesTable) -> tuple[TimeSeriesTable, ...]:
    """z-score all splits per channel using training-split statistics."""
    mean = train.values.mean(axis=0)
    std = train.values.std(axis=0)
    std = np.where(std < STD_FLOOR, STD_FLOOR, std)
    out = []
    for t in (train, val, test):
        out.append(TimeSeriesTable(list(t.timestamps), list(t.channel_names),
                                   (t.values - mean) / std))
    return tuple(out)


def _forward_batches(model: Forecaster, windows: list[SeriesWindow],
                     batch_size: int = 256):
    """Eval-mode predictions denormalized back to table scale, plus targets."""
    for X, Y, means, stds in window_batches(windows, batch_size):
        yhat, _ = model.forward(X, train=False, keep_caches=False)
        yield yhat * stds[:, None] + means[:, None], Y


def evaluate(params: dict[str, Param], table: TimeSeriesTable, config: ModelConfig,
             window: WindowSpec) -> tuple[float, float]:
    """MSE/MAE over every window of the (already standardized) table."""
    windows = make_windows(table, window)
    if not windows:
        raise ValueError("split yields no windows")
    return _metrics_over(_forward_batches(Forecaster(config, params), windows))


def _metrics_over(pairs) -> tuple[float, float]:
    sq = 0.0
    ab = 0.0
    count = 0
    for pred, target in pairs:
        err = pred - target
        sq += float(np.sum(err * err))
        ab += float(np.sum(np.abs(err)))
        count += err.size
    return sq / count, ab / count


def persistence_baseline(table: TimeSeriesTable,
                         window: WindowSpec) -> tuple[float, float]:
    """Repeat the last observed value across the horizon; same metric pipeline."""
    windows = make_windows(table, window)
    if not windows:
        raise ValueError("split yields no windows")

    def pairs():
        for w in windows:
            last = w.input[-1] * w.revin.std + w.revin.mean
            yield np.full_like(w.target, last), w.target

    return _metrics_over(pairs())


def train(params: dict[str, Param], splits: tuple[TimeSeriesTable, TimeSeriesTable],
          config: ModelConfig, window: WindowSpec,
          tcfg: TrainConfig) -> tuple[dict[str, Param], RunHistory]:
    """Mini-batch Adam on revin-space MSE with early stopping on validation MSE.

    Shuffle order derives from (seed, epoch); dropout draws come from a
    separate per-epoch stream, so runs are bit-reproducible.
    """
    train_table, val_table = splits
    train_windows = make_windows(train_table, window)
    if not train_windows:
        raise ValueError("training split yields no windows")
    model = Forecaster(config, params)
    state = AdamState(params)
    base_rng = Rng(tcfg.seed)
    history = RunHistory()
    best_val = np.inf
    best_values: dict[str, np.ndarray] = {n: p.value.copy() for n, p in params.items()}
    stale = 0

    for epoch in range(tcfg.epochs):
        t0 = time.monotonic()
        shuffle_rng = base_rng.split()
        drop_rng = base_rng.split()
        order = shuffle_rng.permutation(len(train_windows))
        total_loss = 0.0
        total_count = 0
        for batch_i, (X, Y, means, stds) in enumerate(
                window_batches(train_windows, tcfg.batch_size, order)):
            y_norm = (Y - means[:, None]) / stds[:, None]
            yhat, cache = model.forward(X, train=True, rng=drop_rng)
            err = yhat - y_norm
            loss = float(np.mean(err * err))
            if not np.isfinite(loss):
                raise RuntimeError(f"non-finite loss at epoch {epoch}, batch {batch_i}")
            model.backward(2.0 * err / err.size, cache)
            adam_step(params, state, tcfg.lr)
            total_loss += loss * err.size
            total_count += err.size
        val_mse, val_mae = evaluate(params, val_table, config, window)
        history.epochs.append(EpochStats(
            epoch=epoch, train_mse=total_loss / total_count,
            val_mse=val_mse, val_mae=val_mae,
            seconds=time.monotonic() - t0))
        if val_mse < best_val:
            best_val = val_mse
            best_values = {n: p.value.copy() for n, p in params.items()}
            history.best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale >= tcfg.patience:
                break

    best_params = {
        n: Param(name=n, value=best_values[n], trainable=p.trainable)
        for n, p in params.items()
    }
    return best_params, history
