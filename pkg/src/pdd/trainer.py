"""Training engine: full-batch forward, policy-masked backward, exact accounting.

Every batch always gets a full forward pass; the active policy then marks the
rows that backpropagate. An empty mask skips the optimizer step entirely, so
it moves neither parameters nor counters. Effective epochs are the total
number of backpropagated samples divided by the dataset size, an identity
kept integer-exact (effective_epochs * n == total_backprops).

Randomness is split into three derived streams so that every decision is a
pure function of its coordinates: parameter init from (seed,), the epoch
shuffle from (seed, epoch), and each batch's selection from
(seed, epoch, batch_index). Variants that share a seed therefore share the
same shuffles, which is what makes srd at gamma = 1 land bit for bit on the
baseline trajectory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import BatchPlan, Dataset, batch_sizes, epoch_batches
from .errors import ConfigError, TrainingDivergence
from .nn import (Forward, OptimizerSettings, OptimizerState, ParameterSet, forward,
                 init_params, loss_and_grad, optimizer_step, per_sample_loss)
from .policy import DropoutPolicy, ScheduleRecord
from .selection import (BatchMask, apportion_counts, full_mask, select_by_confidence,
                        select_by_count, select_by_loss, select_random_matched)

# Sub-stream tag for per-batch selections (init uses 0, shuffles 1).
_SELECT_STREAM = 2


@dataclass(frozen=True)
class RunConfig:
    """Everything a run needs besides the data itself."""

    policy: DropoutPolicy
    seed: int
    batch_size: int = 32
    optimizer: OptimizerSettings = field(default_factory=OptimizerSettings)
    hidden: tuple[int, ...] = (128, 64)
    track_epoch_counts: bool = False

    def __post_init__(self):
        if self.seed < 0:
            raise ConfigError(f"seed must be non-negative, got {self.seed}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if any(int(h) < 1 for h in self.hidden):
            raise ConfigError(f"hidden widths must be positive, got {self.hidden}")

    @property
    def epochs(self) -> int:
        return self.policy.epochs

    @property
    def revision_epochs(self) -> int:
        return self.policy.revision_epochs


@dataclass
class RunMetrics:
    """Per-epoch measurements plus the exact backprop ledger."""

    variant: str
    n: int
    retained: list[int]
    train_loss: list[float]           # nan marks an epoch with zero backprops
    test_acc: list[float]
    backprop_cum: list[int]
    total_backprops: int
    sample_counts: np.ndarray         # [n] backprop count per sample id
    final_params: Optional[ParameterSet] = None
    epoch_sample_counts: Optional[np.ndarray] = None  # [epochs, n] when tracked

    @property
    def epochs(self) -> int:
        return len(self.retained)

    @property
    def effective_epochs(self) -> float:
        return self.total_backprops / self.n

    @property
    def final_accuracy(self) -> float:
        return self.test_acc[-1]


def evaluate(params: ParameterSet, ds: Dataset) -> float:
    """Accuracy of argmax predictions; ties go to the lowest class index."""
    logits = forward(params, ds.features).logits
    return float(np.mean(np.argmax(logits, axis=1) == ds.labels))


def _selection_rng(seed: int, epoch: int, batch_index: int) -> np.random.Generator:
    return np.random.default_rng([seed, epoch, _SELECT_STREAM, batch_index])


def _difficulty_mask(policy: DropoutPolicy, fwd: Forward, labels: np.ndarray) -> BatchMask:
    if policy.loss_threshold is not None:
        return select_by_loss(per_sample_loss(fwd, labels), policy.loss_threshold)
    return select_by_confidence(fwd.probabilities, labels, policy.tau)


def _batch_mask(policy: DropoutPolicy, epoch: int, fwd: Forward, labels: np.ndarray,
                targets: Optional[list[int]], batch_index: int, seed: int) -> BatchMask:
    n_rows = fwd.n_rows
    if policy.variant == "baseline" or epoch > policy.variant_end:
        return full_mask(n_rows)
    if targets is not None:
        return select_by_count(n_rows, targets[batch_index],
                               _selection_rng(seed, epoch, batch_index))
    difficult = _difficulty_mask(policy, fwd, labels)
    if policy.variant == "dbpd":
        return difficult
    # smrd-inline: random rows, exactly as many as the difficulty mask kept
    matched = select_random_matched(difficult.size, n_rows,
                                    _selection_rng(seed, epoch, batch_index))
    assert matched.size == difficult.size
    return matched


def run_training(train: Dataset, test: Dataset, cfg: RunConfig) -> RunMetrics:
    """Train for cfg.epochs epochs and return the full measurement record."""
    policy = cfg.policy
    if test.dims != train.dims or test.num_classes != train.num_classes:
        raise ConfigError("train and test sets disagree on dims or classes")
    widths = (train.dims, *cfg.hidden, train.num_classes)
    params = init_params(widths, cfg.seed)
    opt = OptimizerState.create(cfg.optimizer, params)
    sizes = batch_sizes(train.n, cfg.batch_size)

    counts = np.zeros(train.n, dtype=np.int64)
    epoch_counts = [] if cfg.track_epoch_counts else None
    retained_hist: list[int] = []
    loss_hist: list[float] = []
    acc_hist: list[float] = []
    cum_hist: list[int] = []
    cum = 0

    for epoch in range(1, policy.epochs + 1):
        plan = BatchPlan.for_epoch(cfg.seed, epoch, train.n, cfg.batch_size)
        target = policy.retained_target(epoch, train.n)
        targets = apportion_counts(target, sizes) if target is not None else None
        before = counts.copy() if epoch_counts is not None else None
        loss_sum = 0.0
        epoch_retained = 0
        for b, (x, y, ids) in enumerate(epoch_batches(train, plan)):
            fwd = forward(params, x)
            mask = _batch_mask(policy, epoch, fwd, y, targets, b, cfg.seed)
            if mask.size == 0:
                continue
            loss, grads = loss_and_grad(params, fwd, y, mask.indices)
            if not math.isfinite(loss):
                raise TrainingDivergence(f"non-finite loss at epoch {epoch}, batch {b}",
                                         epoch=epoch, batch=b)
            optimizer_step(opt, params, grads)
            cum += mask.size
            counts[ids[mask.indices]] += 1
            loss_sum += loss * mask.size
            epoch_retained += mask.size
        opt.advance_epoch(epoch)
        retained_hist.append(epoch_retained)
        loss_hist.append(loss_sum / epoch_retained if epoch_retained else math.nan)
        acc_hist.append(evaluate(params, test))
        cum_hist.append(cum)
        if epoch_counts is not None:
            epoch_counts.append(counts - before)

    metrics = RunMetrics(
        variant=policy.variant, n=train.n, retained=retained_hist,
        train_loss=loss_hist, test_acc=acc_hist, backprop_cum=cum_hist,
        total_backprops=cum, sample_counts=counts, final_params=params,
        epoch_sample_counts=np.stack(epoch_counts) if epoch_counts is not None else None,
    )
    assert metrics.total_backprops == sum(metrics.retained)
    return metrics


def dry_run_schedule(cfg: RunConfig, n: int) -> tuple[ScheduleRecord, float]:
    """Predict a count-driven run's schedule without touching a model.

    Valid for srd, smrd-replay, and analytic; their per-epoch retained counts
    do not depend on parameters, so the prediction matches a real run of the
    same configuration exactly.
    """
    policy = cfg.policy
    if not policy.count_driven:
        raise ConfigError(f"dry run is model-free; variant {policy.variant!r} "
                          "selects on model outputs")
    if n < 1:
        raise ConfigError(f"n must be >= 1, got {n}")
    retained = []
    for epoch in range(1, policy.epochs + 1):
        target = policy.retained_target(epoch, n)
        retained.append(n if target is None else target)
    record = ScheduleRecord(tuple(retained), n)
    return record, record.effective_epochs


def record_dbpd_schedule(metrics: RunMetrics) -> ScheduleRecord:
    """Turn a difficulty-driven run's measured counts into a replayable schedule."""
    if metrics.variant != "dbpd":
        raise ConfigError(f"schedules are recorded from dbpd runs, this one is "
                          f"{metrics.variant!r}")
    return ScheduleRecord(tuple(metrics.retained), metrics.n)
