"""Per-batch row selection: which samples of a batch get backpropagated."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

MASK_ORIGINS = ("full", "confidence", "loss", "random-k", "matched", "count")


@dataclass(frozen=True)
class BatchMask:
    """Within-batch row indices chosen for backprop, tagged with how they were chosen."""

    indices: np.ndarray
    origin: str
    n_rows: int

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        object.__setattr__(self, "indices", idx)
        if self.origin not in MASK_ORIGINS:
            raise ConfigError(f"unknown mask origin {self.origin!r}")
        if idx.size:
            if idx[0] < 0 or idx[-1] >= self.n_rows:
                raise ConfigError("mask indices out of batch bounds")
            if np.any(np.diff(idx) <= 0):
                raise ConfigError("mask indices must be strictly increasing")

    @property
    def size(self) -> int:
        return int(self.indices.size)


def full_mask(n_rows: int) -> BatchMask:
    return BatchMask(np.arange(n_rows, dtype=np.int64), "full", n_rows)


def select_by_confidence(probabilities: np.ndarray, labels: np.ndarray, tau: float) -> BatchMask:
    """Keep low-confidence rows: max probability strictly below tau.

    tau = 0 degenerates to the misclassification rule (no probability is
    below zero, so the kept rows are exactly those the model gets wrong).
    """
    if not (0.0 <= tau <= 1.0):
        raise ConfigError(f"tau must be in [0, 1], got {tau}")
    p = np.asarray(probabilities, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if tau == 0.0:
        keep = np.argmax(p, axis=1) != y
    else:
        keep = p.max(axis=1) < tau
    return BatchMask(np.flatnonzero(keep), "confidence", p.shape[0])


def select_by_loss(losses: np.ndarray, threshold: float) -> BatchMask:
    """Keep rows whose per-sample loss is at least the threshold."""
    ell = np.asarray(losses, dtype=np.float64)
    return BatchMask(np.flatnonzero(ell >= threshold), "loss", ell.shape[0])


def select_random_k(n_rows: int, fraction: float, rng: np.random.Generator) -> BatchMask:
    """Uniform subset of size floor(fraction * n_rows); zero means skip the batch."""
    if not (0.0 <= fraction <= 1.0):
        raise ConfigError(f"fraction must be in [0, 1], got {fraction}")
    k = int(np.floor(fraction * n_rows))
    return BatchMask(np.sort(rng.choice(n_rows, size=k, replace=False)), "random-k", n_rows)


def select_random_matched(size: int, n_rows: int, rng: np.random.Generator) -> BatchMask:
    """Uniform subset whose size matches a reference mask's size."""
    if not (0 <= size <= n_rows):
        raise ConfigError(f"matched size {size} outside [0, {n_rows}]")
    return BatchMask(np.sort(rng.choice(n_rows, size=size, replace=False)), "matched", n_rows)


def select_by_count(n_rows: int, count: int, rng: np.random.Generator) -> BatchMask:
    """Uniform subset of an exact size."""
    if not (0 <= count <= n_rows):
        raise ConfigError(f"count {count} outside [0, {n_rows}]")
    return BatchMask(np.sort(rng.choice(n_rows, size=count, replace=False)), "count", n_rows)


def apportion_counts(total: int, sizes: list[int]) -> list[int]:
    """Split an epoch-level retained count across batches, largest remainder.

    Quotas are total * size / sum(sizes); every batch gets its floored quota
    and the leftover units go to the largest fractional parts, ties resolved
    toward the earlier batch. Each share stays within [0, size] and the
    shares sum to ``total`` exactly.
    """
    n = int(sum(sizes))
    if not (0 <= total <= n):
        raise ConfigError(f"retained count {total} outside [0, {n}]")
    sizes_arr = np.asarray(sizes, dtype=np.int64)
    quotas = total * sizes_arr / n
    base = np.floor(quotas).astype(np.int64)
    leftover = total - int(base.sum())
    if leftover:
        frac = quotas - base
        order = np.argsort(-frac, kind="stable")
        base[order[:leftover]] += 1
    return [int(k) for k in base]
