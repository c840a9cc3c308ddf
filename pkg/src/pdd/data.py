"""Datasets: IDX image/label files, a synthetic generator, and epoch batching.

IDX is the classic big-endian binary pair: an image file tagged with magic
2051 holding [count, rows, cols] then row-major uint8 pixels, and a label
file tagged 2049 holding [count] then uint8 labels. Features are pixels
divided by 255, so a dataset whose features sit on the 1/255 grid survives a
write/read round trip bit for bit.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, FormatError

MAGIC_IMAGES = 2051
MAGIC_LABELS = 2049

# Sub-stream tag for epoch shuffles (parameter init uses 0, selection 2).
_SHUFFLE_STREAM = 1


@dataclass
class Dataset:
    """Feature matrix in [0, 1], integer labels, and stable sample ids."""

    features: np.ndarray   # [n, dims] float64
    labels: np.ndarray     # [n] int64
    num_classes: int
    ids: np.ndarray = None  # [n] int64, assigned 0..n-1 when omitted

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise ConfigError(f"features must be a non-empty [n, dims] matrix, got {self.features.shape}")
        n = self.features.shape[0]
        if self.labels.shape != (n,):
            raise ConfigError(f"labels shape {self.labels.shape} does not match {n} samples")
        if self.features.min() < 0.0 or self.features.max() > 1.0:
            raise ConfigError("features must lie in [0, 1]")
        if self.num_classes < 1:
            raise ConfigError(f"num_classes must be >= 1, got {self.num_classes}")
        if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
            raise ConfigError(f"labels must lie in [0, {self.num_classes})")
        if self.ids is None:
            self.ids = np.arange(n, dtype=np.int64)
        else:
            self.ids = np.asarray(self.ids, dtype=np.int64)
            if self.ids.shape != (n,) or len(np.unique(self.ids)) != n:
                raise ConfigError("ids must be unique, one per sample")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dims(self) -> int:
        return self.features.shape[1]


# ---------------------------------------------------------------------------
# IDX serialization
# ---------------------------------------------------------------------------

def read_idx_images(path: str | Path) -> np.ndarray:
    """Read an IDX image file into uint8 [count, rows, cols]."""
    path = Path(path)
    buf = _read_bytes(path)
    if len(buf) < 16:
        raise FormatError(f"{path}: truncated image header ({len(buf)} bytes)")
    magic, count, rows, cols = struct.unpack(">iiii", buf[:16])
    if magic != MAGIC_IMAGES:
        raise FormatError(f"{path}: bad image magic {magic}, expected {MAGIC_IMAGES}")
    expected = 16 + count * rows * cols
    if len(buf) != expected:
        raise FormatError(f"{path}: expected {expected} bytes for {count}x{rows}x{cols}, got {len(buf)}")
    return np.frombuffer(buf, dtype=np.uint8, offset=16).reshape(count, rows, cols).copy()


def read_idx_labels(path: str | Path) -> np.ndarray:
    """Read an IDX label file into uint8 [count]."""
    path = Path(path)
    buf = _read_bytes(path)
    if len(buf) < 8:
        raise FormatError(f"{path}: truncated label header ({len(buf)} bytes)")
    magic, count = struct.unpack(">ii", buf[:8])
    if magic != MAGIC_LABELS:
        raise FormatError(f"{path}: bad label magic {magic}, expected {MAGIC_LABELS}")
    if len(buf) != 8 + count:
        raise FormatError(f"{path}: expected {8 + count} bytes for {count} labels, got {len(buf)}")
    return np.frombuffer(buf, dtype=np.uint8, offset=8).copy()


def write_idx_images(path: str | Path, images: np.ndarray) -> None:
    images = np.ascontiguousarray(images, dtype=np.uint8)
    if images.ndim != 3:
        raise ConfigError(f"images must be [count, rows, cols], got shape {images.shape}")
    header = struct.pack(">iiii", MAGIC_IMAGES, *images.shape)
    Path(path).write_bytes(header + images.tobytes())


def write_idx_labels(path: str | Path, labels: np.ndarray) -> None:
    labels = np.ascontiguousarray(labels, dtype=np.uint8)
    if labels.ndim != 1:
        raise ConfigError(f"labels must be one-dimensional, got shape {labels.shape}")
    header = struct.pack(">ii", MAGIC_LABELS, labels.shape[0])
    Path(path).write_bytes(header + labels.tobytes())


def _read_bytes(path: Path) -> bytes:
    try:
        return path.read_bytes()
    except OSError as exc:
        raise FormatError(f"{path}: cannot read ({exc})") from exc


def load_dataset(images_path: str | Path, labels_path: str | Path,
                 num_classes: int | None = None) -> Dataset:
    """Load an IDX pair; pixels are flattened and scaled by 1/255."""
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise FormatError(f"{images_path} holds {images.shape[0]} images but "
                          f"{labels_path} holds {labels.shape[0]} labels")
    features = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    if num_classes is None:
        num_classes = int(labels.max()) + 1
    return Dataset(features, labels.astype(np.int64), num_classes)


def save_dataset(ds: Dataset, images_path: str | Path, labels_path: str | Path) -> None:
    """Write a dataset as an IDX pair with rows=1, cols=dims.

    Features are mapped back to pixels as round(f * 255); values more than
    1e-9 off the 1/255 grid are rejected rather than silently quantized.
    """
    scaled = ds.features * 255.0
    pixels = np.round(scaled)
    if np.max(np.abs(scaled - pixels)) > 1e-9:
        raise ConfigError("features are not on the 1/255 grid; this dataset is not IDX-serializable")
    write_idx_images(images_path, pixels.astype(np.uint8).reshape(ds.n, 1, ds.dims))
    write_idx_labels(labels_path, ds.labels.astype(np.uint8))


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------

def gen_synthetic(classes: int, per_class: int, dims: int, spread: float,
                  seed: int) -> Dataset:
    """Gaussian blobs on simplex-corner centers, quantized to the 1/255 grid.

    Class c is centered at 0.5 + 0.4 * (e_c - 1/classes) on the first
    ``classes`` coordinates (pairwise center distance 0.4 * sqrt(2)), with
    isotropic noise of scale ``spread``, clipped to [0, 1]. Labels come out
    in class blocks: [0] * per_class, [1] * per_class, and so on.
    """
    if classes < 1 or per_class < 1:
        raise ConfigError(f"classes and per_class must be >= 1, got {classes}, {per_class}")
    if dims < classes:
        raise ConfigError(f"dims ({dims}) must be >= classes ({classes}) for the simplex centers")
    if spread < 0:
        raise ConfigError(f"spread must be non-negative, got {spread}")
    rng = np.random.default_rng(int(seed))
    centers = np.full((classes, dims), 0.5)
    for c in range(classes):
        centers[c, :classes] -= 0.4 / classes
        centers[c, c] += 0.4
    n = classes * per_class
    labels = np.repeat(np.arange(classes, dtype=np.int64), per_class)
    noise = rng.standard_normal((n, dims)) * spread
    x = np.clip(centers[labels] + noise, 0.0, 1.0)
    x = np.round(x * 255.0) / 255.0
    return Dataset(x, labels, classes)


# ---------------------------------------------------------------------------
# Epoch batching
# ---------------------------------------------------------------------------

def batch_sizes(n: int, batch_size: int) -> list[int]:
    """Batch sizes in epoch order: full batches then the remainder, if any."""
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
    sizes = [batch_size] * (n // batch_size)
    if n % batch_size:
        sizes.append(n % batch_size)
    return sizes


@dataclass(frozen=True)
class BatchPlan:
    """Shuffled visit order for one epoch, a pure function of (seed, epoch)."""

    run_seed: int
    epoch: int
    batch_size: int
    epoch_seed: int
    order: np.ndarray

    @classmethod
    def for_epoch(cls, run_seed: int, epoch: int, n: int, batch_size: int) -> "BatchPlan":
        if epoch < 1:
            raise ConfigError(f"epoch must be >= 1, got {epoch}")
        words = np.random.SeedSequence([int(run_seed), int(epoch), _SHUFFLE_STREAM]
                                       ).generate_state(2, np.uint32)
        epoch_seed = (int(words[0]) << 32) | int(words[1])
        order = np.random.default_rng(epoch_seed).permutation(n)
        return cls(run_seed=int(run_seed), epoch=int(epoch), batch_size=int(batch_size),
                   epoch_seed=epoch_seed, order=order)


def epoch_batches(ds: Dataset, plan: BatchPlan):
    """Yield (features, labels, ids) blocks following the plan's order."""
    if plan.order.shape[0] != ds.n:
        raise ConfigError(f"plan covers {plan.order.shape[0]} samples, dataset has {ds.n}")
    for start in range(0, ds.n, plan.batch_size):
        take = plan.order[start:start + plan.batch_size]
        yield ds.features[take], ds.labels[take], ds.ids[take]
