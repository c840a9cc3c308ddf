"""Fully connected classifier with exact gradients on masked batches.

Everything is float64 numpy. Hidden layers use ReLU, the output layer is
identity, and probabilities come from a max-shifted softmax. The loss is the
mean cross-entropy over an explicit subset of batch rows, so the gradient of
a partially masked batch is an exact analytic quantity rather than a zeroed
approximation; finite differences reproduce it to tight tolerance.

Wherever a row is excluded from the mask its logits still exist (the forward
pass always covers the full batch) but it contributes exactly zero gradient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, NumericalError

OPTIMIZER_KINDS = ("adamw", "sgd-momentum")

# Sub-stream tag for parameter initialization; epoch shuffles and per-batch
# selections use tags 1 and 2 so the three streams never collide.
_INIT_STREAM = 0


@dataclass
class ParameterSet:
    """Ordered dense layers; ``weights[i]`` is [out, in], ``biases[i]`` is [out]."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        if len(self.weights) < 1 or len(self.weights) != len(self.biases):
            raise ConfigError("parameter set needs matching weight/bias lists, at least one layer")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.dtype != np.float64 or b.dtype != np.float64:
                raise ConfigError(f"layer {i}: parameters must be float64")
            if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
                raise ConfigError(f"layer {i}: weight [out, in] and bias [out] shapes disagree")
            if i > 0 and w.shape[1] != self.weights[i - 1].shape[0]:
                raise ConfigError(f"layer {i}: input width {w.shape[1]} does not chain "
                                  f"from previous output {self.weights[i - 1].shape[0]}")
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise ConfigError(f"layer {i}: non-finite parameter")

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[0]

    def arrays(self) -> list[np.ndarray]:
        """Flat [W1, b1, W2, b2, ...] view; entries alias the live parameters."""
        out: list[np.ndarray] = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self) -> "ParameterSet":
        return ParameterSet([w.copy() for w in self.weights],
                            [b.copy() for b in self.biases])


def init_params(widths: Sequence[int], seed: int) -> ParameterSet:
    """Build layers for widths [in, hidden..., out].

    Weights are uniform on +-sqrt(6 / (fan_in + fan_out)), biases start at
    zero. The draw order is layer by layer from a stream derived from the run
    seed, so identical seeds give bitwise-identical parameters.
    """
    if len(widths) < 2 or any(int(w) < 1 for w in widths):
        raise ConfigError(f"widths must be at least [in, out] with positive entries, got {list(widths)}")
    rng = np.random.default_rng([int(seed), _INIT_STREAM])
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out, dtype=np.float64))
    return ParameterSet(weights, biases)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax, shifted by the row max for stability."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


@dataclass
class Forward:
    """Full-batch forward pass with the caches backprop needs."""

    logits: np.ndarray
    probabilities: np.ndarray
    inputs: list[np.ndarray] = field(repr=False)    # input to each layer
    preacts: list[np.ndarray] = field(repr=False)   # pre-activation of each layer

    @property
    def n_rows(self) -> int:
        return self.logits.shape[0]


def forward(params: ParameterSet, x: np.ndarray) -> Forward:
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] != params.in_dim:
        raise ConfigError(f"input must be [n, {params.in_dim}], got {a.shape}")
    inputs, preacts = [], []
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(a)
        z = a @ w.T + b
        preacts.append(z)
        a = np.maximum(z, 0.0) if i < params.n_layers - 1 else z
    return Forward(logits=a, probabilities=softmax(a), inputs=inputs, preacts=preacts)


def per_sample_loss(fwd: Forward, labels: np.ndarray) -> np.ndarray:
    """Cross-entropy of every row, computed from logits via logsumexp."""
    z = fwd.logits
    m = z.max(axis=1)
    lse = m + np.log(np.exp(z - m[:, None]).sum(axis=1))
    return lse - z[np.arange(z.shape[0]), labels]


def loss_and_grad(params: ParameterSet, fwd: Forward, labels: np.ndarray,
                  mask_indices: np.ndarray) -> tuple[float, list[tuple[np.ndarray, np.ndarray]]]:
    """Mean cross-entropy over ``mask_indices`` and its exact gradient.

    Rows outside the mask contribute nothing: dlogits is (p - onehot) / k on
    masked rows and zero elsewhere, then backpropagated through the cached
    activations. Requires a non-empty mask; empty masks are a skip decision
    that belongs to the caller.
    """
    rows = np.asarray(mask_indices, dtype=np.int64)
    k = rows.size
    if k == 0:
        raise ConfigError("loss_and_grad needs a non-empty mask; empty masks skip the step")
    labels = np.asarray(labels, dtype=np.int64)
    loss = float(per_sample_loss(fwd, labels)[rows].mean())

    d_z = np.zeros_like(fwd.logits)
    d_z[rows] = fwd.probabilities[rows]
    d_z[rows, labels[rows]] -= 1.0
    d_z[rows] /= k

    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * params.n_layers  # type: ignore[list-item]
    for i in range(params.n_layers - 1, -1, -1):
        grads[i] = (d_z.T @ fwd.inputs[i], d_z.sum(axis=0))
        if i > 0:
            d_a = d_z @ params.weights[i]
            d_z = d_a * (fwd.preacts[i - 1] > 0.0)
    return loss, grads


@dataclass(frozen=True)
class OptimizerSettings:
    """Hyperparameters; learning rate decays by ``lr_decay`` after every epoch."""

    kind: str = "adamw"
    learning_rate: float = 3e-4
    lr_decay: float = 0.97
    weight_decay: float = 0.0
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.kind not in OPTIMIZER_KINDS:
            raise ConfigError(f"unknown optimizer kind {self.kind!r}, expected one of {OPTIMIZER_KINDS}")
        if not (self.learning_rate > 0):
            raise ConfigError("learning_rate must be positive")
        if not (0 < self.lr_decay <= 1):
            raise ConfigError("lr_decay must be in (0, 1]")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be non-negative")
        if not (0 <= self.momentum < 1):
            raise ConfigError("momentum must be in [0, 1)")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("betas must be in [0, 1)")
        if not (self.eps > 0):
            raise ConfigError("eps must be positive")


@dataclass
class OptimizerState:
    """Mutable optimizer slots plus the stepped learning rate."""

    settings: OptimizerSettings
    learning_rate: float
    step: int = 0
    slot_m: list[np.ndarray] = field(default_factory=list, repr=False)
    slot_v: list[np.ndarray] = field(default_factory=list, repr=False)

    @classmethod
    def create(cls, settings: OptimizerSettings, params: ParameterSet) -> "OptimizerState":
        zeros = [np.zeros_like(a) for a in params.arrays()]
        return cls(settings=settings, learning_rate=settings.learning_rate,
                   slot_m=zeros, slot_v=[np.zeros_like(a) for a in params.arrays()])

    def advance_epoch(self, completed_epochs: int) -> None:
        """Step decay with period 1: lr = lr0 * decay^completed_epochs."""
        self.learning_rate = self.settings.learning_rate * self.settings.lr_decay ** completed_epochs


def optimizer_step(state: OptimizerState, params: ParameterSet,
                   grads: list[tuple[np.ndarray, np.ndarray]]) -> None:
    """One in-place update. Weight decay is decoupled for both kinds."""
    flat = []
    for dw, db in grads:
        flat.extend((dw, db))
    for i, g in enumerate(flat):
        if not np.isfinite(g).all():
            raise NumericalError(f"non-finite gradient in parameter array {i}")
    s = state.settings
    lr = state.learning_rate
    if s.kind == "adamw":
        state.step += 1
        t = state.step
        c1 = 1.0 - s.beta1 ** t
        c2 = 1.0 - s.beta2 ** t
        for p, g, m, v in zip(params.arrays(), flat, state.slot_m, state.slot_v):
            m *= s.beta1
            m += (1.0 - s.beta1) * g
            v *= s.beta2
            v += (1.0 - s.beta2) * g * g
            p -= lr * ((m / c1) / (np.sqrt(v / c2) + s.eps) + s.weight_decay * p)
    else:  # sgd-momentum
        state.step += 1
        for p, g, vel in zip(params.arrays(), flat, state.slot_m):
            vel *= s.momentum
            vel += g
            p -= lr * (vel + s.weight_decay * p)
