"""Dropout policies and their analytic count models.

A policy decides, per epoch, how much of the dataset gets backpropagated.
Two families exist:

* model-driven: dbpd keeps rows the classifier is still unsure about
  (max softmax probability strictly below tau, or misclassified when tau is
  zero); smrd-inline keeps a random subset sized to match that mask.
* count-driven: srd follows a geometric schedule, analytic follows one of
  five decay functions, smrd-replay follows a recorded schedule file.

Count-driven schedules are exact at epoch granularity: the per-epoch target
is an integer and the trainer apportions it across batches, so effective
epochs of a dry run and of a real run agree bit for bit. Every schedule ends
with at least one full pass (the revision phase); with R revision epochs the
decayed phase covers epochs 1..E-max(R,1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .errors import ConfigError, FormatError, NumericalError

VARIANTS = ("baseline", "dbpd", "srd", "smrd-inline", "smrd-replay", "analytic")
DECAY_KINDS = ("power-law", "exponential", "logarithmic", "inverse-linear",
               "sigmoid-complement")

SCHEDULE_HEADER = "epoch,retained"


def round_half_up(x: float) -> int:
    """Round to nearest integer with halves going up (2.5 -> 3)."""
    return int(math.floor(x + 0.5))


# ---------------------------------------------------------------------------
# Scalar random dropout (geometric schedule)
# ---------------------------------------------------------------------------

def srd_fraction(gamma: float, epoch: int, epochs: int, revision: int) -> float:
    """Retained fraction at a 1-based epoch: gamma^epoch while decaying, 1.0 after.

    The final max(revision, 1) epochs are always full passes; gamma = 1 keeps
    everything everywhere.
    """
    _check_srd(gamma, epochs, revision)
    if not (1 <= epoch <= epochs):
        raise ConfigError(f"epoch {epoch} outside [1, {epochs}]")
    if epoch > epochs - max(revision, 1):
        return 1.0
    return gamma ** epoch


def srd_retained(gamma: float, epoch: int, epochs: int, revision: int, n: int) -> int:
    """Integer per-epoch retained count: round_half_up(n * fraction)."""
    return round_half_up(n * srd_fraction(gamma, epoch, epochs, revision))


def srd_effective_epochs_closed_form(gamma: float, epochs: int, revision: int) -> float:
    """Effective epochs of the geometric schedule at dataset granularity.

    max(R, 1) + sum of gamma^e over the decayed epochs; a counted dry run
    differs only by per-epoch rounding, at most 0.5/N per epoch.
    """
    _check_srd(gamma, epochs, revision)
    r_eff = max(revision, 1)
    decayed = epochs - r_eff
    if gamma == 1.0:
        return float(epochs)
    return r_eff + gamma * (1.0 - gamma ** decayed) / (1.0 - gamma)


def _check_srd(gamma: float, epochs: int, revision: int) -> None:
    if not (0.0 < gamma <= 1.0):
        raise ConfigError(f"gamma must be in (0, 1], got {gamma}")
    if epochs < 1:
        raise ConfigError(f"epochs must be >= 1, got {epochs}")
    if not (0 <= revision < epochs):
        raise ConfigError(f"revision epochs {revision} outside [0, {epochs})")


# ---------------------------------------------------------------------------
# Analytic decay family
# ---------------------------------------------------------------------------

def decay_value(kind: str, alpha: float, x: float) -> float:
    """Unnormalized decay h(x) for one of the five supported shapes."""
    if kind not in DECAY_KINDS:
        raise ConfigError(f"unknown decay kind {kind!r}, expected one of {DECAY_KINDS}")
    if not (alpha > 0):
        raise ConfigError(f"alpha must be positive, got {alpha}")
    if kind == "power-law":
        return x ** -alpha
    if kind == "exponential":
        return math.exp(-alpha * x)
    if kind == "logarithmic":
        if x + alpha <= 1.0:
            raise ConfigError(f"logarithmic decay needs x + alpha > 1, got {x + alpha}")
        return 1.0 / math.log(x + alpha)
    if kind == "inverse-linear":
        return 1.0 / (x + alpha)
    # sigmoid-complement
    return 1.0 - 1.0 / (1.0 + math.exp(-alpha * x))


def decay_count(kind: str, alpha: float, x: int, n: int, epochs: int) -> int:
    """Per-epoch retained count under a decay shape, anchored to the dataset.

    Normalized so epoch 1 retains exactly n, and forced back to n at the
    final epoch (the revision pass). Intermediate epochs round half up.
    """
    if n < 1:
        raise ConfigError(f"n must be >= 1, got {n}")
    if not (1 <= x <= epochs):
        raise ConfigError(f"x = {x} outside [1, {epochs}]")
    if x == epochs:
        return n
    return round_half_up(n * decay_value(kind, alpha, x) / decay_value(kind, alpha, 1))


# ---------------------------------------------------------------------------
# Regularized incomplete beta and the confidence-count model
# ---------------------------------------------------------------------------

def beta_cdf(x: float, a: float, b: float) -> float:
    """Regularized incomplete beta I_x(a, b), i.e. the Beta(a, b) CDF.

    Continued-fraction evaluation; for x past the distribution's bulk the
    symmetry I_x(a, b) = 1 - I_{1-x}(b, a) keeps the fraction convergent.
    Absolute error is well below 1e-10 for moderate shape parameters.
    """
    if not (a > 0 and b > 0):
        raise ConfigError(f"shape parameters must be positive, got a={a}, b={b}")
    if not (0.0 <= x <= 1.0):
        raise ConfigError(f"x must be in [0, 1], got {x}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    ln_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                + a * math.log(x) + b * math.log1p(-x))
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(ln_front) * _beta_contfrac(a, b, x) / a
    return 1.0 - math.exp(ln_front) * _beta_contfrac(b, a, 1.0 - x) / b


def _beta_contfrac(a: float, b: float, x: float, max_iter: int = 300) -> float:
    """Modified Lentz evaluation of the incomplete-beta continued fraction."""
    tiny = 1e-300
    eps = 1e-16
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        coef = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + coef * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + coef / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        coef = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + coef * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + coef / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise NumericalError(f"incomplete beta did not converge for a={a}, b={b}, x={x}")


def smrd_count_model(tau: float, a: float, b: float, n: int) -> int:
    """Modelled per-epoch retained count: round_half_up(n * I_tau(a, b)).

    Utility only; training couples smrd-inline masks to measured confidence
    masks rather than to this model.
    """
    if n < 1:
        raise ConfigError(f"n must be >= 1, got {n}")
    return round_half_up(n * beta_cdf(tau, a, b))


# ---------------------------------------------------------------------------
# Schedule records (per-epoch retained counts) and their file format
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScheduleRecord:
    """Retained count for every epoch 1..E of a run over n samples."""

    retained: tuple[int, ...]
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError(f"dataset size must be >= 1, got {self.n}")
        if len(self.retained) < 1:
            raise ConfigError("schedule needs at least one epoch")
        for e, k in enumerate(self.retained, start=1):
            if not (0 <= k <= self.n):
                raise ConfigError(f"epoch {e}: retained {k} outside [0, {self.n}]")
        if self.retained[-1] != self.n:
            raise ConfigError("missing revision epoch: schedule must end with a full pass "
                              f"(last retained {self.retained[-1]} != {self.n})")

    @property
    def epochs(self) -> int:
        return len(self.retained)

    @property
    def effective_epochs(self) -> float:
        return sum(self.retained) / self.n

    def rows(self) -> list[tuple[int, int]]:
        return [(e, k) for e, k in enumerate(self.retained, start=1)]


def schedule_write(record: ScheduleRecord, path: str | Path) -> None:
    """Write ``epoch,retained`` header plus one ``e,k`` line per epoch."""
    lines = [SCHEDULE_HEADER]
    lines.extend(f"{e},{k}" for e, k in record.rows())
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def schedule_read(path: str | Path, n: Optional[int] = None) -> ScheduleRecord:
    """Parse a schedule file, validating shape and the final full pass.

    The format does not carry the dataset size; when ``n`` is not given it
    is taken from the final (revision) entry. Passing ``n`` additionally
    rejects files whose counts exceed the dataset.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise FormatError(f"{path}: cannot read schedule file ({exc})") from exc
    lines = text.splitlines()
    if not lines or lines[0].strip() != SCHEDULE_HEADER:
        raise FormatError(f"{path}: line 1: expected header {SCHEDULE_HEADER!r}")
    retained: list[int] = []
    for lineno, raw in enumerate(lines[1:], start=2):
        if raw.strip() == "":
            raise FormatError(f"{path}: line {lineno}: blank line")
        parts = raw.split(",")
        if len(parts) != 2:
            raise FormatError(f"{path}: line {lineno}: expected 'epoch,retained', got {raw!r}")
        try:
            epoch, k = int(parts[0]), int(parts[1])
        except ValueError as exc:
            raise FormatError(f"{path}: line {lineno}: non-integer field in {raw!r}") from exc
        if epoch != lineno - 1:
            raise FormatError(f"{path}: line {lineno}: epoch {epoch} out of order, expected {lineno - 1}")
        if k < 0:
            raise FormatError(f"{path}: line {lineno}: negative retained count {k}")
        retained.append(k)
    if not retained:
        raise FormatError(f"{path}: no schedule entries")
    size = n if n is not None else retained[-1]
    for lineno, k in enumerate(retained, start=2):
        if k > size:
            raise FormatError(f"{path}: line {lineno}: retained {k} exceeds dataset size {size}")
    if retained[-1] != size:
        raise FormatError(f"{path}: missing revision epoch: last retained "
                          f"{retained[-1]} != dataset size {size}")
    return ScheduleRecord(tuple(retained), size)


# ---------------------------------------------------------------------------
# Policy
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DropoutPolicy:
    """Variant choice plus exactly the parameters that variant needs.

    epochs is the total count E; revision_epochs R is the trailing stretch of
    full passes. dbpd and smrd-inline require R >= 1. srd and analytic accept
    R = 0 because their count models force a final full pass regardless.
    smrd-replay takes E and the counts from its schedule record.
    """

    variant: str
    epochs: int
    revision_epochs: int = 1
    tau: Optional[float] = None
    gamma: Optional[float] = None
    decay_kind: Optional[str] = None
    alpha: Optional[float] = None
    schedule: Optional[ScheduleRecord] = None
    loss_threshold: Optional[float] = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}, expected one of {VARIANTS}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if not (0 <= self.revision_epochs < self.epochs):
            raise ConfigError(f"revision epochs {self.revision_epochs} outside [0, {self.epochs})")
        self._require_fields()
        if self.variant in ("dbpd", "smrd-inline"):
            if self.revision_epochs < 1:
                raise ConfigError(f"{self.variant} requires at least one revision epoch")
            if self.loss_threshold is None:
                if self.tau is None:
                    raise ConfigError(f"{self.variant} requires tau (or loss_threshold)")
                if not (0.0 <= self.tau <= 1.0):
                    raise ConfigError(f"tau must be in [0, 1], got {self.tau}")
            elif self.tau is not None:
                raise ConfigError("tau and loss_threshold are mutually exclusive")
        if self.variant == "srd":
            if self.gamma is None:
                raise ConfigError("srd requires gamma")
            _check_srd(self.gamma, self.epochs, self.revision_epochs)
        if self.variant == "analytic":
            if self.decay_kind is None or self.alpha is None:
                raise ConfigError("analytic requires decay_kind and alpha")
            decay_value(self.decay_kind, self.alpha, 1.0)
        if self.variant == "smrd-replay":
            if self.schedule is None:
                raise ConfigError("smrd-replay requires a schedule record")
            if self.schedule.epochs != self.epochs:
                raise ConfigError(f"epochs {self.epochs} does not match the schedule's "
                                  f"{self.schedule.epochs}")

    def _require_fields(self) -> None:
        allowed = {
            "baseline": set(),
            "dbpd": {"tau", "loss_threshold"},
            "srd": {"gamma"},
            "smrd-inline": {"tau", "loss_threshold"},
            "smrd-replay": {"schedule"},
            "analytic": {"decay_kind", "alpha"},
        }[self.variant]
        given = {name for name in ("tau", "gamma", "decay_kind", "alpha", "schedule",
                                   "loss_threshold")
                 if getattr(self, name) is not None}
        extras = given - allowed
        if extras:
            raise ConfigError(f"{self.variant} does not take {sorted(extras)}")

    @property
    def count_driven(self) -> bool:
        """True when per-epoch mask sizes are model-free."""
        return self.variant in ("srd", "smrd-replay", "analytic")

    @property
    def variant_end(self) -> int:
        """Last epoch of the reduced-data phase; later epochs are full passes."""
        if self.variant == "baseline":
            return 0
        if self.variant in ("srd", "analytic"):
            return self.epochs - max(self.revision_epochs, 1)
        if self.variant == "smrd-replay":
            return self.epochs  # the record covers every epoch, revision included
        return self.epochs - self.revision_epochs

    def retained_target(self, epoch: int, n: int) -> Optional[int]:
        """Exact per-epoch retained count, or None when the epoch runs full.

        Only count-driven variants produce targets; dbpd and smrd-inline
        sizes depend on the model so they have no precomputable count.
        """
        if not (1 <= epoch <= self.epochs):
            raise ConfigError(f"epoch {epoch} outside [1, {self.epochs}]")
        if not self.count_driven or epoch > self.variant_end:
            return None
        if self.variant == "srd":
            return srd_retained(self.gamma, epoch, self.epochs, self.revision_epochs, n)
        if self.variant == "analytic":
            return decay_count(self.decay_kind, self.alpha, epoch, n, self.epochs)
        if self.schedule.n != n:
            raise ConfigError(f"schedule was recorded over {self.schedule.n} samples, "
                              f"dataset has {n}")
        return self.schedule.retained[epoch - 1]
