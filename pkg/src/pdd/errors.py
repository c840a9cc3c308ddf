"""Error taxonomy shared across the package.

Two families matter to callers: configuration problems (bad files, bad
parameter combinations) and numerical failures (divergence, non-convergence).
The CLI maps them to exit codes 2 and 3 respectively.
"""


class PddError(Exception):
    """Base class for all package errors."""


class ConfigError(PddError):
    """Invalid configuration, input file, or parameter combination."""


class FormatError(ConfigError):
    """Malformed serialized input (IDX pair or schedule file)."""


class NumericalError(PddError):
    """Numerical failure: divergence or a primitive that did not converge."""


class TrainingDivergence(NumericalError):
    """Non-finite loss or gradient; carries the failing coordinates."""

    def __init__(self, message: str, epoch: int, batch: int):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch
