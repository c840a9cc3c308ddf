"""Progressive data dropout: train on the samples that still need it.

The package trains a small dense classifier while a policy decides, batch by
batch, which rows actually backpropagate. Difficulty-based selection keeps
the rows the model is unsure about; random policies reproduce the same
per-epoch budgets without looking at the model; every run reports its cost
as effective epochs (total backpropagated samples over dataset size).
"""

from .data import (BatchPlan, Dataset, batch_sizes, epoch_batches, gen_synthetic,
                   load_dataset, read_idx_images, read_idx_labels, save_dataset,
                   write_idx_images, write_idx_labels)
from .errors import (ConfigError, FormatError, NumericalError, PddError,
                     TrainingDivergence)
from .nn import (Forward, OptimizerSettings, OptimizerState, ParameterSet, forward,
                 init_params, loss_and_grad, optimizer_step, per_sample_loss, softmax)
from .policy import (DECAY_KINDS, VARIANTS, DropoutPolicy, ScheduleRecord, beta_cdf,
                     decay_count, decay_value, round_half_up, schedule_read,
                     schedule_write, smrd_count_model, srd_effective_epochs_closed_form,
                     srd_fraction, srd_retained)
from .selection import (BatchMask, apportion_counts, full_mask, select_by_confidence,
                        select_by_count, select_by_loss, select_random_k,
                        select_random_matched)
from .trainer import (RunConfig, RunMetrics, dry_run_schedule, evaluate,
                      record_dbpd_schedule, run_training)

__version__ = "0.1.0"

__all__ = [
    "BatchMask", "BatchPlan", "ConfigError", "DECAY_KINDS", "Dataset",
    "DropoutPolicy", "FormatError", "Forward", "NumericalError",
    "OptimizerSettings", "OptimizerState", "ParameterSet", "PddError",
    "RunConfig", "RunMetrics", "ScheduleRecord", "TrainingDivergence", "VARIANTS",
    "apportion_counts", "batch_sizes", "beta_cdf", "decay_count", "decay_value",
    "dry_run_schedule", "epoch_batches", "evaluate", "forward", "full_mask",
    "gen_synthetic", "init_params", "load_dataset", "loss_and_grad",
    "optimizer_step", "per_sample_loss", "read_idx_images", "read_idx_labels",
    "record_dbpd_schedule", "round_half_up", "run_training", "save_dataset",
    "schedule_read", "schedule_write", "select_by_confidence", "select_by_count",
    "select_by_loss", "select_random_k", "select_random_matched", "smrd_count_model",
    "softmax", "srd_effective_epochs_closed_form", "srd_fraction", "srd_retained",
    "write_idx_images", "write_idx_labels",
]
