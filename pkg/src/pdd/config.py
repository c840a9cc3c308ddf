"""Experiment configuration: one YAML file is the source of truth for a run.

Unknown keys are rejected at every nesting level, with the offending field
named, so a typo never silently falls back to a default. Relative paths in
the file (schedule_file, idx paths, output_dir) resolve against the config
file's own directory.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

import yaml

from .data import Dataset, gen_synthetic, load_dataset
from .errors import ConfigError
from .nn import OptimizerSettings
from .policy import DECAY_KINDS, VARIANTS, DropoutPolicy, schedule_read
from .trainer import RunConfig

_TOP_KEYS = {"seed", "variant", "epochs", "revision_epochs", "tau", "gamma",
             "loss_threshold", "decay", "schedule_file", "batch_size", "optimizer",
             "hidden", "data", "output_dir", "figures", "histogram", "sweep"}
_OPT_KEYS = {"kind", "lr", "lr_decay", "weight_decay", "momentum", "beta1", "beta2", "eps"}
_DECAY_KEYS = {"fn", "alpha"}
_SYN_KEYS = {"classes", "per_class", "dims", "spread", "seed", "test_per_class"}
_IDX_KEYS = {"train_images", "train_labels", "test_images", "test_labels", "num_classes"}
_SWEEP_KEYS = {"tau", "epochs"}


def _check_keys(mapping: dict, allowed: set, where: str) -> None:
    unknown = sorted(set(mapping) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} in {where}")


def _get_int(mapping: dict, key: str, where: str, default=None, required=False) -> Optional[int]:
    if key not in mapping:
        if required:
            raise ConfigError(f"missing required key {key!r} in {where}")
        return default
    v = mapping[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{where}.{key} must be an integer, got {v!r}")
    return v


def _get_float(mapping: dict, key: str, where: str, default=None, required=False) -> Optional[float]:
    if key not in mapping:
        if required:
            raise ConfigError(f"missing required key {key!r} in {where}")
        return default
    v = mapping[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}.{key} must be a number, got {v!r}")
    return float(v)


def _get_str(mapping: dict, key: str, where: str, default=None, required=False) -> Optional[str]:
    if key not in mapping:
        if required:
            raise ConfigError(f"missing required key {key!r} in {where}")
        return default
    v = mapping[key]
    if not isinstance(v, str):
        raise ConfigError(f"{where}.{key} must be a string, got {v!r}")
    return v


def _get_bool(mapping: dict, key: str, where: str, default: bool) -> bool:
    if key not in mapping:
        return default
    v = mapping[key]
    if not isinstance(v, bool):
        raise ConfigError(f"{where}.{key} must be true or false, got {v!r}")
    return v


def _get_map(mapping: dict, key: str, where: str, required=False) -> Optional[dict]:
    if key not in mapping:
        if required:
            raise ConfigError(f"missing required key {key!r} in {where}")
        return None
    v = mapping[key]
    if not isinstance(v, dict):
        raise ConfigError(f"{where}.{key} must be a mapping, got {v!r}")
    return v


@dataclass(frozen=True)
class SyntheticSpec:
    classes: int
    per_class: int
    dims: int
    spread: float
    seed: int
    test_per_class: int

    def build(self) -> tuple[Dataset, Dataset]:
        train = gen_synthetic(self.classes, self.per_class, self.dims, self.spread, self.seed)
        test = gen_synthetic(self.classes, self.test_per_class, self.dims, self.spread,
                             self.seed + 1)
        return train, test

    def echo(self) -> dict:
        return {"synthetic": dataclasses.asdict(self)}


@dataclass(frozen=True)
class IdxSpec:
    train_images: str
    train_labels: str
    test_images: str
    test_labels: str
    num_classes: Optional[int]

    def build(self) -> tuple[Dataset, Dataset]:
        train = load_dataset(self.train_images, self.train_labels, self.num_classes)
        test = load_dataset(self.test_images, self.test_labels, train.num_classes)
        return train, test

    def echo(self) -> dict:
        d = dataclasses.asdict(self)
        if d["num_classes"] is None:
            del d["num_classes"]
        return {"idx": d}


@dataclass(frozen=True)
class SweepSpec:
    tau: tuple[float, ...] = ()
    epochs: tuple[int, ...] = ()

    def points(self) -> list[dict]:
        """Cross product of the axes, sorted by tau then epochs."""
        taus: list = sorted(self.tau) if self.tau else [None]
        eps: list = sorted(self.epochs) if self.epochs else [None]
        out = []
        for t in taus:
            for e in eps:
                point = {}
                if t is not None:
                    point["tau"] = t
                if e is not None:
                    point["epochs"] = e
                out.append(point)
        return out


@dataclass(frozen=True)
class ExperimentConfig:
    run: RunConfig
    data: SyntheticSpec | IdxSpec
    output_dir: Optional[Path]
    figures: bool
    histogram: bool
    sweep: Optional[SweepSpec]

    def with_overrides(self, tau: Optional[float] = None,
                       epochs: Optional[int] = None) -> "ExperimentConfig":
        policy = self.run.policy
        changes: dict[str, Any] = {}
        if tau is not None:
            changes["tau"] = tau
        if epochs is not None:
            changes["epochs"] = epochs
        policy = dataclasses.replace(policy, **changes)
        return dataclasses.replace(self, run=dataclasses.replace(self.run, policy=policy),
                                   sweep=None)

    def echo(self) -> dict:
        """Normalized config for the run summary; None fields are dropped."""
        p = self.run.policy
        out: dict[str, Any] = {
            "variant": p.variant,
            "epochs": p.epochs,
            "revision_epochs": p.revision_epochs,
            "seed": self.run.seed,
            "batch_size": self.run.batch_size,
            "hidden": list(self.run.hidden),
            "optimizer": dataclasses.asdict(self.run.optimizer),
            "data": self.data.echo(),
        }
        for name in ("tau", "gamma", "loss_threshold"):
            if getattr(p, name) is not None:
                out[name] = getattr(p, name)
        if p.decay_kind is not None:
            out["decay"] = {"fn": p.decay_kind, "alpha": p.alpha}
        if p.schedule is not None:
            out["schedule_epochs"] = p.schedule.epochs
        return out


def load_config(path: str | Path, seed_override: Optional[int] = None) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc})") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML ({exc})") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a mapping")
    return build_experiment(raw, path.parent, seed_override=seed_override)


def build_experiment(raw: dict, base_dir: str | Path,
                     seed_override: Optional[int] = None) -> ExperimentConfig:
    base_dir = Path(base_dir)
    _check_keys(raw, _TOP_KEYS, "config")

    seed = _get_int(raw, "seed", "config", required=True)
    if seed_override is not None:
        seed = seed_override
    variant = _get_str(raw, "variant", "config", required=True)
    if variant not in VARIANTS:
        raise ConfigError(f"config.variant must be one of {VARIANTS}, got {variant!r}")
    epochs = _get_int(raw, "epochs", "config", required=True)
    revision = _get_int(raw, "revision_epochs", "config", default=1)

    decay_kind = alpha = None
    decay = _get_map(raw, "decay", "config")
    if decay is not None:
        _check_keys(decay, _DECAY_KEYS, "config.decay")
        decay_kind = _get_str(decay, "fn", "config.decay", required=True)
        if decay_kind not in DECAY_KINDS:
            raise ConfigError(f"config.decay.fn must be one of {DECAY_KINDS}, got {decay_kind!r}")
        alpha = _get_float(decay, "alpha", "config.decay", required=True)

    schedule = None
    schedule_file = _get_str(raw, "schedule_file", "config")
    if schedule_file is not None:
        schedule = schedule_read(base_dir / schedule_file)

    policy = DropoutPolicy(
        variant=variant, epochs=epochs, revision_epochs=revision,
        tau=_get_float(raw, "tau", "config"),
        gamma=_get_float(raw, "gamma", "config"),
        decay_kind=decay_kind, alpha=alpha, schedule=schedule,
        loss_threshold=_get_float(raw, "loss_threshold", "config"),
    )

    opt_raw = _get_map(raw, "optimizer", "config") or {}
    _check_keys(opt_raw, _OPT_KEYS, "config.optimizer")
    optimizer = OptimizerSettings(
        kind=_get_str(opt_raw, "kind", "config.optimizer", default="adamw"),
        learning_rate=_get_float(opt_raw, "lr", "config.optimizer", default=3e-4),
        lr_decay=_get_float(opt_raw, "lr_decay", "config.optimizer", default=0.97),
        weight_decay=_get_float(opt_raw, "weight_decay", "config.optimizer", default=0.0),
        momentum=_get_float(opt_raw, "momentum", "config.optimizer", default=0.9),
        beta1=_get_float(opt_raw, "beta1", "config.optimizer", default=0.9),
        beta2=_get_float(opt_raw, "beta2", "config.optimizer", default=0.999),
        eps=_get_float(opt_raw, "eps", "config.optimizer", default=1e-8),
    )

    hidden_raw = raw.get("hidden", [128, 64])
    if (not isinstance(hidden_raw, list) or not hidden_raw
            or any(isinstance(h, bool) or not isinstance(h, int) for h in hidden_raw)):
        raise ConfigError(f"config.hidden must be a non-empty list of integers, got {hidden_raw!r}")

    run = RunConfig(policy=policy, seed=seed,
                    batch_size=_get_int(raw, "batch_size", "config", default=32),
                    optimizer=optimizer, hidden=tuple(hidden_raw))

    data = _build_data(_get_map(raw, "data", "config", required=True), base_dir)

    out = _get_str(raw, "output_dir", "config")
    sweep = _build_sweep(_get_map(raw, "sweep", "config"))
    return ExperimentConfig(
        run=run, data=data,
        output_dir=(base_dir / out) if out is not None else None,
        figures=_get_bool(raw, "figures", "config", default=True),
        histogram=_get_bool(raw, "histogram", "config", default=True),
        sweep=sweep,
    )


def _build_data(raw: dict, base_dir: Path) -> SyntheticSpec | IdxSpec:
    _check_keys(raw, {"synthetic", "idx"}, "config.data")
    if ("synthetic" in raw) == ("idx" in raw):
        raise ConfigError("config.data needs exactly one of 'synthetic' or 'idx'")
    if "synthetic" in raw:
        syn = raw["synthetic"]
        if not isinstance(syn, dict):
            raise ConfigError("config.data.synthetic must be a mapping")
        _check_keys(syn, _SYN_KEYS, "config.data.synthetic")
        where = "config.data.synthetic"
        return SyntheticSpec(
            classes=_get_int(syn, "classes", where, required=True),
            per_class=_get_int(syn, "per_class", where, required=True),
            dims=_get_int(syn, "dims", where, default=16),
            spread=_get_float(syn, "spread", where, default=0.1),
            seed=_get_int(syn, "seed", where, default=0),
            test_per_class=_get_int(syn, "test_per_class", where, default=100),
        )
    idx = raw["idx"]
    if not isinstance(idx, dict):
        raise ConfigError("config.data.idx must be a mapping")
    _check_keys(idx, _IDX_KEYS, "config.data.idx")
    where = "config.data.idx"
    paths = {key: str(base_dir / _get_str(idx, key, where, required=True))
             for key in ("train_images", "train_labels", "test_images", "test_labels")}
    return IdxSpec(num_classes=_get_int(idx, "num_classes", where), **paths)


def _build_sweep(raw: Optional[dict]) -> Optional[SweepSpec]:
    if raw is None:
        return None
    _check_keys(raw, _SWEEP_KEYS, "config.sweep")
    taus: tuple[float, ...] = ()
    if "tau" in raw:
        v = raw["tau"]
        if not isinstance(v, list) or not v:
            raise ConfigError("config.sweep.tau must be a non-empty list")
        taus = tuple(_as_float(x, "config.sweep.tau") for x in v)
    eps: tuple[int, ...] = ()
    if "epochs" in raw:
        v = raw["epochs"]
        if not isinstance(v, list) or not v:
            raise ConfigError("config.sweep.epochs must be a non-empty list")
        for x in v:
            if isinstance(x, bool) or not isinstance(x, int):
                raise ConfigError(f"config.sweep.epochs entries must be integers, got {x!r}")
        eps = tuple(v)
    if not taus and not eps:
        raise ConfigError("config.sweep needs at least one axis (tau or epochs)")
    return SweepSpec(tau=taus, epochs=eps)


def _as_float(x, where: str) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ConfigError(f"{where} entries must be numbers, got {x!r}")
    return float(x)
