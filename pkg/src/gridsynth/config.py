"""Run configuration: flat key-value config files, flag overrides, run dirs.

A run is identified by the hash of its effective configuration (excluding
the output directory), so artifacts always re-associate with the exact
settings that produced them.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import UsageError
from .datapipe import read_kv_file
from .nets import ArchConfig
from .trainer import TrainConfig
from .metrics import MetricsConfig


@dataclass
class RunConfig:
    """Every knob of the pipeline; all fields default except input_path."""

    # data
    input_path: str = ""
    timestamp_column: str = "timestamp"
    value_column: str = "power_w"
    household: str = ""
    kind: str = "load"  # load | pv
    timezone: str = "UTC"
    source_period_minutes: int = 5
    day_completeness: float = 1.0
    # model
    model: str = "vaegan"  # vaegan | gan
    latent_dim: int = 32
    channels: int = 32
    kernel_size: int = 3
    dilations: str = "1,2,4,8"
    leaky_slope: float = 0.2
    # training
    epochs: int = 200
    batch_size: int = 32
    lr_g: float = 2e-4
    lr_d: float = 2e-4
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    d_steps_per_g_step: int = 1
    checkpoint_every: int = 0
    fake_source: str = "reconstruction"
    seed: int = 0
    # generation + metrics
    n_synthetic: int = 512
    bins: int = 100
    sigma: str = "median"  # median | positive float
    mmd_on: str = "days"  # days | pooled
    alpha_high: float = 0.9
    alpha_low: float = 0.1
    # output
    out_dir: str = "runs"

    def arch_config(self) -> ArchConfig:
        try:
            dilations = tuple(int(d) for d in self.dilations.split(",") if d.strip())
        except ValueError:
            raise UsageError(f"dilations must be comma-separated integers, got {self.dilations!r}")
        if not dilations or any(d < 1 for d in dilations):
            raise UsageError(f"dilations must be positive, got {self.dilations!r}")
        return ArchConfig(
            latent_dim=self.latent_dim,
            channels=self.channels,
            kernel_size=self.kernel_size,
            dilations=dilations,
            leaky_slope=self.leaky_slope,
        )

    def train_config(self) -> TrainConfig:
        cfg = TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            lr_g=self.lr_g,
            lr_d=self.lr_d,
            adam_beta1=self.adam_beta1,
            adam_beta2=self.adam_beta2,
            adam_eps=self.adam_eps,
            seed=self.seed,
            d_steps_per_g_step=self.d_steps_per_g_step,
            checkpoint_every=self.checkpoint_every,
            fake_source=self.fake_source,
        )
        try:
            cfg.validate()
        except ValueError as exc:
            raise UsageError(str(exc))
        return cfg

    def metrics_config(self) -> MetricsConfig:
        if self.sigma == "median":
            sigma: str | float = "median"
        else:
            try:
                sigma = float(self.sigma)
            except ValueError:
                raise UsageError(f"sigma must be 'median' or a number, got {self.sigma!r}")
            if sigma <= 0:
                raise UsageError(f"sigma must be positive, got {sigma}")
        return MetricsConfig(
            bins=self.bins,
            sigma=sigma,
            mmd_on=self.mmd_on,
            alpha_high=self.alpha_high,
            alpha_low=self.alpha_low,
        )

    def validate(self) -> None:
        if self.model not in ("vaegan", "gan"):
            raise UsageError(f"model must be vaegan|gan, got {self.model!r}")
        if self.kind not in ("load", "pv"):
            raise UsageError(f"kind must be load|pv, got {self.kind!r}")
        if self.mmd_on not in ("days", "pooled"):
            raise UsageError(f"mmd_on must be days|pooled, got {self.mmd_on!r}")
        if self.bins < 1:
            raise UsageError(f"bins must be >= 1, got {self.bins}")
        if self.n_synthetic < 1:
            raise UsageError(f"n_synthetic must be >= 1, got {self.n_synthetic}")
        self.arch_config()
        self.train_config()
        self.metrics_config()


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, raw: str):
    typ = _FIELD_TYPES[key]
    try:
        if typ == "int":
            return int(raw)
        if typ == "float":
            return float(raw)
        return raw
    except ValueError:
        raise UsageError(f"config key {key!r}: cannot parse {raw!r} as {typ}")


def load_run_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Build the effective config: defaults <- config file <- flag overrides."""
    values: dict = {}
    if path is not None:
        for key, raw in read_kv_file(path).items():
            if key not in _FIELD_TYPES:
                raise UsageError(f"unknown config key {key!r} in {path}")
            values[key] = _coerce(key, raw)
    for key, val in (overrides or {}).items():
        if val is None:
            continue
        if key not in _FIELD_TYPES:
            raise UsageError(f"unknown config key {key!r}")
        values[key] = _coerce(key, str(val))
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


def config_lines(cfg: RunConfig) -> list[str]:
    return [f"{f.name} = {getattr(cfg, f.name)}" for f in fields(RunConfig)]


# fields that do not influence ingested data or trained weights; changing
# them must not re-key the run directory (reports echo them instead)
_HASH_EXEMPT = ("out_dir", "n_synthetic", "bins", "sigma", "mmd_on", "alpha_high", "alpha_low")


def config_hash(cfg: RunConfig) -> str:
    """12-hex digest of the data/model/training part of the config."""
    payload = "\n".join(
        line for line in config_lines(cfg)
        if line.split(" = ")[0] not in _HASH_EXEMPT
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:12]


def run_dir(cfg: RunConfig) -> Path:
    return Path(cfg.out_dir) / config_hash(cfg)


def write_effective_config(cfg: RunConfig, path) -> None:
    Path(path).write_text("\n".join(config_lines(cfg)) + "\n", encoding="utf-8")


def describe_defaults() -> str:
    """One line per config key with its default, for --help epilogs."""
    lines = ["config keys (key = default):"]
    for f in fields(RunConfig):
        default = getattr(RunConfig(), f.name)
        lines.append(f"  {f.name} = {default!r}")
    return "\n".join(lines)
