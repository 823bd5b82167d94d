"""Alternating optimization of the VAE-GAN and the vanilla-GAN baseline.

Training is single-threaded and fully deterministic for a given seed: model
init, epoch shuffles and every latent/noise draw come from one Generator
stream, so two runs with equal config produce bit-identical checkpoints and
a resumed run reproduces the interrupted run's log suffix exactly.

Per batch, the VAE-GAN schedule is: (1) one or more discriminator updates
on l_D over the real batch, the fake batch and a pure-noise batch, (2) an
encoder update on l_reconstruction (prior + squared error), (3) a generator
update on l_generator (reconstruction + adversarial term).
"""
from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import nets
from .datapipe import DayMatrix
from .errors import TrainingDiverged

VAEGAN_LOSS_KEYS = (
    "l_prior", "recon_mse", "l_reconstruction", "l_dG", "l_generator",
    "l_real", "l_fake", "l_noise", "l_D",
)
GAN_LOSS_KEYS = ("g_loss", "d_loss")


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 32
    lr_g: float = 2e-4
    lr_d: float = 2e-4
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    d_steps_per_g_step: int = 1
    checkpoint_every: int = 0  # epochs between periodic checkpoints; 0 = final only
    fake_source: str = "reconstruction"  # what D treats as fake: reconstruction | prior

    def validate(self) -> None:
        if self.epochs < 1 or self.batch_size < 1 or self.d_steps_per_g_step < 1:
            raise ValueError("epochs, batch_size and d_steps_per_g_step must be >= 1")
        if self.lr_g < 0 or self.lr_d < 0:
            raise ValueError("learning rates must be non-negative")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1 and self.adam_eps > 0):
            raise ValueError("invalid Adam hyperparameters")
        if self.fake_source not in ("reconstruction", "prior"):
            raise ValueError(f"fake_source must be reconstruction|prior, got {self.fake_source!r}")


class TrainLog:
    """Per-step loss records plus wall-clock seconds per epoch."""

    def __init__(self, loss_keys):
        self.loss_keys = tuple(loss_keys)
        self.steps: list[dict] = []
        self.epoch_wall: list[tuple[int, float]] = []

    def record(self, step: int, epoch: int, losses: dict) -> None:
        row = {"step": step, "epoch": epoch}
        row.update({k: losses[k] for k in self.loss_keys})
        self.steps.append(row)

    def epoch_mean(self, epoch: int, key: str) -> float:
        vals = [r[key] for r in self.steps if r["epoch"] == epoch]
        return float(np.mean(vals))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(("step", "epoch") + self.loss_keys)
            for row in self.steps:
                writer.writerow([row["step"], row["epoch"]] + [repr(row[k]) for k in self.loss_keys])

    def wall_to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(("epoch", "wall_seconds"))
            for epoch, wall in self.epoch_wall:
                writer.writerow([epoch, repr(wall)])


def adam_step(param: ad.Param, lr: float, beta1: float, beta2: float, eps: float, t: int) -> None:
    """One in-place Adam update with bias correction; t is the 1-based step."""
    g = param.grad
    param.moment1 *= beta1
    param.moment1 += (1.0 - beta1) * g
    param.moment2 *= beta2
    param.moment2 += (1.0 - beta2) * g * g
    m_hat = param.moment1 / (1.0 - beta1**t)
    v_hat = param.moment2 / (1.0 - beta2**t)
    param.value -= lr * m_hat / (np.sqrt(v_hat) + eps)


class AdamOptimizer:
    """Adam over one parameter group with a shared step counter."""

    def __init__(self, params, lr, beta1, beta2, eps, t: int = 0):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = t

    def step(self) -> None:
        self.t += 1
        for p in self.params:
            adam_step(p, self.lr, self.beta1, self.beta2, self.eps, self.t)


def _check_finite(losses: dict, step: int) -> None:
    bad = {k: v for k, v in losses.items() if not math.isfinite(v)}
    if bad:
        raise TrainingDiverged(
            f"non-finite loss at step {step}: {sorted(bad)}", step=step, losses=losses
        )


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    perm = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield perm[start : start + batch_size]


@dataclass
class _Session:
    """Everything shared by the two training loops."""

    model: object
    cfg: TrainConfig
    rng: np.random.Generator
    log: TrainLog
    optimizers: dict
    start_epoch: int
    step: int
    norm_meta: dict | None
    checkpoint_dir: Path | None
    epoch: int = 0

    def save(self, path) -> None:
        nets.save_checkpoint(
            path,
            self.model,
            seed=self.cfg.seed,
            epoch=self.epoch,
            step=self.step,
            adam_steps={name: opt.t for name, opt in self.optimizers.items()},
            rng=self.rng,
            norm_meta=self.norm_meta,
            train_cfg=asdict(self.cfg),
        )

    def maybe_checkpoint(self) -> None:
        if self.checkpoint_dir is None:
            return
        every = self.cfg.checkpoint_every
        if every > 0 and self.epoch % every == 0 and self.epoch < self.cfg.epochs:
            self.save(self.checkpoint_dir / f"checkpoint_ep{self.epoch:04d}.npz")


def _init_session(data, cfg, arch, resume, model_cls, loss_keys, lr_groups, checkpoint_dir):
    cfg.validate()
    if checkpoint_dir is not None:
        checkpoint_dir.mkdir(parents=True, exist_ok=True)
    if isinstance(data, DayMatrix):
        if not data.normalized:
            raise ValueError("training data must be normalized")
        values = data.values
        norm_meta = {"norm_min": data.norm_min, "norm_max": data.norm_max, "kind": data.kind}
    else:
        values = np.asarray(data, dtype=np.float64)
        norm_meta = None

    if resume is not None:
        if resume.kind != model_cls.kind:
            raise ValueError(f"checkpoint is for {resume.kind!r}, expected {model_cls.kind!r}")
        model = nets.model_from_checkpoint(resume)
        rng = nets.rng_from_state(resume.rng_state)
        start_epoch = resume.epoch
        step = resume.step
        adam_t = resume.adam_steps
        norm_meta = resume.norm_meta or norm_meta
    else:
        rng = np.random.default_rng(cfg.seed)
        model = model_cls(arch or nets.ArchConfig(), rng)
        start_epoch = 0
        step = 0
        adam_t = {}

    optimizers = {
        name: AdamOptimizer(
            group, lr_groups[name], cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps,
            t=adam_t.get(name, 0),
        )
        for name, group in model.param_groups().items()
    }
    session = _Session(
        model=model, cfg=cfg, rng=rng, log=TrainLog(loss_keys), optimizers=optimizers,
        start_epoch=start_epoch, step=step, norm_meta=norm_meta, checkpoint_dir=checkpoint_dir,
        epoch=start_epoch,
    )
    return session, values


def train_vaegan(
    data,
    cfg: TrainConfig,
    arch: nets.ArchConfig | None = None,
    resume: nets.Checkpoint | None = None,
    checkpoint_dir=None,
) -> tuple[nets.VaeGanModel, TrainLog]:
    """Train encoder + generator + discriminator on normalized day profiles."""
    checkpoint_dir = Path(checkpoint_dir) if checkpoint_dir is not None else None
    session, values = _init_session(
        data, cfg, arch, resume, nets.VaeGanModel, VAEGAN_LOSS_KEYS,
        {"encoder": cfg.lr_g, "generator": cfg.lr_g, "discriminator": cfg.lr_d},
        checkpoint_dir,
    )
    model, rng, log = session.model, session.rng, session.log
    graph = nets.build_vaegan_graph(model, fake_source=cfg.fake_source)
    latent = model.arch.latent_dim
    seq_len = model.arch.seq_len

    for epoch in range(session.start_epoch + 1, cfg.epochs + 1):
        t0 = time.perf_counter()
        for batch_idx in _batches(len(values), cfg.batch_size, rng):
            x = values[batch_idx][:, None, :]
            b = x.shape[0]
            bind = {
                graph.x: x,
                graph.eps: rng.standard_normal((b, latent)),
                graph.noise: rng.standard_normal((b, 1, seq_len)),
            }
            if graph.z_prior is not None:
                bind[graph.z_prior] = rng.standard_normal((b, latent))
            session.step += 1

            for _ in range(cfg.d_steps_per_g_step):
                ad.forward(graph.nodes["l_D"], bind)
                ad.backward(graph.nodes["l_D"])
                session.optimizers["discriminator"].step()

            ad.forward(graph.nodes["l_reconstruction"], bind)
            ad.backward(graph.nodes["l_reconstruction"])
            session.optimizers["encoder"].step()

            ad.forward(graph.nodes["l_generator"], bind)
            ad.backward(graph.nodes["l_generator"])
            session.optimizers["generator"].step()

            # snapshot: D terms from the last D forward, G terms from the G forward
            losses = graph.bundle()
            _check_finite(losses, session.step)
            log.record(session.step, epoch, losses)
        log.epoch_wall.append((epoch, time.perf_counter() - t0))
        session.epoch = epoch
        session.maybe_checkpoint()

    if checkpoint_dir is not None:
        session.save(checkpoint_dir / "checkpoint.npz")
    return model, log


def train_gan(
    data,
    cfg: TrainConfig,
    arch: nets.ArchConfig | None = None,
    resume: nets.Checkpoint | None = None,
    checkpoint_dir=None,
) -> tuple[nets.GanModel, TrainLog]:
    """Train the vanilla-GAN baseline with the same determinism contract."""
    checkpoint_dir = Path(checkpoint_dir) if checkpoint_dir is not None else None
    session, values = _init_session(
        data, cfg, arch, resume, nets.GanModel, GAN_LOSS_KEYS,
        {"generator": cfg.lr_g, "discriminator": cfg.lr_d},
        checkpoint_dir,
    )
    model, rng, log = session.model, session.rng, session.log
    graph = nets.build_gan_graph(model)
    latent = model.arch.latent_dim

    for epoch in range(session.start_epoch + 1, cfg.epochs + 1):
        t0 = time.perf_counter()
        for batch_idx in _batches(len(values), cfg.batch_size, rng):
            x = values[batch_idx][:, None, :]
            b = x.shape[0]
            bind = {graph.x: x, graph.z: rng.standard_normal((b, latent))}
            session.step += 1

            for _ in range(cfg.d_steps_per_g_step):
                ad.forward(graph.nodes["d_loss"], bind)
                ad.backward(graph.nodes["d_loss"])
                session.optimizers["discriminator"].step()

            ad.forward(graph.nodes["g_loss"], bind)
            ad.backward(graph.nodes["g_loss"])
            session.optimizers["generator"].step()

            losses = graph.bundle()
            _check_finite(losses, session.step)
            log.record(session.step, epoch, losses)
        log.epoch_wall.append((epoch, time.perf_counter() - t0))
        session.epoch = epoch
        session.maybe_checkpoint()

    if checkpoint_dir is not None:
        session.save(checkpoint_dir / "checkpoint.npz")
    return model, log
