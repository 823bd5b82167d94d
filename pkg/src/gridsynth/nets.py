"""Encoder, generator and discriminator graphs plus every loss term.

All three networks share one architecture idiom: a stack of dilated causal
1-D convolutions (dilations doubling per layer, WaveNet style) with leaky
ReLU activations and He-initialized weights throughout, heads included
(zero heads starve the encoder of reconstruction gradient and collapse the
posterior). A generator whose output layer is explicitly zeroed emits the
mid-range constant 0.5, and a zeroed discriminator head says probability
0.5; tests construct those states when they need them.

Sign conventions: every loss is a logit-stabilized negative log likelihood
and therefore non-negative. The generator's adversarial term is the
non-saturating -log D(fake); the discriminator minimizes
-log D(real) - log(1 - D(fake)) - log(1 - D(noise)).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, asdict, field

import numpy as np

from . import autodiff as ad
from .errors import DataError


@dataclass(frozen=True)
class ArchConfig:
    """Network hyperparameters; the defaults fit 96-slot day profiles."""

    seq_len: int = 96
    latent_dim: int = 32
    channels: int = 32
    kernel_size: int = 3
    dilations: tuple = (1, 2, 4, 8)
    leaky_slope: float = 0.2
    logvar_clip: float = 10.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dilations"] = list(self.dilations)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ArchConfig":
        d = dict(d)
        d["dilations"] = tuple(d["dilations"])
        return cls(**d)


def _he(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    return rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)


class _ConvStack:
    """Shared builder for the dilated conv trunks of all three nets."""

    def __init__(self, prefix: str, arch: ArchConfig, rng: np.random.Generator, in_channels: int):
        c, k = arch.channels, arch.kernel_size
        self.arch = arch
        self.layers = []
        for i, dil in enumerate(arch.dilations):
            w = ad.Param(f"{prefix}.conv{i}.w", _he(rng, (c, in_channels, k), in_channels * k))
            b = ad.Param(f"{prefix}.conv{i}.b", np.zeros(c))
            self.layers.append((w, b, dil))
            in_channels = c

    def build(self, x: ad.Node) -> ad.Node:
        h = x
        for w, b, dil in self.layers:
            h = ad.LeakyRelu(ad.DilatedCausalConv1d(h, w, b, dil), self.arch.leaky_slope)
        return h

    def params(self) -> list[ad.Param]:
        return [p for w, b, _ in self.layers for p in (w, b)]


class Encoder:
    """x (B, 1, T) -> (mean, logvar), both (B, L).

    Heads are He-initialized like the trunk: the latent must carry input
    information from the very first step, otherwise the generator learns to
    ignore z before the encoder says anything (posterior collapse).
    """

    def __init__(self, arch: ArchConfig, rng: np.random.Generator):
        self.arch = arch
        self.trunk = _ConvStack("enc", arch, rng, in_channels=1)
        m = arch.channels * arch.seq_len
        self.w_mean = ad.Param("enc.mean.w", _he(rng, (arch.latent_dim, m), m))
        self.b_mean = ad.Param("enc.mean.b", np.zeros(arch.latent_dim))
        self.w_logvar = ad.Param("enc.logvar.w", _he(rng, (arch.latent_dim, m), m))
        self.b_logvar = ad.Param("enc.logvar.b", np.zeros(arch.latent_dim))

    def build(self, x: ad.Node) -> tuple[ad.Node, ad.Node]:
        h = self.trunk.build(x)
        mean = ad.Dense(h, self.w_mean, self.b_mean)
        clip = self.arch.logvar_clip
        logvar = ad.Clamp(ad.Dense(h, self.w_logvar, self.b_logvar), -clip, clip)
        return mean, logvar

    def params(self) -> list[ad.Param]:
        return self.trunk.params() + [self.w_mean, self.b_mean, self.w_logvar, self.b_logvar]


class Generator:
    """z (B, L) -> profile (B, 1, T) in [0, 1] via 0.5 * (tanh + 1)."""

    def __init__(self, arch: ArchConfig, rng: np.random.Generator):
        self.arch = arch
        c, t = arch.channels, arch.seq_len
        self.w_in = ad.Param("gen.expand.w", _he(rng, (c * t, arch.latent_dim), arch.latent_dim))
        self.b_in = ad.Param("gen.expand.b", np.zeros(c * t))
        self.trunk = _ConvStack("gen", arch, rng, in_channels=c)
        self.w_out = ad.Param("gen.out.w", _he(rng, (1, c, 1), c))
        self.b_out = ad.Param("gen.out.b", np.zeros(1))

    def build(self, z: ad.Node) -> ad.Node:
        c, t = self.arch.channels, self.arch.seq_len
        h = ad.LeakyRelu(ad.Dense(z, self.w_in, self.b_in, out_shape=(c, t)), self.arch.leaky_slope)
        h = self.trunk.build(h)
        pre = ad.DilatedCausalConv1d(h, self.w_out, self.b_out, 1)
        return ad.Affine(ad.Tanh(pre), 0.5, 0.5)

    def params(self) -> list[ad.Param]:
        return [self.w_in, self.b_in] + self.trunk.params() + [self.w_out, self.b_out]


class Discriminator:
    """x (B, 1, T) -> logit (B, 1); probability is sigmoid(logit)."""

    def __init__(self, arch: ArchConfig, rng: np.random.Generator):
        self.arch = arch
        self.trunk = _ConvStack("disc", arch, rng, in_channels=1)
        m = arch.channels * arch.seq_len
        self.w_head = ad.Param("disc.head.w", _he(rng, (1, m), m))
        self.b_head = ad.Param("disc.head.b", np.zeros(1))

    def build(self, x: ad.Node) -> ad.Node:
        h = self.trunk.build(x)
        return ad.Dense(h, self.w_head, self.b_head)

    def params(self) -> list[ad.Param]:
        return self.trunk.params() + [self.w_head, self.b_head]


class VaeGanModel:
    kind = "vaegan"

    def __init__(self, arch: ArchConfig, rng: np.random.Generator):
        self.arch = arch
        self.encoder = Encoder(arch, rng)
        self.generator = Generator(arch, rng)
        self.discriminator = Discriminator(arch, rng)

    def param_groups(self) -> dict[str, list[ad.Param]]:
        return {
            "encoder": self.encoder.params(),
            "generator": self.generator.params(),
            "discriminator": self.discriminator.params(),
        }


class GanModel:
    kind = "gan"

    def __init__(self, arch: ArchConfig, rng: np.random.Generator):
        self.arch = arch
        self.generator = Generator(arch, rng)
        self.discriminator = Discriminator(arch, rng)

    def param_groups(self) -> dict[str, list[ad.Param]]:
        return {
            "generator": self.generator.params(),
            "discriminator": self.discriminator.params(),
        }


def all_params(model) -> dict[str, ad.Param]:
    out: dict[str, ad.Param] = {}
    for group in model.param_groups().values():
        for p in group:
            if p.name in out:
                raise ValueError(f"duplicate param name {p.name}")
            out[p.name] = p
    return out


# ---------------------------------------------------------------------------
# loss graphs


def prior_loss(mean: ad.Node, logvar: ad.Node) -> ad.Node:
    """Batch-averaged KL of the encoder posterior against N(0, 1)."""
    return ad.GaussianKl(mean, logvar)


def reconstruction_loss(x: ad.Node, x_hat: ad.Node, l_prior: ad.Node, seq_len: int) -> ad.Node:
    """prior + per-sequence squared L2 error (per-element MSE * seq_len)."""
    return ad.Add(ad.Affine(ad.Mse(x_hat, x), float(seq_len)), l_prior)


def adversarial_losses(logit_real: ad.Node, logit_fake: ad.Node, logit_noise: ad.Node) -> dict:
    """The four single-sided terms of the composite game, all from logits.

    l_real  = -mean log D(real)        l_fake  = -mean log(1 - D(fake))
    l_noise = -mean log(1 - D(noise))  l_dG    = -mean log D(fake)
    """
    return {
        "l_real": ad.Bce(logit_real, 1.0),
        "l_fake": ad.Bce(logit_fake, 0.0),
        "l_noise": ad.Bce(logit_noise, 0.0),
        "l_dG": ad.Bce(logit_fake, 1.0),
    }


def vanilla_gan_losses(logit_real: ad.Node, logit_fake: ad.Node) -> tuple[ad.Node, ad.Node]:
    """(g_loss, d_loss) of the two-player game, non-saturating generator."""
    g_loss = ad.Bce(logit_fake, 1.0)
    d_loss = ad.Add(ad.Bce(logit_real, 1.0), ad.Bce(logit_fake, 0.0))
    return g_loss, d_loss


@dataclass
class VaeGanGraph:
    """The full training graph: inputs plus every named loss node."""

    x: ad.Input
    eps: ad.Input
    noise: ad.Input
    z_prior: ad.Input | None
    mean: ad.Node
    logvar: ad.Node
    x_hat: ad.Node
    nodes: dict = field(default_factory=dict)  # name -> loss Node

    def bundle(self) -> dict[str, float]:
        return {name: float(node.value) for name, node in self.nodes.items()}


def build_vaegan_graph(model: VaeGanModel, fake_source: str = "reconstruction") -> VaeGanGraph:
    """Wire encoder, generator and three discriminator passes into one DAG.

    fake_source picks what D sees as fake (and what l_dG pushes on):
    reconstructions G(E(x)) by default, or prior draws G(z), z ~ N(0,1).
    """
    if fake_source not in ("reconstruction", "prior"):
        raise ValueError(f"fake_source must be 'reconstruction' or 'prior', got {fake_source!r}")
    arch = model.arch
    x = ad.Input("x")
    eps = ad.Input("eps")
    noise = ad.Input("noise")
    mean, logvar = model.encoder.build(x)
    z = ad.Reparameterize(mean, logvar, eps)
    x_hat = model.generator.build(z)
    z_prior = None
    fake = x_hat
    if fake_source == "prior":
        z_prior = ad.Input("z_prior")
        fake = model.generator.build(z_prior)

    l_prior = prior_loss(mean, logvar)
    recon_mse = ad.Mse(x_hat, x)
    # ||x_hat - x||^2 summed per sequence, batch-averaged = per-element MSE * T
    l_reconstruction = ad.Add(ad.Affine(recon_mse, float(arch.seq_len)), l_prior)

    adv = adversarial_losses(
        model.discriminator.build(x),
        model.discriminator.build(fake),
        model.discriminator.build(noise),
    )
    l_generator = ad.Add(l_reconstruction, adv["l_dG"])
    l_d = ad.Add(ad.Add(adv["l_real"], adv["l_fake"]), adv["l_noise"])

    nodes = {
        "l_prior": l_prior,
        "recon_mse": recon_mse,
        "l_reconstruction": l_reconstruction,
        "l_dG": adv["l_dG"],
        "l_generator": l_generator,
        "l_real": adv["l_real"],
        "l_fake": adv["l_fake"],
        "l_noise": adv["l_noise"],
        "l_D": l_d,
    }
    return VaeGanGraph(x=x, eps=eps, noise=noise, z_prior=z_prior,
                       mean=mean, logvar=logvar, x_hat=x_hat, nodes=nodes)


@dataclass
class GanGraph:
    x: ad.Input
    z: ad.Input
    x_fake: ad.Node
    nodes: dict = field(default_factory=dict)

    def bundle(self) -> dict[str, float]:
        return {name: float(node.value) for name, node in self.nodes.items()}


def build_gan_graph(model: GanModel) -> GanGraph:
    x = ad.Input("x")
    z = ad.Input("z")
    x_fake = model.generator.build(z)
    g_loss, d_loss = vanilla_gan_losses(
        model.discriminator.build(x), model.discriminator.build(x_fake)
    )
    return GanGraph(x=x, z=z, x_fake=x_fake, nodes={"g_loss": g_loss, "d_loss": d_loss})


# ---------------------------------------------------------------------------
# inference wrappers (fresh small graphs over the shared Params)


def _as_batch_3d(x, seq_len: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim == 2:
        x = x[:, None, :]
    if x.shape[1:] != (1, seq_len):
        raise ValueError(f"expected (B, {seq_len}) profiles, got {x.shape}")
    return x


def encode(model, x) -> tuple[np.ndarray, np.ndarray]:
    """Run the encoder on (B, T) profiles; returns (mean, logvar) arrays."""
    xb = _as_batch_3d(x, model.arch.seq_len)
    xin = ad.Input("x")
    mean, logvar = model.encoder.build(xin)
    root = ad.Add(ad.Sum(mean), ad.Sum(logvar))  # single forward for both heads
    ad.forward(root, {xin: xb})
    return mean.value.copy(), logvar.value.copy()


def generate(model, z) -> np.ndarray:
    """Decode latent rows (B, L) to (B, T) profiles in [0, 1]."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim == 1:
        z = z[None, :]
    zin = ad.Input("z")
    out = model.generator.build(zin)
    ad.forward(out, {zin: z})
    return out.value[:, 0, :].copy()


def discriminate(model, x) -> np.ndarray:
    """Probability that each (B, T) profile is real."""
    xb = _as_batch_3d(x, model.arch.seq_len)
    xin = ad.Input("x")
    logit = model.discriminator.build(xin)
    ad.forward(logit, {xin: xb})
    return ad.sigmoid(logit.value[:, 0]).copy()


def discriminate_noise(model, batch_size: int, rng: np.random.Generator) -> np.ndarray:
    """D's probabilities on i.i.d. standard-normal sequences (seeded rng)."""
    noise = rng.standard_normal((batch_size, model.arch.seq_len))
    return discriminate(model, noise)


# ---------------------------------------------------------------------------
# checkpointing: one .npz holding every Param (values + Adam moments) plus a
# JSON metadata record; float64 bits round-trip exactly


@dataclass
class Checkpoint:
    kind: str
    arch: ArchConfig
    seed: int
    epoch: int
    step: int
    params: dict[str, np.ndarray]
    moments1: dict[str, np.ndarray]
    moments2: dict[str, np.ndarray]
    adam_steps: dict[str, int]
    rng_state: dict | None
    norm_meta: dict | None
    train_cfg: dict | None


def save_checkpoint(
    path,
    model,
    *,
    seed: int,
    epoch: int = 0,
    step: int = 0,
    adam_steps: dict | None = None,
    rng: np.random.Generator | None = None,
    norm_meta: dict | None = None,
    train_cfg: dict | None = None,
) -> None:
    arrays: dict[str, np.ndarray] = {}
    for name, p in all_params(model).items():
        arrays[f"param/{name}"] = p.value
        arrays[f"m1/{name}"] = p.moment1
        arrays[f"m2/{name}"] = p.moment2
    meta = {
        "schema": "gridsynth.checkpoint/1",
        "kind": model.kind,
        "arch": model.arch.to_dict(),
        "seed": seed,
        "epoch": epoch,
        "step": step,
        "adam_steps": adam_steps or {},
        "rng_state": _jsonable_rng_state(rng),
        "norm_meta": norm_meta,
        "train_cfg": train_cfg,
    }
    arrays["meta"] = np.array(json.dumps(meta, sort_keys=True))
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path) -> Checkpoint:
    try:
        data = np.load(path, allow_pickle=False)
    except FileNotFoundError:
        raise DataError(f"checkpoint not found: {path}")
    meta = json.loads(str(data["meta"]))
    params, m1, m2 = {}, {}, {}
    for key in data.files:
        if key.startswith("param/"):
            params[key[len("param/"):]] = data[key]
        elif key.startswith("m1/"):
            m1[key[len("m1/"):]] = data[key]
        elif key.startswith("m2/"):
            m2[key[len("m2/"):]] = data[key]
    return Checkpoint(
        kind=meta["kind"],
        arch=ArchConfig.from_dict(meta["arch"]),
        seed=meta["seed"],
        epoch=meta["epoch"],
        step=meta["step"],
        params=params,
        moments1=m1,
        moments2=m2,
        adam_steps={k: int(v) for k, v in meta.get("adam_steps", {}).items()},
        rng_state=meta.get("rng_state"),
        norm_meta=meta.get("norm_meta"),
        train_cfg=meta.get("train_cfg"),
    )


def model_from_checkpoint(ckpt: Checkpoint):
    """Rebuild the model class and overwrite every Param from the checkpoint."""
    init_rng = np.random.default_rng(0)  # throwaway; values are overwritten
    model = {"vaegan": VaeGanModel, "gan": GanModel}[ckpt.kind](ckpt.arch, init_rng)
    live = all_params(model)
    if set(live) != set(ckpt.params):
        missing = set(live) ^ set(ckpt.params)
        raise DataError(f"checkpoint/model param mismatch: {sorted(missing)}")
    for name, p in live.items():
        p.value[...] = ckpt.params[name]
        p.moment1[...] = ckpt.moments1[name]
        p.moment2[...] = ckpt.moments2[name]
    return model


def _jsonable_rng_state(rng: np.random.Generator | None):
    if rng is None:
        return None
    state = rng.bit_generator.state
    return json.loads(json.dumps(state))


def rng_from_state(state: dict) -> np.random.Generator:
    rng = np.random.default_rng(0)
    rng.bit_generator.state = state
    return rng
