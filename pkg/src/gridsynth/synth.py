"""Draw synthetic day profiles from a trained generator and export them."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nets
from .datapipe import SLOTS_PER_DAY, denormalize_values, read_kv_file
from .errors import DataError


@dataclass
class SynthBatch:
    """Generated profiles in both normalized and watt units, plus provenance."""

    profiles: np.ndarray  # (N, 96) in [0, 1]
    denorm: np.ndarray  # (N, 96) in watts
    provenance: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.profiles.shape[0]


def sample(model, n: int, seed: int, norm_meta: dict, checkpoint_id: str = "") -> SynthBatch:
    """Decode n i.i.d. prior draws z ~ N(0,1)^L into day profiles.

    Outputs are clamped to [0, 1] before denormalization (the generator's
    output activation already bounds them; the clamp is a safety net).
    """
    if n < 1:
        raise ValueError(f"need n >= 1 samples, got {n}")
    if not norm_meta or norm_meta.get("norm_min") is None or norm_meta.get("norm_max") is None:
        raise DataError("missing normalization metadata; cannot express samples in watts")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, model.arch.latent_dim))
    profiles = np.clip(nets.generate(model, z), 0.0, 1.0)
    denorm = denormalize_values(profiles, float(norm_meta["norm_min"]), float(norm_meta["norm_max"]))
    provenance = {
        "checkpoint_id": checkpoint_id,
        "seed": seed,
        "latent_draws": n,
        "kind": norm_meta.get("kind", "load"),
        "norm_min": float(norm_meta["norm_min"]),
        "norm_max": float(norm_meta["norm_max"]),
    }
    return SynthBatch(profiles=profiles, denorm=denorm, provenance=provenance)


def is_mode_collapsed(profiles, tol: float = 1e-6) -> bool:
    """True when every pairwise L2 distance is below tol (all outputs equal)."""
    p = np.asarray(profiles, dtype=np.float64)
    if p.shape[0] < 2:
        return False
    sq = ((p[:, None, :] - p[None, :, :]) ** 2).sum(axis=2)
    iu = np.triu_indices(p.shape[0], k=1)
    return bool(np.all(np.sqrt(sq[iu]) < tol))


_SIDE_SUFFIX = ".meta"


def export(batch: SynthBatch, csv_path) -> None:
    """Write watts CSV (header t00..t95, one day per row) plus sidecar."""
    csv_path = Path(csv_path)
    header = ",".join(f"t{i:02d}" for i in range(SLOTS_PER_DAY))
    lines = [header]
    for row in batch.denorm:
        lines.append(",".join(repr(float(v)) for v in row))
    csv_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    meta_lines = ["schema = gridsynth.synth/1"]
    for key in sorted(batch.provenance):
        meta_lines.append(f"{key} = {batch.provenance[key]}")
    Path(str(csv_path) + _SIDE_SUFFIX).write_text("\n".join(meta_lines) + "\n", encoding="utf-8")


def load_exported(csv_path) -> tuple[np.ndarray, dict]:
    """Read back an exported batch: (watts matrix, provenance dict)."""
    csv_path = Path(csv_path)
    if not csv_path.exists():
        raise DataError(f"synthetic data not found: {csv_path}")
    rows = []
    with open(csv_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            if row:
                rows.append([float(v) for v in row])
    meta = read_kv_file(str(csv_path) + _SIDE_SUFFIX)
    return np.asarray(rows, dtype=np.float64), meta
