"""Fidelity metrics between real and synthetic day profiles.

Three distribution distances (histogram KL divergence, RBF-kernel MMD,
exact 1-D Wasserstein) plus five per-day load-shape statistics aggregated
as mean / population std across days. Distances operate on watt-valued
data; the report records every knob so results stay reproducible.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from .errors import DataError

DEFAULT_BINS = 100
SMOOTHING_EPS = 1e-10
PERCENTILE_HIGH = 97.5
PERCENTILE_LOW = 2.5
HOURS_PER_SLOT = 0.25
STAT_NAMES = ("base_load", "peak_load", "high_load_duration", "rise_time", "fall_time")


def shared_histograms(x, y, bins: int = DEFAULT_BINS):
    """Normalized histogram masses of x and y over shared bin edges.

    Edges span the union range of both sample sets; masses sum to 1.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.size == 0 or y.size == 0:
        raise DataError("histogram inputs must be non-empty")
    if bins < 1:
        raise DataError(f"bins must be >= 1, got {bins}")
    lo = min(x.min(), y.min())
    hi = max(x.max(), y.max())
    if hi == lo:
        # all mass in one degenerate bin for both sets
        edges = np.linspace(lo - 0.5, lo + 0.5, bins + 1)
    else:
        edges = np.linspace(lo, hi, bins + 1)
    p, _ = np.histogram(x, bins=edges)
    q, _ = np.histogram(y, bins=edges)
    return edges, p / x.size, q / y.size


def kl_from_masses(p, q, eps: float = SMOOTHING_EPS) -> float:
    """Sum p_i * ln(p_i / q_i) after epsilon-smoothing both mass vectors."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise DataError(f"mass vectors differ in shape: {p.shape} vs {q.shape}")
    ps = (p + eps) / (p + eps).sum()
    qs = (q + eps) / (q + eps).sum()
    return float(np.sum(ps * np.log(ps / qs)))


def kl_divergence(x, y, bins: int = DEFAULT_BINS, eps: float = SMOOTHING_EPS) -> float:
    """Histogram KL divergence D(p_x || q_y) over shared bins, natural log."""
    _, p, q = shared_histograms(x, y, bins=bins)
    return kl_from_masses(p, q, eps=eps)


def median_heuristic_sigma(x, y) -> float:
    """Median pairwise Euclidean distance of the pooled sample (\"median
    heuristic\" bandwidth); falls back to 1.0 when every point coincides."""
    pooled = np.vstack([_as_2d(x), _as_2d(y)])
    diff = pooled[:, None, :] - pooled[None, :, :]
    d = np.sqrt((diff**2).sum(axis=2))
    iu = np.triu_indices(len(pooled), k=1)
    med = float(np.median(d[iu])) if iu[0].size else 0.0
    return med if med > 0 else 1.0


def _as_2d(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise DataError(f"samples must be 1-D scalars or 2-D vectors, got shape {x.shape}")
    return x


def mmd_rbf(x, y, sigma: float) -> float:
    """Biased (V-statistic) RBF-kernel maximum mean discrepancy.

    All three double sums keep their diagonal terms; returns
    sqrt(max(0, MMD^2)) with kernel exp(-||a-b||^2 / (2 sigma^2)).
    """
    if sigma <= 0:
        raise DataError(f"sigma must be positive, got {sigma}")
    xs, ys = _as_2d(x), _as_2d(y)
    if xs.shape[0] == 0 or ys.shape[0] == 0:
        raise DataError("mmd inputs must be non-empty")
    if xs.shape[1] != ys.shape[1]:
        raise DataError(f"sample dimensions differ: {xs.shape[1]} vs {ys.shape[1]}")

    def kernel_mean(a, b):
        d2 = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2)
        return float(np.exp(-d2 / (2.0 * sigma**2)).mean())

    mmd2 = kernel_mean(xs, xs) - 2.0 * kernel_mean(xs, ys) + kernel_mean(ys, ys)
    return float(np.sqrt(max(0.0, mmd2)))


def wasserstein1(x, y) -> float:
    """Exact 1-D Wasserstein-1 distance between empirical distributions.

    Integrates |F_x - F_y| over the merged support, which equals the
    quantile-function integral and, for equal-size sets, the optimal
    sorted matching cost / n.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.size == 0 or y.size == 0:
        raise DataError("wasserstein inputs must be non-empty")
    xs = np.sort(x)
    ys = np.sort(y)
    grid = np.sort(np.concatenate([xs, ys]))
    deltas = np.diff(grid)
    cdf_x = np.searchsorted(xs, grid[:-1], side="right") / xs.size
    cdf_y = np.searchsorted(ys, grid[:-1], side="right") / ys.size
    return float(np.sum(np.abs(cdf_x - cdf_y) * deltas))


@dataclass(frozen=True)
class DayShape:
    """Five load-shape parameters of a single day (durations in hours)."""

    base_load: float
    peak_load: float
    high_load_duration: float
    rise_time: float
    fall_time: float

    def as_tuple(self):
        return (self.base_load, self.peak_load, self.high_load_duration,
                self.rise_time, self.fall_time)


def load_shape(day, alpha_high: float = 0.9, alpha_low: float = 0.1) -> DayShape:
    """Compute the five shape parameters of one 15-minute day profile.

    peak/base are the 97.5th / 2.5th percentiles (linear interpolation).
    The high band starts at base + alpha_high * (peak - base), the low band
    ends at base + alpha_low * (peak - base). Rise time runs from the last
    low-band sample to the first high-band sample, fall time symmetrically
    after the last high-band sample; both are 0 when either end is missing.
    A flat day (peak == base) has all durations 0 by convention.
    """
    day = np.asarray(day, dtype=np.float64).ravel()
    if day.size == 0 or not np.all(np.isfinite(day)):
        raise DataError("day profile must be non-empty and finite")
    if not 0.0 < alpha_low < alpha_high <= 1.0:
        raise DataError(f"need 0 < alpha_low < alpha_high <= 1, got {alpha_low}, {alpha_high}")
    peak = float(np.percentile(day, PERCENTILE_HIGH))
    base = float(np.percentile(day, PERCENTILE_LOW))
    if peak == base:
        return DayShape(base, peak, 0.0, 0.0, 0.0)
    th_high = base + alpha_high * (peak - base)
    th_low = base + alpha_low * (peak - base)
    high_idx = np.flatnonzero(day >= th_high)
    low_mask = day <= th_low
    duration = high_idx.size * HOURS_PER_SLOT
    rise = 0.0
    fall = 0.0
    if high_idx.size:
        first_high = high_idx[0]
        last_high = high_idx[-1]
        before = np.flatnonzero(low_mask[:first_high])
        if before.size:
            rise = float(first_high - before[-1]) * HOURS_PER_SLOT
        after = np.flatnonzero(low_mask[last_high + 1 :])
        if after.size:
            fall = float(after[0] + 1) * HOURS_PER_SLOT
    return DayShape(base, peak, float(duration), rise, fall)


def aggregate_stats(days, alpha_high: float = 0.9, alpha_low: float = 0.1) -> dict:
    """Mean and population std of each shape parameter across days."""
    days = np.asarray(days, dtype=np.float64)
    if days.ndim != 2 or days.shape[0] == 0:
        raise DataError("need a non-empty N x T day matrix")
    tuples = np.array([load_shape(row, alpha_high, alpha_low).as_tuple() for row in days])
    return {
        name: {"mean": float(tuples[:, i].mean()), "std": float(tuples[:, i].std())}
        for i, name in enumerate(STAT_NAMES)
    }


@dataclass
class MetricsConfig:
    bins: int = DEFAULT_BINS
    smoothing_eps: float = SMOOTHING_EPS
    sigma: str | float = "median"  # "median" or a positive bandwidth
    mmd_on: str = "days"  # "days" (96-dim vectors) or "pooled" (scalars)
    alpha_high: float = 0.9
    alpha_low: float = 0.1
    max_pooled_mmd_samples: int = 4096


@dataclass
class MetricsReport:
    """Full real-vs-synthetic comparison, serializable as deterministic JSON."""

    kl: float
    wasserstein: float
    mmd: float
    real_stats: dict
    synth_stats: dict
    config: dict
    kind: str = "load"
    model: str = ""
    units: str = "watts"
    schema: str = "gridsynth.metrics/1"

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "MetricsReport":
        path = Path(path)
        if not path.exists():
            raise DataError(f"report not found: {path}")
        raw = json.loads(path.read_text(encoding="utf-8"))
        raw.pop("schema", None)
        return cls(**raw)


def full_report(
    real_watts,
    synth_watts,
    cfg: MetricsConfig | None = None,
    kind: str = "load",
    model: str = "",
) -> MetricsReport:
    """All three distances plus both stats tables, on watt-valued matrices.

    KL and Wasserstein pool every reading into one scalar sample per point;
    MMD defaults to whole-day vectors to keep temporal structure visible.
    """
    cfg = cfg or MetricsConfig()
    real = np.asarray(real_watts, dtype=np.float64)
    synth = np.asarray(synth_watts, dtype=np.float64)
    if real.ndim != 2 or synth.ndim != 2:
        raise DataError("full_report expects N x T day matrices")
    pooled_real = real.ravel()
    pooled_synth = synth.ravel()

    kl = kl_divergence(pooled_real, pooled_synth, bins=cfg.bins, eps=cfg.smoothing_eps)
    w1 = wasserstein1(pooled_real, pooled_synth)

    if cfg.mmd_on == "days":
        mx, my = real, synth
    elif cfg.mmd_on == "pooled":
        mx = _cap_samples(pooled_real, cfg.max_pooled_mmd_samples)
        my = _cap_samples(pooled_synth, cfg.max_pooled_mmd_samples)
    else:
        raise DataError(f"mmd_on must be 'days' or 'pooled', got {cfg.mmd_on!r}")
    if isinstance(cfg.sigma, str):
        if cfg.sigma != "median":
            raise DataError(f"sigma must be 'median' or a number, got {cfg.sigma!r}")
        sigma = median_heuristic_sigma(mx, my)
        sigma_mode = "median"
    else:
        sigma = float(cfg.sigma)
        sigma_mode = "fixed"
    mmd = mmd_rbf(mx, my, sigma)

    return MetricsReport(
        kl=kl,
        wasserstein=w1,
        mmd=mmd,
        real_stats=aggregate_stats(real, cfg.alpha_high, cfg.alpha_low),
        synth_stats=aggregate_stats(synth, cfg.alpha_high, cfg.alpha_low),
        config={
            "bins": cfg.bins,
            "smoothing_eps": cfg.smoothing_eps,
            "sigma_mode": sigma_mode,
            "sigma": sigma,
            "mmd_on": cfg.mmd_on,
            "alpha_high": cfg.alpha_high,
            "alpha_low": cfg.alpha_low,
            "percentile_high": PERCENTILE_HIGH,
            "percentile_low": PERCENTILE_LOW,
            "n_real_days": int(real.shape[0]),
            "n_synth_days": int(synth.shape[0]),
        },
        kind=kind,
        model=model,
    )


def _cap_samples(pooled: np.ndarray, cap: int) -> np.ndarray:
    """Deterministic evenly-spaced subsample to keep pooled MMD tractable."""
    if pooled.size <= cap:
        return pooled
    idx = np.linspace(0, pooled.size - 1, cap).round().astype(int)
    return pooled[idx]


def dump_histograms(real_pooled, synth_pooled, path, bins: int = DEFAULT_BINS) -> None:
    """Write the shared-bin marginal histograms as CSV for external plotting."""
    edges, p, q = shared_histograms(real_pooled, synth_pooled, bins=bins)
    lines = ["bin_left,bin_right,real_mass,synth_mass"]
    for i in range(len(p)):
        cells = (edges[i], edges[i + 1], p[i], q[i])
        lines.append(",".join(repr(float(c)) for c in cells))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
