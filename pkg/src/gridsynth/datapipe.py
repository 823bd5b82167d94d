"""Smart-meter CSV ingestion: parse, resample, cleanse, normalize, window.

The pipeline turns a raw series of (timestamp, watts) readings into an
N x 96 matrix of complete daily profiles at 15-minute resolution, min-max
normalized over the whole matrix. Gaps are carried as NaN markers between
stages and are never serialized.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from .errors import DataError

SLOTS_PER_DAY = 96
SLOT_MINUTES = 24 * 60 // SLOTS_PER_DAY  # 15
ROUND_TRIP_TOL = 1e-12


@dataclass
class TimeSeries:
    """Uniform-grid power readings; NaN values mark gaps.

    timestamps are UTC epoch seconds, strictly increasing, with consecutive
    gaps an integer multiple of period_minutes.
    """

    timestamps: np.ndarray
    values: np.ndarray
    period_minutes: int

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.timestamps.shape != self.values.shape or self.timestamps.ndim != 1:
            raise DataError("timestamps and values must be equal-length 1-D arrays")
        if self.period_minutes <= 0:
            raise DataError(f"period must be positive, got {self.period_minutes}")
        if len(self.timestamps) > 1:
            gaps = np.diff(self.timestamps)
            if np.any(gaps <= 0):
                raise DataError("timestamps must be strictly increasing")
            if np.any(gaps % (self.period_minutes * 60) != 0):
                raise DataError(
                    f"timestamp gaps must be multiples of {self.period_minutes} minutes"
                )

    def __len__(self):
        return len(self.timestamps)


@dataclass
class DayMatrix:
    """N daily profiles of 96 slots each, optionally min-max normalized.

    norm_min/norm_max are set only after normalize(); they are the global
    extrema of the raw training matrix, so denormalized synthetic data lives
    on the real data's watt scale.
    """

    values: np.ndarray
    kind: str = "load"
    norm_min: float | None = None
    norm_max: float | None = None
    dates: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[1] != SLOTS_PER_DAY:
            raise DataError(f"day matrix must be N x {SLOTS_PER_DAY}, got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise DataError("day matrix must be finite")
        if self.normalized:
            if not self.norm_max > self.norm_min:
                raise DataError("norm_max must exceed norm_min")
            if self.values.size and (self.values.min() < -1e-12 or self.values.max() > 1 + 1e-12):
                raise DataError("normalized values must lie in [0, 1]")

    @property
    def normalized(self) -> bool:
        return self.norm_min is not None and self.norm_max is not None

    @property
    def n_days(self) -> int:
        return self.values.shape[0]


def _parse_timestamp(text: str, line_no: int) -> int:
    raw = text.strip()
    if raw.endswith(("Z", "z")):
        raw = raw[:-1] + "+00:00"
    try:
        dt = datetime.fromisoformat(raw)
    except ValueError:
        raise DataError(f"line {line_no}: cannot parse timestamp {text!r} as ISO-8601")
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def load_csv(
    path,
    value_column: str,
    timestamp_column: str = "timestamp",
    period_minutes: int = 5,
) -> TimeSeries:
    """Parse a RAPT-style CSV into a TimeSeries sorted by timestamp.

    Rows may arrive out of order; duplicates are rejected. Parse failures
    report the 1-based line number of the offending row.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"input file not found: {path}")
    stamps: list[int] = []
    vals: list[float] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file")
        header = [h.strip() for h in header]
        for col in (timestamp_column, value_column):
            if col not in header:
                raise DataError(f"{path}: missing column {col!r} (have {header})")
        t_idx = header.index(timestamp_column)
        v_idx = header.index(value_column)
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) <= max(t_idx, v_idx):
                raise DataError(f"line {line_no}: expected {len(header)} columns, got {len(row)}")
            stamps.append(_parse_timestamp(row[t_idx], line_no))
            try:
                val = float(row[v_idx])
            except ValueError:
                raise DataError(f"line {line_no}: cannot parse value {row[v_idx]!r} as a number")
            if not math.isfinite(val):
                raise DataError(f"line {line_no}: non-finite value {row[v_idx]!r}")
            vals.append(val)
    if not stamps:
        raise DataError(f"{path}: no data rows")
    order = np.argsort(np.asarray(stamps), kind="stable")
    ts = np.asarray(stamps, dtype=np.int64)[order]
    vs = np.asarray(vals, dtype=np.float64)[order]
    dup = np.flatnonzero(np.diff(ts) == 0)
    if dup.size:
        when = datetime.fromtimestamp(int(ts[dup[0]]), tz=timezone.utc).isoformat()
        raise DataError(f"duplicate timestamp {when}")
    return TimeSeries(ts, vs, period_minutes)


def resample(series: TimeSeries, target_period_minutes: int = 15) -> TimeSeries:
    """Mean-aggregate onto a coarser grid; incomplete windows become NaN.

    The output grid is aligned to multiples of the target period and is
    contiguous from the first to the last covered window, so gap windows are
    explicit NaN entries rather than missing rows.
    """
    target_s = target_period_minutes * 60
    source_s = series.period_minutes * 60
    if target_s % source_s != 0:
        raise DataError(
            f"target period {target_period_minutes} min is not a multiple of "
            f"source period {series.period_minutes} min"
        )
    per_window = target_s // source_s
    if len(series) == 0:
        return TimeSeries(series.timestamps, series.values, target_period_minutes)
    win = series.timestamps // target_s
    first, last = int(win[0]), int(win[-1])
    n_out = last - first + 1
    sums = np.zeros(n_out)
    counts = np.zeros(n_out, dtype=np.int64)
    bad = np.zeros(n_out, dtype=bool)  # window contains a NaN source sample
    idx = (win - first).astype(np.int64)
    nan_mask = np.isnan(series.values)
    bad[idx[nan_mask]] = True
    np.add.at(sums, idx[~nan_mask], series.values[~nan_mask])
    np.add.at(counts, idx[~nan_mask], 1)
    out = np.full(n_out, np.nan)
    full = (counts == per_window) & ~bad
    out[full] = sums[full] / per_window
    out_ts = (np.arange(first, last + 1, dtype=np.int64)) * target_s
    return TimeSeries(out_ts, out, target_period_minutes)


def _day_key_and_slot(ts: np.ndarray, tz: str) -> tuple[np.ndarray, np.ndarray, dict]:
    """Map epoch seconds to (local day ordinal, slot index) plus day labels."""
    offset = _fixed_offset_seconds(tz)
    if offset is not None:
        local = ts + offset
        day = local // 86400
        slot = (local % 86400) // (SLOT_MINUTES * 60)
        labels = {
            int(d): (datetime(1970, 1, 1) + timedelta(days=int(d))).strftime("%Y-%m-%d")
            for d in np.unique(day)
        }
        return day, slot, labels
    # IANA zone: per-timestamp conversion (DST days then simply come out
    # incomplete and are dropped by the completeness rule)
    from zoneinfo import ZoneInfo

    zone = ZoneInfo(tz)
    day = np.empty(len(ts), dtype=np.int64)
    slot = np.empty(len(ts), dtype=np.int64)
    labels: dict[int, str] = {}
    for i, t in enumerate(ts):
        dt = datetime.fromtimestamp(int(t), tz=zone)
        ordinal = dt.toordinal()
        day[i] = ordinal
        slot[i] = (dt.hour * 60 + dt.minute) // SLOT_MINUTES
        labels.setdefault(ordinal, dt.strftime("%Y-%m-%d"))
    return day, slot, labels


def _fixed_offset_seconds(tz: str) -> int | None:
    if tz.upper() in ("UTC", "Z", ""):
        return 0
    sign = 1
    body = tz
    if tz.startswith(("+", "-")):
        sign = -1 if tz[0] == "-" else 1
        body = tz[1:]
    if ":" in body and all(part.isdigit() for part in body.split(":")):
        hh, mm = body.split(":")
        return sign * (int(hh) * 3600 + int(mm) * 60)
    return None


def clean_days(
    series: TimeSeries,
    tz: str = "UTC",
    completeness: float = 1.0,
    kind: str = "load",
) -> DayMatrix:
    """Keep calendar days whose 96 slots are all present and gap-free.

    completeness below 1.0 relaxes the rule: a day with at least that
    fraction of slots present is kept and its missing slots take the nearest
    present value within the day. The default keeps only complete days.
    """
    if series.period_minutes != SLOT_MINUTES:
        raise DataError(f"clean_days expects a {SLOT_MINUTES}-minute series")
    if not 0.0 < completeness <= 1.0:
        raise DataError(f"completeness must be in (0, 1], got {completeness}")
    day, slot, labels = _day_key_and_slot(series.timestamps, tz)
    rows: list[np.ndarray] = []
    dates: list[str] = []
    min_present = math.ceil(completeness * SLOTS_PER_DAY)
    for d in np.unique(day):
        mask = day == d
        profile = np.full(SLOTS_PER_DAY, np.nan)
        profile[slot[mask]] = series.values[mask]
        present = np.flatnonzero(np.isfinite(profile))
        if present.size < min_present:
            continue
        if present.size < SLOTS_PER_DAY:
            missing = np.flatnonzero(~np.isfinite(profile))
            nearest = present[np.argmin(np.abs(missing[:, None] - present[None, :]), axis=1)]
            profile[missing] = profile[nearest]
        rows.append(profile)
        dates.append(labels[int(d)])
    if not rows:
        raise DataError("no complete day after cleansing")
    return DayMatrix(np.vstack(rows), kind=kind, dates=dates)


def normalize(matrix: DayMatrix) -> DayMatrix:
    """Min-max normalize to [0, 1] with extrema taken over the whole matrix."""
    if matrix.normalized:
        raise DataError("matrix is already normalized")
    lo = float(matrix.values.min())
    hi = float(matrix.values.max())
    if hi == lo:
        raise DataError("cannot normalize constant data (max == min)")
    scaled = (matrix.values - lo) / (hi - lo)
    return DayMatrix(scaled, kind=matrix.kind, norm_min=lo, norm_max=hi, dates=list(matrix.dates))


def denormalize(matrix: DayMatrix) -> np.ndarray:
    """Invert normalize(); returns the watt-valued array."""
    if not matrix.normalized:
        raise DataError("matrix has no normalization metadata")
    return matrix.values * (matrix.norm_max - matrix.norm_min) + matrix.norm_min


def denormalize_values(values: np.ndarray, norm_min: float, norm_max: float) -> np.ndarray:
    if norm_min is None or norm_max is None:
        raise DataError("missing normalization metadata")
    return np.asarray(values, dtype=np.float64) * (norm_max - norm_min) + norm_min


_META_SUFFIX = ".meta"


def save_day_matrix(matrix: DayMatrix, csv_path) -> None:
    """Write one day per row (t00..t95 header) plus a key-value sidecar."""
    csv_path = Path(csv_path)
    header = ",".join(f"t{i:02d}" for i in range(SLOTS_PER_DAY))
    lines = [header]
    for row in matrix.values:
        lines.append(",".join(repr(float(v)) for v in row))
    csv_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    meta = [
        "schema = gridsynth.daymatrix/1",
        f"kind = {matrix.kind}",
        f"n_days = {matrix.n_days}",
    ]
    if matrix.normalized:
        meta.append(f"norm_min = {matrix.norm_min!r}")
        meta.append(f"norm_max = {matrix.norm_max!r}")
    if matrix.dates:
        meta.append("dates = " + ",".join(matrix.dates))
    Path(str(csv_path) + _META_SUFFIX).write_text("\n".join(meta) + "\n", encoding="utf-8")


def load_day_matrix(csv_path) -> DayMatrix:
    csv_path = Path(csv_path)
    if not csv_path.exists():
        raise DataError(f"day matrix not found: {csv_path}")
    rows = []
    with open(csv_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)  # header
        for row in reader:
            if row:
                rows.append([float(v) for v in row])
    meta = read_kv_file(str(csv_path) + _META_SUFFIX)
    return DayMatrix(
        np.asarray(rows, dtype=np.float64),
        kind=meta.get("kind", "load"),
        norm_min=float(meta["norm_min"]) if "norm_min" in meta else None,
        norm_max=float(meta["norm_max"]) if "norm_max" in meta else None,
        dates=meta["dates"].split(",") if meta.get("dates") else [],
    )


def read_kv_file(path) -> dict[str, str]:
    """Parse a flat `key = value` text file, ignoring blanks and # comments."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"metadata file not found: {path}")
    out: dict[str, str] = {}
    for raw in path.read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DataError(f"{path}: malformed line {raw!r} (expected key = value)")
        key, val = line.split("=", 1)
        out[key.strip()] = val.strip()
    return out


def ingest(
    path,
    value_column: str,
    timestamp_column: str = "timestamp",
    source_period_minutes: int = 5,
    tz: str = "UTC",
    completeness: float = 1.0,
    kind: str = "load",
) -> DayMatrix:
    """Full raw-CSV -> normalized DayMatrix pipeline."""
    series = load_csv(
        path,
        value_column=value_column,
        timestamp_column=timestamp_column,
        period_minutes=source_period_minutes,
    )
    series = resample(series, SLOT_MINUTES)
    days = clean_days(series, tz=tz, completeness=completeness, kind=kind)
    return normalize(days)
