"""Multi-station hourly time-series ingestion, repair, normalization and sampling.

A panel holds n stations by T hourly observations (m/s) with NaN marking
missing values. The CSV schema is: UTF-8, header ``timestamp,<id1>,<id2>,...``,
then one line per hour ``YYYY-MM-DDTHH:00:00Z`` followed by one decimal value
per station; an empty field or the literal ``NA`` means missing. LF line
endings, optionally with a trailing CR.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from .errors import DataError

HOUR = np.timedelta64(3600, "s")


def parse_timestamp(text: str) -> np.datetime64:
    """Parse a ``YYYY-MM-DDTHH:00:00Z`` timestamp."""
    try:
        dt = datetime.strptime(text, "%Y-%m-%dT%H:%M:%SZ")
    except ValueError as exc:
        raise DataError(f"bad timestamp {text!r}: {exc}") from None
    if dt.minute != 0 or dt.second != 0:
        raise DataError(f"bad timestamp {text!r}: not on the hour")
    return np.datetime64(dt.replace(tzinfo=None), "s")


def format_timestamp(ts: np.datetime64) -> str:
    dt = ts.astype("datetime64[s]").item()
    return dt.strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True)
class TimeSeriesPanel:
    """n stations x T hourly observations; values are float64 with NaN = missing."""

    station_ids: tuple[str, ...]
    timestamps: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "station_ids", tuple(self.station_ids))
        ts = np.asarray(self.timestamps, dtype="datetime64[s]")
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 2 or vals.shape != (ts.shape[0], len(self.station_ids)):
            raise ValueError(
                f"values must be (T={ts.shape[0]}, n={len(self.station_ids)}), got {vals.shape}")
        if ts.shape[0] == 0:
            raise ValueError("panel must contain at least one row")
        diffs = np.diff(ts)
        if diffs.size and not np.all(diffs == HOUR):
            bad = int(np.flatnonzero(diffs != HOUR)[0]) + 1
            raise ValueError(
                f"timestamps must increase in exact 1-hour steps; violated at row {bad} "
                f"({format_timestamp(ts[bad])})")
        ts = ts.copy()
        vals = vals.copy()
        ts.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "values", vals)

    @property
    def n_stations(self) -> int:
        return len(self.station_ids)

    @property
    def n_times(self) -> int:
        return self.timestamps.shape[0]

    def station_index(self, station_id: str) -> int:
        try:
            return self.station_ids.index(station_id)
        except ValueError:
            raise DataError(f"unknown station id {station_id!r}") from None

    def index_of(self, ts: np.datetime64) -> int:
        """Row index of an exact timestamp."""
        i = int(np.searchsorted(self.timestamps, ts))
        if i >= self.n_times or self.timestamps[i] != ts:
            raise DataError(f"timestamp {format_timestamp(ts)} is not in the panel")
        return i

    def slice_rows(self, lo: int, hi: int) -> "TimeSeriesPanel":
        if not 0 <= lo < hi <= self.n_times:
            raise ValueError(f"bad row slice [{lo}, {hi}) for T={self.n_times}")
        return TimeSeriesPanel(self.station_ids, self.timestamps[lo:hi], self.values[lo:hi])


def ingest_csv(path) -> TimeSeriesPanel:
    """Parse a panel CSV; empty cells and ``NA`` become missing values."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        raw = fh.read()
    lines = [ln[:-1] if ln.endswith("\r") else ln for ln in raw.split("\n")]
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise DataError(f"{path}: empty file")
    header = lines[0].split(",")
    if len(header) < 2 or header[0] != "timestamp":
        raise DataError(f"{path}: missing header; first line must be 'timestamp,<id1>,...'")
    station_ids = header[1:]
    if any(not s for s in station_ids):
        raise DataError(f"{path}: empty station id in header")
    n = len(station_ids)

    stamps: list[np.datetime64] = []
    rows: list[list[float]] = []
    for lineno, line in enumerate(lines[1:], start=2):
        fields = line.split(",")
        if len(fields) != n + 1:
            raise DataError(f"{path}: line {lineno} has {len(fields)} fields, expected {n + 1}")
        try:
            ts = parse_timestamp(fields[0])
        except DataError as exc:
            raise DataError(f"{path}: line {lineno}: {exc}") from None
        if stamps:
            if ts == stamps[-1]:
                raise DataError(
                    f"{path}: line {lineno}: duplicate timestamp {fields[0]}")
            if ts != stamps[-1] + HOUR:
                raise DataError(
                    f"{path}: line {lineno}: timestamp {fields[0]} breaks the hourly grid "
                    f"(previous was {format_timestamp(stamps[-1])})")
        row = []
        for col, cell in enumerate(fields[1:]):
            if cell == "" or cell == "NA":
                row.append(np.nan)
                continue
            try:
                row.append(float(cell))
            except ValueError:
                raise DataError(
                    f"{path}: line {lineno}, column {station_ids[col]!r}: "
                    f"non-numeric cell {cell!r}") from None
        stamps.append(ts)
        rows.append(row)
    if not rows:
        raise DataError(f"{path}: no data rows")
    return TimeSeriesPanel(tuple(station_ids), np.array(stamps, dtype="datetime64[s]"),
                           np.array(rows, dtype=np.float64))


def write_csv(panel: TimeSeriesPanel, path) -> None:
    """Write a panel in the ingestion schema; missing values become ``NA``."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("timestamp," + ",".join(panel.station_ids) + "\n")
        for t in range(panel.n_times):
            cells = [format_timestamp(panel.timestamps[t])]
            for v in panel.values[t]:
                cells.append("NA" if np.isnan(v) else repr(float(v)))
            fh.write(",".join(cells) + "\n")


@dataclass(frozen=True)
class GapRun:
    station_id: str
    start: int
    length: int
    filled: bool


@dataclass
class GapReport:
    runs: list[GapRun]

    @property
    def filled(self) -> list[GapRun]:
        return [r for r in self.runs if r.filled]

    @property
    def unfilled(self) -> list[GapRun]:
        return [r for r in self.runs if not r.filled]


def fill_missing(panel: TimeSeriesPanel, max_gap: int) -> tuple[TimeSeriesPanel, GapReport]:
    """Linearly interpolate interior missing runs of length <= max_gap.

    Longer runs and runs touching either end of the panel stay missing.
    Every run, filled or not, is listed in the returned report.
    """
    if max_gap < 0:
        raise ValueError("max_gap must be >= 0")
    values = panel.values.copy()
    runs: list[GapRun] = []
    T = panel.n_times
    for s, sid in enumerate(panel.station_ids):
        col = values[:, s]
        missing = np.isnan(col)
        t = 0
        while t < T:
            if not missing[t]:
                t += 1
                continue
            start = t
            while t < T and missing[t]:
                t += 1
            length = t - start
            interior = start > 0 and t < T
            if interior and length <= max_gap:
                left, right = col[start - 1], col[t]
                for j in range(length):
                    frac = (j + 1) / (length + 1)
                    col[start + j] = left + frac * (right - left)
                runs.append(GapRun(sid, start, length, True))
            else:
                runs.append(GapRun(sid, start, length, False))
    return TimeSeriesPanel(panel.station_ids, panel.timestamps, values), GapReport(runs)


@dataclass(frozen=True)
class Normalizer:
    """Per-station min/max fitted on the training range only."""

    station_ids: tuple[str, ...]
    mins: np.ndarray
    maxs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "station_ids", tuple(self.station_ids))
        mins = np.asarray(self.mins, dtype=np.float64).copy()
        maxs = np.asarray(self.maxs, dtype=np.float64).copy()
        if mins.shape != (len(self.station_ids),) or maxs.shape != mins.shape:
            raise ValueError("mins/maxs must be one value per station")
        if np.any(maxs < mins):
            raise ValueError("max must be >= min per station")
        mins.setflags(write=False)
        maxs.setflags(write=False)
        object.__setattr__(self, "mins", mins)
        object.__setattr__(self, "maxs", maxs)

    @property
    def spans(self) -> np.ndarray:
        span = self.maxs - self.mins
        return np.where(span > 0.0, span, 1.0)


def fit_normalizer(panel: TimeSeriesPanel, train_range=None) -> Normalizer:
    """Fit per-station min/max on `train_range` (a (start, end) timestamp pair,
    inclusive; None = the whole panel)."""
    if train_range is None:
        block = panel.values
    else:
        start, end = train_range
        lo = int(np.searchsorted(panel.timestamps, np.datetime64(start, "s"), side="left"))
        hi = int(np.searchsorted(panel.timestamps, np.datetime64(end, "s"), side="right"))
        if hi <= lo:
            raise DataError("train range selects no rows")
        block = panel.values[lo:hi]
    mins = np.full(panel.n_stations, np.nan)
    maxs = np.full(panel.n_stations, np.nan)
    for s, sid in enumerate(panel.station_ids):
        col = block[:, s]
        finite = col[np.isfinite(col)]
        if finite.size == 0:
            raise DataError(f"station {sid!r} has no observations on the training range")
        mins[s] = finite.min()
        maxs[s] = finite.max()
        if maxs[s] == mins[s]:
            warnings.warn(
                f"station {sid!r} is constant on the training range; "
                "using a unit span for normalization")
    return Normalizer(panel.station_ids, mins, maxs)


def normalize(panel: TimeSeriesPanel, nz: Normalizer) -> TimeSeriesPanel:
    if panel.station_ids != nz.station_ids:
        raise DataError("normalizer station order does not match the panel")
    vals = (panel.values - nz.mins) / nz.spans
    return TimeSeriesPanel(panel.station_ids, panel.timestamps, vals)


def denormalize(values: np.ndarray, nz: Normalizer) -> np.ndarray:
    """Invert normalization on any (..., n) array of station values."""
    values = np.asarray(values, dtype=np.float64)
    if values.shape[-1] != len(nz.station_ids):
        raise ValueError(f"last axis must have {len(nz.station_ids)} stations")
    return values * nz.spans + nz.mins


@dataclass(frozen=True)
class SplitSpec:
    """Inclusive [start, end] timestamp intervals, ordered train < val < test."""

    train: tuple[np.datetime64, np.datetime64]
    val: tuple[np.datetime64, np.datetime64]
    test: tuple[np.datetime64, np.datetime64]

    def __post_init__(self):
        for name, (a, b) in zip(("train", "val", "test"),
                                (self.train, self.val, self.test)):
            if a > b:
                raise ValueError(f"{name} range is empty ({a} > {b})")
        if not (self.train[1] < self.val[0] and self.val[1] < self.test[0]):
            raise ValueError("ranges must be ordered and non-overlapping: train < val < test")


def fraction_split(panel: TimeSeriesPanel, train_frac: float, val_frac: float) -> SplitSpec:
    """Build a SplitSpec cutting the panel at the given index fractions."""
    if not (0 < train_frac < 1 and 0 < val_frac < 1 and train_frac + val_frac < 1):
        raise ValueError("fractions must be positive and sum to less than 1")
    T = panel.n_times
    a = int(T * train_frac)
    b = int(T * (train_frac + val_frac))
    if not (0 < a < b < T):
        raise ValueError(f"panel too short (T={T}) for the requested fractions")
    ts = panel.timestamps
    return SplitSpec((ts[0], ts[a - 1]), (ts[a], ts[b - 1]), (ts[b], ts[-1]))


def split(panel: TimeSeriesPanel, spec: SplitSpec
          ) -> tuple[TimeSeriesPanel, TimeSeriesPanel, TimeSeriesPanel]:
    """Cut the panel into train/val/test sub-panels per the spec's ranges."""
    out = []
    for name, (start, end) in zip(("train", "val", "test"),
                                  (spec.train, spec.val, spec.test)):
        start = np.datetime64(start, "s")
        end = np.datetime64(end, "s")
        if start < panel.timestamps[0] or end > panel.timestamps[-1]:
            raise DataError(
                f"{name} range [{format_timestamp(start)}, {format_timestamp(end)}] "
                "lies outside the panel")
        lo = int(np.searchsorted(panel.timestamps, start, side="left"))
        hi = int(np.searchsorted(panel.timestamps, end, side="right"))
        if hi <= lo:
            raise DataError(f"{name} range selects no rows")
        out.append(panel.slice_rows(lo, hi))
    return out[0], out[1], out[2]


class SampleSet:
    """Training samples for one horizon offset, iterable as (sequence, target) pairs."""

    def __init__(self, samples: list[tuple[np.ndarray, np.ndarray]],
                 target_indices: list[int], skipped: int):
        self.samples = samples
        self.target_indices = target_indices
        self.skipped = skipped

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def __getitem__(self, idx):
        return self.samples[idx]


def make_samples(panel: TimeSeriesPanel, forecast_overlay, ell: int, i: int) -> SampleSet:
    """Assemble supervised samples for the model at horizon offset i.

    For every target row t with a full ell-step history the input sequence
    mixes real rows (positions p <= t-i) with forecast rows taken from
    ``forecast_overlay[p-t+i-1][p]`` (positions p > t-i); when i-1 >= ell the
    input is the last ell forecast rows only. `forecast_overlay` is an
    (m, T, n) array with m >= i-1 (None is fine when i = 1); NaN entries mark
    positions with no forecast. Samples touching any NaN input or target are
    skipped and counted.
    """
    if i < 1:
        raise ValueError("offset i must be >= 1")
    if ell < 1:
        raise ValueError("input horizon ell must be >= 1")
    values = panel.values
    T, n = values.shape
    n_fc = min(i - 1, ell)
    if n_fc > 0:
        overlay = np.asarray(forecast_overlay, dtype=np.float64)
        if overlay.ndim != 3 or overlay.shape[0] < i - 1 or overlay.shape[1:] != (T, n):
            raise ValueError(
                f"forecast_overlay must be (>= {i - 1}, {T}, {n}), got "
                f"{None if forecast_overlay is None else overlay.shape}")
    samples: list[tuple[np.ndarray, np.ndarray]] = []
    target_indices: list[int] = []
    skipped = 0
    for t in range(ell, T):
        seq = np.empty((ell, n))
        n_real = ell - n_fc
        if n_real:
            seq[:n_real] = values[t - ell:t - ell + n_real]
        for row in range(n_real, ell):
            p = t - ell + row
            seq[row] = overlay[p - t + i - 1, p]
        target = values[t]
        if np.all(np.isfinite(seq)) and np.all(np.isfinite(target)):
            samples.append((seq, target.copy()))
            target_indices.append(t)
        else:
            skipped += 1
    return SampleSet(samples, target_indices, skipped)
