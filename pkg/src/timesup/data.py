"""Dataset ingestion, chronological splits, synthetic series, revin, patching.

Windows are channel-independent: every channel of a multivariate table is
treated as its own univariate series, each window carrying its own reversible
normalization statistics.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .rng import Rng

REVIN_STD_FLOOR = 1e-5


class CsvError(ValueError):
    """Base class for CSV ingestion failures."""


class RaggedRowError(CsvError):
    pass


class TooFewColumnsError(CsvError):
    pass


class NonMonotoneTimestampError(CsvError):
    pass


class BadNumberError(CsvError):
    pass


class SplitTooShortError(ValueError):
    pass


@dataclass
class TimeSeriesTable:
    timestamps: list[str]
    channel_names: list[str]
    values: np.ndarray  # (length, channels)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError(f"values must be 2-D, got ndim={self.values.ndim}")
        if len(self.timestamps) != self.values.shape[0]:
            raise ValueError("timestamp count != row count")
        if len(self.channel_names) != self.values.shape[1]:
            raise ValueError("channel name count != column count")

    @property
    def length(self) -> int:
        return self.values.shape[0]

    @property
    def channels(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class WindowSpec:
    input_len: int
    horizon: int
    patch_size: int
    stride: int

    def __post_init__(self):
        if self.patch_size > self.input_len:
            raise ValueError(
                f"patch size {self.patch_size} exceeds input length {self.input_len}"
            )
        if self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")

    @property
    def n_patches(self) -> int:
        return -(-(self.input_len - self.patch_size) // self.stride) + 1


@dataclass(frozen=True)
class RevinStats:
    mean: float
    std: float


@dataclass
class SeriesWindow:
    channel: int
    input: np.ndarray   # input_len values, revin-normalized
    target: np.ndarray  # horizon values, in the table's scale
    revin: RevinStats


@dataclass
class PatchSet:
    patches: np.ndarray  # (n_patches, patch_size)


def load_csv(path) -> TimeSeriesTable:
    """Parse a `date,ch1,ch2,...` CSV into a table; strict about malformed rows."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    text = path.read_text(encoding="utf-8")
    lines = text.replace("\r\n", "\n").split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise TooFewColumnsError("empty file")
    header = lines[0].split(",")
    if len(header) < 2:
        raise TooFewColumnsError(f"need a date column plus >= 1 channel, got {len(header)}")
    width = len(header)
    timestamps: list[str] = []
    rows: list[list[float]] = []
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != width:
            raise RaggedRowError(f"line {lineno}: expected {width} cells, got {len(cells)}")
        stamp = cells[0].strip()
        if timestamps and stamp <= timestamps[-1]:
            raise NonMonotoneTimestampError(
                f"line {lineno}: timestamp {stamp!r} not after {timestamps[-1]!r}"
            )
        parsed = []
        for cell in cells[1:]:
            try:
                val = float(cell)
            except ValueError:
                raise BadNumberError(f"line {lineno}: non-numeric cell {cell.strip()!r}") from None
            if not np.isfinite(val):
                raise BadNumberError(f"line {lineno}: non-finite cell {cell.strip()!r}")
            parsed.append(val)
        timestamps.append(stamp)
        rows.append(parsed)
    values = np.array(rows, dtype=np.float64).reshape(len(rows), width - 1)
    return TimeSeriesTable(timestamps, [h.strip() for h in header[1:]], values)


def chronological_split(table: TimeSeriesTable,
                        ratios: tuple[float, float, float] = (0.7, 0.1, 0.2),
                        window: WindowSpec | None = None
                        ) -> tuple[TimeSeriesTable, TimeSeriesTable, TimeSeriesTable]:
    """Contiguous prefix/middle/suffix split; floor sizes, remainder to test."""
    if any(r <= 0 for r in ratios):
        raise ValueError(f"ratios must be positive, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {sum(ratios)}")
    n = table.length
    n_train = int(np.floor(ratios[0] * n))
    n_val = int(np.floor(ratios[1] * n))
    bounds = [(0, n_train), (n_train, n_train + n_val), (n_train + n_val, n)]
    names = ("train", "val", "test")
    parts = []
    for (lo, hi), name in zip(bounds, names):
        if window is not None and hi - lo < window.input_len + window.horizon:
            raise SplitTooShortError(
                f"{name} split too short: {hi - lo} rows < "
                f"{window.input_len + window.horizon} needed"
            )
        parts.append(TimeSeriesTable(table.timestamps[lo:hi], list(table.channel_names),
                                     table.values[lo:hi].copy()))
    return parts[0], parts[1], parts[2]


def synth_sines(rng: Rng, length: int, channels: int, components: int,
                noise_std: float) -> TimeSeriesTable:
    """Sum-of-sines fixture data with integer periods in [12, 168]."""
    if components < 1:
        raise ValueError(f"components must be >= 1, got {components}")
    t = np.arange(length, dtype=np.float64)
    values = np.zeros((length, channels))
    for c in range(channels):
        wave = np.zeros(length)
        for _ in range(components):
            amp = 0.5 + rng.uniform(1)[0]
            period = 12 + int(rng.uniform(1)[0] * 157)  # integer in [12, 168]
            phase = 2.0 * np.pi * rng.uniform(1)[0]
            wave += amp * np.sin(2.0 * np.pi * t / period + phase)
        if noise_std > 0:
            wave += noise_std * rng.normal(length)
        values[:, c] = wave
    timestamps = _hourly_stamps(length)
    names = [f"ch{c}" for c in range(channels)]
    return TimeSeriesTable(timestamps, names, values)


def _hourly_stamps(length: int) -> list[str]:
    base_day = np.datetime64("2020-01-01T00:00:00")
    stamps = base_day + np.arange(length) * np.timedelta64(1, "h")
    return [str(s).replace("T", " ") for s in stamps]


def revin_normalize(window: np.ndarray) -> tuple[np.ndarray, RevinStats]:
    """Zero-mean/unit-std the window; std floored so constants stay finite."""
    window = np.asarray(window, dtype=np.float64)
    if window.size < 2:
        raise ValueError(f"window must have >= 2 values, got {window.size}")
    mean = float(window.mean())
    std = float(np.sqrt(np.mean((window - mean) ** 2)))
    if std < REVIN_STD_FLOOR:
        std = REVIN_STD_FLOOR
    return (window - mean) / std, RevinStats(mean=mean, std=std)


def revin_denormalize(values: np.ndarray, revin: RevinStats) -> np.ndarray:
    return np.asarray(values, dtype=np.float64) * revin.std + revin.mean


def patchify(window: np.ndarray, spec: WindowSpec) -> PatchSet:
    """Slice a window into overlapping patches, end-padding by replication."""
    window = np.asarray(window, dtype=np.float64).ravel()
    length = window.size
    if spec.patch_size > length:
        raise ValueError(f"patch size {spec.patch_size} exceeds window length {length}")
    rem = (length - spec.patch_size) % spec.stride
    if rem:
        pad = spec.stride - rem
        window = np.concatenate([window, np.full(pad, window[-1])])
        length += pad
    n = (length - spec.patch_size) // spec.stride + 1
    starts = np.arange(n) * spec.stride
    patches = np.stack([window[s:s + spec.patch_size] for s in starts])
    return PatchSet(patches=patches)


def make_windows(table: TimeSeriesTable, spec: WindowSpec) -> list[SeriesWindow]:
    """Every (channel, offset) window of the table, revin-normalized inputs."""
    L, H = spec.input_len, spec.horizon
    if table.length < L + H:
        raise SplitTooShortError(
            f"table length {table.length} < input_len + horizon = {L + H}"
        )
    windows = []
    for c in range(table.channels):
        col = table.values[:, c]
        for t in range(table.length - L - H + 1):
            raw = col[t:t + L]
            normalized, stats = revin_normalize(raw)
            windows.append(SeriesWindow(channel=c, input=normalized,
                                        target=col[t + L:t + L + H].copy(),
                                        revin=stats))
    return windows


def window_batches(windows: list[SeriesWindow], batch_size: int,
                   order: np.ndarray | None = None):
    """Yield (X, Y, means, stds) batches in the given window order."""
    idx = np.arange(len(windows)) if order is None else order
    for start in range(0, len(idx), batch_size):
        chunk = [windows[i] for i in idx[start:start + batch_size]]
        X = np.stack([w.input for w in chunk])
        Y = np.stack([w.target for w in chunk])
        means = np.array([w.revin.mean for w in chunk])
        stds = np.array([w.revin.std for w in chunk])
        yield X, Y, means, stds
