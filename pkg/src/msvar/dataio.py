"""Ingestion of car-following data into a canonical multivariate series.

Two sources are supported: floating-car CSV files (radar-measured gap and
speed difference, typically 10 Hz) and paired smartphone GPS logs (1 Hz, one
file per vehicle, gap derived via the haversine formula). Both produce an
ObservationSeries with the canonical channel order (v, a, dv, h):

    v  follower speed [m/s]
    a  follower acceleration [m/s^2], first difference of v
    dv leader speed minus follower speed [m/s]
    h  leader-follower gap distance [m]

All ingestion is deterministic: the same inputs and configuration produce
byte-identical output files.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from .errors import ConfigError, IngestionError

EARTH_RADIUS_M = 6_371_000.0

CANONICAL_CHANNELS = ("v", "a", "dv", "h")
CANONICAL_UNITS = {"v": "m/s", "a": "m/s^2", "dv": "m/s", "h": "m"}


@dataclass(frozen=True)
class GeoPoint:
    """A GPS fix: latitude/longitude in degrees, timestamp in epoch seconds."""

    lat: float
    lon: float
    timestamp: float

    def __post_init__(self):
        if not -90.0 <= self.lat <= 90.0:
            raise IngestionError(f"latitude {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise IngestionError(f"longitude {self.lon} outside [-180, 180]")


@dataclass(frozen=True)
class SensorLogRecord:
    """One row of a smartphone sensor log."""

    point: GeoPoint
    speed: Optional[float] = None
    heading: Optional[float] = None

    def __post_init__(self):
        if self.speed is not None and self.speed < 0.0:
            raise IngestionError(f"negative speed {self.speed}")


@dataclass
class ObservationSeries:
    """Uniformly sampled T x N series with named channels.

    data rows are samples at times t0 + k * sample_interval. Construction
    rejects non-finite values and degenerate shapes; car-following-specific
    checks (positive gap) are reported by :func:`series_violations` so that
    ingestion can flag rather than refuse borderline data.
    """

    channels: tuple[str, ...]
    data: np.ndarray
    sample_interval: float
    t0: float = 0.0
    units: dict = field(default_factory=dict)
    source: str = ""

    def __post_init__(self):
        self.channels = tuple(self.channels)
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim != 2:
            raise IngestionError("series data must be 2-D (rows x channels)")
        T, N = self.data.shape
        if N != len(self.channels):
            raise IngestionError(f"{N} columns but {len(self.channels)} channel names")
        if T < 2:
            raise IngestionError(f"series needs at least 2 rows, got {T}")
        if N < 1:
            raise IngestionError("series needs at least one channel")
        if self.sample_interval <= 0:
            raise IngestionError(f"sample_interval must be positive, got {self.sample_interval}")
        bad = np.argwhere(~np.isfinite(self.data))
        if bad.size:
            r, c = bad[0]
            raise IngestionError(f"non-finite value at row {r}, channel {self.channels[c]!r}")

    @property
    def n_rows(self) -> int:
        return self.data.shape[0]

    @property
    def n_channels(self) -> int:
        return self.data.shape[1]

    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.n_rows) * self.sample_interval

    def channel(self, name: str) -> np.ndarray:
        try:
            return self.data[:, self.channels.index(name)]
        except ValueError:
            raise KeyError(f"no channel named {name!r}; have {self.channels}") from None

    def channel_index(self, name: str) -> int:
        try:
            return self.channels.index(name)
        except ValueError:
            raise KeyError(f"no channel named {name!r}; have {self.channels}") from None

    def drop_head(self, n: int) -> "ObservationSeries":
        """Drop the first n rows (used to align grid-search samples)."""
        if n <= 0:
            return self
        return ObservationSeries(
            channels=self.channels,
            data=self.data[n:].copy(),
            sample_interval=self.sample_interval,
            t0=self.t0 + n * self.sample_interval,
            units=dict(self.units),
            source=self.source,
        )

    def head(self, n: int) -> "ObservationSeries":
        return ObservationSeries(
            channels=self.channels,
            data=self.data[:n].copy(),
            sample_interval=self.sample_interval,
            t0=self.t0,
            units=dict(self.units),
            source=self.source,
        )


def series_violations(series: ObservationSeries) -> list[str]:
    """Car-following sanity checks beyond the structural invariants."""
    out = []
    if "h" in series.channels:
        h = series.channel("h")
        n_bad = int(np.sum(h <= 0.0))
        if n_bad:
            first = int(np.argmax(h <= 0.0))
            out.append(f"gap channel h not strictly positive in {n_bad} rows (first at row {first})")
    return out


def haversine_distance(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in meters on a sphere of radius 6,371,000 m."""
    lat1, lon1 = math.radians(a.lat), math.radians(a.lon)
    lat2, lon2 = math.radians(b.lat), math.radians(b.lon)
    s_lat = math.sin(0.5 * (lat2 - lat1))
    s_lon = math.sin(0.5 * (lon2 - lon1))
    root = s_lat * s_lat + math.cos(lat1) * math.cos(lat2) * s_lon * s_lon
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(root)))


def _derive_acceleration(v: np.ndarray, dt: float) -> np.ndarray:
    """First difference of v over dt; the first sample is backfilled from the second."""
    a = np.empty_like(v)
    a[1:] = np.diff(v) / dt
    a[0] = a[1]
    return a


def _moving_average(x: np.ndarray, window: int) -> np.ndarray:
    if window <= 1:
        return x
    kernel = np.ones(window) / window
    padded = np.concatenate([np.repeat(x[0], window - 1), x])
    return np.convolve(padded, kernel, mode="valid")


DEFAULT_FCD_SCHEMA = {"time": "time", "v": "v", "dv": "dv", "h": "h"}


def ingest_fcd_csv(path, schema: Optional[dict] = None) -> ObservationSeries:
    """Ingest a floating-car-data CSV at its native sampling rate.

    ``schema`` maps canonical fields {time, v, dv, h, [a]} to the file's
    column names. Acceleration is derived by first difference of v when the
    file does not provide it.
    """
    schema = {**DEFAULT_FCD_SCHEMA, **(schema or {})}
    frame = pd.read_csv(path, float_precision="round_trip")
    for key in ("time", "v", "dv", "h"):
        col = schema[key]
        if col not in frame.columns:
            raise IngestionError(f"{path}: required column {col!r} (field {key!r}) missing")
    times = frame[schema["time"]].to_numpy(dtype=float)
    if len(times) < 2:
        raise IngestionError(f"{path}: need at least 2 rows")
    diffs = np.diff(times)
    if np.any(diffs <= 0):
        row = int(np.argmax(diffs <= 0)) + 1
        raise IngestionError(f"{path}: time not strictly increasing at row {row}")
    dt = float(np.median(diffs))
    if np.max(np.abs(diffs - dt)) > 0.01 * dt:
        row = int(np.argmax(np.abs(diffs - dt) > 0.01 * dt)) + 1
        raise IngestionError(f"{path}: sampling not uniform near row {row}")

    v = frame[schema["v"]].to_numpy(dtype=float)
    dv = frame[schema["dv"]].to_numpy(dtype=float)
    h = frame[schema["h"]].to_numpy(dtype=float)
    if np.any(h < 0):
        row = int(np.argmax(h < 0))
        raise IngestionError(f"{path}: negative gap at row {row}")
    if "a" in schema and schema["a"] in frame.columns:
        a = frame[schema["a"]].to_numpy(dtype=float)
    else:
        a = _derive_acceleration(v, dt)

    data = np.column_stack([v, a, dv, h])
    if not np.isfinite(data).all():
        row = int(np.argwhere(~np.isfinite(data))[0][0])
        raise IngestionError(f"{path}: non-finite value at row {row}")
    return ObservationSeries(
        channels=CANONICAL_CHANNELS,
        data=data,
        sample_interval=dt,
        t0=float(times[0]),
        units=dict(CANONICAL_UNITS),
        source=str(path),
    )


def _parse_timestamp(value) -> float:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    text = str(value).strip()
    try:
        return float(text)
    except ValueError:
        pass
    ts = pd.Timestamp(text)
    if ts.tzinfo is None:
        ts = ts.tz_localize("UTC")
    return float(ts.timestamp())


def read_sensor_log(path) -> list[SensorLogRecord]:
    """Read one smartphone log: columns timestamp, lat, lon, speed, [heading]."""
    frame = pd.read_csv(path, float_precision="round_trip")
    for col in ("timestamp", "lat", "lon", "speed"):
        if col not in frame.columns:
            raise IngestionError(f"{path}: required column {col!r} missing")
    if len(frame) == 0:
        raise IngestionError(f"{path}: log is empty")
    records = []
    prev_t = -math.inf
    for row_idx, row in enumerate(frame.itertuples(index=False)):
        t = _parse_timestamp(getattr(row, "timestamp"))
        if t <= prev_t:
            raise IngestionError(f"{path}: timestamps not strictly increasing at row {row_idx}")
        prev_t = t
        speed = getattr(row, "speed")
        heading = getattr(row, "heading", None)
        records.append(
            SensorLogRecord(
                point=GeoPoint(lat=float(getattr(row, "lat")), lon=float(getattr(row, "lon")), timestamp=t),
                speed=None if pd.isna(speed) else float(speed),
                heading=None if heading is None or pd.isna(heading) else float(heading),
            )
        )
    return records


@dataclass(frozen=True)
class AlignConfig:
    """Leader/follower alignment: nearest-neighbor join on a uniform grid."""

    tolerance: float = 0.5
    rate: float = 1.0
    smooth_window: int = 1
    min_rows: int = 10


def _nearest_within(times: np.ndarray, t: float, tol: float) -> int:
    i = int(np.searchsorted(times, t))
    best, dist = -1, tol
    for j in (i - 1, i):
        if 0 <= j < len(times) and abs(times[j] - t) <= dist:
            best, dist = j, abs(times[j] - t)
    return best


def ingest_smartphone_pair(
    leader_log,
    follower_log,
    config: Optional[AlignConfig] = None,
) -> tuple[ObservationSeries, list[str]]:
    """Align a leader/follower pair of GPS logs into a canonical series.

    Per aligned timestamp: v = follower speed, dv = leader - follower speed,
    h = haversine gap, a = first difference of v. Grid points with no match
    in either log within the join tolerance are dropped; the longest
    contiguous run of aligned rows is returned so the output stays uniform.

    Returns (series, flags); flags carry non-fatal quality notes such as a
    non-positive gap (degenerate pairs are rejected downstream by the h > 0
    requirement, not here).
    """
    config = config or AlignConfig()
    leader = leader_log if isinstance(leader_log, list) else read_sensor_log(leader_log)
    follower = follower_log if isinstance(follower_log, list) else read_sensor_log(follower_log)
    if not leader or not follower:
        raise IngestionError("empty sensor log")

    lt = np.array([r.point.timestamp for r in leader])
    ft = np.array([r.point.timestamp for r in follower])
    step = 1.0 / config.rate
    start = max(lt[0], ft[0])
    stop = min(lt[-1], ft[-1])
    if stop <= start:
        raise IngestionError("leader and follower logs do not overlap in time")
    grid = start + step * np.arange(int(math.floor((stop - start) / step)) + 1)

    rows, keep = [], []
    for t in grid:
        fi = _nearest_within(ft, t, config.tolerance)
        li = _nearest_within(lt, t, config.tolerance)
        if fi < 0 or li < 0:
            keep.append(False)
            rows.append(None)
            continue
        frec, lrec = follower[fi], leader[li]
        if frec.speed is None or lrec.speed is None:
            keep.append(False)
            rows.append(None)
            continue
        keep.append(True)
        rows.append(
            (
                frec.speed,
                lrec.speed - frec.speed,
                haversine_distance(lrec.point, frec.point),
            )
        )

    # longest contiguous run of aligned grid points
    best_len = best_start = cur_len = 0
    cur_start = None
    for i, ok in enumerate(keep + [False]):
        if ok:
            if cur_len == 0:
                cur_start = i
            cur_len += 1
            if cur_len > best_len:
                best_len, best_start = cur_len, cur_start
        else:
            cur_len = 0
    if best_len < config.min_rows:
        raise IngestionError(
            f"only {best_len} contiguous aligned rows (need {config.min_rows}); "
            "insufficient leader/follower overlap"
        )

    block = rows[best_start : best_start + best_len]
    v = np.array([r[0] for r in block])
    dv = np.array([r[1] for r in block])
    h = np.array([r[2] for r in block])
    if config.smooth_window > 1:
        v = _moving_average(v, config.smooth_window)
        dv = _moving_average(dv, config.smooth_window)
        h = _moving_average(h, config.smooth_window)
    a = _derive_acceleration(v, step)

    series = ObservationSeries(
        channels=CANONICAL_CHANNELS,
        data=np.column_stack([v, a, dv, h]),
        sample_interval=step,
        t0=float(grid[best_start]),
        units=dict(CANONICAL_UNITS),
        source="smartphone-pair",
    )
    flags = series_violations(series)
    dropped = len(grid) - best_len
    if dropped:
        flags.append(f"dropped {dropped} grid points without a match within {config.tolerance}s")
    return series, flags


def resample(series: ObservationSeries, new_interval: float) -> ObservationSeries:
    """Decimate by stride; new_interval must be an integer multiple of the old."""
    ratio = new_interval / series.sample_interval
    stride = round(ratio)
    if stride < 1 or abs(ratio - stride) > 1e-9:
        raise ConfigError(
            f"new interval {new_interval} is not an integer multiple of {series.sample_interval}"
        )
    if stride == 1:
        return series
    return ObservationSeries(
        channels=series.channels,
        data=series.data[::stride].copy(),
        sample_interval=series.sample_interval * stride,
        t0=series.t0,
        units=dict(series.units),
        source=series.source,
    )


# ---------------------------------------------------------------------------
# Canonical serialization: CSV + JSON sidecar
# ---------------------------------------------------------------------------


def write_series(series: ObservationSeries, csv_path, meta_path=None) -> tuple[Path, Path]:
    """Write `t,<channels...>` CSV plus a JSON sidecar with the metadata."""
    csv_path = Path(csv_path)
    meta_path = Path(meta_path) if meta_path else csv_path.with_suffix(".json")
    times = series.times()
    with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("t," + ",".join(series.channels) + "\n")
        for k in range(series.n_rows):
            row = ",".join(repr(float(x)) for x in series.data[k])
            fh.write(f"{float(times[k])!r},{row}\n")
    meta = {
        "channels": list(series.channels),
        "sample_interval": series.sample_interval,
        "t0": series.t0,
        "units": series.units,
        "source": series.source,
    }
    with open(meta_path, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")
    return csv_path, meta_path


def read_series(csv_path, meta_path=None) -> ObservationSeries:
    """Read a canonical series written by :func:`write_series`.

    The sidecar is optional: without it the interval is inferred from the t
    column and units default to empty.
    """
    csv_path = Path(csv_path)
    meta_path = Path(meta_path) if meta_path else csv_path.with_suffix(".json")
    frame = pd.read_csv(csv_path, float_precision="round_trip")
    if "t" not in frame.columns:
        raise IngestionError(f"{csv_path}: missing t column")
    channels = [c for c in frame.columns if c != "t"]
    times = frame["t"].to_numpy(dtype=float)
    if meta_path.exists():
        with open(meta_path, encoding="utf-8") as fh:
            meta = json.load(fh)
        interval = float(meta["sample_interval"])
        t0 = float(meta.get("t0", times[0]))
        units = meta.get("units", {})
        source = meta.get("source", "")
        channels = meta.get("channels", channels)
    else:
        if len(times) < 2:
            raise IngestionError(f"{csv_path}: need at least 2 rows")
        interval = float(np.median(np.diff(times)))
        t0, units, source = float(times[0]), {}, str(csv_path)
    return ObservationSeries(
        channels=tuple(channels),
        data=frame[list(channels)].to_numpy(dtype=float),
        sample_interval=interval,
        t0=t0,
        units=units,
        source=source,
    )
