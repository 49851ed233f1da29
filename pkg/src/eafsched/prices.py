"""Day-ahead and real-time price series at 5-minute resolution.

Loading, alignment, a synthetic generator for runs without market files,
and the 15-bucket discretisation of day-ahead prices used by the learner.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np

STEP_MINUTES = 5
STEPS_PER_HOUR = 60 // STEP_MINUTES
STEPS_PER_DAY = 24 * STEPS_PER_HOUR
MAX_FILL_STEPS = 3
N_BUCKETS = 15

DAP = "DAP"
RTP = "RTP"
MARKETS = (DAP, RTP)

DEFAULT_START = datetime(2023, 1, 1, tzinfo=timezone.utc)


class PriceDataError(ValueError):
    pass


class PriceParseError(PriceDataError):
    def __init__(self, row: int, message: str):
        super().__init__(f"row {row}: {message}")
        self.row = row


class GapTooLargeError(PriceDataError):
    def __init__(self, gaps: list[tuple[datetime, datetime, int]]):
        listing = "; ".join(f"{a.isoformat()} -> {b.isoformat()} ({n} missing steps)" for a, b, n in gaps)
        super().__init__(f"gaps longer than {MAX_FILL_STEPS} steps: {listing}")
        self.gaps = gaps


class EmptyOverlapError(PriceDataError):
    pass


class InsufficientDataError(PriceDataError):
    pass


@dataclass
class LoadReport:
    rows: int = 0
    source_step_minutes: int = STEP_MINUTES
    filled: list[datetime] = field(default_factory=list)  # timestamps created by interpolation

    @property
    def n_filled(self) -> int:
        return len(self.filled)


@dataclass(frozen=True, eq=False)
class PriceSeries:
    start: datetime
    values: np.ndarray  # $/MWh per step
    market: str = RTP
    step_minutes: int = STEP_MINUTES
    report: LoadReport | None = None

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1 or len(vals) == 0:
            raise PriceDataError("a price series needs at least one value")
        if not np.all(np.isfinite(vals)):
            raise PriceDataError("price series contains non-finite values")
        if self.market not in MARKETS:
            raise PriceDataError(f"unknown market tag {self.market!r}")
        start = self.start if self.start.tzinfo else self.start.replace(tzinfo=timezone.utc)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "start", start.astimezone(timezone.utc))

    def __len__(self) -> int:
        return len(self.values)

    @property
    def step(self) -> timedelta:
        return timedelta(minutes=self.step_minutes)

    @property
    def end(self) -> datetime:
        """Timestamp one step past the last value."""
        return self.start + len(self) * self.step

    def timestamp(self, t: int) -> datetime:
        return self.start + t * self.step

    def timestamps(self) -> list[datetime]:
        return [self.start + t * self.step for t in range(len(self))]

    def window(self, t0: int, t1: int) -> "PriceSeries":
        return PriceSeries(self.timestamp(t0), self.values[t0:t1], self.market, self.step_minutes)

    def days(self, first: int, count: int) -> "PriceSeries":
        return self.window(first * STEPS_PER_DAY, (first + count) * STEPS_PER_DAY)

    @property
    def n_days(self) -> int:
        return len(self) // STEPS_PER_DAY


def _parse_time(text: str) -> datetime:
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def load_price_csv(path: str | Path, market: str) -> PriceSeries:
    """Read a ``timestamp,price`` file into a gap-free 5-minute series.

    Hourly files are expanded by repeating each value over its 12 steps.
    Gaps of up to three steps are filled linearly and listed in the
    series' ``report``; longer gaps raise :class:`GapTooLargeError`.
    """
    times: list[datetime] = []
    prices: list[float] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header[:2]] != ["timestamp", "price"]:
            raise PriceParseError(1, "expected header 'timestamp,price'")
        for row_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < 2:
                raise PriceParseError(row_no, "expected two columns")
            try:
                ts = _parse_time(row[0])
            except ValueError as exc:
                raise PriceParseError(row_no, f"bad timestamp {row[0]!r}") from exc
            try:
                price = float(row[1])
            except ValueError as exc:
                raise PriceParseError(row_no, f"bad price {row[1]!r}") from exc
            if not np.isfinite(price):
                raise PriceParseError(row_no, f"non-finite price {row[1]!r}")
            if times and ts <= times[-1]:
                what = "duplicate" if ts == times[-1] else "out-of-order"
                raise PriceParseError(row_no, f"{what} timestamp {ts.isoformat()}")
            times.append(ts)
            prices.append(price)
    if not times:
        raise PriceDataError(f"{path}: no price rows")

    secs = np.array([(ts - times[0]).total_seconds() for ts in times])
    spacing = np.diff(secs)
    hourly = len(spacing) > 0 and np.median(spacing) == 3600.0
    native = 60 if hourly else STEP_MINUTES
    unit = native * 60.0
    if np.any(np.mod(secs, unit) != 0):
        raise PriceDataError(f"{path}: timestamps are not on a {native}-minute grid")
    idx = (secs // unit).astype(int)
    n = idx[-1] + 1
    report = LoadReport(rows=len(times), source_step_minutes=native)
    missing = np.setdiff1d(np.arange(n), idx)
    gaps = []
    if missing.size:
        runs = np.split(missing, np.flatnonzero(np.diff(missing) > 1) + 1)
        for run in runs:
            if len(run) > MAX_FILL_STEPS:
                a = times[0] + timedelta(minutes=native * int(run[0] - 1))
                b = times[0] + timedelta(minutes=native * int(run[-1] + 1))
                gaps.append((a, b, len(run)))
        if gaps:
            raise GapTooLargeError(gaps)
        report.filled = [times[0] + timedelta(minutes=native * int(j)) for j in missing]
    values = np.interp(np.arange(n), idx, prices)
    if hourly:
        values = np.repeat(values, STEPS_PER_HOUR)
    return PriceSeries(times[0], values, market, STEP_MINUTES, report)


def save_price_csv(series: PriceSeries, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", "price"])
        for ts, v in zip(series.timestamps(), series.values):
            w.writerow([ts.strftime("%Y-%m-%dT%H:%M:%SZ"), repr(float(v))])


def align_series(dap: PriceSeries, rtp: PriceSeries) -> tuple[PriceSeries, PriceSeries]:
    """Clip both series to their common time range."""
    if dap.step_minutes != rtp.step_minutes:
        raise PriceDataError("series have different step lengths")
    start = max(dap.start, rtp.start)
    end = min(dap.end, rtp.end)
    if end <= start:
        raise EmptyOverlapError(f"no overlap between {dap.start}..{dap.end} and {rtp.start}..{rtp.end}")

    def clip(s: PriceSeries) -> PriceSeries:
        off = (start - s.start) // s.step
        if (start - s.start) % s.step:
            raise PriceDataError("series are not on a common step grid")
        n = (end - start) // s.step
        return s.window(off, off + n)

    return clip(dap), clip(rtp)


@dataclass(frozen=True)
class SynthProfile:
    """Constants of the synthetic price generator.

    Day-ahead: hourly values of ``mean - amplitude*cos(pi*phase)`` where the
    phase runs 0 -> 1 from the trough hour to the peak hour and 1 -> 2 back
    to the next trough, so the daily shape is a sinusoid bent to put its
    minimum and maximum at the given hours. The amplitude is scaled by
    ``1 + weekly*sin(2*pi*day/7)``.

    Real-time: day-ahead plus AR(1) noise with stationary std ``ar_sigma``
    and coefficient ``ar_phi``, plus Poisson spikes (``spike_rate`` per day)
    of uniform height in ``spike_height`` lasting a uniform 1..``spike_max_steps``
    steps.
    """

    mean: float = 40.0
    amplitude: float = 25.0
    trough_hour: float = 3.0
    peak_hour: float = 18.0
    weekly: float = 0.2
    ar_sigma: float = 8.0
    ar_phi: float = 0.8
    spike_rate: float = 2.0
    spike_height: tuple[float, float] = (100.0, 300.0)
    spike_max_steps: int = 6
    start: datetime = DEFAULT_START


def daily_shape(hour: np.ndarray, trough: float = 3.0, peak: float = 18.0) -> np.ndarray:
    """Bent sinusoid in [-1, 1]: -1 at ``trough``, +1 at ``peak`` (hours)."""
    rise = (peak - trough) % 24
    h = (np.asarray(hour, dtype=float) - trough) % 24
    phase = np.where(h <= rise, h / rise, 1.0 + (h - rise) / (24.0 - rise))
    return -np.cos(np.pi * phase)


def synth_prices(seed: int, days: int, profile: SynthProfile | None = None) -> tuple[PriceSeries, PriceSeries]:
    """Deterministic synthetic (DAP, RTP) pair of ``days`` days."""
    if days < 1:
        raise PriceDataError("days must be >= 1")
    p = profile or SynthProfile()
    rng = np.random.default_rng(seed)
    n = days * STEPS_PER_DAY
    hours = np.arange(days * 24)
    day = hours // 24
    scale = p.amplitude * (1.0 + p.weekly * np.sin(2 * np.pi * day / 7.0))
    dap_hourly = p.mean + scale * daily_shape(hours % 24, p.trough_hour, p.peak_hour)
    dap = np.repeat(dap_hourly, STEPS_PER_HOUR)

    noise = np.zeros(n)
    if p.ar_sigma > 0:
        innov = p.ar_sigma * np.sqrt(1.0 - p.ar_phi**2)
        eps = rng.normal(0.0, innov, n)
        noise[0] = rng.normal(0.0, p.ar_sigma)
        for t in range(1, n):
            noise[t] = p.ar_phi * noise[t - 1] + eps[t]
    spikes = np.zeros(n)
    if p.spike_rate > 0:
        count = rng.poisson(p.spike_rate * days)
        starts = rng.integers(0, n, count)
        heights = rng.uniform(*p.spike_height, count)
        lengths = rng.integers(1, p.spike_max_steps + 1, count)
        for s, h, ln in zip(starts, heights, lengths):
            spikes[s : s + ln] += h
    rtp = dap + noise + spikes
    return PriceSeries(p.start, dap, DAP), PriceSeries(p.start, rtp, RTP)


@dataclass(frozen=True)
class PriceBucketizer:
    thresholds: tuple[float, float, float, float]  # level cut-points, $/MWh
    theta: float  # trend dead-band, $/MWh
    n_buckets: int = N_BUCKETS

    def level(self, hour_mean: float) -> int:
        return int(np.searchsorted(self.thresholds, hour_mean, side="left"))

    def trend(self, cur: float, nxt: float) -> int:
        d = nxt - cur
        if d < -self.theta:
            return 0
        if d > self.theta:
            return 2
        return 1


def hourly_means(values: np.ndarray) -> np.ndarray:
    """Mean per clock hour; a trailing partial hour is averaged as is."""
    v = np.asarray(values, dtype=float)
    nh = -(-len(v) // STEPS_PER_HOUR)
    out = np.empty(nh)
    for h in range(nh):
        out[h] = v[h * STEPS_PER_HOUR : (h + 1) * STEPS_PER_HOUR].mean()
    return out


def fit_bucketizer(training_dap: PriceSeries | np.ndarray) -> PriceBucketizer:
    vals = np.asarray(getattr(training_dap, "values", training_dap), dtype=float)
    if len(vals) < 7 * STEPS_PER_DAY:
        raise InsufficientDataError("bucketizer needs at least 7 days of day-ahead prices")
    hm = hourly_means(vals[: len(vals) // STEPS_PER_HOUR * STEPS_PER_HOUR])
    thr = tuple(float(q) for q in np.percentile(hm, [20, 40, 60, 80]))
    theta = 0.25 * float(np.std(np.diff(hm)))
    return PriceBucketizer(thr, theta)


def bucketize(bz: PriceBucketizer, dap: PriceSeries | np.ndarray, t: int) -> int:
    """Bucket ``3*level + trend`` of step ``t``; steps are grouped into hours from the series start."""
    vals = np.asarray(getattr(dap, "values", dap), dtype=float)
    if not 0 <= t < len(vals):
        raise IndexError(f"step {t} outside series of length {len(vals)}")
    h = t // STEPS_PER_HOUR
    cur = vals[h * STEPS_PER_HOUR : (h + 1) * STEPS_PER_HOUR].mean()
    nxt_slice = vals[(h + 1) * STEPS_PER_HOUR : (h + 2) * STEPS_PER_HOUR]
    if len(nxt_slice) < STEPS_PER_HOUR:
        trend = 1
    else:
        trend = bz.trend(cur, nxt_slice.mean())
    return 3 * bz.level(cur) + trend


def bucketize_series(bz: PriceBucketizer, dap: PriceSeries | np.ndarray) -> np.ndarray:
    """Buckets of every step at once (same rule as :func:`bucketize`)."""
    vals = np.asarray(getattr(dap, "values", dap), dtype=float)
    hm = hourly_means(vals)
    full = np.array([len(vals[(h) * STEPS_PER_HOUR : (h + 1) * STEPS_PER_HOUR]) == STEPS_PER_HOUR for h in range(len(hm))])
    levels = np.searchsorted(np.asarray(bz.thresholds), hm, side="left")
    trend = np.ones(len(hm), dtype=int)
    for h in range(len(hm) - 1):
        if full[h + 1]:
            trend[h] = bz.trend(hm[h], hm[h + 1])
    z = 3 * levels + trend
    return np.repeat(z, STEPS_PER_HOUR)[: len(vals)].astype(int)
