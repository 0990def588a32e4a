"""Clock alignment between camera views by motion-energy cross-correlation."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .core import MultiViewEvent, ViewStream
from .errors import DegenerateSignal, IoError, MissingOffset, ParseError, RateMismatch, TooShort
from .trigger import TriggerWindow

# Lags whose overlap is shorter than this fraction of the shorter signal are
# not considered; tiny overlaps produce spurious perfect correlations.
MIN_OVERLAP_FRACTION = 0.5


@dataclass(frozen=True)
class MotionEnergySignal:
    sample_rate_hz: float
    values: tuple[float, ...]
    centered: np.ndarray = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        if not self.sample_rate_hz > 0:
            raise ValueError("sample_rate_hz must be positive")
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if self.centered is None:
            arr = np.asarray(self.values, dtype=float)
            centered = arr - arr.mean() if arr.size else arr
            centered.setflags(write=False)
            object.__setattr__(self, "centered", centered)

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class OffsetEstimate:
    offset_s: float
    confidence: float


def motion_energy_from_frame_diffs(frame_diff_sums: Sequence[float], sample_rate_hz: float) -> MotionEnergySignal:
    values = [float(v) for v in frame_diff_sums]
    if len(values) < 2:
        raise TooShort(f"need at least 2 samples, got {len(values)}")
    if any(v < 0 for v in values):
        raise ValueError("motion energy values must be non-negative")
    return MotionEnergySignal(sample_rate_hz, tuple(values))


def _pearson_at_lag(a: np.ndarray, b: np.ndarray, lag: int) -> float:
    # correlate a[t] with b[t + lag] over the overlapping stretch
    if lag >= 0:
        x, y = a[: len(b) - lag], b[lag:]
    else:
        x, y = a[-lag:], b[: len(a) + lag]
    n = min(len(x), len(y))
    x, y = x[:n] - x[:n].mean(), y[:n] - y[:n].mean()
    denom = np.sqrt(np.dot(x, x) * np.dot(y, y))
    if denom == 0.0:
        return 0.0
    return float(np.dot(x, y) / denom)


def estimate_offset(a: MotionEnergySignal, b: MotionEnergySignal, max_lag_s: float) -> OffsetEstimate:
    """Delay of ``b`` relative to ``a``, in seconds.

    A positive ``offset_s`` means events appear ``offset_s`` later on
    ``b``'s clock; adding it to a time on ``a``'s clock gives the same
    instant on ``b``'s. The integer-lag Pearson peak is refined by fitting a
    parabola through it and its two neighbours.
    """
    if a.sample_rate_hz != b.sample_rate_hz:
        raise RateMismatch(f"{a.sample_rate_hz} Hz vs {b.sample_rate_hz} Hz")
    ca, cb = a.centered, b.centered
    if len(ca) < 2 or len(cb) < 2:
        raise TooShort("signals need at least 2 samples")
    if not np.any(ca) or not np.any(cb):
        raise DegenerateSignal("zero-variance motion energy signal")
    rate = a.sample_rate_hz
    shortest = min(len(ca), len(cb))
    max_overlap_lag = shortest - max(2, int(np.ceil(MIN_OVERLAP_FRACTION * shortest)))
    max_lag = min(int(np.floor(max_lag_s * rate + 1e-9)), max_overlap_lag)
    if max_lag < 0:
        raise ValueError(f"max_lag_s={max_lag_s} must be non-negative")
    lags = np.arange(-max_lag, max_lag + 1)
    corr = np.array([_pearson_at_lag(ca, cb, int(k)) for k in lags])
    peak = int(np.argmax(corr))
    best = float(corr[peak])
    shift = 0.0
    if 0 < peak < len(corr) - 1:
        left, mid, right = corr[peak - 1], corr[peak], corr[peak + 1]
        curvature = left - 2 * mid + right
        if curvature < 0:
            shift = float(np.clip(0.5 * (left - right) / curvature, -0.5, 0.5))
    offset = (lags[peak] + shift) / rate
    return OffsetEstimate(offset_s=float(offset), confidence=float(min(1.0, max(0.0, best))))


def build_synchronized_event(event_id: str, raw_views: Sequence[ViewStream], window: TriggerWindow,
                             offsets: Mapping[str, float]) -> MultiViewEvent:
    """Assemble an event on the trigger window's timeline.

    The first view is the clock reference (offset 0); every other view needs
    an entry in ``offsets``.
    """
    if not raw_views:
        raise ValueError("views: empty")
    views = [_with_offset(raw_views[0], 0.0)]
    for view in raw_views[1:]:
        if view.view_id not in offsets:
            raise MissingOffset(view.view_id)
        views.append(_with_offset(view, float(offsets[view.view_id])))
    return MultiViewEvent(event_id=event_id, duration_s=window.window.length, views=tuple(views),
                          origin_s=window.window.start_s)


def _with_offset(view: ViewStream, offset_s: float) -> ViewStream:
    return ViewStream(view.view_id, view.kind, view.video_uri, view.motion_energy_uri, offset_s)


def load_motion_energy(path) -> MotionEnergySignal:
    """Read a sidecar CSV: a ``sample_rate_hz`` header line with its value, then one value per line.

    Both ``sample_rate_hz,2`` on one line and ``sample_rate_hz`` followed by
    the rate on the next line are accepted.
    """
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as handle:
            rows = [r for r in csv.reader(handle) if r and any(c.strip() for c in r)]
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if not rows or rows[0][0].strip() != "sample_rate_hz":
        raise ParseError("MissingField", "motion energy header", field="sample_rate_hz", line=1, path=str(path))
    try:
        if len(rows[0]) > 1 and rows[0][1].strip():
            rate, body = float(rows[0][1]), rows[1:]
        else:
            rate, body = float(rows[1][0]), rows[2:]
        values = [float(row[0]) for row in body]
    except (IndexError, ValueError) as exc:
        raise ParseError("BadValue", str(exc), path=str(path)) from exc
    return motion_energy_from_frame_diffs(values, rate)


def write_motion_energy(path, signal: MotionEnergySignal) -> None:
    with Path(path).open("w", encoding="utf-8") as handle:
        handle.write(f"sample_rate_hz,{signal.sample_rate_hz!r}\n")
        for v in signal.values:
            handle.write(f"{v!r}\n")
