"""Event-of-interest trigger over pedestrian and vehicle trajectories.

A (pedestrian, vehicle) pair fires when, for enough consecutive shared
timestamps, the two are closer than a distance threshold and still closing
in on each other. Each firing yields a look-back window ending when the
condition lapses.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .core import TimeInterval
from .errors import EmptyInput, IoError, ParseError


class ActorClass(str, enum.Enum):
    PEDESTRIAN = "pedestrian"
    VEHICLE = "vehicle"


@dataclass(frozen=True)
class TrajectorySample:
    t_s: float
    actor_id: str
    actor_class: ActorClass
    x_m: float
    y_m: float

    def __post_init__(self):
        if not isinstance(self.actor_class, ActorClass):
            object.__setattr__(self, "actor_class", ActorClass(str(self.actor_class).strip().lower()))


@dataclass(frozen=True)
class TriggerParams:
    distance_threshold_m: float = 10.0
    closing_speed_threshold_mps: float = 0.5
    sustain_samples: int = 3
    lookback_s: float = 30.0

    def __post_init__(self):
        for name in ("distance_threshold_m", "closing_speed_threshold_mps",
                     "sustain_samples", "lookback_s"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")


@dataclass(frozen=True)
class TriggerWindow:
    pedestrian_id: str
    vehicle_id: str
    trigger_t_s: float
    window: TimeInterval


def pair_kinematics(ped: Sequence[TrajectorySample], veh: Sequence[TrajectorySample]):
    """Distance and closing speed at the timestamps both actors share.

    Closing speed is the negated time derivative of distance: central
    differences inside, one-sided at both ends. Returns three equal-length
    lists ``(times, distances, closing_speeds)``.
    """
    veh_at = {s.t_s: s for s in veh}
    times, dist = [], []
    for s in ped:
        other = veh_at.get(s.t_s)
        if other is not None:
            times.append(s.t_s)
            dist.append(math.hypot(s.x_m - other.x_m, s.y_m - other.y_m))
    n = len(times)
    closing = []
    for i in range(n):
        if n < 2:
            closing.append(0.0)
            continue
        lo, hi = max(i - 1, 0), min(i + 1, n - 1)
        closing.append(-(dist[hi] - dist[lo]) / (times[hi] - times[lo]))
    return times, dist, closing


def group_by_actor(samples: Iterable[TrajectorySample]) -> dict[str, list[TrajectorySample]]:
    tracks: dict[str, list[TrajectorySample]] = {}
    for s in samples:
        tracks.setdefault(s.actor_id, []).append(s)
    for actor_id, track in tracks.items():
        track.sort(key=lambda s: s.t_s)
        for a, b in zip(track, track[1:]):
            if not b.t_s > a.t_s:
                raise ValueError(f"actor {actor_id!r}: timestamps not strictly increasing at {b.t_s}")
        if len({s.actor_class for s in track}) != 1:
            raise ValueError(f"actor {actor_id!r} has mixed classes")
    return tracks


def detect_trigger(trajectories: Iterable[TrajectorySample],
                   params: TriggerParams = TriggerParams()) -> list[TriggerWindow]:
    samples = list(trajectories)
    if not samples:
        raise EmptyInput("no trajectory samples")
    tracks = group_by_actor(samples)
    peds = sorted(a for a, t in tracks.items() if t[0].actor_class is ActorClass.PEDESTRIAN)
    vehs = sorted(a for a, t in tracks.items() if t[0].actor_class is ActorClass.VEHICLE)

    windows = []
    for ped_id in peds:
        for veh_id in vehs:
            times, dist, closing = pair_kinematics(tracks[ped_id], tracks[veh_id])
            if len(times) < 2:
                continue
            runs = []
            i = 0
            while i < len(times):
                if dist[i] < params.distance_threshold_m and closing[i] > params.closing_speed_threshold_mps:
                    j = i
                    while (j + 1 < len(times) and dist[j + 1] < params.distance_threshold_m
                           and closing[j + 1] > params.closing_speed_threshold_mps):
                        j += 1
                    if j - i + 1 >= params.sustain_samples:
                        runs.append((times[i], times[j]))
                    i = j + 1
                else:
                    i += 1
            merged: list[list[float]] = []
            for trig, end in runs:
                start = max(0.0, trig - params.lookback_s)
                if merged and start <= merged[-1][2]:
                    merged[-1][2] = max(merged[-1][2], end)
                else:
                    merged.append([trig, start, end])
            windows.extend(TriggerWindow(ped_id, veh_id, trig, TimeInterval(start, end))
                           for trig, start, end in merged)
    return windows


TRAJECTORY_HEADER = ["t_s", "actor_id", "actor_class", "x_m", "y_m"]


def load_trajectories(path) -> list[TrajectorySample]:
    """Read a ``t_s,actor_id,actor_class,x_m,y_m`` CSV file."""
    path = Path(path)
    try:
        handle = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    with handle:
        reader = csv.DictReader(handle)
        missing = [h for h in TRAJECTORY_HEADER if h not in (reader.fieldnames or [])]
        if missing:
            raise ParseError("MissingField", "trajectory header", field=missing[0], line=1, path=str(path))
        samples = []
        for row in reader:
            try:
                samples.append(TrajectorySample(float(row["t_s"]), row["actor_id"], row["actor_class"],
                                                float(row["x_m"]), float(row["y_m"])))
            except (TypeError, ValueError) as exc:
                raise ParseError("BadValue", str(exc), line=reader.line_num, path=str(path)) from exc
    return samples


def write_trajectories(path, samples: Iterable[TrajectorySample]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(TRAJECTORY_HEADER)
        for s in samples:
            writer.writerow([repr(s.t_s), s.actor_id, s.actor_class.value, repr(s.x_m), repr(s.y_m)])
