"""Detect a pedestrian-vehicle approach from trajectories, then align two camera clocks."""

import numpy as np

from pvir.sync import estimate_offset, motion_energy_from_frame_diffs
from pvir.trigger import TrajectorySample, TriggerParams, detect_trigger

# pedestrian walks toward a slowly advancing car
samples = []
for i in range(201):
    t = i / 10
    samples.append(TrajectorySample(t, "ped-1", "pedestrian", 25 - 0.9 * t, 1.0))
    samples.append(TrajectorySample(t, "car-7", "vehicle", 0.5 * t, 0.0))

for w in detect_trigger(samples, TriggerParams(lookback_s=10)):
    print(f"{w.pedestrian_id} / {w.vehicle_id}: trigger at {w.trigger_t_s:.1f}s, "
          f"window {w.window.start_s:.1f}-{w.window.end_s:.1f}s")

# second camera starts recording 1.6 s later than the first
rng = np.random.default_rng(0)
activity = np.abs(rng.normal(size=700)) + np.convolve(rng.random(700), np.ones(5), "same")
rate = 10.0
lag = 16
a = motion_energy_from_frame_diffs(activity[50:550], rate)
b = motion_energy_from_frame_diffs(activity[50 - lag:550 - lag], rate)
est = estimate_offset(a, b, max_lag_s=4.0)
print(f"estimated offset {est.offset_s:+.2f}s (true {lag / rate:+.2f}s), confidence {est.confidence:.3f}")
