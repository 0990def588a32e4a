"""Random input generators shared by the property tests and the acceptance suite."""

import math
import random

import numpy as np

from pvir.trigger import TrajectorySample


def random_scenario(rng: random.Random):
    n_ped, n_veh = rng.randint(1, 2), rng.randint(1, 2)
    steps = rng.randint(5, 200 // (n_ped + n_veh))
    omega = rng.uniform(0.2, 3.0)
    base = rng.uniform(3, 14)
    samples = []
    actors = [(f"p{i}", "pedestrian") for i in range(n_ped)] + [(f"v{i}", "vehicle") for i in range(n_veh)]
    for k, (actor, cls) in enumerate(actors):
        keep = rng.uniform(0.6, 1.0)
        phase = rng.uniform(0, math.pi)
        for i in range(steps):
            if rng.random() > keep:
                continue
            t = round(i * 0.1, 6)
            if cls == "pedestrian":
                x = base + 5 * math.sin(omega * t + phase) + rng.gauss(0, 0.2)
            else:
                x = rng.gauss(0, 0.2) + k
            samples.append(TrajectorySample(t, actor, cls, x, rng.uniform(-0.5, 0.5)))
    return samples


def shifted_pair(rng: np.random.Generator, n: int, lag: int, pad: int):
    base = np.abs(rng.normal(size=n + 2 * pad)) + np.convolve(rng.random(n + 2 * pad), np.ones(3), "same")
    a = base[pad: pad + n]
    b = base[pad - lag: pad - lag + n]
    return a, b
