"""Shared test utilities."""

import numpy as np

from opcdf.band import band_from_intervals


def random_band(rng: np.random.Generator, g_min: float = 0.0, g_max: float = 10.0, max_points: int = 8):
    """Band from random key-point intervals around a random CDF, with occasional crossings."""
    k = int(rng.integers(1, max_points + 1))
    kp = np.sort(rng.uniform(g_min, g_max, k))
    kp = np.unique(np.clip(kp, np.nextafter(g_min, g_max), np.nextafter(g_max, g_min)))
    center = np.sort(rng.random(kp.size))
    half = rng.uniform(0.0, 0.3, kp.size)
    lo = np.clip(center - half, 0, 1)
    up = np.clip(center + half * rng.uniform(0.5, 1.5, kp.size), 0, 1)
    return band_from_intervals(kp, lo, up, 0.1, g_min, g_max)
