"""Synthetic time-space grids with planted stop-and-go bands."""
from __future__ import annotations

from typing import Optional

import numpy as np

from .grid import GridSpec, TimeSpaceGrid


def planted_wave(n_x: int, n_t: int, width: int, v_ref: float, start: int,
                 slope: int = -1, noise: float = 0.0,
                 rng: Optional[np.random.Generator] = None):
    """Grid at ``v_ref`` with one zero-speed band ``width`` columns wide.

    With ``slope=-1`` the band starts one column later in each row further
    upstream (the wave travels backward); ``slope=+1`` mirrors it. Returns
    ``(grid, band, centers)``: the band as a boolean array and the list of
    ``(row, col)`` cells where the kernel window lines up with the band.
    """
    band = np.zeros((n_x, n_t), dtype=bool)
    centers = []
    for i in range(n_x):
        b = start + (n_x - 1 - i) if slope < 0 else start + i
        lo, hi = max(b, 0), min(b + width, n_t)
        if lo < hi:
            band[i, lo:hi] = True
        if 0 < i < n_x - 1:
            centers.append((i, b + width // 2))
    speeds = np.where(band, 0.0, v_ref)
    if noise:
        rng = rng or np.random.default_rng()
        speeds = speeds + rng.normal(0.0, noise, speeds.shape)
    spec = GridSpec(t0=0.0, x0=0.0, dt=1.0, dx=10.0, n_t=n_t, n_x=n_x)
    return TimeSpaceGrid(spec, speeds, np.ones((n_x, n_t), dtype=bool)), band, centers
