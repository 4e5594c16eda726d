"""Shared helpers for the test suite: random band-limited fields and norms."""
import numpy as np

from qvlab.lattice import Grid, band_limit


def random_band_limited(
    grid: Grid,
    rng: np.random.Generator,
    fraction: float = 0.25,
    complex_valued: bool = False,
    zero_mean: bool = False,
) -> np.ndarray:
    """Smooth random field with modes strictly below fraction*n per axis,
    normalized to unit sup norm."""
    if complex_valued:
        raw = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    else:
        raw = rng.standard_normal(grid.shape)
    out = band_limit(raw, grid, fraction)
    if zero_mean:
        out = out - out.mean()
    peak = np.abs(out).max()
    return out / peak if peak > 0 else out


def linf(a) -> float:
    return float(np.max(np.abs(a)))


def rms(a) -> float:
    a = np.asarray(a)
    return float(np.sqrt(np.mean(np.abs(a) ** 2)))
