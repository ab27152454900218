"""Input validation helpers and seed derivation."""

from __future__ import annotations

import os

import numpy as np


def as_series(y, name: str = "y") -> np.ndarray:
    """Coerce to a finite 1-d float64 array."""
    arr = np.asarray(y, dtype=np.float64)
    if arr.ndim == 2 and arr.shape[1] == 1:
        arr = arr[:, 0]
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def as_path(x, name: str = "x") -> np.ndarray:
    """Coerce to a 1-d int64 array of state indices (0-based)."""
    arr = np.asarray(x)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size and not np.issubdtype(arr.dtype, np.integer):
        rounded = np.rint(np.asarray(arr, dtype=np.float64))
        if not np.allclose(arr, rounded):
            raise ValueError(f"{name} must contain integers")
        arr = rounded
    return arr.astype(np.int64)


def check_states_in_range(x: np.ndarray, m: int, name: str = "x") -> None:
    if x.size and (x.min() < 0 or x.max() >= m):
        raise ValueError(f"{name} contains state labels outside 0..{m - 1}")


def derive_seed(base_seed: int, *indices: int) -> np.random.SeedSequence:
    """Mix a base seed with integer indices into a child seed.

    Sub-streams are derived as ``SeedSequence([base_seed, *indices])``, which
    is a documented, platform-stable integer mixing rule.
    """
    return np.random.SeedSequence([int(base_seed), *[int(i) for i in indices]])


def generator(base_seed: int, *indices: int) -> np.random.Generator:
    """Deterministic PCG64 generator for a (seed, indices) combination."""
    return np.random.Generator(np.random.PCG64(derive_seed(base_seed, *indices)))


GENERATOR_ID = "numpy.random.Generator(PCG64) seeded via SeedSequence([seed, *indices])"


def thread_count() -> int:
    """Worker cap from REGIME_SELECT_THREADS (0 or 'auto' means cpu count)."""
    raw = os.environ.get("REGIME_SELECT_THREADS", "").strip()
    if not raw:
        return 1
    if raw.lower() == "auto":
        return os.cpu_count() or 1
    value = int(raw)
    if value < 0:
        raise ValueError("REGIME_SELECT_THREADS must be >= 0")
    return value if value > 0 else (os.cpu_count() or 1)
