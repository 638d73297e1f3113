"""Counter-based normal draws: each path owns a Philox stream keyed by (seed, path_id)."""

from __future__ import annotations

import numpy as np


def path_generator(seed: int, path_id: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[int(seed) & 0xFFFFFFFFFFFFFFFF, int(path_id)]))


def path_normals(seed: int, first_path: int, n_paths: int, n_steps: int, n_factors: int = 2) -> np.ndarray:
    """Standard normals of shape (n_paths, n_steps, n_factors).

    Draw (m, k, f) is the (k * n_factors + f)-th variate of path m's stream,
    so results are identical under any split of the path range.
    """
    out = np.empty((n_paths, n_steps, n_factors))
    for i in range(n_paths):
        out[i] = path_generator(seed, first_path + i).standard_normal((n_steps, n_factors))
    return out
