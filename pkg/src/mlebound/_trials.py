"""Seeded, order-preserving evaluation of the MLE over many simulated datasets."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .model import DegenerateSample, ModelSpec, derive_seed

MAX_RETRIES = 16
_CHUNK = 256


def resolve_workers(workers) -> int:
    if workers in (None, "auto"):
        return os.cpu_count() or 1
    workers = int(workers)
    if workers < 1:
        raise ValueError(f"workers must be >= 1 or 'auto', got {workers}")
    return workers


def trial_seed(master_seed: int, n: int, index: int) -> int:
    return derive_seed(master_seed, n, index)


def fit_one(model: ModelSpec, theta0, n: int, seed: int) -> tuple[np.ndarray, int]:
    """MLE of one simulated dataset; degenerate draws are redrawn from derived seeds."""
    for attempt in range(MAX_RETRIES):
        s = seed if attempt == 0 else derive_seed(seed, attempt)
        try:
            return model.mle(model.sample(theta0, n, s)), attempt
        except DegenerateSample:
            continue
    raise DegenerateSample(f"{MAX_RETRIES} consecutive degenerate samples from seed {seed}")


def _fit_range(model, theta0, n, master_seed, start, stop):
    out = np.empty((stop - start, model.d))
    retries = 0
    for row, i in enumerate(range(start, stop)):
        out[row], r = fit_one(model, theta0, n, trial_seed(master_seed, n, i))
        retries += r
    return out, retries


def fit_trials(model: ModelSpec, theta0, n: int, trials: int, master_seed: int, workers=1):
    """MLEs for trials ``0 .. trials-1``, returned as a ``(trials, d)`` array in trial order.

    Trial i always uses ``trial_seed(master_seed, n, i)``, so the result does not
    depend on ``workers`` and the first t rows agree for any ``trials >= t``.
    """
    workers = resolve_workers(workers)
    bounds = [(s, min(s + _CHUNK, trials)) for s in range(0, trials, _CHUNK)]
    if workers == 1 or len(bounds) == 1:
        parts = [_fit_range(model, theta0, n, master_seed, a, b) for a, b in bounds]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_fit_range, model, theta0, n, master_seed, a, b) for a, b in bounds]
            parts = [f.result() for f in futures]
    thetas = np.concatenate([p[0] for p in parts]) if parts else np.empty((0, model.d))
    return thetas, sum(p[1] for p in parts)
