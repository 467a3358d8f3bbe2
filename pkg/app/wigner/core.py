"""Truncated Wigner sampling, ensemble running and symmetric-ordering estimators."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import numpy as np

from app.domain.errors import ConfigError, NumericalError

logger = logging.getLogger(__name__)

# Per-quadrature standard deviation of the vacuum Wigner distribution.
VACUUM_QUADRATURE_SD = 0.5

InitialSampler = Callable[[np.random.Generator], np.ndarray]
ModeStep = Callable[[np.ndarray], Any]
Reducer = Callable[[Any], np.ndarray]


def trajectory_rng(seed: int, index: int) -> np.random.Generator:
    """Noise stream of trajectory ``index``; a pure function of (seed, index)."""
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(int(index),)))


def sample_coherent(
    mean: complex | np.ndarray,
    rng: np.random.Generator,
    size: tuple[int, ...] | int | None = None,
) -> np.ndarray:
    """Sample the Wigner distribution of a coherent state with the given mean."""
    mean_arr = np.asarray(mean, dtype=np.complex128)
    if size is None:
        size_shape: tuple[int, ...] = ()
    elif isinstance(size, int):
        size_shape = (size,)
    else:
        size_shape = tuple(size)
    shape = np.broadcast_shapes(mean_arr.shape, size_shape)
    noise = rng.normal(0.0, VACUUM_QUADRATURE_SD, shape) + 1j * rng.normal(0.0, VACUUM_QUADRATURE_SD, shape)
    return mean_arr + noise


def symmetric_to_normal_population(mean_abs_sq: float | np.ndarray, n_modes: int = 1) -> float | np.ndarray:
    """Normally-ordered population from the symmetric moment of ``n_modes`` modes."""
    return mean_abs_sq - 0.5 * n_modes


def _difference_variance(
    ni: np.ndarray,
    nj: np.ndarray,
    modes_i: float,
    modes_j: float,
) -> tuple[np.ndarray, np.ndarray]:
    ni = np.asarray(ni, dtype=float)
    nj = np.asarray(nj, dtype=float)
    if ni.shape != nj.shape:
        raise ConfigError("shape_mismatch", "Population samples must have equal shapes.", {"ni": ni.shape, "nj": nj.shape})
    if ni.shape[0] < 2:
        raise NumericalError("too_few_trajectories", "At least two trajectories are needed for a variance.", {"n": ni.shape[0]})
    modes = modes_i + modes_j
    numerator = np.var(ni - nj, axis=0, ddof=1) - 0.25 * modes
    denominator = np.mean(ni + nj, axis=0) - 0.5 * modes
    return numerator, denominator


def number_difference_variance(
    ni: np.ndarray,
    nj: np.ndarray,
    *,
    modes_i: float = 1,
    modes_j: float = 1,
) -> float | np.ndarray:
    """Relative number difference variance from symmetric-ordered samples.

    Each sample sums ``modes_*`` lattice modes, so the Wigner variance of the
    difference exceeds the normally-ordered one by (modes_i + modes_j)/4 and
    the mean sum by (modes_i + modes_j)/2. Pass zero modes for samples that
    are already normally ordered. Trajectories run along axis 0.
    """
    numerator, denominator = _difference_variance(ni, nj, modes_i, modes_j)
    if np.any(denominator <= 0):
        raise NumericalError(
            "empty_mode_pair",
            "Mean population of the mode pair must be > 0.",
            {"denominator": np.atleast_1d(denominator).tolist()},
        )
    result = numerator / denominator
    return float(result) if np.ndim(result) == 0 else result


def number_difference_variance_or_nan(
    ni: np.ndarray,
    nj: np.ndarray,
    *,
    modes_i: float = 1,
    modes_j: float = 1,
) -> np.ndarray:
    """Like :func:`number_difference_variance` but NaN where the pair is empty."""
    numerator, denominator = _difference_variance(ni, nj, modes_i, modes_j)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(denominator > 0, numerator / np.where(denominator > 0, denominator, 1.0), np.nan)


def jackknife_standard_error(
    estimator: Callable[..., np.ndarray],
    *samples: np.ndarray,
    blocks: int = 20,
) -> np.ndarray:
    """Delete-one-block jackknife error of ``estimator`` over axis 0."""
    n = samples[0].shape[0]
    blocks = min(blocks, n)
    if blocks < 2:
        return np.full(np.shape(estimator(*samples)), np.nan)
    edges = np.linspace(0, n, blocks + 1).astype(int)
    estimates = []
    for b in range(blocks):
        keep = np.r_[0 : edges[b], edges[b + 1] : n]
        if keep.size < 2:
            continue
        estimates.append(np.asarray(estimator(*(s[keep] for s in samples)), dtype=float))
    stacked = np.stack(estimates)
    m = stacked.shape[0]
    return np.sqrt((m - 1) / m * np.sum((stacked - stacked.mean(axis=0)) ** 2, axis=0))


@dataclass(slots=True)
class EnsembleResult:
    samples: dict[str, np.ndarray]
    n_traj: int
    rng_seed: int
    totals: dict[str, np.ndarray] = field(default_factory=dict)

    def total_mean(self, name: str) -> np.ndarray:
        """Mean of a chunk-summed accumulator."""
        return self.totals[name] / self.n_traj

    def mean(self, name: str) -> np.ndarray:
        return np.mean(self.samples[name], axis=0)

    def variance(self, name: str) -> np.ndarray:
        return np.var(self.samples[name], axis=0, ddof=1)

    def covariance(self, first: str, second: str) -> np.ndarray:
        a = self.samples[first]
        b = self.samples[second]
        return np.sum((a - a.mean(axis=0)) * (b - b.mean(axis=0)), axis=0) / (self.n_traj - 1)

    def standard_error(self, name: str) -> np.ndarray:
        return np.sqrt(self.variance(name) / self.n_traj)


def run_ensemble(
    model_step: ModeStep,
    initial_sampler: InitialSampler,
    n_traj: int,
    rng_seed: int,
    reducers: Mapping[str, Reducer],
    *,
    threads: int = 1,
    chunk_size: int = 64,
    accumulators: Mapping[str, Reducer] | None = None,
) -> EnsembleResult:
    """Sample, evolve and reduce ``n_traj`` independent trajectories.

    Trajectories are batched into fixed chunks; ``model_step`` receives the
    stacked initial states of one chunk and each reducer returns one row per
    trajectory. Accumulators return an array already summed over the chunk
    (for quantities too large to keep per trajectory, like density profiles).
    The chunk partition does not depend on ``threads`` and chunks are
    combined in order, so results are bit-identical at any thread count.
    """
    accumulators = accumulators or {}
    if n_traj < 1:
        raise ConfigError("invalid_n_traj", "n_traj must be >= 1.", {"n_traj": n_traj})
    if chunk_size < 1:
        raise ConfigError("invalid_chunk_size", "chunk_size must be >= 1.", {"chunk_size": chunk_size})

    def _run_chunk(start: int) -> dict[str, np.ndarray]:
        stop = min(start + chunk_size, n_traj)
        batch = np.stack([np.asarray(initial_sampler(trajectory_rng(rng_seed, i))) for i in range(start, stop)])
        try:
            evolved = model_step(batch)
        except NumericalError as exc:
            if exc.trajectory is not None:
                exc.details["trajectory"] = start + exc.trajectory
            raise

        reduced: dict[str, np.ndarray] = {}
        for name, reducer in reducers.items():
            values = np.asarray(reducer(evolved))
            if values.shape[:1] != (stop - start,):
                raise ConfigError(
                    "reducer_shape",
                    f"Reducer '{name}' must return one row per trajectory.",
                    {"reducer": name, "shape": values.shape},
                )
            bad = ~np.isfinite(values.reshape(stop - start, -1)).all(axis=1)
            if bad.any():
                index = start + int(np.argmax(bad))
                raise NumericalError(
                    "non_finite_trajectory",
                    f"Trajectory {index} produced a non-finite value in '{name}'.",
                    {"trajectory": index, "reducer": name},
                )
            reduced[name] = values
        for name, accumulator in accumulators.items():
            reduced[f"_total_{name}"] = np.asarray(accumulator(evolved))
        return reduced

    starts = list(range(0, n_traj, chunk_size))
    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(_run_chunk, starts))
    else:
        chunks = [_run_chunk(start) for start in starts]

    logger.debug("Ensemble of %d trajectories reduced from %d chunks", n_traj, len(chunks))
    samples = {name: np.concatenate([chunk[name] for chunk in chunks], axis=0) for name in reducers}
    totals: dict[str, np.ndarray] = {}
    for name in accumulators:
        total = np.zeros_like(chunks[0][f"_total_{name}"])
        for chunk in chunks:
            total = total + chunk[f"_total_{name}"]
        totals[name] = total
    return EnsembleResult(samples=samples, n_traj=n_traj, rng_seed=int(rng_seed), totals=totals)
