"""Structured covariance construction and seeded Gaussian sampling.

All process noise, measurement noise, and initial-position draws in the
simulator come through this module so that runs are reproducible from
(seed, stream id) alone.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from .errors import NotPositiveDefinite


@dataclass(frozen=True)
class CovarianceSpec:
    """Compound-symmetric covariance: sigma^2 on the diagonal, rho*sigma^2 off it."""

    dim: int
    sigma: float
    correlation: float = 0.0


def build_covariance(spec: CovarianceSpec) -> np.ndarray:
    """Dense sigma^2 [(1-rho) I + rho 1 1^T]; SPD for rho in [0, 1), sigma > 0.

    The smallest eigenvalue is sigma^2 (1 - rho), so any correlation below
    one keeps the Cholesky factorization safe. sigma = 0 is allowed and
    produces the exact zero matrix (noise-free runs).
    """
    if not (0.0 <= spec.correlation < 1.0):
        raise NotPositiveDefinite(
            f"correlation {spec.correlation} outside [0, 1) breaks positive definiteness"
        )
    if spec.sigma < 0.0:
        raise ValueError(f"sigma must be nonnegative, got {spec.sigma}")
    if spec.dim < 1:
        raise ValueError(f"dim must be positive, got {spec.dim}")
    var = spec.sigma**2
    mat = np.full((spec.dim, spec.dim), var * spec.correlation)
    np.fill_diagonal(mat, var)
    return mat


class NoiseStream:
    """Seeded Gaussian source, one independent stream per (seed, label).

    The label keeps process noise, measurement noise, and initial
    positions on separate substreams so that switching estimators never
    shifts the truth-side draws. State is mutable: one stream per
    simulation run, never shared between concurrent runs.
    """

    def __init__(self, seed: int, stream_id: str):
        self.seed = int(seed)
        self.stream_id = str(stream_id)
        tag = zlib.crc32(self.stream_id.encode("utf-8"))
        self._gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence((self.seed, tag))))

    def standard_normal(self, shape) -> np.ndarray:
        """Raw N(0,1) draws; consumption order is independent of chunking."""
        return self._gen.standard_normal(shape)


def cholesky_factor(cov: np.ndarray) -> np.ndarray | None:
    """Lower Cholesky factor, or None for the exact zero matrix."""
    cov = np.asarray(cov, dtype=float)
    if not np.any(cov):
        return None
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(f"covariance is not positive definite: {exc}") from exc


def sample_gaussian(mean: np.ndarray, cov: np.ndarray, stream: NoiseStream) -> np.ndarray:
    """One draw from N(mean, cov) as mean + L @ z with L the Cholesky factor.

    A zero covariance is treated as degenerate and returns the mean
    exactly without consuming stream state.
    """
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    if cov.shape != (mean.size, mean.size):
        raise ValueError(f"covariance shape {cov.shape} does not match mean length {mean.size}")
    factor = cholesky_factor(cov)
    if factor is None:
        return mean.copy()
    return mean + factor @ stream.standard_normal(mean.size)
