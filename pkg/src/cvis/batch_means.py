"""Replicated batch means: variance of means computed from parallel chains.

Sample means over MCMC output are consistent, but their variance is inflated
by within-chain autocorrelation, so the naive i.i.d. formula underestimates
it. Replicated batch means (RBM) groups each chain into contiguous batches;
for batches longer than the correlation length the batch means are nearly
independent, and their spread estimates the true variance of the grand mean.

The default batch size is the full chain length: each chain contributes one
batch mean, and the estimate is simply the across-chain variance of chain
means divided by the number of chains. That choice is robust for short
chains and is what the estimator pipeline uses throughout.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class BatchMeansConfig:
    """batch_size = None means full-chain batches (one batch per chain)."""

    batch_size: int | None = None

    def __post_init__(self) -> None:
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


def _batch_means(values: np.ndarray, b: int) -> np.ndarray:
    c, t = values.shape
    n_per_chain = t // b
    if n_per_chain < 1:
        raise ValueError(f"batch_size {b} exceeds chain length {t}")
    if t % b:
        warnings.warn(
            f"chain length {t} is not a multiple of batch_size {b}; "
            f"dropping {t % b} trailing states per chain",
            stacklevel=3,
        )
    used = values[:, : n_per_chain * b]
    return used.reshape(c, n_per_chain, b).mean(axis=2).reshape(-1)


def rbm_variance(
    values: np.ndarray, cfg: BatchMeansConfig = BatchMeansConfig()
) -> tuple[float, float]:
    """(grand mean, estimated variance of that mean) for (C, T) chain values.

    The variance is the sample variance of the batch means around the grand
    mean, divided by the number of batches. Full-chain batches require at
    least two chains.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim != 2:
        raise ValueError(f"expected (chains, steps) matrix, got shape {values.shape}")
    c, t = values.shape
    if c * t < 2:
        raise ValueError("need at least 2 values")
    b = cfg.batch_size if cfg.batch_size is not None else t
    if b == t and c < 2:
        raise ValueError("full-chain batches need at least 2 chains")
    bm = _batch_means(values, b)
    mean = float(values.mean())
    n = bm.size
    var_of_mean = float(np.sum((bm - bm.mean()) ** 2) / (n - 1) / n)
    return mean, var_of_mean


def rbm_covariance(
    values_a: np.ndarray, values_b: np.ndarray, cfg: BatchMeansConfig = BatchMeansConfig()
) -> float:
    """Estimated covariance between the grand means of two aligned statistics.

    Same batching as :func:`rbm_variance`; needed when two means computed
    from the same chains enter one expression and their sampling errors
    co-move.
    """
    values_a = np.asarray(values_a, dtype=float)
    values_b = np.asarray(values_b, dtype=float)
    if values_a.shape != values_b.shape or values_a.ndim != 2:
        raise ValueError("statistics must share one (chains, steps) shape")
    c, t = values_a.shape
    b = cfg.batch_size if cfg.batch_size is not None else t
    if b == t and c < 2:
        raise ValueError("full-chain batches need at least 2 chains")
    ma, mb = _batch_means(values_a, b), _batch_means(values_b, b)
    n = ma.size
    return float(np.sum((ma - ma.mean()) * (mb - mb.mean())) / (n - 1) / n)


def estimator_moments(
    ens,
    stat: Callable,
    cfg: BatchMeansConfig = BatchMeansConfig(),
    hf_indicators: np.ndarray | None = None,
) -> tuple[float, float]:
    """Mean and variance-of-mean of a per-record statistic over an ensemble.

    ``stat`` maps one ensemble record to a real; the resulting (C, T) matrix
    goes through :func:`rbm_variance`. Statistics involving the HF indicator
    need ``hf_indicators`` so the records carry real values instead of the
    -1 placeholder.
    """
    values = np.array(
        [[stat(rec) for rec in chain] for chain in ens.iter_chains(hf_indicators)],
        dtype=float,
    )
    return rbm_variance(values, cfg)
