"""Logistic smoothing of the LF failure indicator and the sampling density.

The importance sampling density is proportional to S_L(x, beta) * f_X(x),
where S_L = 1 / (1 + exp(beta * L(x))) is a soft version of the LF failure
indicator. beta controls sharpness: beta -> 0 flattens S_L to 1/2 everywhere
(no importance shift), beta -> infinity recovers the hard indicator. The
density is only ever handled unnormalized; its normalizing constant cancels
in the estimator ratio and is estimated separately only where the baseline
estimators need it.

``HARD_INDICATOR`` (infinite beta) is a distinguished mode in which S_L
equals the indicator exactly. It is the correct limit when every HF failure
is also an LF failure, and the beta tuning rule falls back to it when the
final subset-simulation level consists entirely of failed samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .distributions import JointInputDistribution

HARD_INDICATOR = math.inf


def s_l(lf_value: np.ndarray | float, beta: float) -> np.ndarray | float:
    """Smoothed failure indicator 1 / (1 + exp(beta * lf_value)).

    Overflow-safe: the exponential is only ever taken of a non-positive
    argument, so beta * L in the hundreds (routine for sharply tuned beta)
    underflows gracefully to the exp(-beta * L) branch instead of
    overflowing. In hard-indicator mode this is exactly the indicator.
    """
    v = np.asarray(lf_value, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("lf_value must be finite")
    if beta < 0:
        raise ValueError("beta must be >= 0")
    if math.isinf(beta):
        out = np.where(v <= 0.0, 1.0, 0.0)
    else:
        # sigma(-z) = exp(-logaddexp(0, z)) is stable for both signs of z
        out = np.exp(-np.logaddexp(0.0, beta * v))
    return float(out) if np.isscalar(lf_value) else out


def log_s_l(lf_value: np.ndarray | float, beta: float) -> np.ndarray | float:
    """log of :func:`s_l`, exact for arguments far into either tail."""
    v = np.asarray(lf_value, dtype=float)
    if math.isinf(beta):
        out = np.where(v <= 0.0, 0.0, -np.inf)
    else:
        out = -np.logaddexp(0.0, beta * v)
    return float(out) if np.isscalar(lf_value) else out


def beta_star(b_prev: float, p_last: float) -> float:
    """Sharpness that centers the smoothing on the last subset level.

    Choosing beta so that s_l evaluated halfway between the last
    intermediate threshold b_prev and the failure threshold 0 equals half
    the final conditional probability p_last gives

        beta* = (2 / b_prev) * ln(2 / p_last - 1).

    p_last = 1 means the exploration run ended entirely inside the failure
    region; the formula degenerates to 0 there and the hard-indicator mode
    is the correct limit, so the sentinel is returned instead.
    """
    if not math.isfinite(b_prev) or b_prev <= 0:
        raise ValueError(f"b_prev must be finite and > 0, got {b_prev}")
    if not 0.0 < p_last <= 1.0:
        raise ValueError(f"p_last must be in (0, 1], got {p_last}")
    if p_last == 1.0:
        return HARD_INDICATOR
    return (2.0 / b_prev) * math.log(2.0 / p_last - 1.0)


@dataclass(frozen=True)
class SmoothedIsd:
    """Unnormalized sampling density S_L(L(x), beta) * f_X(x).

    ``lf`` is the (counted) batch LF response; evaluating the density costs
    one LF call per point. ``beta`` may be ``HARD_INDICATOR``.
    """

    beta: float
    lf: Callable[[np.ndarray], np.ndarray]
    base: JointInputDistribution

    def __post_init__(self) -> None:
        if self.beta < 0:
            raise ValueError("beta must be >= 0")

    def log_density_parts(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(log unnormalized density, LF responses) for a batch of points.

        Points where f_X = 0 are never sent to the model: their density is
        -inf regardless of the response, and the LF value reported for them
        is NaN. This mirrors how a sampler treats out-of-support proposals
        (certain rejection, no model call).
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        log_f = np.asarray(self.base.log_density(x), dtype=float).reshape(-1)
        lf_values = np.full(x.shape[0], np.nan)
        inside = np.isfinite(log_f)
        if inside.any():
            lf_values[inside] = self.lf(x[inside])
        out = np.full(x.shape[0], -np.inf)
        out[inside] = log_f[inside] + log_s_l(lf_values[inside], self.beta)
        return out, lf_values


def log_isd_unnormalized(isd: SmoothedIsd, x: np.ndarray) -> float:
    """log(S_L * f_X) at a single point; calls the LF model once."""
    logq, _ = isd.log_density_parts(np.atleast_2d(np.asarray(x, dtype=float)))
    return float(logq[0])
