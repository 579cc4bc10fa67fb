"""Comparison estimators sharing the CVIS sampling machinery.

Both baselines reuse the smoothed ISD and the DE-MC ensemble but need the
ISD normalizing constant C_S, estimated here by plain Monte Carlo over the
input distribution. MFIS rescales the importance-sampled HF moment by that
constant; E-ACV additionally recycles the LF moment as a control variate
with a single-run estimate of the optimal coefficient. The self-normalized
variants skip C_S entirely by normalizing with the summed importance
weights, which buys simplicity at the price of ratio bias.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .batch_means import BatchMeansConfig, rbm_covariance, rbm_variance
from .demc import ChainEnsemble
from .distributions import JointInputDistribution
from .estimator import _ratio_terms
from .rng import RngStream
from .smoothing import s_l


@dataclass(frozen=True)
class CsEstimate:
    """Monte Carlo estimate of the ISD normalizing constant.

    ``cov`` is the coefficient of variation of the estimate itself. For
    rare events the constant is of the same order as the LF failure
    probability, so it sits well inside (0, 1).
    """

    value: float
    cov: float
    n: int

    def __post_init__(self) -> None:
        if self.value < 0.0:
            raise ValueError("cs must be >= 0")
        if self.n < 1:
            raise ValueError("n must be >= 1")


class BaselineResult(NamedTuple):
    pf: float
    cov: float


class EacvResult(NamedTuple):
    pf: float
    cov: float
    alpha_opt: float


def mc_integrate_cs(
    lf, dist: JointInputDistribution, beta: float, n: int, rng: RngStream
) -> CsEstimate:
    """Mean of the smoothed indicator over n i.i.d. prior draws.

    At moderate beta most draws land where the smoothing is near zero, so
    the relative error grows as the smoothing sharpens; the returned cov
    tracks that honestly.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    x = dist.sample(rng, n)
    values = s_l(np.asarray(lf(x), dtype=float), beta)
    mean = float(values.mean())
    if mean > 0.0 and n > 1:
        cov = float(values.std(ddof=1) / (mean * np.sqrt(n)))
    else:
        cov = float("inf")
    return CsEstimate(value=mean, cov=cov, n=n)


def _product_cov(cov_a: float, cov_b: float) -> float:
    """CoV of a product of independent factors."""
    return float(np.sqrt(cov_a**2 + cov_b**2 + (cov_a * cov_b) ** 2))


def _hf_mean_terms(
    ens: ChainEnsemble, hf_indicators: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    i_h = np.asarray(hf_indicators).reshape(ens.lf.shape).astype(float)
    if not np.all((i_h == 0.0) | (i_h == 1.0)):
        raise ValueError("hf_indicators must be 0 or 1")
    return i_h, _ratio_terms(i_h, ens.s_l_values)


def mfis_estimate(
    ens: ChainEnsemble,
    hf_indicators: np.ndarray,
    cs: CsEstimate,
    cfg: BatchMeansConfig = BatchMeansConfig(),
) -> BaselineResult:
    """Importance-sampled HF failure probability rescaled by Ĉ_S.

    The two factors come from disjoint sample sets, so their CoVs combine
    by the independent-product rule.
    """
    _, h_terms = _hf_mean_terms(ens, hf_indicators)
    mean_h, var_h = rbm_variance(h_terms, cfg)
    if mean_h == 0.0:
        warnings.warn("no HF failures among the importance samples; pf = 0")
        return BaselineResult(0.0, float("nan"))
    cov_h = float(np.sqrt(var_h) / mean_h)
    return BaselineResult(cs.value * mean_h, _product_cov(cov_h, cs.cov))


def eacv_estimate(
    ens: ChainEnsemble,
    hf_indicators: np.ndarray,
    cs: CsEstimate,
    pfl: float,
    var_pfl: float,
    cfg: BatchMeansConfig = BatchMeansConfig(),
) -> EacvResult:
    """Approximate control variate: the LF moment corrects the HF moment.

    The control is the discrepancy between the importance-sampled LF
    failure probability and its independent exploration estimate; its
    coefficient is the single-run optimum with cross-covariances to the
    exploration estimate set to zero. The variance treats the fitted
    coefficient as a constant and carries the Ĉ_S uncertainty through the
    product rule.
    """
    if var_pfl < 0.0:
        raise ValueError("var_pfl must be >= 0")
    _, h_terms = _hf_mean_terms(ens, hf_indicators)
    l_terms = _ratio_terms(ens.i_l.astype(float), ens.s_l_values)
    mean_l, var_l = rbm_variance(l_terms, cfg)
    var_delta = cs.value**2 * var_l + var_pfl
    if var_delta == 0.0:
        warnings.warn(
            "control variate has zero variance; falling back to plain "
            "importance sampling (alpha = 0)"
        )
        mf = mfis_estimate(ens, hf_indicators, cs, cfg)
        return EacvResult(mf.pf, mf.cov, 0.0)
    cov_hl = rbm_covariance(h_terms, l_terms, cfg)
    alpha = float(-(cs.value**2) * cov_hl / var_delta)

    mean_h = float(h_terms.mean())
    q_h = cs.value * mean_h
    q_l = cs.value * mean_l
    pf = q_h + alpha * (q_l - pfl)

    # combined-stream variance captures the within-ensemble correlation of
    # the two means exactly; Cs and the exploration estimate are independent
    mean_c, var_c = rbm_variance(h_terms + alpha * l_terms, cfg)
    var_cs = (cs.cov * cs.value) ** 2 if np.isfinite(cs.cov) else float("inf")
    var_pf = (
        cs.value**2 * var_c
        + mean_c**2 * var_cs
        + var_c * var_cs
        + alpha**2 * var_pfl
    )
    if pf <= 0.0:
        warnings.warn(f"control variate overshot: pf = {pf:.3e} <= 0")
        return EacvResult(pf, float("nan"), alpha)
    return EacvResult(pf, float(np.sqrt(var_pf)) / pf, alpha)


def snis_estimate(ens: ChainEnsemble, hf_indicators: np.ndarray) -> float:
    """Self-normalized importance sampling estimate of the HF failure
    probability.

    Normalizing by the summed importance weights removes the need for Ĉ_S
    but makes the estimator a ratio, giving it the finite-sample bias the
    comparison study measures.
    """
    _, h_terms = _hf_mean_terms(ens, hf_indicators)
    weights = 1.0 / ens.s_l_values
    return float(h_terms.sum() / weights.sum())
