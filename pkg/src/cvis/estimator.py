"""The bifidelity ratio estimator and its end-to-end pipeline.

The failure probability factors as P_F = alpha * P_FL: subset simulation on
the cheap LF model estimates P_FL, and a short importance-sampled run in
which both models are evaluated on the same states estimates the correction
ratio alpha. Because alpha is a ratio of two means over the same sample set,
the ISD normalizing constant cancels and never has to be estimated.

Uncertainty on alpha uses the fact that a ratio of two positive, nearly
normal means is asymptotically lognormal: its log-scale parameters come
from the batch-means variances of the two means, and the product with the
independent P_FL estimate then has a closed-form coefficient of variation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Any, NamedTuple

import numpy as np

from .batch_means import BatchMeansConfig, rbm_variance
from .demc import ChainEnsemble, DemcConfig, demc_run
from .distributions import JointInputDistribution
from .models import HF, LF, ModelPair, indicator
from .smoothing import SmoothedIsd, beta_star
from .subset import SusConfig, SusResult, run_sus, select_seeds

_HF_BATCH = 512


@dataclass(frozen=True)
class IsMoments:
    """Means of the indicator ratios over the importance-sampled ensemble.

    q_h, q_l, q_hl are the sample means of I_H/S_L, I_L/S_L and
    I_H*I_L/S_L; the variances are batch-means estimates of the sampling
    variance of the first two means (the only ones the ratio needs). n is
    the number of records.
    """

    q_h: float
    q_l: float
    q_hl: float
    var_q_h: float
    var_q_l: float
    n: int


class AlphaStats(NamedTuple):
    mu_alpha: float
    sigma_alpha: float
    mean_alpha: float
    var_alpha: float
    cov_alpha: float


@dataclass(frozen=True)
class CvisReport:
    """Full output of one estimator run, serializable to JSON."""

    alpha: float
    pf: float
    kappa: float
    mu_alpha: float
    sigma_alpha: float
    cov_alpha: float
    cov_pfl: float
    cov_pf: float
    pfl: float
    beta_star: float
    hf_calls: int
    lf_calls: int
    diagnostics: dict[str, Any]

    def to_dict(self) -> dict[str, Any]:
        return {
            "alpha": self.alpha,
            "pf": self.pf,
            "kappa": self.kappa,
            "mu_alpha": self.mu_alpha,
            "sigma_alpha": self.sigma_alpha,
            "cov_alpha": self.cov_alpha,
            "cov_pfl": self.cov_pfl,
            "cov_pf": self.cov_pf,
            "pfl": self.pfl,
            "beta_star": self.beta_star,
            "hf_calls": self.hf_calls,
            "lf_calls": self.lf_calls,
            "diagnostics": self.diagnostics,
        }

    def to_json(self) -> str:
        # json's Infinity/NaN literals round-trip through json.loads, which
        # is all the offline tooling needs; beta_star is legitimately
        # infinite in hard-indicator mode.
        return json.dumps(self.to_dict(), indent=2)


def _ratio_terms(numerator: np.ndarray, s_l_values: np.ndarray) -> np.ndarray:
    """numerator / s_l with exact zeros preserved.

    A record with numerator 0 contributes 0 regardless of its weight; a
    failing record whose smoothed weight underflowed to zero has no finite
    contribution and aborts loudly.
    """
    out = np.zeros_like(s_l_values, dtype=float)
    mask = numerator != 0
    with np.errstate(divide="ignore"):
        np.divide(numerator, s_l_values, out=out, where=mask)
    if not np.all(np.isfinite(out)):
        raise FloatingPointError(
            "smoothed weight underflowed to zero at a failing sample; "
            "beta is too sharp for this sample size"
        )
    return out


def is_moments(
    ens: ChainEnsemble,
    hf_indicators: np.ndarray,
    cfg: BatchMeansConfig = BatchMeansConfig(),
) -> IsMoments:
    """Importance-sampling moments of both indicators over one ensemble.

    ``hf_indicators`` holds {0,1} per record, flat or (chains, steps).
    """
    i_h = np.asarray(hf_indicators).reshape(ens.lf.shape).astype(float)
    if not np.all((i_h == 0.0) | (i_h == 1.0)):
        raise ValueError("hf_indicators must be 0 or 1")
    i_l = ens.i_l.astype(float)
    s = ens.s_l_values
    h_terms = _ratio_terms(i_h, s)
    l_terms = _ratio_terms(i_l, s)
    hl_terms = _ratio_terms(i_h * i_l, s)
    q_h, var_q_h = rbm_variance(h_terms, cfg)
    q_l, var_q_l = rbm_variance(l_terms, cfg)
    if q_l <= 0.0:
        raise ValueError(
            "LF never fails under the sampled ISD; the smoothing is broken "
            "or the exploration run missed the failure region"
        )
    return IsMoments(
        q_h=q_h,
        q_l=q_l,
        q_hl=float(hl_terms.mean()),
        var_q_h=var_q_h,
        var_q_l=var_q_l,
        n=ens.n_records,
    )


def alpha_tilde(m: IsMoments) -> float:
    """Ratio of HF to LF importance-sampled failure moments.

    Estimates P_F/P_FL; the ISD normalizing constant divides both moments
    and drops out.
    """
    if m.q_l <= 0.0:
        raise ValueError("q_l must be positive")
    return m.q_h / m.q_l


def alpha_lognormal_stats(m: IsMoments) -> AlphaStats:
    """Lognormal parameters of the ratio estimator.

    For large ensembles the two means are jointly normal, so their ratio's
    log is normal with mu = ln(q_h/q_l) and variance summing the squared
    coefficients of variation of the two means. Mean, variance, and CoV of
    the ratio follow in closed form.
    """
    if m.q_h <= 0.0:
        raise ValueError(
            "no HF failures among the importance samples; increase the "
            "sampling effort before requesting uncertainty statistics"
        )
    if m.q_l <= 0.0:
        raise ValueError("q_l must be positive")
    mu = math.log(m.q_h / m.q_l)
    s2 = m.var_q_h / m.q_h**2 + m.var_q_l / m.q_l**2
    mean_alpha = math.exp(mu + s2 / 2.0)
    var_alpha = math.expm1(s2) * math.exp(2.0 * mu + s2)
    cov_alpha = math.sqrt(math.expm1(s2))
    return AlphaStats(mu, math.sqrt(s2), mean_alpha, var_alpha, cov_alpha)


def pf_and_cov(alpha_stats: AlphaStats, pfl: float, cov_pfl: float) -> tuple[float, float]:
    """Failure probability and its CoV from the two independent factors.

    The exploration and importance-sampling phases use disjoint sample
    sets, so the product's squared CoV is the sum of the squared CoVs plus
    their product.
    """
    if not 0.0 < pfl < 1.0:
        raise ValueError(f"pfl must be in (0, 1), got {pfl}")
    if cov_pfl < 0.0:
        raise ValueError("cov_pfl must be >= 0")
    alpha = math.exp(alpha_stats.mu_alpha)
    pf = alpha * pfl
    ca, cl = alpha_stats.cov_alpha, cov_pfl
    return pf, math.sqrt(ca**2 + cl**2 + (ca * cl) ** 2)


def kappa_tilde(m: IsMoments) -> float:
    """Estimated fraction of HF failure probability shared with LF failure.

    kappa >= 1/2 certifies that the correction ratio reduces variance
    relative to estimating the HF moment alone.
    """
    if m.q_h <= 0.0:
        raise ValueError("kappa undefined with no observed HF failures")
    return m.q_hl / m.q_h


def allocate_surplus(
    budget: float,
    cost_explore: float,
    cost_q: float,
    *,
    w: float,
    w_l: float,
    n_q: int,
    n_e: int,
    alpha: float,
    var_alpha: float,
    pfl: float,
    var_pfl: float,
) -> tuple[int, int]:
    """Optimal split of leftover budget between more IS samples and more
    exploration samples.

    The variance model is the independent-product formula with each
    factor's variance scaled by old_n/(old_n + extra_n). Substituting the
    budget constraint leaves one integer degree of freedom, scanned
    exhaustively: n_sq extra IS records cost (w + w_l) each, n_sl extra
    exploration samples cost w_l each.
    """
    if min(w, w_l) <= 0:
        raise ValueError("costs must be positive")
    if n_q < 1 or n_e < 1:
        raise ValueError("current sample counts must be >= 1")
    surplus = budget - cost_explore - cost_q
    if surplus < 0:
        raise ValueError(f"negative surplus {surplus:.4g}; the run exceeded its budget")
    unit_q = w + w_l
    max_sq = int(surplus // unit_q)
    if max_sq == 0 and surplus < w_l:
        return 0, 0

    def objective(n_sq: np.ndarray, n_sl: np.ndarray) -> np.ndarray:
        va = var_alpha * n_q / (n_q + n_sq)
        vl = var_pfl * n_e / (n_e + n_sl)
        return alpha**2 * vl + pfl**2 * va + va * vl

    def scan(lo: int, hi: int, step: int) -> int:
        sq = np.arange(lo, hi + 1, step, dtype=np.int64)
        sl = np.maximum((surplus - unit_q * sq) // w_l, 0.0).astype(np.int64)
        return int(sq[np.argmin(objective(sq, sl))])

    # coarse-to-fine keeps huge budgets cheap without losing the integer optimum
    step = max(1, (max_sq + 1) // 1_000_000)
    best = scan(0, max_sq, step)
    if step > 1:
        best = scan(max(0, best - step), min(max_sq, best + step), 1)
    n_sl = int(max((surplus - unit_q * best) // w_l, 0))
    return best, n_sl


def _evaluate_hf_indicators(pair: ModelPair, points: np.ndarray) -> np.ndarray:
    out = np.empty(len(points), dtype=np.int8)
    for start in range(0, len(points), _HF_BATCH):
        chunk = points[start : start + _HF_BATCH]
        out[start : start + _HF_BATCH] = indicator(pair.evaluate_batch(HF, chunk))
    return out


def _extend_ensemble(
    ens: ChainEnsemble,
    isd: SmoothedIsd,
    demc_cfg: DemcConfig,
    extra_steps: int,
    round_index: int,
) -> ChainEnsemble:
    """Continue every chain for extra_steps, concatenated onto the ensemble."""
    cfg = DemcConfig(
        n_chains=demc_cfg.n_chains,
        n_steps=extra_steps,
        rng=demc_cfg.rng.child(round_index),
        gamma=demc_cfg.gamma,
        jitter=demc_cfg.jitter,
        burn_in=0,
        mode_jump_every=demc_cfg.mode_jump_every,
    )
    tail = demc_run(isd, ens.x[:, -1], cfg, seed_lf_values=ens.lf[:, -1])
    total = ens.n_steps + extra_steps
    rate = (ens.acceptance_rate * ens.n_steps + tail.acceptance_rate * extra_steps) / total
    return ChainEnsemble(
        np.concatenate([ens.x, tail.x], axis=1),
        np.concatenate([ens.lf, tail.lf], axis=1),
        np.concatenate([ens.s_l_values, tail.s_l_values], axis=1),
        np.concatenate([ens.log_target, tail.log_target], axis=1),
        rate,
        ens.beta,
    )


def run_cvis(
    pair: ModelPair,
    dist: JointInputDistribution,
    sus_cfg: SusConfig,
    demc_cfg: DemcConfig,
    tau: float = 0.1,
    budget: float | None = None,
    *,
    beta_override: float | None = None,
    explore_mode: str = "fixed",
    cov_match_factor: float = 1.25,
    max_refinements: int = 8,
) -> CvisReport:
    """The full pipeline: explore, tune, sample, correct, refine.

    1. Subset simulation on the LF model estimates P_FL. In ``fixed`` mode
       the configured n_per_level is used as-is (the benchmark setting); in
       ``target_cov`` mode the run is repeated with doubled population
       until its CoV reaches tau or the budget objects.
    2. The smoothing sharpness comes from the last intermediate level
       (``beta_override`` forces a value instead, e.g. hard-indicator mode
       for a nested pair).
    3. DE-MC chains seeded from the retained failure samples draw from the
       smoothed ISD; the HF model is then evaluated once per recorded
       state.
    4. The ratio of the HF to LF importance moments corrects P_FL, with
       lognormal uncertainty and the kappa variance-reduction diagnostic.
    5. Any remaining budget is spent where it lowers the variance model
       most: extending the chains (more IS records) and/or enlarging the
       exploration run. ``cov_match_factor`` bounds how far CoV[alpha] may
       drift from CoV[P_FL] before refinement favors the lagging side.

    Costs are measured in model-call units: pair.cost_hf per HF call and
    pair.cost_lf per LF call. ``budget=None`` disables refinement.
    """
    if not 0.0 < tau < 1.0:
        raise ValueError("tau must be in (0, 1)")
    if explore_mode not in ("fixed", "target_cov"):
        raise ValueError(f"unknown explore_mode {explore_mode!r}")
    if cov_match_factor < 1.0:
        raise ValueError("cov_match_factor must be >= 1")

    w, w_l = pair.cost_hf, pair.cost_lf
    start_hf, start_lf = pair.hf_calls, pair.lf_calls
    explore_calls = 0  # LF calls spent inside subset simulation runs

    def lf_fn(x: np.ndarray) -> np.ndarray:
        return pair.evaluate_batch(LF, x)

    def explore(cfg: SusConfig) -> SusResult:
        nonlocal explore_calls
        before = pair.lf_calls
        out = run_sus(lf_fn, dist, cfg)
        explore_calls += pair.lf_calls - before
        return out

    # --- 1. exploration -------------------------------------------------
    res = explore(sus_cfg)
    if explore_mode == "target_cov":
        doublings = 0
        n = sus_cfg.n_per_level
        while res.cov > tau and doublings < 6:
            n *= 2
            projected = (explore_calls + res.n_levels * n) * w_l
            if budget is not None and projected > budget:
                break
            doublings += 1
            res = explore(replace(sus_cfg, n_per_level=n, rng=sus_cfg.rng.child(doublings)))
    if budget is not None and explore_calls * w_l > budget:
        raise ValueError(
            f"budget {budget:.4g} is below the exploration cost {explore_calls * w_l:.4g}"
        )

    # --- 2. smoothing sharpness -----------------------------------------
    if beta_override is not None:
        bstar = beta_override
        beta_source = "hard_indicator" if math.isinf(beta_override) else "override"
    elif res.n_levels >= 2:
        bstar = beta_star(res.last_intermediate_threshold, res.last_cond_prob)
        beta_source = "hard_indicator" if math.isinf(bstar) else "tuned"
    else:
        # a single-level run has no intermediate threshold to tune on; a
        # flat smoothing (plain prior sampling) is the safe fallback
        bstar = 0.0
        beta_source = "flat_fallback"

    # --- 3. sampling and HF evaluation ----------------------------------
    isd = SmoothedIsd(beta=bstar, lf=lf_fn, base=dist)
    seeds, seed_lf = select_seeds(res, demc_cfg.n_chains, demc_cfg.rng.child(0), beta=bstar)
    ens = demc_run(isd, seeds, demc_cfg, seed_lf_values=seed_lf)
    hf_ind = _evaluate_hf_indicators(pair, ens.points()).reshape(ens.lf.shape)

    diagnostics: dict[str, Any] = {
        "beta_source": beta_source,
        "refinement_rounds": 0,
        "under_sampled": False,
        "alpha_bound_note": (
            "the 4*rho_hl^2 admissibility bound on alpha needs oracle "
            "access to both failure probabilities and is not computable "
            "from a single run"
        ),
    }

    def assemble(m: IsMoments) -> CvisReport:
        stats = alpha_lognormal_stats(m)
        _, cov_pf = pf_and_cov(stats, res.pf, res.cov)
        # the ratio directly, not exp(mu): bit-identical to the factored
        # product the nested hard-indicator special case collapses into
        alpha = alpha_tilde(m)
        kappa = kappa_tilde(m)
        diagnostics["kappa_below_half"] = bool(kappa < 0.5)
        diagnostics["hf_failure_count"] = int(hf_ind.sum())
        diagnostics["demc_acceptance_rate"] = ens.acceptance_rate
        diagnostics["sus_levels"] = res.n_levels
        diagnostics["sus_cond_probs"] = list(res.cond_probs)
        return CvisReport(
            alpha=alpha,
            pf=alpha * res.pf,
            kappa=kappa,
            mu_alpha=stats.mu_alpha,
            sigma_alpha=stats.sigma_alpha,
            cov_alpha=stats.cov_alpha,
            cov_pfl=res.cov,
            cov_pf=cov_pf,
            pfl=res.pf,
            beta_star=bstar,
            hf_calls=pair.hf_calls - start_hf,
            lf_calls=pair.lf_calls - start_lf,
            diagnostics=diagnostics,
        )

    m = is_moments(ens, hf_ind)
    if m.q_h == 0.0:
        diagnostics["under_sampled"] = True
        diagnostics["kappa_below_half"] = True
        diagnostics["hf_failure_count"] = 0
        diagnostics["demc_acceptance_rate"] = ens.acceptance_rate
        diagnostics["sus_levels"] = res.n_levels
        diagnostics["sus_cond_probs"] = list(res.cond_probs)
        return CvisReport(
            alpha=0.0,
            pf=0.0,
            kappa=float("nan"),
            mu_alpha=float("-inf"),
            sigma_alpha=float("nan"),
            cov_alpha=float("nan"),
            cov_pfl=res.cov,
            cov_pf=float("nan"),
            pfl=res.pf,
            beta_star=bstar,
            hf_calls=pair.hf_calls - start_hf,
            lf_calls=pair.lf_calls - start_lf,
            diagnostics=diagnostics,
        )
    report = assemble(m)

    # --- 5. surplus refinement ------------------------------------------
    if budget is None:
        return report
    rounds = 0
    while report.cov_pf > tau and rounds < max_refinements:
        stats = alpha_lognormal_stats(m)
        cost_explore = explore_calls * w_l
        cost_q = (pair.hf_calls - start_hf) * w + (
            pair.lf_calls - start_lf - explore_calls
        ) * w_l
        surplus = budget - cost_explore - cost_q
        if surplus < min(w + w_l, w_l):
            break
        n_sq, n_sl = allocate_surplus(
            budget,
            cost_explore,
            cost_q,
            w=w,
            w_l=w_l,
            n_q=ens.n_records,
            n_e=res.total_lf_calls,
            alpha=report.alpha,
            var_alpha=stats.var_alpha,
            pfl=res.pf,
            var_pfl=(res.cov * res.pf) ** 2,
        )
        # when one CoV already dominates by more than the matching factor,
        # spend the round entirely on the lagging side
        if report.cov_alpha > cov_match_factor * report.cov_pfl and n_sq == 0:
            n_sq = int(surplus // (w + w_l))
            n_sl = 0
        elif report.cov_pfl > cov_match_factor * report.cov_alpha and n_sl == 0:
            n_sq = 0
            n_sl = int(surplus // w_l)
        grown = 0
        if n_sl > 0:
            # enlarging the exploration run means re-running it from
            # scratch, which repays the sunk cost of the old run before
            # any new sample helps; shrink the enlargement accordingly,
            # or fold the round into chain extension when nothing useful
            # would remain
            n_sl -= res.total_lf_calls
            if n_sl > 0:
                grown = (res.total_lf_calls + n_sl) // res.n_levels
            if n_sl <= 0 or grown <= res.config.n_per_level:
                n_sl = 0
                n_sq = int(surplus // (w + w_l))
        # floor, not ceil: an extension step costs one record per chain and
        # must stay inside the allocation
        extra_steps = n_sq // ens.n_chains
        if extra_steps == 0 and n_sl == 0:
            break
        rounds += 1
        if n_sl > 0:
            res = explore(replace(sus_cfg, n_per_level=grown, rng=sus_cfg.rng.child(100 + rounds)))
        if extra_steps > 0:
            old_steps = ens.n_steps
            ens = _extend_ensemble(ens, isd, demc_cfg, extra_steps, 200 + rounds)
            new_points = ens.x[:, old_steps:, :].reshape(-1, ens.x.shape[2])
            new_ind = _evaluate_hf_indicators(pair, new_points).reshape(
                ens.n_chains, extra_steps
            )
            hf_ind = np.concatenate([hf_ind, new_ind], axis=1)
        m = is_moments(ens, hf_ind)
        diagnostics["refinement_rounds"] = rounds
        report = assemble(m)
    return report
