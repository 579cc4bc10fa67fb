"""Subset Simulation on the LF model.

Rare failure probabilities are factored into a product of conditional
probabilities over nested threshold levels, each near a target p0, so a
probability of 1e-6 costs a handful of levels instead of millions of crude
samples. Levels after the first are populated by component-wise Modified
Metropolis chains started from the previous level's surviving samples.

Beyond the probability itself, the run exposes exactly what the estimator
pipeline needs downstream: the last intermediate threshold and conditional
probability (which tune the smoothing sharpness), and the retained
failure-region samples (which seed the importance sampler).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .distributions import JointInputDistribution
from .rng import RngStream
from .smoothing import beta_star, s_l


@dataclass(frozen=True)
class SusConfig:
    n_per_level: int
    rng: RngStream
    p0: float = 0.1
    max_levels: int = 15
    mcmc_scale: float = 1.0

    def __post_init__(self) -> None:
        if self.n_per_level < 100:
            raise ValueError("n_per_level must be >= 100")
        if not 0.0 < self.p0 < 1.0:
            raise ValueError("p0 must be in (0, 1)")
        if self.p0 * self.n_per_level < 10:
            raise ValueError("p0 * n_per_level must be >= 10 (seeds per level)")
        if self.mcmc_scale <= 0:
            raise ValueError("mcmc_scale must be > 0")
        if self.max_levels < 1:
            raise ValueError("max_levels must be >= 1")


class MaxLevelsExceeded(RuntimeError):
    """Raised when the failure region stays out of reach; carries partial state."""

    def __init__(self, thresholds: list[float], cond_probs: list[float]) -> None:
        self.thresholds = thresholds
        self.cond_probs = cond_probs
        super().__init__(
            f"no failure level after {len(cond_probs)} levels; "
            f"reached threshold {thresholds[-1]:.4g} with running probability "
            f"{float(np.prod(cond_probs)):.3e}"
        )


@dataclass(frozen=True)
class SusResult:
    """Estimate plus the level structure and retained failure samples."""

    pf: float
    cov: float
    thresholds: tuple[float, ...]  # inf = b_0 > b_1 > ... > b_M = 0
    cond_probs: tuple[float, ...]
    n_levels: int
    failure_x: np.ndarray
    failure_lf: np.ndarray
    total_lf_calls: int
    config: SusConfig

    @property
    def failure_samples(self) -> list[tuple[np.ndarray, float]]:
        return [(self.failure_x[i], float(self.failure_lf[i])) for i in range(len(self.failure_lf))]

    @property
    def last_intermediate_threshold(self) -> float:
        """b just above the failure threshold; tunes the smoothing sharpness."""
        return self.thresholds[-2]

    @property
    def last_cond_prob(self) -> float:
        return self.cond_probs[-1]


def _threshold(responses: np.ndarray, p0: float) -> float:
    """p0-quantile with midpoint interpolation, ties toward the smaller value."""
    srt = np.sort(responses)
    k = int(math.floor(p0 * len(srt)))
    if srt[k - 1] == srt[k]:
        return float(srt[k - 1])
    return float(0.5 * (srt[k - 1] + srt[k]))


def _level_cov_sq(ind: np.ndarray, p: float, chained: bool) -> float:
    """Squared CoV contribution of one level's conditional probability.

    For the i.i.d. first level this is the binomial (1-p)/(N p). For chain
    levels the binomial term is inflated by the chain autocorrelation of the
    threshold indicator: gamma = 2 sum_k (1 - k/T) rho(k) over lags within
    each chain, following the original subset-simulation error analysis.
    ``ind`` is (n_chains, chain_len) for chain levels, flat for the first.
    """
    n = ind.size
    if p <= 0.0:
        return math.inf
    base = (1.0 - p) / (n * p)
    if not chained or p >= 1.0:
        return base
    n_c, t_c = ind.shape
    centered = ind.astype(float) - p
    r0 = p * (1.0 - p)
    gamma = 0.0
    for k in range(1, t_c):
        rk = np.sum(centered[:, :-k] * centered[:, k:]) / (n - k * n_c)
        gamma += 2.0 * (1.0 - k / t_c) * (rk / r0)
    return base * max(1.0 + gamma, 0.0)


def run_sus(lf, dist: JointInputDistribution, cfg: SusConfig) -> SusResult:
    """Estimate P(LF response <= 0) by adaptive nested levels.

    ``lf`` is a batch response function. Thresholds are set adaptively at
    the p0-quantile of each level's responses; the run terminates at the
    level where the conditional probability of the actual failure threshold
    0 reaches p0. Each level is populated by n_per_level samples costing
    one model call apiece (the i.i.d. first level directly, later levels
    through seeded chains), so total_lf_calls is n_per_level times the
    number of levels whenever the seed count divides n_per_level.
    """
    gen = cfg.rng.generator()
    n, p0 = cfg.n_per_level, cfg.p0
    widths = cfg.mcmc_scale * dist.stds

    x = dist.sample_using(gen, n)
    resp = np.asarray(lf(x), dtype=float)
    total_calls = n

    thresholds: list[float] = [math.inf]
    cond_probs: list[float] = []
    cov_sq = 0.0
    chain_shape: tuple[int, int] | None = None  # (n_chains, chain_len) of current level

    while True:
        b = _threshold(resp, p0)
        chained = chain_shape is not None
        ind_shape = resp.reshape(chain_shape) if chained else resp
        if b <= 0.0:
            p_last = float(np.mean(resp <= 0.0))
            thresholds.append(0.0)
            cond_probs.append(p_last)
            cov_sq += _level_cov_sq((ind_shape <= 0.0), p_last, chained)
            mask = resp <= 0.0
            failure_x, failure_lf = x[mask], resp[mask]
            break
        p_level = float(np.mean(resp <= b))
        if len(cond_probs) + 1 >= cfg.max_levels:
            raise MaxLevelsExceeded(thresholds + [b], cond_probs + [p_level])
        thresholds.append(b)
        cond_probs.append(p_level)
        cov_sq += _level_cov_sq((ind_shape <= b), p_level, chained)

        seed_mask = resp <= b
        seed_x, seed_lf = x[seed_mask], resp[seed_mask]
        n_seeds = len(seed_lf)
        chain_len = n // n_seeds
        x, resp, new_calls = _conditional_level(
            lf, dist, gen, widths, seed_x, seed_lf, b, chain_len
        )
        total_calls += new_calls
        chain_shape = (n_seeds, chain_len)

    pf = float(np.prod(cond_probs))
    return SusResult(
        pf=pf,
        cov=math.sqrt(cov_sq),
        thresholds=tuple(thresholds),
        cond_probs=tuple(cond_probs),
        n_levels=len(cond_probs),
        failure_x=failure_x,
        failure_lf=failure_lf,
        total_lf_calls=total_calls,
        config=cfg,
    )


def _conditional_level(lf, dist, gen, widths, seed_x, seed_lf, b, chain_len):
    """Grow each seed into chain_len fresh states of the level's conditional law.

    Component-wise Modified Metropolis: every coordinate takes a uniform
    walk step accepted against its own marginal density; the composed
    candidate is then accepted iff its response stays within the level.
    Seeds start the chains but are not re-emitted, and every step's
    candidate is evaluated (even one identical to the current state), so a
    level of n_seeds * chain_len samples costs exactly that many model
    calls — the accounting that budget tables assume.
    """
    n_seeds, d = seed_x.shape
    cur_x, cur_l = seed_x.copy(), seed_lf.copy()
    xs = []
    ls = []
    calls = 0
    for _ in range(chain_len):
        prop = cur_x + widths * gen.uniform(-1.0, 1.0, size=(n_seeds, d))
        log_ratio = np.empty((n_seeds, d))
        for j, m in enumerate(dist.marginals):
            log_ratio[:, j] = m.log_pdf(prop[:, j]) - m.log_pdf(cur_x[:, j])
        with np.errstate(invalid="ignore"):
            comp_ok = np.log(gen.uniform(size=(n_seeds, d))) < log_ratio
        cand = np.where(comp_ok, prop, cur_x)
        cand_l = np.asarray(lf(cand), dtype=float)
        calls += n_seeds
        ok = cand_l <= b
        cur_x[ok] = cand[ok]
        cur_l[ok] = cand_l[ok]
        xs.append(cur_x.copy())
        ls.append(cur_l.copy())
    # chain-major layout: row j is chain j over time
    x_all = np.stack(xs, axis=1).reshape(n_seeds * chain_len, d)
    l_all = np.stack(ls, axis=1).reshape(n_seeds * chain_len)
    return x_all, l_all, calls


def select_seeds(
    res: SusResult, n_chains: int, rng: RngStream, beta: float | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Weighted draw of chain seeds from the retained failure samples.

    Every candidate already sits in the failure region, where the level's
    conditional density is f_X restricted to {L <= 0} up to a constant, so
    the importance ratio (smoothed density over level density) reduces to
    s_l(L(x), beta) alone; f_X cancels. beta defaults to the sharpness the
    run itself implies; a run whose first level already hit the failure
    threshold has no intermediate level to tune on, and falls back to
    uniform weights.

    Draws are without replacement while candidates remain (weighted urn via
    Gumbel ranking) and start over with the full urn once exhausted. Returns
    the seed points and their LF responses.
    """
    m = len(res.failure_lf)
    if m == 0:
        raise ValueError("no failure samples to seed from")
    if n_chains < 4:
        raise ValueError("need at least 4 chains (DE-MC minimum)")
    if beta is None:
        beta = (
            beta_star(res.last_intermediate_threshold, res.last_cond_prob)
            if res.n_levels >= 2
            else 0.0
        )
    weights = np.asarray(s_l(res.failure_lf, beta), dtype=float)
    idx = weighted_draw_order(weights, n_chains, rng.generator())
    return res.failure_x[idx], res.failure_lf[idx]


def weighted_draw_order(weights: np.ndarray, n_draws: int, gen: np.random.Generator) -> np.ndarray:
    """Successive weighted draws without replacement, restarting when exhausted.

    Implemented by Gumbel-key ranking, whose sequential law is exactly that
    of drawing proportionally to weight from the remaining candidates.
    """
    weights = np.asarray(weights, dtype=float)
    m = len(weights)
    if m == 0 or np.any(weights < 0) or not weights.sum() > 0:
        raise ValueError("weights must be non-negative with positive total")
    log_w = np.where(weights > 0, np.log(np.maximum(weights, 1e-300)), -np.inf)
    order: list[int] = []
    while len(order) < n_draws:
        take = min(n_draws - len(order), m)
        keys = log_w + gen.gumbel(size=m)
        order.extend(int(i) for i in np.argsort(-keys)[:take])
    return np.array(order[:n_draws])
