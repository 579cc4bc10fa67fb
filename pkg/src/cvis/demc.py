"""Differential Evolution Markov Chain sampling of the unnormalized ISD.

DE-MC runs C interacting chains. Each chain proposes a jump along the
difference of two other chains' current states, scaled by gamma and dithered
by a small uniform jitter, then accepts by the Metropolis rule. The
population adapts the proposal geometry to the target automatically, which
matters here because the smoothed failure region is a thin curved shell that
no fixed random-walk proposal fits well.

Generations are synchronous: every proposal in a generation is built from
the previous generation's states, so results are deterministic for a fixed
stream regardless of how the model evaluations are scheduled.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Iterator, NamedTuple

import numpy as np

from .rng import RngStream
from .smoothing import SmoothedIsd, log_s_l, s_l


@dataclass(frozen=True)
class DemcConfig:
    """Sampler parameters.

    gamma = None selects ter Braak's 2.38 / sqrt(2 d). jitter is the uniform
    dither half-width, scalar or per-coordinate; callers scale it to the
    input spread (1e-6 times the coordinate std in the estimator pipeline).

    mode_jump_every = k makes every k-th generation propose with gamma = 1,
    ter Braak's recipe for targets whose mass sits in separated islands:
    when the population spans several islands, a whole difference vector
    translates a chain from one island onto another, letting the island
    occupancies equilibrate while all other generations keep the scale that
    is optimal for local moves. 0 disables the periodic jumps.
    """

    n_chains: int
    n_steps: int
    rng: RngStream
    gamma: float | None = None
    jitter: float | np.ndarray = 1e-6
    burn_in: int = 0
    mode_jump_every: int = 0

    def __post_init__(self) -> None:
        if self.n_chains < 4:
            raise ValueError("DE-MC needs at least 4 chains")
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if self.burn_in < 0:
            raise ValueError("burn_in must be >= 0")
        if self.gamma is not None and self.gamma < 0:
            # 0 is the degenerate stand-still limit, allowed for diagnostics
            raise ValueError("gamma must be >= 0")
        if np.any(np.asarray(self.jitter) < 0):
            raise ValueError("jitter must be >= 0")
        if self.mode_jump_every < 0:
            raise ValueError("mode_jump_every must be >= 0")


class Record(NamedTuple):
    x: np.ndarray
    lf_value: float
    s_l_value: float
    i_h: int
    i_l: int


class ChainEnsemble:
    """Kept DE-MC states with per-record LF bookkeeping.

    ``x`` has shape (C, T, d); ``lf`` and ``s_l_value`` are (C, T) and hold
    NaN when the target carries no LF model (generic targets in tests). The
    HF indicator is attached later by the estimator, after evaluating the
    HF model on the recorded states only.
    """

    def __init__(
        self,
        x: np.ndarray,
        lf: np.ndarray,
        s_l_values: np.ndarray,
        log_target: np.ndarray,
        acceptance_rate: float,
        beta: float | None,
    ) -> None:
        self.x = x
        self.lf = lf
        self.s_l_values = s_l_values
        self.log_target = log_target
        self.acceptance_rate = float(acceptance_rate)
        self.beta = beta

    @property
    def n_chains(self) -> int:
        return self.x.shape[0]

    @property
    def n_steps(self) -> int:
        return self.x.shape[1]

    @property
    def n_records(self) -> int:
        return self.x.shape[0] * self.x.shape[1]

    @property
    def i_l(self) -> np.ndarray:
        return (self.lf <= 0.0).astype(np.int8)

    def points(self) -> np.ndarray:
        """All records flattened to (C*T, d), chain-major."""
        return self.x.reshape(-1, self.x.shape[2])

    def iter_chains(self, hf_indicators: np.ndarray | None = None) -> Iterator[list[Record]]:
        i_l = self.i_l
        for c in range(self.n_chains):
            chain = []
            for t in range(self.n_steps):
                ih = -1 if hf_indicators is None else int(hf_indicators[c, t])
                chain.append(
                    Record(self.x[c, t], float(self.lf[c, t]), float(self.s_l_values[c, t]), ih, int(i_l[c, t]))
                )
            yield chain


def _pick_pairs(gen: np.random.Generator, c: int) -> tuple[np.ndarray, np.ndarray]:
    """Per chain, two distinct partner indices, both different from the chain."""
    idx = np.arange(c)
    r1 = gen.integers(0, c - 1, size=c)
    r1 = r1 + (r1 >= idx)
    r2 = gen.integers(0, c - 2, size=c)
    lo = np.minimum(idx, r1)
    hi = np.maximum(idx, r1)
    r2 = r2 + (r2 >= lo)
    r2 = r2 + (r2 >= hi)
    return r1, r2


def demc_run(
    log_target: SmoothedIsd | Callable[[np.ndarray], np.ndarray],
    seeds: np.ndarray,
    cfg: DemcConfig,
    seed_lf_values: np.ndarray | None = None,
) -> ChainEnsemble:
    """Sample the target from the given seed states.

    ``log_target`` is either a :class:`SmoothedIsd` (records then carry LF
    responses and smoothed indicators, at one LF call per proposal) or any
    batch log-density. Seed LF responses may be passed along when the caller
    already knows them (seeds from the exploration run), avoiding a re-fit
    of values the sampler would otherwise have to query.

    Every seed must have finite log target; a -inf seed means the seeding
    contract was violated upstream.
    """
    seeds = np.atleast_2d(np.asarray(seeds, dtype=float))
    c, d = seeds.shape
    if c != cfg.n_chains:
        raise ValueError(f"got {c} seeds for {cfg.n_chains} chains")
    if c < 2 * d:
        warnings.warn(f"{c} chains for dimension {d}; at least {2 * d} recommended")

    is_isd = isinstance(log_target, SmoothedIsd)

    def evaluate(pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if is_isd:
            return log_target.log_density_parts(pts)
        return np.asarray(log_target(pts), dtype=float), np.full(pts.shape[0], np.nan)

    if is_isd and seed_lf_values is not None:
        lf_cur = np.asarray(seed_lf_values, dtype=float)
        logp_cur = np.asarray(log_target.base.log_density(seeds), dtype=float) + log_s_l(
            lf_cur, log_target.beta
        )
    else:
        logp_cur, lf_cur = evaluate(seeds)
    if not np.all(np.isfinite(logp_cur)):
        raise ValueError("seed with non-finite log target; seeds must lie inside the target support")

    gamma = cfg.gamma if cfg.gamma is not None else 2.38 / math.sqrt(2.0 * d)
    jitter = np.broadcast_to(np.asarray(cfg.jitter, dtype=float), (d,))
    gen = cfg.rng.generator()

    x_cur = seeds.copy()
    total = cfg.burn_in + cfg.n_steps
    kept_x = np.empty((c, cfg.n_steps, d))
    kept_lf = np.empty((c, cfg.n_steps))
    kept_logp = np.empty((c, cfg.n_steps))
    accepted_kept = 0

    for step in range(total):
        r1, r2 = _pick_pairs(gen, c)
        noise = gen.uniform(-1.0, 1.0, size=(c, d)) * jitter
        g = gamma
        if cfg.mode_jump_every and (step + 1) % cfg.mode_jump_every == 0:
            g = 1.0
        z = x_cur + g * (x_cur[r1] - x_cur[r2]) + noise
        logp_z, lf_z = evaluate(z)
        with np.errstate(invalid="ignore"):
            accept = np.log(gen.uniform(size=c)) < (logp_z - logp_cur)
        x_cur = np.where(accept[:, None], z, x_cur)
        logp_cur = np.where(accept, logp_z, logp_cur)
        lf_cur = np.where(accept, lf_z, lf_cur)
        if step >= cfg.burn_in:
            t = step - cfg.burn_in
            kept_x[:, t] = x_cur
            kept_lf[:, t] = lf_cur
            kept_logp[:, t] = logp_cur
            accepted_kept += int(accept.sum())

    beta = log_target.beta if is_isd else None
    s_l_values = s_l(kept_lf, beta) if is_isd else np.full_like(kept_lf, np.nan)
    rate = accepted_kept / (c * cfg.n_steps)
    if not 0.1 <= rate <= 0.6:
        warnings.warn(f"DE-MC acceptance rate {rate:.3f} outside [0.1, 0.6]; check gamma/target")
    return ChainEnsemble(kept_x, kept_lf, s_l_values, kept_logp, rate, beta)
