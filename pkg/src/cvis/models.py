"""Model pairs: high-fidelity and low-fidelity response functions.

A response function maps an input point to a scalar; the system fails where
the response is <= 0. A :class:`ModelPair` bundles the expensive HF response
with a cheap LF approximation, their unit costs, and call counters used for
budget audits.

Two analytical benchmark families are provided. The first is a quadratic
limit state in two standard-normal inputs whose LF variant adds a constant
bias and a frozen noise field. The second is a five-story shear building
under sinusoidal ground-floor forcing, solved in closed form by modal
superposition; its LF variant keeps only the one or two modes nearest the
forcing frequency and applies a safety factor.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import eigh
from scipy.special import ndtri

from .distributions import JointInputDistribution, Marginal

HF = "HF"
LF = "LF"


def indicator(response: np.ndarray | float) -> np.ndarray | int:
    """Failure indicator: 1 where the response is <= 0, else 0.

    Failure includes the boundary (response exactly 0 counts as failed).
    Monotone non-increasing in the response by construction.
    """
    resp = np.asarray(response)
    if not np.all(np.isfinite(resp)):
        raise ValueError("indicator requires finite responses")
    out = (resp <= 0.0).astype(np.int8)
    return int(out) if np.isscalar(response) or out.ndim == 0 else out


class ModelPair:
    """HF/LF response pair with per-side cost weights and call counters.

    Response functions are vectorized: they take an (n, d) array and return
    an (n,) array. Counters track true model invocations (one per point) and
    never decrease; evaluating one side never touches the other side's
    counter. Counter updates hold a lock so a pair may be shared across
    threads.
    """

    def __init__(
        self,
        hf: Callable[[np.ndarray], np.ndarray],
        lf: Callable[[np.ndarray], np.ndarray],
        *,
        cost_hf: float = 1.0,
        cost_lf: float = 1.0,
        dim: int,
    ) -> None:
        if cost_hf <= 0 or cost_lf <= 0:
            raise ValueError("costs must be positive")
        self._hf = hf
        self._lf = lf
        self.cost_hf = float(cost_hf)
        self.cost_lf = float(cost_lf)
        self.dim = int(dim)
        self.hf_calls = 0
        self.lf_calls = 0
        self._lock = threading.Lock()

    def _fn(self, side: str) -> Callable[[np.ndarray], np.ndarray]:
        if side == HF:
            return self._hf
        if side == LF:
            return self._lf
        raise ValueError(f"side must be {HF!r} or {LF!r}, got {side!r}")

    def _count(self, side: str, n: int) -> None:
        with self._lock:
            if side == HF:
                self.hf_calls += n
            else:
                self.lf_calls += n

    def evaluate(self, side: str, x: np.ndarray) -> float:
        """Response at a single point; increments that side's counter by 1."""
        return float(self.evaluate_batch(side, np.atleast_2d(np.asarray(x, dtype=float)))[0])

    def evaluate_batch(self, side: str, x: np.ndarray) -> np.ndarray:
        """Responses at n points, shape (n, d); counts one call per point."""
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.dim:
            raise ValueError(f"expected shape (n, {self.dim}), got {x.shape}")
        fn = self._fn(side)
        self._count(side, x.shape[0])
        resp = np.asarray(fn(x), dtype=float)
        bad = ~np.isfinite(resp)
        if bad.any():
            i = int(np.argmax(bad))
            raise FloatingPointError(f"{side} response non-finite at x={x[i].tolist()}")
        return resp

    def reset_counters(self) -> None:
        with self._lock:
            self.hf_calls = 0
            self.lf_calls = 0


# --------------------------------------------------------------------------
# Benchmark 1: quadratic limit state with biased, noisy LF variant


@dataclass(frozen=True)
class Example1Config:
    """LF perturbation parameters: constant bias, noise scale, noise field seed."""

    delta: float = 0.0
    sigma_eps: float = 0.0
    noise_seed: int = 0

    def __post_init__(self) -> None:
        if self.sigma_eps < 0:
            raise ValueError("sigma_eps must be >= 0")


_FNV_OFFSET = np.uint64(14695981039346656037)
_FNV_PRIME = np.uint64(1099511628211)


def _frozen_uniform(x: np.ndarray, seed: int) -> np.ndarray:
    """Deterministic uniform(0, 1) field over input points.

    64-bit FNV-1a over the IEEE-754 bytes of each coordinate (little-endian,
    in order) followed by the 8 seed bytes, mapped into the open unit
    interval. A pure function of (x, seed), so the field is a fixed
    realization: the same point always sees the same value, across runs,
    batch splits, and platforms.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    n, d = x.shape
    h = np.full(n, _FNV_OFFSET, dtype=np.uint64)
    mask = np.uint64(0xFF)
    for j in range(d):
        v = x[:, j].view(np.uint64)
        for k in range(8):
            h = (h ^ ((v >> np.uint64(8 * k)) & mask)) * _FNV_PRIME
    s = np.uint64(seed)
    for k in range(8):
        h = (h ^ ((s >> np.uint64(8 * k)) & mask)) * _FNV_PRIME
    # 52 high bits, centered on the lattice: strictly inside (0, 1)
    return ((h >> np.uint64(12)).astype(np.float64) + 0.5) * 2.0**-52


def _quadratic_response(x: np.ndarray) -> np.ndarray:
    x1, x2 = x[:, 0], x[:, 1]
    return (x1 - 2.0) ** 2 + (x2 - 2.0) ** 2 - 0.5 * (x1 + x2 - 1.0) ** 2 + 3.0


def example1_pair(cfg: Example1Config) -> ModelPair:
    """Quadratic HF response and its biased/noisy LF variant.

    HF(x) = (x1-2)^2 + (x2-2)^2 - (x1+x2-1)^2/2 + 3 on two standard-normal
    inputs. LF(x) = HF(x) + delta + eps(x) where eps is a frozen Gaussian
    field: sigma_eps times the normal quantile of a deterministic uniform
    hash of (x, noise_seed). With sigma_eps = 0 the LF model is a pure
    constant-offset copy; delta < 0 makes every HF failure an LF failure.
    Both sides have unit cost.
    """

    def lf(x: np.ndarray) -> np.ndarray:
        resp = _quadratic_response(x) + cfg.delta
        if cfg.sigma_eps > 0:
            resp = resp + cfg.sigma_eps * ndtri(_frozen_uniform(x, cfg.noise_seed))
        return resp

    return ModelPair(_quadratic_response, lf, cost_hf=1.0, cost_lf=1.0, dim=2)


def example1_distribution() -> JointInputDistribution:
    return JointInputDistribution.standard_normal(2)


# --------------------------------------------------------------------------
# Benchmark 2: five-story shear building under sinusoidal forcing


@dataclass(frozen=True)
class ShearBuildingConfig:
    """Structure, forcing, and discretization parameters (SI units).

    The default force amplitude is the nominal load scale that places the
    drift-limit exceedance probability of the high-fidelity response near
    4.27e-3, so the benchmark exercises the rare-event regime the estimators
    are built for. It was fixed once by a large Monte Carlo quantile match
    (the response is linear in the amplitude) and is not meant to be tuned
    per run; scale the per-story factors in the input vector instead.
    """

    mass_per_floor: float = 45_000.0
    stiffness_per_story: float = 2.0e7
    force_amplitude: float = 324_866.0
    drift_limit: float = 0.25
    horizon: float = 1.0
    lf_safety_factor: float = 2.0
    time_step: float = 5e-4

    def __post_init__(self) -> None:
        vals = (
            self.mass_per_floor,
            self.stiffness_per_story,
            self.force_amplitude,
            self.drift_limit,
            self.horizon,
            self.lf_safety_factor,
            self.time_step,
        )
        if any(v <= 0 for v in vals):
            raise ValueError("all shear-building parameters must be positive")
        if self.time_step > 1e-3:
            raise ValueError("time_step must be <= 1e-3 s for the response grid")


_N_STORIES = 5


def shear_stiffness_matrix(k: float, n: int = _N_STORIES) -> np.ndarray:
    """Stiffness of a uniform shear chain: tridiagonal, free at the top."""
    kmat = np.zeros((n, n))
    for i in range(n):
        kmat[i, i] = 2.0 * k if i < n - 1 else k
        if i > 0:
            kmat[i, i - 1] = kmat[i - 1, i] = -k
    return kmat


class _ShearBuilding:
    """Closed-form modal response of the five-story shear frame.

    Input x = (s1..s5, omega_p): per-story force scale factors and the
    forcing frequency in rad/s. The load is p(t) = s * p0 * sin(omega_p t)
    with zero initial conditions. With mass-normalized mode shapes Phi and
    natural frequencies omega_n, each modal coordinate is

        q_i(t) = P_i / (omega_ni^2 - omega_p^2)
                 * (sin(omega_p t) - (omega_p / omega_ni) * sin(omega_ni t))

    with modal force P_i = phi_i' s p0, and story displacements follow by
    superposition u(t) = sum_i phi_i q_i(t). The HF response keeps all five
    modes and measures the worst inter-story drift; the LF response keeps
    only the mode(s) nearest omega_p, measures the worst absolute story
    displacement, and applies the safety factor.
    """

    def __init__(self, cfg: ShearBuildingConfig) -> None:
        self.cfg = cfg
        m, k = cfg.mass_per_floor, cfg.stiffness_per_story
        mass = m * np.eye(_N_STORIES)
        stiff = shear_stiffness_matrix(k)
        w2, phi = eigh(stiff, mass)  # ascending; phi' M phi = I
        self.omega_n = np.sqrt(w2)
        self.phi = phi
        n_steps = int(round(cfg.horizon / cfg.time_step))
        self.t = np.linspace(0.0, cfg.horizon, n_steps + 1)
        # natural-frequency sinusoids are sample-independent; precompute
        self._sin_nt = np.sin(np.outer(self.omega_n, self.t))

    def _guard_resonance(self, wp: np.ndarray) -> np.ndarray:
        """Nudge forcing frequencies that sit numerically on a natural one."""
        wp = wp.copy()
        for wn in self.omega_n:
            near = np.abs(wp**2 - wn**2) < 1e-9 * wn**2
            if near.any():
                wp[near] += 1e-6
        return wp

    def _modal_terms(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Per-sample modal amplitudes and the forcing-frequency sinusoid.

        Returns (a, b, sin_pt) where q_m(t) = a[:, m] sin(omega_p t)
        - b[:, m] sin(omega_nm t).
        """
        s, wp = x[:, :_N_STORIES], self._guard_resonance(x[:, _N_STORIES])
        p_modal = (s @ self.phi) * self.cfg.force_amplitude
        denom = self.omega_n[None, :] ** 2 - wp[:, None] ** 2
        a = p_modal / denom
        b = a * (wp[:, None] / self.omega_n[None, :])
        sin_pt = np.sin(wp[:, None] * self.t[None, :])
        return a, b, sin_pt

    def _displacements(self, a: np.ndarray, b: np.ndarray, sin_pt: np.ndarray) -> np.ndarray:
        """Story displacement histories, shape (n, stories, time)."""
        n = a.shape[0]
        part_p = (a @ self.phi.T)[:, :, None] * sin_pt[:, None, :]
        coef = b[:, None, :] * self.phi[None, :, :]
        part_n = (coef.reshape(n * _N_STORIES, _N_STORIES) @ self._sin_nt).reshape(
            n, _N_STORIES, -1
        )
        return part_p - part_n

    def displacement_history(self, x: np.ndarray, modes: np.ndarray | None = None) -> np.ndarray:
        """Story displacements over the time grid for one input, shape (5, T).

        ``modes`` optionally restricts superposition to a 0/1 mode mask.
        """
        a, b, sin_pt = self._modal_terms(np.atleast_2d(np.asarray(x, dtype=float)))
        if modes is not None:
            a, b = a * modes, b * modes
        return self._displacements(a, b, sin_pt)[0]

    def hf(self, x: np.ndarray) -> np.ndarray:
        out = np.empty(x.shape[0])
        for sl in _chunks(x.shape[0], 512):
            a, b, sin_pt = self._modal_terms(x[sl])
            u = self._displacements(a, b, sin_pt)
            drift = np.abs(np.diff(u, axis=1, prepend=0.0))
            out[sl] = self.cfg.drift_limit - drift.max(axis=(1, 2))
        return out

    def mode_set(self, wp: np.ndarray) -> np.ndarray:
        """0/1 mask of the retained LF modes, shape (n, 5).

        The nearest bracketing pair {j, j+1} when omega_p lies between
        natural frequencies, else the single extreme mode.
        """
        wp = np.asarray(wp, dtype=float)
        mask = np.zeros((wp.shape[0], _N_STORIES), dtype=bool)
        rows = np.arange(wp.shape[0])
        below = wp < self.omega_n[0]
        above = wp > self.omega_n[-1]
        mid = ~(below | above)
        lo = np.clip(np.searchsorted(self.omega_n, wp, side="right") - 1, 0, _N_STORIES - 2)
        mask[rows[below], 0] = True
        mask[rows[above], _N_STORIES - 1] = True
        mask[rows[mid], lo[mid]] = True
        mask[rows[mid], lo[mid] + 1] = True
        return mask

    def lf(self, x: np.ndarray) -> np.ndarray:
        out = np.empty(x.shape[0])
        for sl in _chunks(x.shape[0], 512):
            a, b, sin_pt = self._modal_terms(x[sl])
            keep = self.mode_set(x[sl, _N_STORIES])
            u = self._displacements(a * keep, b * keep, sin_pt)
            peak = np.abs(u).max(axis=(1, 2))
            out[sl] = self.cfg.drift_limit - self.cfg.lf_safety_factor * peak
        return out


def _chunks(n: int, size: int):
    for start in range(0, n, size):
        yield slice(start, min(start + size, n))


def shear_building_pair(cfg: ShearBuildingConfig | None = None) -> ModelPair:
    """Shear-building pair: full modal HF, reduced-mode LF at 40% cost."""
    building = _ShearBuilding(cfg or ShearBuildingConfig())
    pair = ModelPair(building.hf, building.lf, cost_hf=1.0, cost_lf=0.4, dim=6)
    pair.building = building  # expose modal data for diagnostics and tests
    return pair


def shear_building_distribution() -> JointInputDistribution:
    """Five standard-normal force factors and a uniform forcing frequency.

    The forcing frequency is uniform on [5, 50] rad/s, spanning the five
    natural frequencies (about 6.0 to 40.5 rad/s) so every LF mode set
    occurs with positive probability.
    """
    marginals = tuple(Marginal.normal() for _ in range(_N_STORIES)) + (
        Marginal.uniform(5.0, 50.0),
    )
    return JointInputDistribution(marginals)
