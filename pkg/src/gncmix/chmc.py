"""Constrained Hamiltonian Monte Carlo kernel.

One proposal draws a standard-normal momentum, runs a fixed number of
leapfrog steps of the Hamiltonian H(q, p) = U(q) + p'p/2, and accepts
with probability min{1, exp(H0 - H1)}.  Box constraints are enforced by
reflection: after each position drift, a coordinate beyond a bound is
folded back symmetrically and its momentum negated, which preserves
both reversibility and volume.

The same kernel runs many independent targets at once: pass positions
as a (d, B) matrix together with callables returning per-column
energies (B,) and gradients (d, B).  Acceptance is per column, so a
batched call is exactly B independent proposals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ReflectionError

MAX_FOLDS = 100


@dataclass
class TargetSpec:
    """A potential energy U with its gradient on an open box.

    potential(q) must be finite inside the box (it may return +inf at or
    beyond the boundary); gradient(q) has the shape of q.  Bounds are
    per-coordinate and may be -inf/+inf.
    """

    dim: int
    potential: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray]
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self) -> None:
        self.lower = np.broadcast_to(
            np.asarray(self.lower, dtype=float), (self.dim,)
        ).copy()
        self.upper = np.broadcast_to(
            np.asarray(self.upper, dtype=float), (self.dim,)
        ).copy()
        if np.any(self.lower >= self.upper):
            raise ValueError("lower bounds must be strictly below upper bounds")

    def bounds_for(self, q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if q.ndim == 2:
            return self.lower[:, None], self.upper[:, None]
        return self.lower, self.upper


@dataclass
class ChmcConfig:
    """Kernel tuning knobs.

    step_size      leapfrog step (adapted during burn-in when adapt=True)
    n_leapfrog     nominal number of leapfrog steps per proposal
    jitter         fraction by which n_leapfrog is randomized per proposal;
                   breaks resonances with the target's periods
    target_accept  dual-averaging target acceptance rate
    max_step       optional ceiling for the adapted step size (useful for
                   unit-box blocks, where steps beyond the box are wasted)
    """

    step_size: float = 0.1
    n_leapfrog: int = 10
    jitter: float = 0.2
    target_accept: float = 0.75
    adapt: bool = True
    max_step: float | None = None

    def __post_init__(self) -> None:
        if self.step_size <= 0.0:
            raise ValueError("step_size must be positive")
        if self.n_leapfrog < 1:
            raise ValueError("n_leapfrog must be at least 1")
        if not 0.0 <= self.jitter < 1.0:
            raise ValueError("jitter must lie in [0,1)")
        if not 0.0 < self.target_accept < 1.0:
            raise ValueError("target_accept must lie in (0,1)")
        if self.max_step is not None and self.max_step < self.step_size:
            raise ValueError("max_step must be at least step_size")


def _reflect(
    q: np.ndarray,
    p: np.ndarray,
    lower: np.ndarray,
    upper: np.ndarray,
    strict: bool = True,
) -> tuple[np.ndarray, np.ndarray]:
    """Fold positions into [lower, upper], negating the momentum of every
    reflected coordinate.  Non-finite positions pass through untouched
    (they auto-reject later via a non-finite Hamiltonian).

    When the fold budget runs out, strict mode raises (the single-step
    API's contract); otherwise the offending coordinates are poisoned
    with NaN so the proposal auto-rejects.
    """
    for _ in range(MAX_FOLDS):
        finite = np.isfinite(q)
        over = finite & (q > upper)
        under = finite & (q < lower)
        if not (over.any() or under.any()):
            return q, p
        q = np.where(over, 2.0 * upper - q, q)
        p = np.where(over, -p, p)
        q = np.where(under, 2.0 * lower - q, q)
        p = np.where(under, -p, p)
    if strict:
        raise ReflectionError(
            "reflection did not terminate within "
            f"{MAX_FOLDS} folds; step size is far too large"
        )
    out = np.isfinite(q) & ((q > upper) | (q < lower))
    return np.where(out, np.nan, q), p


def leapfrog_step(
    q: np.ndarray, p: np.ndarray, eps: float, target: TargetSpec
) -> tuple[np.ndarray, np.ndarray]:
    """One reflective leapfrog step: half kick, drift (with boundary
    folding), half kick.  Works on (d,) vectors or (d, B) batches."""
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    lower, upper = target.bounds_for(q)
    with np.errstate(all="ignore"):
        p_half = p - 0.5 * eps * target.gradient(q)
        q_new = q + eps * p_half
        q_new, p_half = _reflect(q_new, p_half, lower, upper)
        p_new = p_half - 0.5 * eps * target.gradient(q_new)
    return q_new, p_new


def _trajectory(
    q: np.ndarray,
    p: np.ndarray,
    eps,
    n_steps: int,
    target: TargetSpec,
) -> tuple[np.ndarray, np.ndarray]:
    """n_steps leapfrog steps sharing gradient evaluations at the seams.
    Trajectories whose drift exhausts the fold budget are NaN-poisoned
    (and therefore rejected) instead of raising.  ``eps`` may be a
    scalar or one step size per batch column."""
    lower, upper = target.bounds_for(q)
    with np.errstate(all="ignore"):
        p = p - 0.5 * eps * target.gradient(q)
        for step in range(n_steps):
            q = q + eps * p
            q, p = _reflect(q, p, lower, upper, strict=False)
            kick = eps if step < n_steps - 1 else 0.5 * eps
            p = p - kick * target.gradient(q)
    return q, p


def _kinetic(p: np.ndarray) -> np.ndarray:
    return 0.5 * np.sum(p * p, axis=0)


def _draw_n_steps(cfg: ChmcConfig, rng: np.random.Generator) -> int:
    if cfg.jitter == 0.0:
        return cfg.n_leapfrog
    lo = max(1, int(round(cfg.n_leapfrog * (1.0 - cfg.jitter))))
    hi = max(lo, int(round(cfg.n_leapfrog * (1.0 + cfg.jitter))))
    return int(rng.integers(lo, hi + 1))


def chmc_propose(
    q0: np.ndarray,
    target: TargetSpec,
    cfg: ChmcConfig,
    rng: np.random.Generator,
) -> tuple[np.ndarray, bool, float]:
    """One constrained-HMC proposal from a single point.

    Returns (q1, accepted, delta_H) with delta_H = H(q0,p0) - H(q1,p1).
    A non-finite energy or gradient anywhere along the trajectory
    auto-rejects (delta_H is then -inf).
    """
    q1, accepted, delta_h, _ = chmc_propose_batch(
        np.asarray(q0, dtype=float)[:, None], target, cfg, rng
    )
    return q1[:, 0], bool(accepted[0]), float(delta_h[0])


def chmc_propose_batch(
    q0: np.ndarray,
    target: TargetSpec,
    cfg: ChmcConfig,
    rng: np.random.Generator,
    eps=None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    """B independent proposals at once; q0 has shape (d, B).

    ``eps`` may be a scalar or a (B,) vector (one independently adapted
    step size per column).  Returns (q1, accepted, delta_H, n_nonfinite)
    where accepted and delta_H are per column and n_nonfinite counts
    columns whose trajectory hit a non-finite energy (those are always
    rejected).
    """
    q0 = np.asarray(q0, dtype=float)
    if eps is None:
        eps = cfg.step_size
    eps = np.asarray(eps, dtype=float)
    if eps.ndim == 1 and q0.ndim == 2:
        eps = eps[None, :]
    n_steps = _draw_n_steps(cfg, rng)
    p0 = rng.standard_normal(q0.shape)
    with np.errstate(all="ignore"):
        h0 = target.potential(q0) + _kinetic(p0)
        q1, p1 = _trajectory(q0, p0, eps, n_steps, target)
        h1 = target.potential(q1) + _kinetic(p1)
        delta_h = h0 - h1
    finite = np.isfinite(delta_h)
    n_nonfinite = int(np.size(delta_h) - np.count_nonzero(finite))
    u = rng.random(np.shape(delta_h))
    with np.errstate(all="ignore"):
        accepted = finite & (np.log(u) < delta_h)
    delta_h = np.where(finite, delta_h, -np.inf)
    q1 = np.where(accepted, q1, q0)
    return q1, accepted, delta_h, n_nonfinite


def acceptance_probability(delta_h: np.ndarray) -> np.ndarray:
    """min{1, exp(delta_H)} with -inf mapping to 0."""
    with np.errstate(all="ignore"):
        return np.where(np.isfinite(delta_h), np.minimum(1.0, np.exp(delta_h)), 0.0)


class DualAveraging:
    """Step-size adaptation toward a target acceptance rate.

    Standard dual averaging on log(eps).  ``eps0`` may be a scalar (one
    shared step size) or a vector (one independently adapted step size
    per batch column; feed per-column acceptance probabilities).  Read
    :attr:`eps` while adapting and freeze to :attr:`eps_averaged` once
    burn-in ends.
    """

    def __init__(
        self,
        eps0,
        target_accept: float = 0.75,
        gamma: float = 0.05,
        t0: float = 10.0,
        kappa: float = 0.75,
        max_step: float | None = None,
    ) -> None:
        eps0 = np.asarray(eps0, dtype=float)
        if np.any(eps0 <= 0.0):
            raise ValueError("initial step size must be positive")
        self.target = target_accept
        self.gamma = gamma
        self.t0 = t0
        self.kappa = kappa
        self.max_log_eps = math.inf if max_step is None else math.log(max_step)
        self.mu = np.log(10.0 * eps0)
        self.log_eps = np.log(eps0)
        self.log_eps_bar = np.log(eps0)
        self.h_bar = np.zeros_like(eps0)
        self.count = 0

    @property
    def eps(self):
        out = np.exp(np.minimum(self.log_eps, self.max_log_eps))
        return float(out) if out.ndim == 0 else out

    @property
    def eps_averaged(self):
        out = np.exp(np.minimum(self.log_eps_bar, self.max_log_eps))
        return float(out) if out.ndim == 0 else out

    def update(self, accept_prob):
        """Consume one acceptance statistic (scalar or per column);
        returns the new step size."""
        self.count += 1
        i = self.count
        w = 1.0 / (i + self.t0)
        self.h_bar = (1.0 - w) * self.h_bar + w * (self.target - np.asarray(accept_prob))
        self.log_eps = self.mu - math.sqrt(i) / self.gamma * self.h_bar
        eta = i ** (-self.kappa)
        self.log_eps_bar = eta * self.log_eps + (1.0 - eta) * self.log_eps_bar
        return self.eps


def adapt_step_size(history: Sequence[float], cfg: ChmcConfig) -> float:
    """Replay an acceptance-probability record through dual averaging and
    return the resulting step size."""
    da = DualAveraging(cfg.step_size, target_accept=cfg.target_accept)
    for accept_prob in history:
        da.update(float(accept_prob))
    return da.eps
