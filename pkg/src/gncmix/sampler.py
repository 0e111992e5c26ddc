"""Hybrid Gibbs driver.

Each sweep updates, in order: all stick columns (CHMC), all endmember
mean rows (CHMC), all endmember variance columns (CHMC), all labels
(checkerboard Gibbs), all noise variances (CHMC), all Dirichlet
parameter columns (CHMC).  Step sizes adapt by dual averaging during
burn-in and freeze afterwards.  Post-burn-in samples are averaged for
the continuous blocks (abundances in a-space, then renormalized) and
per-pixel label modes give the label map.

Randomness is organized as counter-based streams keyed by
(seed, phase, sweep), so results are bitwise independent of any
execution schedule or thread count.
"""

from __future__ import annotations

import sys
import warnings
from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np
from scipy.special import gammaln

from .chmc import ChmcConfig, DualAveraging, acceptance_probability, chmc_propose_batch
from .conditionals import (
    LOG_SIGMA_MAX,
    LOG_SIGMA_MIN,
    _dirichlet_tail,
    make_c_target,
    make_log_sigma_target,
    make_m_target,
    make_psi_target,
    make_t_target,
)
from .data import EndmemberLibrary, HsiCube
from .endmembers import extract_endmembers, projection_features
from .errors import ConfigError, NumericError, RankDeficiencyError
from .model import GncmState, log_likelihood_image
from .priors import HyperParams, PottsField, log_potts_coupling
from .simplex import a_to_t

PHASE_IDS = {"init": 0, "t": 1, "m": 2, "sigma": 3, "z": 4, "psi": 5, "c": 6}
CONTINUOUS_BLOCKS = ("t", "m", "sigma", "psi", "c")
ALL_BLOCKS = ("t", "m", "sigma", "z", "psi", "c")
INIT_CLIP = 1e-6


def phase_stream(seed: int, phase: str, sweep: int) -> np.random.Generator:
    """Counter-based RNG stream for one (phase, sweep) cell."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(PHASE_IDS[phase], sweep))
    return np.random.Generator(np.random.Philox(ss))


def _default_chmc() -> dict[str, ChmcConfig]:
    # unit-box blocks cap their adapted step: steps beyond the box width
    # only burn the reflection budget
    return {
        name: ChmcConfig(max_step=2.0 if name in ("t", "m") else None)
        for name in CONTINUOUS_BLOCKS
    }


@dataclass
class SamplerConfig:
    """Chain layout and tuning.

    blocks lists the sweep phases to run (clamping a block is as simple
    as omitting it); fix_noise_zero pins all noise variances at zero and
    drops the psi phase (the pure endmember-variability variant).
    """

    n_burn_in: int
    n_total: int
    seed: int
    hyper: HyperParams
    thinning: int = 1
    chmc: dict[str, ChmcConfig] = dc_field(default_factory=_default_chmc)
    blocks: tuple[str, ...] = ALL_BLOCKS
    fix_noise_zero: bool = False
    proposals_per_sweep: int = 1
    progress_every: int = 100
    validate_every: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.n_burn_in < self.n_total:
            raise ConfigError("need n_total > n_burn_in >= 0")
        if self.thinning < 1:
            raise ConfigError("thinning must be at least 1")
        if self.proposals_per_sweep < 1:
            raise ConfigError("proposals_per_sweep must be at least 1")
        unknown = set(self.blocks) - set(ALL_BLOCKS)
        if unknown:
            raise ConfigError(f"unknown blocks: {sorted(unknown)}")
        for name in CONTINUOUS_BLOCKS:
            self.chmc.setdefault(name, ChmcConfig())


@dataclass
class ChainSummary:
    """Posterior estimates plus chain diagnostics."""

    A_mmse: np.ndarray  # (R, N)
    M_mmse: np.ndarray  # (L, R)
    Sigma_mmse: np.ndarray  # (R, L)
    Psi_mmse: np.ndarray  # (N,)
    C_mmse: np.ndarray  # (R, K)
    z_map: np.ndarray  # (N,)
    acceptance_rates: dict[str, float]
    kept_samples: int
    step_sizes: dict[str, float] = dc_field(default_factory=dict)
    trace: dict[str, np.ndarray] = dc_field(default_factory=dict)


def _kmeans(X: np.ndarray, K: int, rng: np.random.Generator, n_iter: int = 100) -> np.ndarray:
    """Plain Lloyd clustering on columns of X; deterministic given rng."""
    d, N = X.shape
    centers = X[:, rng.choice(N, size=K, replace=False)].copy()
    assign = np.zeros(N, dtype=int)
    for _ in range(n_iter):
        dist = np.empty((K, N))
        for k in range(K):
            diff = X - centers[:, k : k + 1]
            dist[k] = np.einsum("dn,dn->n", diff, diff)
        new_assign = np.argmin(dist, axis=0)
        for k in range(K):
            mask = new_assign == k
            if mask.any():
                centers[:, k] = X[:, mask].mean(axis=1)
            else:  # adopt the point worst-served by its current center
                worst = int(np.argmax(np.min(dist, axis=0)))
                centers[:, k] = X[:, worst]
                new_assign[worst] = k
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
    return assign


def initialize_state(
    Y: HsiCube,
    R: int,
    K: int,
    hyper: HyperParams,
    init_endmembers: Optional[EndmemberLibrary] = None,
    rng: Optional[np.random.Generator] = None,
) -> GncmState:
    """Build the chain's starting point.

    Endmember means come from the provided library or the pure-pixel
    initializer (random fallback on rank-deficient images), sticks start
    at the simplex barycenter, variances at small constants, labels from
    k-means on subspace-projected pixels.
    """
    if R < 2:
        raise ConfigError("R must be at least 2")
    if rng is None:
        rng = phase_stream(0, "init", 0)
    L, N = Y.reflectance.shape
    if init_endmembers is not None:
        if init_endmembers.means.shape != (L, R):
            raise ConfigError(
                f"library shape {init_endmembers.means.shape} != ({L}, {R})"
            )
        lib = init_endmembers
    else:
        try:
            lib = extract_endmembers(Y, R)
        except RankDeficiencyError as exc:
            warnings.warn(f"{exc}; falling back to random endmember init")
            lib = EndmemberLibrary(
                names=[f"random_{r + 1}" for r in range(R)],
                means=rng.uniform(0.2, 0.8, size=(L, R)),
            )
    mtilde = np.clip(lib.means, INIT_CLIP, 1.0 - INIT_CLIP)
    t_bary = a_to_t(np.full(R, 1.0 / R))
    T = np.repeat(t_bary[:, None], N, axis=1)
    if K == 1:
        z = np.ones(N, dtype=int)
    else:
        feats = projection_features(Y, lib)
        z = _kmeans(feats, K, rng) + 1
    return GncmState(
        T=T,
        M=mtilde.copy(),
        Sigma=np.full((R, L), 1e-3),
        z=z,
        Psi=np.full(N, 1e-8),
        C=np.ones((R, K)),
    )


def sample_labels(
    state: GncmState, field: PottsField, rng: np.random.Generator
) -> np.ndarray:
    """Draw new labels from their conditional: per-class stick prior
    (normalizer included, it differs across classes) times the Potts
    coupling.  Checkerboard schedule: all red sites given blacks, then
    all black sites given the fresh reds."""
    K = field.K
    z = state.z.copy()
    if K == 1:
        return z
    C = state.C
    R = C.shape[0]
    tail = _dirichlet_tail(C)  # (R-1, K)
    log_t = np.log(state.T)
    log_1mt = np.log1p(-state.T)
    norm = gammaln(C.sum(axis=0)) - gammaln(C).sum(axis=0)  # (K,)
    prior = np.empty((K, state.n_pixels))
    for k in range(K):
        prior[k] = norm[k] + np.sum(
            (tail[:, k, None] - 1.0) * log_t + (C[: R - 1, k, None] - 1.0) * log_1mt,
            axis=0,
        )
    red = field.checkerboard()
    for mask in (red, ~red):
        counts = field.neighbor_class_counts(z)
        logw = prior[:, mask] + field.beta * counts[:, mask]
        logw -= logw.max(axis=0)
        probs = np.exp(logw)
        probs /= probs.sum(axis=0)
        u = rng.random(int(mask.sum()))
        draws = 1 + (np.cumsum(probs, axis=0) < u).sum(axis=0)
        z[mask] = np.minimum(draws, K)
    return z


def log_posterior(
    Y: HsiCube,
    state: GncmState,
    field: PottsField,
    hyper: HyperParams,
    mtilde: np.ndarray,
) -> float:
    """Joint log-density up to constants: likelihood plus every prior."""
    ll = log_likelihood_image(Y, state)
    C = state.C
    R = C.shape[0]
    col = state.z - 1
    tail = _dirichlet_tail(C)[:, col]
    cr = C[: R - 1, col]
    norm = (gammaln(C.sum(axis=0)) - gammaln(C).sum(axis=0))[col]
    lp_t = float(
        np.sum(norm)
        + np.sum((tail - 1.0) * np.log(state.T) + (cr - 1.0) * np.log1p(-state.T))
    )
    diff = state.M - mtilde
    lp_m = float(-0.5 * np.sum(diff * diff) / hyper.epsilon2)
    lp_sigma = float(-np.sum(np.log(state.Sigma))) if np.all(state.Sigma > 0) else 0.0
    lp_psi = float(-hyper.lam * np.sum(state.Psi))
    s = C.sum(axis=0)
    lp_c = float(
        np.sum(
            hyper.gamma * (gammaln(s) - gammaln(C).sum(axis=0))
            - hyper.alpha * s
            + R * hyper.alpha
        )
    )
    lp_z = log_potts_coupling(field, state.z)
    return ll + lp_t + lp_m + lp_sigma + lp_psi + lp_c + lp_z


def run_sampler(
    Y: HsiCube,
    init: GncmState,
    cfg: SamplerConfig,
    mtilde: Optional[np.ndarray] = None,
) -> ChainSummary:
    """Run the full chain and return posterior estimates.

    ``mtilde`` is the center of the endmember-mean prior; it defaults to
    the initial means (the initializer's output).
    """
    refl = Y.reflectance
    L, N = refl.shape
    if (init.n_bands, init.n_pixels) != (L, N):
        raise ConfigError("initial state does not match the image dimensions")
    hyper = cfg.hyper
    if (init.n_endmembers, init.n_classes) != (hyper.R, hyper.K):
        raise ConfigError("initial state does not match hyper R/K")
    state = init.copy()
    if cfg.fix_noise_zero:
        state.Psi[:] = 0.0
    if mtilde is None:
        mtilde = init.M.copy()
    blocks = tuple(
        b for b in cfg.blocks if not (b == "psi" and cfg.fix_noise_zero)
    )
    field = PottsField(
        width=Y.width, height=Y.height, K=hyper.K, beta=hyper.beta, labels=state.z.copy()
    )
    if not np.isfinite(log_posterior(Y, state, field, hyper, mtilde)):
        raise NumericError("non-finite energy at initialization")

    # one independently adapted step size per conditional (per pixel,
    # band, or class): posterior scales differ wildly within a block
    batch_of = {"t": N, "m": L, "sigma": L, "psi": N, "c": hyper.K}
    adapters = {
        b: DualAveraging(
            np.full(batch_of[b], cfg.chmc[b].step_size),
            target_accept=cfg.chmc[b].target_accept,
            max_step=cfg.chmc[b].max_step,
        )
        for b in CONTINUOUS_BLOCKS
        if b in blocks
    }
    eps = {b: adapters[b].eps for b in adapters}
    accepted = {b: 0.0 for b in adapters}
    proposed = {b: 0 for b in adapters}

    kept = 0
    A_sum = np.zeros((hyper.R, N))
    M_sum = np.zeros((L, hyper.R))
    Sigma_sum = np.zeros((hyper.R, L))
    Psi_sum = np.zeros(N)
    C_sum = np.zeros((hyper.R, hyper.K))
    z_counts = np.zeros((hyper.K, N), dtype=np.int64)

    trace: dict[str, list] = {"sweep": [], "log_post": [], "mean_psi2": []}
    for b in CONTINUOUS_BLOCKS:
        trace[f"accept_{b}"] = []
        trace[f"eps_{b}"] = []
    trace_c: list[np.ndarray] = []

    A = state.abundances()
    for sweep in range(cfg.n_total):
        sweep_acc = {b: float("nan") for b in CONTINUOUS_BLOCKS}
        sweep_probs: dict[str, np.ndarray] = {}
        for block in blocks:
            rng = phase_stream(cfg.seed, block, sweep)
            if block == "z":
                state.z = sample_labels(state, field, rng)
                field.labels = state.z
                continue
            if block == "t":
                target = make_t_target(refl, state.M, state.Sigma, state.Psi, state.C, state.z)
                q = state.T
            elif block == "m":
                target = make_m_target(refl, A, state.Sigma, state.Psi, mtilde, hyper.epsilon2)
                q = state.M.T
            elif block == "sigma":
                # sampled in log coordinates (exact reparametrization;
                # the Jeffreys term cancels the Jacobian)
                target = make_log_sigma_target(refl, A, state.M, state.Psi)
                q = np.clip(
                    np.log(np.maximum(state.Sigma, 0.0)), LOG_SIGMA_MIN, LOG_SIGMA_MAX
                )
            elif block == "psi":
                target = make_psi_target(refl, A, state.M, state.Sigma, hyper.lam)
                q = state.Psi[None, :]
            else:  # "c"
                target = make_c_target(A, state.z, hyper.K, hyper.alpha, hyper.gamma)
                q = state.C
            probs = np.zeros(batch_of[block])
            for _ in range(cfg.proposals_per_sweep):
                q, acc, delta_h, _ = chmc_propose_batch(
                    q, target, cfg.chmc[block], rng, eps=eps[block]
                )
                probs += acceptance_probability(delta_h)
                accepted[block] += float(np.count_nonzero(acc))
                proposed[block] += acc.size
            probs /= cfg.proposals_per_sweep
            sweep_acc[block] = float(np.mean(probs))
            sweep_probs[block] = probs
            if block == "t":
                state.T = q
                A = state.abundances()
            elif block == "m":
                state.M = q.T
            elif block == "sigma":
                state.Sigma = np.exp(q)
            elif block == "psi":
                state.Psi = q[0]
            else:
                state.C = q

        in_burn_in = sweep < cfg.n_burn_in
        for b, da in adapters.items():
            if in_burn_in and cfg.chmc[b].adapt:
                if b in sweep_probs:
                    da.update(sweep_probs[b])
                eps[b] = da.eps
            elif cfg.chmc[b].adapt and sweep == cfg.n_burn_in:
                eps[b] = da.eps_averaged  # frozen for the rest of the chain

        if cfg.validate_every and sweep % cfg.validate_every == 0:
            state.validate()

        if not in_burn_in and (sweep - cfg.n_burn_in) % cfg.thinning == 0:
            kept += 1
            A_sum += A
            M_sum += state.M
            Sigma_sum += state.Sigma
            Psi_sum += state.Psi
            C_sum += state.C
            z_counts[state.z - 1, np.arange(N)] += 1

        lp = log_posterior(Y, state, field, hyper, mtilde)
        trace["sweep"].append(sweep)
        trace["log_post"].append(lp)
        trace["mean_psi2"].append(float(state.Psi.mean()))
        for b in CONTINUOUS_BLOCKS:
            trace[f"accept_{b}"].append(sweep_acc.get(b, float("nan")))
            trace[f"eps_{b}"].append(
                float(np.mean(eps[b])) if b in eps else float("nan")
            )
        trace_c.append(state.C.copy().ravel())

        if cfg.progress_every and (sweep + 1) % cfg.progress_every == 0:
            acc_txt = " ".join(
                f"{b}={sweep_acc[b]:.2f}" for b in blocks if b in sweep_acc and np.isfinite(sweep_acc[b])
            )
            print(
                f"sweep {sweep + 1}/{cfg.n_total} log_post={lp:.6g} accept {acc_txt}",
                file=sys.stderr,
            )

    if kept == 0:
        raise NumericError("no post-burn-in samples were kept")
    A_mmse = A_sum / kept
    A_mmse /= A_mmse.sum(axis=0)  # absorb averaging round-off
    summary = ChainSummary(
        A_mmse=A_mmse,
        M_mmse=M_sum / kept,
        Sigma_mmse=Sigma_sum / kept,
        Psi_mmse=Psi_sum / kept,
        C_mmse=C_sum / kept,
        z_map=np.argmax(z_counts, axis=0) + 1,
        acceptance_rates={
            b: (accepted[b] / proposed[b] if proposed[b] else float("nan"))
            for b in adapters
        },
        kept_samples=kept,
        step_sizes={b: float(np.mean(eps[b])) for b in adapters},
    )
    trace_arrays = {k: np.asarray(v) for k, v in trace.items()}
    trace_arrays["dirichlet"] = np.asarray(trace_c)
    summary.trace = trace_arrays
    return summary
