"""Synthetic scene generation.

Scenes are built exactly the way the model reads them: a Potts label
map, per-class truncated-Dirichlet abundances, per-pixel Gaussian
endmember draws around the library means, and additive noise.  The
endmember library itself is synthetic (smooth Gaussian-bump spectra)
so every experiment is self-contained and seeded.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import EndmemberLibrary, HsiCube
from .errors import ConfigError, NumericError
from .model import GncmState
from .priors import PottsField
from .simplex import a_to_t

_REJECTION_CHUNK = 4096
_MIN_ACCEPT_RATE = 1e-6


@dataclass
class NoiseSpec:
    """Additive-noise configuration for generated scenes.

    kind 'constant' adds N(0, psi2 I) per pixel, 'band-linear' ramps the
    variance linearly across bands as
    1e-4 * (4 l / (L-1) + (L+3)/(L-1)) for l = 1..L, and 'zero' disables
    the additive term entirely.
    """

    kind: str = "constant"
    psi2: float = 1e-7

    def __post_init__(self) -> None:
        if self.kind not in ("constant", "band-linear", "zero"):
            raise ConfigError(f"unknown noise kind {self.kind!r}")
        if self.kind == "constant" and self.psi2 < 0.0:
            raise ConfigError("psi2 must be nonnegative")

    def band_variances(self, L: int) -> np.ndarray:
        """Per-band noise variance profile, shape (L,)."""
        if self.kind == "constant":
            return np.full(L, self.psi2)
        if self.kind == "zero":
            return np.zeros(L)
        l = np.arange(1, L + 1, dtype=float)
        return 1e-4 * (4.0 * l / (L - 1) + (L + 3.0) / (L - 1))


def synthetic_library(
    L: int, R: int, rng: np.random.Generator, with_variances: bool = True
) -> EndmemberLibrary:
    """Deterministic (seeded) smooth endmember library.

    Means are sums of 3-5 Gaussian bumps rescaled into (0.05, 0.95);
    variances follow smooth positive band profiles
    sigma2_rl = s_r * (1 + sin^2(2 pi l / L + phi_r)) * 1e-4 with
    per-endmember scale s_r in [0.5, 2].
    """
    if L < 2 or R < 1:
        raise ConfigError("library needs L >= 2 bands and R >= 1 endmembers")
    grid = np.arange(L, dtype=float)
    means = np.empty((L, R))
    for r in range(R):
        n_bumps = int(rng.integers(3, 6))
        spectrum = np.zeros(L)
        for _ in range(n_bumps):
            center = rng.uniform(0.0, L - 1.0)
            width = rng.uniform(L / 12.0, L / 3.0)
            amp = rng.uniform(0.2, 1.0)
            spectrum += amp * np.exp(-0.5 * ((grid - center) / width) ** 2)
        lo, hi = spectrum.min(), spectrum.max()
        span = hi - lo if hi > lo else 1.0
        means[:, r] = 0.05 + 0.9 * (spectrum - lo) / span
    variances = None
    if with_variances:
        variances = np.empty((R, L))
        for r in range(R):
            s_r = rng.uniform(0.5, 2.0)
            phi_r = rng.uniform(0.0, 2.0 * np.pi)
            variances[r] = s_r * (1.0 + np.sin(2.0 * np.pi * grid / L + phi_r) ** 2) * 1e-4
    names = [f"material_{r + 1}" for r in range(R)]
    return EndmemberLibrary(names=names, means=means, variances=variances)


def sample_potts_field(
    width: int,
    height: int,
    K: int,
    beta: float,
    n_sweeps: int,
    rng: np.random.Generator,
) -> PottsField:
    """Gibbs-sample a Potts label map from a uniform random start.

    Each sweep updates the two checkerboard colors in turn; within a
    color the conditionals are independent, so the update is exact Gibbs
    on the conditional weights beta * (matching-neighbor count).
    """
    if n_sweeps < 1:
        raise ConfigError("n_sweeps must be at least 1")
    n = width * height
    labels = rng.integers(1, K + 1, size=n)
    field = PottsField(width=width, height=height, K=K, beta=beta, labels=labels)
    if K == 1:
        return field
    red = field.checkerboard()
    for _ in range(n_sweeps):
        for color_mask in (red, ~red):
            counts = field.neighbor_class_counts(labels)  # (K, N)
            logw = beta * counts[:, color_mask]
            logw -= logw.max(axis=0)
            probs = np.exp(logw)
            probs /= probs.sum(axis=0)
            u = rng.random(color_mask.sum())
            draws = 1 + (np.cumsum(probs, axis=0) < u).sum(axis=0)
            labels[color_mask] = np.minimum(draws, K)
    field.labels = labels
    return field


def sample_truncated_dirichlet(
    c_k: np.ndarray, cap: float, rng: np.random.Generator
) -> np.ndarray:
    """One Dirichlet(c_k) draw conditioned on all components < cap."""
    return _truncated_dirichlet(np.asarray(c_k, dtype=float), cap, 1, rng)[:, 0]


def _truncated_dirichlet(
    c_k: np.ndarray, cap: float, n: int, rng: np.random.Generator
) -> np.ndarray:
    """Rejection-sample n columns from Dirichlet(c_k) truncated to
    max_r a_r < cap.  Aborts when the running acceptance-rate estimate
    drops below 1e-6."""
    R = c_k.shape[0]
    if np.any(c_k <= 0.0):
        raise ConfigError("Dirichlet parameters must be positive")
    if cap <= 1.0 / R:
        raise ConfigError(f"cap={cap} leaves no support for R={R}")
    out = np.empty((R, n))
    filled = 0
    proposed = 0
    while filled < n:
        chunk = max(_REJECTION_CHUNK, 2 * (n - filled))
        draws = rng.dirichlet(c_k, size=chunk).T  # (R, chunk)
        proposed += chunk
        good = draws[:, np.all(draws < cap, axis=0) & np.all(draws > 0.0, axis=0)]
        take = min(good.shape[1], n - filled)
        out[:, filled : filled + take] = good[:, :take]
        filled += take
        if proposed >= 1e6 and filled / proposed < _MIN_ACCEPT_RATE:
            raise NumericError(
                f"truncated-Dirichlet acceptance rate below {_MIN_ACCEPT_RATE} "
                f"(c={c_k.tolist()}, cap={cap})"
            )
    return out


def generate_scene(
    lib: EndmemberLibrary,
    dirichlet: np.ndarray,
    field: PottsField,
    noise: NoiseSpec,
    cap: float,
    rng: np.random.Generator,
) -> tuple[HsiCube, GncmState]:
    """Draw one scene and return it with its ground-truth state.

    Per pixel n of class k: abundances from the truncated
    Dirichlet(c_k); per-endmember spectra N(m_r, diag(sigma2_r)); then
    y_n = sum_r a_rn s_rn + e_n with e_n per the noise spec.  For
    band-dependent noise the truth state stores the band-mean variance
    per pixel (the model's own noise term is per-pixel).
    """
    dirichlet = np.asarray(dirichlet, dtype=float)
    L = lib.n_bands
    R = lib.n_endmembers
    K = field.K
    N = field.n_pixels
    if dirichlet.shape != (R, K):
        raise ConfigError(f"dirichlet must be (R={R}, K={K}), got {dirichlet.shape}")
    A = np.empty((R, N))
    for k in range(K):
        mask = field.labels == k + 1
        nk = int(mask.sum())
        if nk:
            A[:, mask] = _truncated_dirichlet(dirichlet[:, k], cap, nk, rng)
    if lib.variances is not None:
        sigma = np.asarray(lib.variances, dtype=float)
    else:
        sigma = np.zeros((R, L))
    # per-pixel endmember draws: s_rln = m_rl + sqrt(sigma2_rl) * eps
    eps = rng.standard_normal((R, L, N))
    spectra = lib.means.T[:, :, None] + np.sqrt(sigma)[:, :, None] * eps
    refl = np.einsum("rn,rln->ln", A, spectra)
    band_var = noise.band_variances(L)
    if np.any(band_var > 0.0):
        refl = refl + np.sqrt(band_var)[:, None] * rng.standard_normal((L, N))
    cube = HsiCube(width=field.width, height=field.height, bands=L, reflectance=refl)
    truth = GncmState(
        T=a_to_t(A),
        M=lib.means.copy(),
        Sigma=sigma.copy(),
        z=field.labels.copy(),
        Psi=np.full(N, float(band_var.mean())),
        C=dirichlet.copy(),
    )
    return cube, truth
