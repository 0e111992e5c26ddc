"""Mixture-model state and likelihood.

The observation model treats each pixel as a random convex combination
of per-pixel endmember draws plus isotropic noise, so band ``l`` of
pixel ``n`` is Gaussian with mean ``(M a_n)_l`` and variance

    Omega_ln = sum_r sigma2_rl * a_rn^2 + psi2_n.

All log-densities drop the ``(2 pi)^(-L/2)`` constant; only ratios and
gradients enter the samplers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import NumericError
from .simplex import stick_to_abundance


@dataclass
class GncmState:
    """One full sample of the model parameters.

    T      (R-1, N) stick coordinates, columns strictly inside (0,1)
    M      (L, R)   endmember means, entries strictly inside (0,1)
    Sigma  (R, L)   endmember variances, nonnegative
    z      (N,)     class labels in {1..K}
    Psi    (N,)     noise variances, nonnegative
    C      (R, K)   Dirichlet parameters, strictly positive
    """

    T: np.ndarray
    M: np.ndarray
    Sigma: np.ndarray
    z: np.ndarray
    Psi: np.ndarray
    C: np.ndarray

    def __post_init__(self) -> None:
        self.T = np.asarray(self.T, dtype=float)
        self.M = np.asarray(self.M, dtype=float)
        self.Sigma = np.asarray(self.Sigma, dtype=float)
        self.z = np.asarray(self.z, dtype=int)
        self.Psi = np.asarray(self.Psi, dtype=float)
        self.C = np.asarray(self.C, dtype=float)
        self.validate()

    def validate(self) -> None:
        R = self.M.shape[1]
        N = self.T.shape[1]
        K = self.C.shape[1]
        if self.T.shape != (R - 1, N):
            raise ValueError("T must be (R-1, N)")
        if self.Sigma.shape != (R, self.M.shape[0]):
            raise ValueError("Sigma must be (R, L)")
        if self.z.shape != (N,) or self.Psi.shape != (N,):
            raise ValueError("z and Psi must have one entry per pixel")
        if self.C.shape[0] != R:
            raise ValueError("C must be (R, K)")
        if np.any(self.T <= 0.0) or np.any(self.T >= 1.0):
            raise ValueError("stick coordinates must lie strictly in (0,1)")
        if np.any(self.M <= 0.0) or np.any(self.M >= 1.0):
            raise ValueError("endmember means must lie strictly in (0,1)")
        if np.any(self.Sigma < 0.0):
            raise ValueError("endmember variances must be nonnegative")
        if np.any(self.Psi < 0.0):
            raise ValueError("noise variances must be nonnegative")
        if np.any(self.C <= 0.0):
            raise ValueError("Dirichlet parameters must be positive")
        if np.any(self.z < 1) or np.any(self.z > K):
            raise ValueError(f"labels must lie in {{1..{K}}}")

    @property
    def n_endmembers(self) -> int:
        return self.M.shape[1]

    @property
    def n_bands(self) -> int:
        return self.M.shape[0]

    @property
    def n_pixels(self) -> int:
        return self.T.shape[1]

    @property
    def n_classes(self) -> int:
        return self.C.shape[1]

    def abundances(self) -> np.ndarray:
        """Abundance matrix A, shape (R, N)."""
        return stick_to_abundance(self.T)

    def copy(self) -> "GncmState":
        return GncmState(
            T=self.T.copy(),
            M=self.M.copy(),
            Sigma=self.Sigma.copy(),
            z=self.z.copy(),
            Psi=self.Psi.copy(),
            C=self.C.copy(),
        )


@dataclass
class VarianceField:
    """Per-band, per-pixel mixture variance and its reciprocal."""

    Omega: np.ndarray  # (L, N), strictly positive
    Lambda: np.ndarray  # (L, N), elementwise 1/Omega

    def __post_init__(self) -> None:
        if np.any(self.Omega <= 0.0) or not np.all(np.isfinite(self.Omega)):
            raise NumericError("variance field has nonpositive or non-finite entries")


def mixture_variance(A: np.ndarray, Sigma: np.ndarray, Psi: np.ndarray) -> np.ndarray:
    """Omega matrix (L, N) for abundances A (R, N), variances Sigma (R, L),
    noise Psi (N,).  einsum keeps the reduction single-threaded and
    bitwise reproducible."""
    omega = np.einsum("rl,rn->ln", Sigma, A * A)
    omega += Psi
    return omega


def compute_variance_field(state: GncmState) -> VarianceField:
    """Evaluate Omega and Lambda = 1/Omega for a full state.

    Raises NumericError when any entry is nonpositive (e.g. all
    variances identically zero).
    """
    omega = mixture_variance(state.abundances(), state.Sigma, state.Psi)
    if np.any(omega <= 0.0):
        raise NumericError("degenerate variances: Omega has nonpositive entries")
    return VarianceField(Omega=omega, Lambda=1.0 / omega)


def log_likelihood_pixel(
    y_n: np.ndarray,
    a_n: np.ndarray,
    M: np.ndarray,
    Sigma: np.ndarray,
    psi2_n: float,
) -> float:
    """Per-pixel Gaussian log-density, additive constant dropped:

        -1/2 * sum_l [ log Omega_ln + (y_ln - (M a_n)_l)^2 / Omega_ln ].
    """
    y_n = np.asarray(y_n, dtype=float)
    a_n = np.asarray(a_n, dtype=float)
    omega = Sigma.T @ (a_n * a_n) + psi2_n
    if np.any(omega <= 0.0):
        raise NumericError("nonpositive Omega entry in likelihood")
    res = y_n - M @ a_n
    return float(-0.5 * np.sum(np.log(omega) + res * res / omega))


def log_likelihood_image(Y, state: GncmState) -> float:
    """Sum of per-pixel log-likelihoods over the whole image."""
    refl = Y.reflectance if hasattr(Y, "reflectance") else np.asarray(Y, dtype=float)
    if refl.shape != (state.n_bands, state.n_pixels):
        raise ValueError(
            f"image shape {refl.shape} does not match state "
            f"({state.n_bands}, {state.n_pixels})"
        )
    A = state.abundances()
    omega = mixture_variance(A, state.Sigma, state.Psi)
    if np.any(omega <= 0.0):
        raise NumericError("nonpositive Omega entry in likelihood")
    res = refl - np.einsum("lr,rn->ln", state.M, A)
    return float(-0.5 * np.sum(np.log(omega) + res * res / omega))


def reconstruct(state: GncmState, M: Optional[np.ndarray] = None) -> np.ndarray:
    """Noise-free reconstruction M @ A, shape (L, N)."""
    if M is None:
        M = state.M
    return np.einsum("lr,rn->ln", M, state.abundances())
