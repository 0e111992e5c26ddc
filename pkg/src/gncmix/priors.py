"""Prior log-densities (up to constants) and the Potts label field.

The Potts partition constant is never evaluated: label sampling and the
log-posterior trace only need conditional weights and the unnormalized
coupling energy, in which it cancels for fixed granularity beta.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import gammaln

NEG_INF = float("-inf")


@dataclass
class HyperParams:
    """Fixed model constants.

    lam       exponential rate of the noise-variance prior (1e7 keeps the
              additive noise much weaker than endmember variability)
    alpha     Dirichlet-hyperprior rate, weakly informative default
    gamma     Dirichlet-hyperprior shape exponent, weakly informative default
    epsilon2  variance of the endmember-mean prior around its initializer
    beta      Potts granularity (0 switches spatial coupling off)
    K, R      class and endmember counts
    """

    K: int
    R: int
    lam: float = 1e7
    alpha: float = 1e-3
    gamma: float = 1e-3
    epsilon2: float = 1e-2
    beta: float = 1.5

    def __post_init__(self) -> None:
        if self.K < 1:
            raise ValueError("K must be at least 1")
        if self.R < 2:
            raise ValueError("R must be at least 2")
        for name in ("lam", "alpha", "gamma", "epsilon2"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be strictly positive")
        if self.beta < 0.0:
            raise ValueError("beta must be nonnegative")


@dataclass
class PottsField:
    """K-class label image on a width x height grid with 4-neighborhood."""

    width: int
    height: int
    K: int
    beta: float
    labels: np.ndarray  # (N,), values in {1..K}, row-major pixel order
    # neighbor table: _neighbors[d, n] is the pixel index of the d-th
    # neighbor of n (up, down, left, right) and -1 where missing
    _neighbors: np.ndarray = field(init=False, repr=False)
    _valid: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.labels = np.asarray(self.labels, dtype=int)
        n = self.width * self.height
        if self.width < 1 or self.height < 1 or self.K < 1:
            raise ValueError("grid dimensions and K must be positive")
        if self.beta < 0.0:
            raise ValueError("beta must be nonnegative")
        if self.labels.shape != (n,):
            raise ValueError("labels must hold one entry per pixel")
        if np.any(self.labels < 1) or np.any(self.labels > self.K):
            raise ValueError(f"labels must lie in {{1..{self.K}}}")
        self._neighbors, self._valid = _neighbor_table(self.width, self.height)

    @property
    def n_pixels(self) -> int:
        return self.width * self.height

    def checkerboard(self) -> np.ndarray:
        """Color mask (N,), True on the 'red' sites ((x+y) even); red and
        black sites have no within-color neighbors."""
        x = np.arange(self.n_pixels) % self.width
        y = np.arange(self.n_pixels) // self.width
        return (x + y) % 2 == 0

    def neighbor_class_counts(self, labels: Optional[np.ndarray] = None) -> np.ndarray:
        """Count matrix (K, N): entry (k, n) is how many neighbors of
        pixel n carry label k+1."""
        lab = self.labels if labels is None else np.asarray(labels, dtype=int)
        padded = np.concatenate([lab, [0]])  # index -1 -> dummy label 0
        neigh = padded[self._neighbors]
        counts = np.empty((self.K, self.n_pixels))
        for k in range(self.K):
            counts[k] = ((neigh == k + 1) & self._valid).sum(axis=0)
        return counts

    def monochromatic_edges(self, labels: Optional[np.ndarray] = None) -> int:
        """Number of unordered neighbor pairs sharing a label."""
        lab = self.labels if labels is None else np.asarray(labels, dtype=int)
        grid = lab.reshape(self.height, self.width)
        horiz = int(np.sum(grid[:, 1:] == grid[:, :-1]))
        vert = int(np.sum(grid[1:, :] == grid[:-1, :]))
        return horiz + vert


def _neighbor_table(width: int, height: int) -> tuple[np.ndarray, np.ndarray]:
    n = width * height
    idx = np.arange(n)
    x = idx % width
    y = idx // width
    up = np.where(y > 0, idx - width, -1)
    down = np.where(y < height - 1, idx + width, -1)
    left = np.where(x > 0, idx - 1, -1)
    right = np.where(x < width - 1, idx + 1, -1)
    table = np.stack([up, down, left, right])
    return table, table >= 0


def potts_conditional_weights(field: PottsField, n: int) -> np.ndarray:
    """Unnormalized conditional log-weights for pixel n: entry k is
    beta times the number of neighbors currently labeled k+1."""
    if not 0 <= n < field.n_pixels:
        raise IndexError(f"pixel index {n} out of range")
    neigh = field._neighbors[:, n]
    valid = field._valid[:, n]
    weights = np.zeros(field.K)
    for k in range(field.K):
        weights[k] = field.beta * np.sum((field.labels[neigh] == k + 1) & valid)
    return weights


def log_potts_coupling(field: PottsField, labels: Optional[np.ndarray] = None) -> float:
    """beta times the monochromatic-edge count (unordered pairs); the
    label prior up to the partition constant."""
    return field.beta * field.monochromatic_edges(labels)


# ---------------------------------------------------------------------------
# continuous priors


def log_prior_t(t_n: np.ndarray, c_k: np.ndarray) -> float:
    """Log-density of stick coordinates whose abundance vector is
    Dirichlet(c_k), normalizer included (it varies with the class):

        log Gamma(sum c) - sum log Gamma(c)
        + sum_{r<R} [ (sum_{i>r} c_i - 1) log t_r + (c_r - 1) log(1-t_r) ].
    """
    t_n = np.asarray(t_n, dtype=float)
    c_k = np.asarray(c_k, dtype=float)
    if np.any(c_k <= 0.0):
        raise ValueError("Dirichlet parameters must be positive")
    if t_n.shape[0] != c_k.shape[0] - 1:
        raise ValueError("t must have R-1 entries for R Dirichlet parameters")
    if np.any(t_n <= 0.0) or np.any(t_n >= 1.0):
        return NEG_INF
    tail = np.cumsum(c_k[::-1])[::-1][1:]  # tail[r] = sum_{i>r} c_i
    norm = gammaln(c_k.sum()) - gammaln(c_k).sum()
    body = np.sum((tail - 1.0) * np.log(t_n) + (c_k[:-1] - 1.0) * np.log1p(-t_n))
    return float(norm + body)


def log_prior_m_col(
    m_row: np.ndarray, mtilde_row: np.ndarray, epsilon2: float
) -> float:
    """Truncated-Gaussian log prior for one band of the endmember means;
    -inf outside the open unit box, normalizer dropped."""
    m_row = np.asarray(m_row, dtype=float)
    if np.any(m_row <= 0.0) or np.any(m_row >= 1.0):
        return NEG_INF
    diff = m_row - np.asarray(mtilde_row, dtype=float)
    return float(-np.dot(diff, diff) / (2.0 * epsilon2))


def log_prior_sigma(sigma2: float) -> float:
    """Jeffreys prior for a single endmember variance."""
    if sigma2 <= 0.0:
        return NEG_INF
    return float(-np.log(sigma2))


def log_prior_psi(psi2: float, lam: float) -> float:
    """Exponential prior for a noise variance, log(lam) constant dropped."""
    if psi2 < 0.0:
        return NEG_INF
    return float(-lam * psi2)


def log_hyperprior_c(c_k: np.ndarray, alpha: float, gamma: float) -> float:
    """Conjugate-form hyperprior for one class's Dirichlet parameters:

        gamma * [log Gamma(sum c) - sum log Gamma(c)] - alpha * sum c + R*alpha.
    """
    c_k = np.asarray(c_k, dtype=float)
    if np.any(c_k <= 0.0):
        return NEG_INF
    R = c_k.shape[0]
    return float(
        gamma * (gammaln(c_k.sum()) - gammaln(c_k).sum())
        - alpha * c_k.sum()
        + R * alpha
    )
