"""Evaluation criteria: abundance aRMSE, per-endmember RMSE and
spectral angle, reconstruction error, and the assignment-based
alignments that undo label/endmember switching before comparison.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment


def armse_abundance(A_true: np.ndarray, A_est: np.ndarray) -> float:
    """sqrt( (1/(N R)) * sum_n ||a_n - a_n_hat||^2 )."""
    A_true = np.asarray(A_true, dtype=float)
    A_est = np.asarray(A_est, dtype=float)
    if A_true.shape != A_est.shape:
        raise ValueError(f"shape mismatch: {A_true.shape} vs {A_est.shape}")
    R, N = A_true.shape
    return float(np.sqrt(np.sum((A_true - A_est) ** 2) / (N * R)))


def spectral_angle(u: np.ndarray, v: np.ndarray) -> float:
    """arccos of the normalized inner product, in radians."""
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ValueError("spectral angle undefined for zero-norm spectra")
    cos = np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0)
    return float(np.arccos(cos))


@dataclass
class EndmemberErrors:
    rmse: np.ndarray  # (R,) per-endmember ||m_hat - m|| / sqrt(L)
    sam: np.ndarray  # (R,) per-endmember spectral angle, radians
    armse: float  # sqrt(mean of squared rmse)
    asam: float  # mean spectral angle


def endmember_errors(M_true: np.ndarray, M_est: np.ndarray) -> EndmemberErrors:
    """Per-column RMSE and spectral angle (columns assumed aligned)."""
    M_true = np.asarray(M_true, dtype=float)
    M_est = np.asarray(M_est, dtype=float)
    if M_true.shape != M_est.shape:
        raise ValueError(f"shape mismatch: {M_true.shape} vs {M_est.shape}")
    L, R = M_true.shape
    rmse = np.linalg.norm(M_est - M_true, axis=0) / np.sqrt(L)
    sam = np.array([spectral_angle(M_est[:, r], M_true[:, r]) for r in range(R)])
    return EndmemberErrors(
        rmse=rmse,
        sam=sam,
        armse=float(np.sqrt(np.mean(rmse**2))),
        asam=float(np.mean(sam)),
    )


def reconstruction_errors(Y: np.ndarray, Yhat: np.ndarray) -> tuple[float, float]:
    """(RE, mean spectral angle) between observed and reconstructed
    pixels: RE = sqrt((1/(N L)) sum_n ||y_n_hat - y_n||^2)."""
    Y = np.asarray(Y, dtype=float)
    Yhat = np.asarray(Yhat, dtype=float)
    if Y.shape != Yhat.shape:
        raise ValueError(f"shape mismatch: {Y.shape} vs {Yhat.shape}")
    L, N = Y.shape
    re = float(np.sqrt(np.sum((Yhat - Y) ** 2) / (N * L)))
    sam = float(np.mean([spectral_angle(Yhat[:, n], Y[:, n]) for n in range(N)]))
    return re, sam


def align_endmembers(M_true: np.ndarray, M_est: np.ndarray) -> np.ndarray:
    """Permutation ``perm`` minimizing the total spectral angle of
    ``M_est[:, perm]`` against ``M_true``; apply the same permutation to
    abundance rows and Dirichlet rows before computing metrics."""
    M_true = np.asarray(M_true, dtype=float)
    M_est = np.asarray(M_est, dtype=float)
    if M_true.shape != M_est.shape:
        raise ValueError(f"shape mismatch: {M_true.shape} vs {M_est.shape}")
    R = M_true.shape[1]
    cost = np.empty((R, R))
    for i in range(R):
        for j in range(R):
            cost[i, j] = spectral_angle(M_true[:, i], M_est[:, j])
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(R, dtype=int)
    perm[rows] = cols
    return perm


def align_labels(z_true: np.ndarray, z_est: np.ndarray, K: int) -> np.ndarray:
    """Class relabeling ``perm`` maximizing agreement: estimated class j
    maps onto true class perm_inverse... returned as perm with
    ``perm[j] = true class index (0-based) assigned to estimated class
    j+1``."""
    z_true = np.asarray(z_true, dtype=int)
    z_est = np.asarray(z_est, dtype=int)
    confusion = np.zeros((K, K))
    for i in range(K):
        for j in range(K):
            confusion[i, j] = np.count_nonzero((z_true == i + 1) & (z_est == j + 1))
    rows, cols = linear_sum_assignment(-confusion)
    perm = np.empty(K, dtype=int)
    perm[cols] = rows
    return perm


def classification_accuracy(z_true: np.ndarray, z_est: np.ndarray, K: int) -> float:
    """Label agreement after the best class relabeling."""
    perm = align_labels(z_true, z_est, K)
    z_mapped = perm[np.asarray(z_est, dtype=int) - 1] + 1
    return float(np.mean(z_mapped == np.asarray(z_true, dtype=int)))
