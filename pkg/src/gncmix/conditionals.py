"""Potential energies (negative log conditional densities, up to
constants) for the five continuous Gibbs blocks, with their analytic
gradients.

Each block comes in two forms: a single-block function operating on one
pixel/band/class context (the reference implementation, convenient for
tests and grid checks), and a ``make_*_target`` factory packaging the
same math vectorized over all independent blocks of a sweep phase as a
:class:`~gncmix.chmc.TargetSpec` for the batched kernel.  The two forms
are cross-checked in the test suite.

Sign conventions follow the finite-difference oracle throughout; in
particular d(U3)/d(psi2) = +1/2 * sum_l Lambda_ln (U3 is increasing in
the noise variance).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import digamma, gammaln

from .chmc import TargetSpec
from .simplex import jacobian_a_wrt_t, stick_to_abundance

INF = float("inf")


@dataclass
class PixelContext:
    """Everything the t- and psi-potentials of one pixel condition on.

    ``t`` carries the pixel's current stick coordinates; the t-potential
    ignores it (the sticks are its variable) while the psi-potential
    conditions on it.
    """

    y: np.ndarray  # (L,)
    M: np.ndarray  # (L, R)
    Sigma: np.ndarray  # (R, L)
    psi2: float
    c: np.ndarray  # (R,) Dirichlet parameters of the pixel's class
    t: np.ndarray | None = None  # (R-1,)

    def __post_init__(self) -> None:
        self.y = np.asarray(self.y, dtype=float)
        self.M = np.asarray(self.M, dtype=float)
        self.Sigma = np.asarray(self.Sigma, dtype=float)
        self.c = np.asarray(self.c, dtype=float)
        L, R = self.M.shape
        if self.y.shape != (L,) or self.Sigma.shape != (R, L) or self.c.shape != (R,):
            raise ValueError("inconsistent pixel context dimensions")
        if self.psi2 < 0.0 or np.any(self.Sigma < 0.0):
            raise ValueError("variances must be nonnegative")
        if np.any(self.c <= 0.0):
            raise ValueError("Dirichlet parameters must be positive")
        if self.t is not None:
            self.t = np.asarray(self.t, dtype=float)
            if self.t.shape != (R - 1,):
                raise ValueError("t must have R-1 entries")


@dataclass
class BandContext:
    """Everything the M- and Sigma-potentials of one band condition on.

    ``m_row`` carries the band's current endmember means; the M-potential
    ignores it (the means are its variable) while the Sigma-potential
    conditions on it.
    """

    y_row: np.ndarray  # (N,) observed band
    A: np.ndarray  # (R, N)
    sigma_col: np.ndarray  # (R,) current endmember variances of the band
    Psi: np.ndarray  # (N,)
    mtilde_row: np.ndarray  # (R,) prior center for the band's means
    epsilon2: float
    m_row: np.ndarray | None = None  # (R,)

    def __post_init__(self) -> None:
        self.y_row = np.asarray(self.y_row, dtype=float)
        self.A = np.asarray(self.A, dtype=float)
        self.sigma_col = np.asarray(self.sigma_col, dtype=float)
        self.Psi = np.asarray(self.Psi, dtype=float)
        self.mtilde_row = np.asarray(self.mtilde_row, dtype=float)
        R, N = self.A.shape
        if (
            self.y_row.shape != (N,)
            or self.sigma_col.shape != (R,)
            or self.Psi.shape != (N,)
            or self.mtilde_row.shape != (R,)
        ):
            raise ValueError("inconsistent band context dimensions")
        if self.epsilon2 <= 0.0:
            raise ValueError("epsilon2 must be positive")
        if self.m_row is not None:
            self.m_row = np.asarray(self.m_row, dtype=float)
            if self.m_row.shape != (R,):
                raise ValueError("m_row must have R entries")


def _dirichlet_tail(c: np.ndarray) -> np.ndarray:
    """tail[r] = sum_{i>r} c_i for r = 0..R-2 (for (R,) or (R,K) input)."""
    rev = np.cumsum(c[::-1], axis=0)[::-1]
    return rev[1:]


# ---------------------------------------------------------------------------
# stick coordinates (one pixel)


def potential_t(t_n: np.ndarray, ctx: PixelContext) -> tuple[float, np.ndarray]:
    """Energy U(t_n) = U1 + U2 + U3 of one pixel's stick coordinates and
    its gradient via the chain rule through a(t).

    U1 = 1/2 sum_l Lambda_l (y_l - (M a)_l)^2     data misfit
    U2 = - log Dirichlet-stick prior (class-dependent exponents)
    U3 = 1/2 sum_l log Omega_l                    variance volume
    """
    t_n = np.asarray(t_n, dtype=float)
    if np.any(t_n <= 0.0) or np.any(t_n >= 1.0):
        raise ValueError("t must lie strictly inside (0,1)")
    a = stick_to_abundance(t_n)
    res = ctx.y - ctx.M @ a
    omega = ctx.Sigma.T @ (a * a) + ctx.psi2
    lam = 1.0 / omega
    tail = _dirichlet_tail(ctx.c)
    u1 = 0.5 * np.sum(lam * res * res)
    u2 = -np.sum((tail - 1.0) * np.log(t_n) + (ctx.c[:-1] - 1.0) * np.log1p(-t_n))
    u3 = 0.5 * np.sum(np.log(omega))

    lr = lam * res
    # dU1/da_r = -sum_l Lam_l res_l M_lr - a_r sum_l sigma2_rl res_l^2 / Omega_l^2
    du1_da = -(lr @ ctx.M) - a * (ctx.Sigma @ (lr * lr))
    du3_da = a * (ctx.Sigma @ lam)
    du2_dt = -(tail - 1.0) / t_n + (ctx.c[:-1] - 1.0) / (1.0 - t_n)
    grad = (du1_da + du3_da) @ jacobian_a_wrt_t(t_n) + du2_dt
    return float(u1 + u2 + u3), grad


def make_t_target(
    Y: np.ndarray,
    M: np.ndarray,
    Sigma: np.ndarray,
    Psi: np.ndarray,
    C: np.ndarray,
    z: np.ndarray,
) -> TargetSpec:
    """All-pixel stick target: positions (R-1, N), one column per pixel."""
    R = M.shape[1]
    tail_by_class = _dirichlet_tail(C)  # (R-1, K)
    col = np.asarray(z, dtype=int) - 1
    tail = tail_by_class[:, col]  # (R-1, N)
    cr = C[: R - 1, col]  # (R-1, N)

    def potential(T: np.ndarray) -> np.ndarray:
        with np.errstate(all="ignore"):
            A = stick_to_abundance(T)
            res = Y - np.einsum("lr,rn->ln", M, A)
            omega = np.einsum("rl,rn->ln", Sigma, A * A)
            omega += Psi
            lam = 1.0 / omega
            u1 = 0.5 * np.einsum("ln,ln->n", lam * res, res)
            u2 = -np.sum(
                (tail - 1.0) * np.log(T) + (cr - 1.0) * np.log1p(-T), axis=0
            )
            u3 = 0.5 * np.sum(np.log(omega), axis=0)
            u = u1 + u2 + u3
        bad = np.any((T <= 0.0) | (T >= 1.0), axis=0)
        return np.where(bad, INF, u)

    def gradient(T: np.ndarray) -> np.ndarray:
        with np.errstate(all="ignore"):
            A = stick_to_abundance(T)
            res = Y - np.einsum("lr,rn->ln", M, A)
            omega = np.einsum("rl,rn->ln", Sigma, A * A)
            omega += Psi
            lam = 1.0 / omega
            lr = lam * res
            du_da = -np.einsum("ln,lr->rn", lr, M) + A * np.einsum(
                "rl,ln->rn", Sigma, lam - lr * lr
            )
            # chain rule through the stick jacobian: with w = dU/da * a,
            # dU/dt_i = w_i/(t_i - 1) + (sum_{r>i} w_r)/t_i
            w = du_da * A
            tail_w = np.cumsum(w[::-1], axis=0)[::-1]
            grad = w[:-1] / (T - 1.0) + tail_w[1:] / T
            grad += -(tail - 1.0) / T + (cr - 1.0) / (1.0 - T)
        return grad

    return TargetSpec(
        dim=R - 1, potential=potential, gradient=gradient, lower=0.0, upper=1.0
    )


# ---------------------------------------------------------------------------
# endmember means (one band)


def potential_m(m_row: np.ndarray, ctx: BandContext) -> tuple[float, np.ndarray]:
    """Energy V(M_l:) of one band's endmember means: weighted residual
    plus the Gaussian pull toward the initializer.  Lambda is a constant
    here because Omega does not depend on M."""
    m_row = np.asarray(m_row, dtype=float)
    if np.any(m_row <= 0.0) or np.any(m_row >= 1.0):
        raise ValueError("endmember means must lie strictly inside (0,1)")
    omega = ctx.sigma_col @ (ctx.A * ctx.A) + ctx.Psi
    lam = 1.0 / omega
    res = ctx.y_row - m_row @ ctx.A
    diff = m_row - ctx.mtilde_row
    v = 0.5 * np.sum(res * res * lam) + 0.5 * np.dot(diff, diff) / ctx.epsilon2
    grad = -(ctx.A @ (lam * res)) + diff / ctx.epsilon2
    return float(v), grad


def make_m_target(
    Y: np.ndarray,
    A: np.ndarray,
    Sigma: np.ndarray,
    Psi: np.ndarray,
    Mtilde: np.ndarray,
    epsilon2: float,
) -> TargetSpec:
    """All-band endmember-mean target: positions (R, L), one column per
    band.  Lambda is evaluated once at construction."""
    R = A.shape[0]
    omega = np.einsum("rl,rn->ln", Sigma, A * A)
    omega += Psi
    lam = 1.0 / omega  # fixed w.r.t. M
    mt = Mtilde.T  # (R, L)

    def potential(q: np.ndarray) -> np.ndarray:
        with np.errstate(all="ignore"):
            res = Y - np.einsum("rl,rn->ln", q, A)
            diff = q - mt
            v = 0.5 * np.einsum("ln,ln->l", lam * res, res)
            v += 0.5 * np.sum(diff * diff, axis=0) / epsilon2
        bad = np.any((q <= 0.0) | (q >= 1.0), axis=0)
        return np.where(bad, INF, v)

    def gradient(q: np.ndarray) -> np.ndarray:
        with np.errstate(all="ignore"):
            res = Y - np.einsum("rl,rn->ln", q, A)
            grad = -np.einsum("ln,rn->rl", lam * res, A) + (q - mt) / epsilon2
        return grad

    return TargetSpec(dim=R, potential=potential, gradient=gradient, lower=0.0, upper=1.0)


# ---------------------------------------------------------------------------
# endmember variances (one band)


def potential_sigma(sigma_col: np.ndarray, ctx: BandContext) -> tuple[float, np.ndarray]:
    """Energy W(Sigma_:l) = W1 + W2 + W3 of one band's endmember
    variances (weighted residual, Jeffreys term, variance volume)."""
    s = np.asarray(sigma_col, dtype=float)
    if np.any(s <= 0.0):
        raise ValueError("endmember variances must be strictly positive")
    if ctx.m_row is None:
        raise ValueError("BandContext must carry m_row for the sigma potential")
    a2 = ctx.A * ctx.A
    omega = s @ a2 + ctx.Psi
    lam = 1.0 / omega
    res = ctx.y_row - ctx.m_row @ ctx.A
    r2 = res * res
    w1 = 0.5 * np.sum(r2 * lam)
    w2 = np.sum(np.log(s))
    w3 = 0.5 * np.sum(np.log(omega))
    grad = -0.5 * (a2 @ (r2 * lam * lam)) + 1.0 / s + 0.5 * (a2 @ lam)
    return float(w1 + w2 + w3), grad


def make_sigma_target(
    Y: np.ndarray, A: np.ndarray, M: np.ndarray, Psi: np.ndarray
) -> TargetSpec:
    """All-band variance target: positions (R, L), one column per band.
    The residual is fixed (it depends on M, not Sigma)."""
    R = A.shape[0]
    a2 = A * A
    res = Y - np.einsum("lr,rn->ln", M, A)
    r2 = res * res

    def potential(q: np.ndarray) -> np.ndarray:
        with np.errstate(all="ignore"):
            omega = np.einsum("rl,rn->ln", q, a2)
            omega += Psi
            lam = 1.0 / omega
            w = 0.5 * np.einsum("ln,ln->l", r2, lam)
            w += np.sum(np.log(q), axis=0)
            w += 0.5 * np.sum(np.log(omega), axis=1)
        bad = np.any(q <= 0.0, axis=0)
        return np.where(bad, INF, w)

    def gradient(q: np.ndarray) -> np.ndarray:
        with np.errstate(all="ignore"):
            omega = np.einsum("rl,rn->ln", q, a2)
            omega += Psi
            lam = 1.0 / omega
            grad = 0.5 * np.einsum("ln,rn->rl", lam * (1.0 - r2 * lam), a2)
            grad += 1.0 / q
        return grad

    return TargetSpec(dim=R, potential=potential, gradient=gradient, lower=0.0, upper=INF)


# log-variance bounds: exp(+-) stays far from overflow while covering
# every physically meaningful reflectance-variance scale
LOG_SIGMA_MIN = -60.0
LOG_SIGMA_MAX = 10.0


def make_log_sigma_target(
    Y: np.ndarray, A: np.ndarray, M: np.ndarray, Psi: np.ndarray
) -> TargetSpec:
    """Endmember-variance target in log coordinates u = log(sigma2).

    The Jeffreys term of W cancels against the change-of-variables
    Jacobian (a 1/s prior is flat in log s), leaving W1 + W3 evaluated
    at exp(u).  Sampling u instead of sigma2 gives multiplicative moves,
    which cross the orders of magnitude this block spans without the
    underflow-to-zero failure mode of arithmetic steps near the origin.
    """
    R = A.shape[0]
    a2 = A * A
    res = Y - np.einsum("lr,rn->ln", M, A)
    r2 = res * res

    def potential(u: np.ndarray) -> np.ndarray:
        with np.errstate(all="ignore"):
            s = np.exp(u)
            omega = np.einsum("rl,rn->ln", s, a2)
            omega += Psi
            lam = 1.0 / omega
            w = 0.5 * np.einsum("ln,ln->l", r2, lam)
            w += 0.5 * np.sum(np.log(omega), axis=1)
        return w

    def gradient(u: np.ndarray) -> np.ndarray:
        with np.errstate(all="ignore"):
            s = np.exp(u)
            omega = np.einsum("rl,rn->ln", s, a2)
            omega += Psi
            lam = 1.0 / omega
            grad = 0.5 * s * np.einsum("ln,rn->rl", lam * (1.0 - r2 * lam), a2)
        return grad

    return TargetSpec(
        dim=R,
        potential=potential,
        gradient=gradient,
        lower=LOG_SIGMA_MIN,
        upper=LOG_SIGMA_MAX,
    )


# ---------------------------------------------------------------------------
# noise variances (one pixel)


def potential_psi(
    psi2_n: float, ctx: PixelContext, lam_rate: float
) -> tuple[float, float]:
    """Energy H(psi2) = U1 + U3 + lam * psi2 of one pixel's noise
    variance and its scalar derivative."""
    if psi2_n < 0.0:
        raise ValueError("noise variance must be nonnegative")
    if ctx.t is None:
        raise ValueError("PixelContext must carry t for the psi potential")
    a = stick_to_abundance(ctx.t)
    res = ctx.y - ctx.M @ a
    r2 = res * res
    omega = ctx.Sigma.T @ (a * a) + psi2_n
    lam = 1.0 / omega
    u1 = 0.5 * np.sum(r2 * lam)
    u3 = 0.5 * np.sum(np.log(omega))
    grad = float(-0.5 * np.sum(r2 * lam * lam) + 0.5 * np.sum(lam) + lam_rate)
    return float(u1 + u3 + lam_rate * psi2_n), grad


def make_psi_target(
    Y: np.ndarray, A: np.ndarray, M: np.ndarray, Sigma: np.ndarray, lam_rate: float
) -> TargetSpec:
    """All-pixel noise-variance target: positions (1, N)."""
    res = Y - np.einsum("lr,rn->ln", M, A)
    r2 = res * res
    base = np.einsum("rl,rn->ln", Sigma, A * A)  # Omega minus psi2

    def potential(q: np.ndarray) -> np.ndarray:
        with np.errstate(all="ignore"):
            omega = base + q
            h = 0.5 * np.sum(r2 / omega, axis=0)
            h += 0.5 * np.sum(np.log(omega), axis=0)
            h += lam_rate * q[0]
        bad = q[0] < 0.0
        return np.where(bad, INF, h)

    def gradient(q: np.ndarray) -> np.ndarray:
        with np.errstate(all="ignore"):
            lam = 1.0 / (base + q)
            grad = -0.5 * np.sum(r2 * lam * lam, axis=0)
            grad += 0.5 * np.sum(lam, axis=0)
            grad += lam_rate
        return grad[None, :]

    return TargetSpec(dim=1, potential=potential, gradient=gradient, lower=0.0, upper=INF)


# ---------------------------------------------------------------------------
# Dirichlet parameters (one class)


def potential_c(
    c_k: np.ndarray,
    abundances_in_class: np.ndarray,
    alpha: float,
    gamma: float,
) -> tuple[float, np.ndarray]:
    """Energy P(c_k) = P1 + P2 of one class's Dirichlet parameters given
    the abundances of its pixels (columns of ``abundances_in_class``)."""
    c = np.asarray(c_k, dtype=float)
    if np.any(c <= 0.0):
        raise ValueError("Dirichlet parameters must be positive")
    ak = np.asarray(abundances_in_class, dtype=float)
    if ak.ndim != 2 or ak.shape[0] != c.shape[0]:
        raise ValueError("abundances_in_class must be (R, n_k)")
    nk = ak.shape[1]
    if nk == 0:
        raise ValueError("class is empty")
    R = c.shape[0]
    log_a_sum = np.sum(np.log(ak), axis=1)  # (R,)
    p1 = (gamma + 1.0) * nk * (-gammaln(c.sum()) + gammaln(c).sum())
    p2 = nk * (alpha * c.sum() - R * alpha) - np.sum((c - 1.0) * log_a_sum)
    grad = (
        (gamma + 1.0) * nk * (-digamma(c.sum()) + digamma(c))
        + nk * alpha
        - log_a_sum
    )
    return float(p1 + p2), grad


def hyperprior_c_potential(
    c_k: np.ndarray, alpha: float, gamma: float
) -> tuple[float, np.ndarray]:
    """Negative log hyperprior of c_k, used in place of the data
    potential when a class holds no pixels."""
    c = np.asarray(c_k, dtype=float)
    if np.any(c <= 0.0):
        return INF, np.full_like(c, np.nan)
    R = c.shape[0]
    p = -gamma * (gammaln(c.sum()) - gammaln(c).sum()) + alpha * c.sum() - R * alpha
    grad = -gamma * (digamma(c.sum()) - digamma(c)) + alpha
    return float(p), grad


def class_abundance_stats(
    A: np.ndarray, z: np.ndarray, K: int
) -> tuple[np.ndarray, np.ndarray]:
    """Per-class pixel counts (K,) and log-abundance sums (R, K)."""
    R = A.shape[0]
    counts = np.zeros(K)
    log_a_sum = np.zeros((R, K))
    log_a = np.log(A)
    for k in range(K):
        mask = z == k + 1
        counts[k] = np.count_nonzero(mask)
        if counts[k] > 0:
            log_a_sum[:, k] = log_a[:, mask].sum(axis=1)
    return counts, log_a_sum


def make_c_target(
    A: np.ndarray, z: np.ndarray, K: int, alpha: float, gamma: float
) -> TargetSpec:
    """All-class Dirichlet-parameter target: positions (R, K).  Empty
    classes fall back to the hyperprior potential (their conditional is
    the prior itself)."""
    R = A.shape[0]
    counts, log_a_sum = class_abundance_stats(A, z, K)
    empty = counts == 0

    def potential(q: np.ndarray) -> np.ndarray:
        with np.errstate(all="ignore"):
            s = q.sum(axis=0)
            glns = gammaln(s)
            gln = gammaln(q).sum(axis=0)
            p_data = (gamma + 1.0) * counts * (-glns + gln)
            p_data += counts * (alpha * s - R * alpha)
            p_data -= np.sum((q - 1.0) * log_a_sum, axis=0)
            p_prior = -gamma * (glns - gln) + alpha * s - R * alpha
            p = np.where(empty, p_prior, p_data)
        bad = np.any(q <= 0.0, axis=0)
        return np.where(bad, INF, p)

    def gradient(q: np.ndarray) -> np.ndarray:
        with np.errstate(all="ignore"):
            dgs = digamma(q.sum(axis=0))
            dg = digamma(q)
            g_data = (gamma + 1.0) * counts * (dg - dgs) + alpha * counts - log_a_sum
            g_prior = -gamma * (dgs - dg) + alpha
            grad = np.where(empty, g_prior, g_data)
        return grad

    return TargetSpec(dim=R, potential=potential, gradient=gradient, lower=0.0, upper=INF)
