import math

import numpy as np
import pytest
from conftest import central_diff, rel_err
from scipy.optimize import minimize_scalar
from scipy.special import digamma
from scipy.stats import norm

from gncmix.conditionals import (
    BandContext,
    PixelContext,
    make_c_target,
    make_m_target,
    make_psi_target,
    make_sigma_target,
    make_t_target,
    potential_c,
    potential_m,
    potential_psi,
    potential_sigma,
    potential_t,
)
from gncmix.model import log_likelihood_pixel
from gncmix.priors import log_prior_m_col, log_prior_t
from gncmix.simplex import stick_to_abundance


def _pixel_ctx(rng, R=3, L=5, var_scale=1.0):
    return PixelContext(
        y=rng.random(L),
        M=rng.uniform(0.2, 0.8, size=(L, R)),
        Sigma=rng.uniform(0.05, 2.0, size=(R, L)) * var_scale,
        psi2=float(rng.uniform(0.05, 0.5) * var_scale),
        c=rng.uniform(0.5, 4.0, size=R),
        t=rng.uniform(0.1, 0.9, size=R - 1),
    )


def _band_ctx(rng, R=3, N=6, var_scale=1.0):
    A = rng.dirichlet(np.ones(R), size=N).T
    return BandContext(
        y_row=rng.random(N),
        A=A,
        sigma_col=rng.uniform(0.05, 2.0, size=R) * var_scale,
        Psi=rng.uniform(0.05, 0.5, size=N) * var_scale,
        mtilde_row=rng.uniform(0.2, 0.8, size=R),
        epsilon2=1e-2,
        m_row=rng.uniform(0.2, 0.8, size=R),
    )


# ---------------------------------------------------------------------------
# finite-difference gradient checks


def test_gradient_t_finite_differences():
    rng = np.random.default_rng(0)
    for _ in range(25):
        ctx = _pixel_ctx(rng)
        t = rng.uniform(0.15, 0.85, size=2)
        _, grad = potential_t(t, ctx)
        fd = central_diff(lambda x: potential_t(x, ctx)[0], t)
        assert rel_err(grad, fd) < 1e-5


def test_gradient_m_finite_differences():
    rng = np.random.default_rng(1)
    for _ in range(25):
        ctx = _band_ctx(rng)
        m = rng.uniform(0.2, 0.8, size=3)
        _, grad = potential_m(m, ctx)
        fd = central_diff(lambda x: potential_m(x, ctx)[0], m)
        assert rel_err(grad, fd) < 1e-5


def test_gradient_sigma_finite_differences():
    rng = np.random.default_rng(2)
    for _ in range(25):
        ctx = _band_ctx(rng)
        s = rng.uniform(0.1, 2.0, size=3)
        _, grad = potential_sigma(s, ctx)
        fd = central_diff(lambda x: potential_sigma(x, ctx)[0], s)
        assert rel_err(grad, fd) < 1e-5


def test_gradient_psi_finite_differences():
    rng = np.random.default_rng(3)
    for _ in range(25):
        ctx = _pixel_ctx(rng)
        psi2 = float(rng.uniform(0.05, 0.8))
        _, grad = potential_psi(psi2, ctx, lam_rate=2.0)
        fd = central_diff(lambda x: potential_psi(float(x[0]), ctx, 2.0)[0], np.array([psi2]))
        assert rel_err(grad, fd[0]) < 1e-5


def test_gradient_c_finite_differences():
    rng = np.random.default_rng(4)
    for _ in range(25):
        R, nk = 3, 7
        ak = rng.dirichlet(np.ones(R), size=nk).T
        c = rng.uniform(0.4, 6.0, size=R)
        _, grad = potential_c(c, ak, alpha=0.3, gamma=0.7)
        fd = central_diff(lambda x: potential_c(x, ak, 0.3, 0.7)[0], c)
        assert rel_err(grad, fd) < 1e-5


# ---------------------------------------------------------------------------
# trivial / analytic cases


def test_t_constant_variance_collapse():
    # R=2 and unit Dirichlet: the stick prior term vanishes; with
    # Sigma = 0 and psi2 = w the energy is the scaled misfit plus volume
    rng = np.random.default_rng(5)
    L, R, w = 4, 2, 0.07
    ctx = PixelContext(
        y=rng.random(L),
        M=rng.uniform(0.2, 0.8, size=(L, R)),
        Sigma=np.zeros((R, L)),
        psi2=w,
        c=np.ones(R),
    )
    t = np.array([0.6])
    u, grad = potential_t(t, ctx)
    a = stick_to_abundance(t)
    res = ctx.y - ctx.M @ a
    assert u == pytest.approx(0.5 * np.dot(res, res) / w + 0.5 * L * np.log(w), rel=1e-12)
    jac = np.array([[-1.0], [1.0]])
    expected_grad = (-(res / w) @ ctx.M) @ jac
    np.testing.assert_allclose(grad, expected_grad, rtol=1e-12)


def test_t_zero_residual_uniform_prior():
    rng = np.random.default_rng(6)
    L, R = 4, 2
    M = rng.uniform(0.2, 0.8, size=(L, R))
    t = np.array([0.3])
    a = stick_to_abundance(t)
    ctx = PixelContext(
        y=M @ a, M=M, Sigma=rng.uniform(0.1, 1.0, size=(R, L)), psi2=0.05, c=np.ones(R)
    )
    u, grad = potential_t(t, ctx)
    omega = ctx.Sigma.T @ (a * a) + ctx.psi2
    assert u == pytest.approx(0.5 * np.sum(np.log(omega)), rel=1e-12)
    du3_da = a * (ctx.Sigma @ (1.0 / omega))
    jac = np.array([[-1.0], [1.0]])
    np.testing.assert_allclose(grad, du3_da @ jac, rtol=1e-10, atol=1e-12)


def test_m_zero_energy_at_prior_center_with_exact_fit():
    rng = np.random.default_rng(7)
    ctx = _band_ctx(rng)
    m = ctx.mtilde_row
    ctx.y_row = m @ ctx.A
    v, grad = potential_m(m, ctx)
    assert v == pytest.approx(0.0, abs=1e-14)
    np.testing.assert_allclose(grad, 0.0, atol=1e-12)


def test_m_weighted_least_squares_limit():
    rng = np.random.default_rng(8)
    ctx = _band_ctx(rng)
    ctx.epsilon2 = 1e12  # prior washed out
    omega = ctx.sigma_col @ (ctx.A * ctx.A) + ctx.Psi
    lam = 1.0 / omega
    lhs = (ctx.A * lam) @ ctx.A.T
    rhs = (ctx.A * lam) @ ctx.y_row
    m_star = np.linalg.solve(lhs, rhs)
    if np.all((m_star > 0) & (m_star < 1)):
        _, grad = potential_m(m_star, ctx)
        np.testing.assert_allclose(grad, 0.0, atol=1e-9)


def test_sigma_zero_residual_gradient_positive():
    rng = np.random.default_rng(9)
    ctx = _band_ctx(rng)
    ctx.y_row = ctx.m_row @ ctx.A
    s = rng.uniform(0.1, 1.0, size=3)
    _, grad = potential_sigma(s, ctx)
    a2 = ctx.A * ctx.A
    lam = 1.0 / (s @ a2 + ctx.Psi)
    np.testing.assert_allclose(grad, 1.0 / s + 0.5 * (a2 @ lam), rtol=1e-12)
    assert np.all(grad > 0)


def test_sigma_scalar_stationary_point():
    # R=1, N=1, a=1, psi=0: W(s) = r^2/(2s) + (3/2) log s, argmin r^2/3
    r = 0.4
    ctx = BandContext(
        y_row=np.array([r]),
        A=np.ones((1, 1)),
        sigma_col=np.array([1.0]),
        Psi=np.zeros(1),
        mtilde_row=np.array([0.5]),
        epsilon2=1.0,
        m_row=np.array([0.0 + 0.0]),
    )
    ctx.m_row = np.array([0.0])
    ctx.y_row = np.array([r])  # residual r with m_row = 0
    _, grad = potential_sigma(np.array([r * r / 3.0]), ctx)
    assert grad[0] == pytest.approx(0.0, abs=1e-10)
    opt = minimize_scalar(
        lambda s: potential_sigma(np.array([s]), ctx)[0], bounds=(1e-4, 1.0), method="bounded"
    )
    assert opt.x == pytest.approx(r * r / 3.0, rel=1e-4)


def test_psi_zero_residual_gradient_positive():
    rng = np.random.default_rng(10)
    ctx = _pixel_ctx(rng)
    a = stick_to_abundance(ctx.t)
    ctx.y = ctx.M @ a
    psi2 = 0.2
    _, grad = potential_psi(psi2, ctx, lam_rate=0.0)
    lam = 1.0 / (ctx.Sigma.T @ (a * a) + psi2)
    assert grad == pytest.approx(0.5 * np.sum(lam), rel=1e-12)
    assert grad > 0


def test_psi_large_residual_pulls_up_from_zero():
    rng = np.random.default_rng(11)
    L, R = 5, 3
    ctx = PixelContext(
        y=np.full(L, 5.0),  # huge residual
        M=rng.uniform(0.2, 0.8, size=(L, R)),
        Sigma=np.full((R, L), 1e-4),
        psi2=0.0,
        c=np.ones(R),
        t=rng.uniform(0.3, 0.7, size=R - 1),
    )
    _, grad = potential_psi(1e-8, ctx, lam_rate=10.0)
    assert grad < 0  # energy decreases as psi2 grows away from zero


def test_c_symmetric_single_pixel():
    ak = np.full((2, 1), 0.5)
    p, _ = potential_c(np.array([1.3, 2.1]), ak, alpha=0.0, gamma=0.0)
    expected = (
        -math.lgamma(3.4)
        + math.lgamma(1.3)
        + math.lgamma(2.1)
        + (1.3 + 2.1 - 2.0) * math.log(2.0)
    )
    assert p == pytest.approx(expected, rel=1e-12)
    # symmetry: the minimizer has equal components
    grid = np.linspace(0.2, 8.0, 60)
    best = min(
        ((c1, c2) for c1 in grid for c2 in grid),
        key=lambda cc: potential_c(np.array(cc), ak, 0.0, 0.0)[0],
    )
    assert best[0] == best[1]


def test_c_gradient_at_ones():
    rng = np.random.default_rng(12)
    R, nk, alpha, gamma = 3, 5, 0.2, 0.4
    ak = rng.dirichlet(np.ones(R), size=nk).T
    _, grad = potential_c(np.ones(R), ak, alpha, gamma)
    expected = (gamma + 1.0) * nk * (digamma(1.0) - digamma(R)) + np.sum(
        alpha - np.log(ak), axis=1
    )
    np.testing.assert_allclose(grad, expected, rtol=1e-12)


def test_c_rejects_empty_class_and_bad_params():
    with pytest.raises(ValueError):
        potential_c(np.array([1.0, 1.0]), np.empty((2, 0)), 0.1, 0.1)
    with pytest.raises(ValueError):
        potential_c(np.array([1.0, -1.0]), np.full((2, 1), 0.5), 0.1, 0.1)


# ---------------------------------------------------------------------------
# batched targets agree with the single-block implementations


def test_batched_t_matches_single():
    rng = np.random.default_rng(13)
    L, R, N, K = 5, 3, 8, 2
    Y = rng.random((L, N))
    M = rng.uniform(0.2, 0.8, size=(L, R))
    Sigma = rng.uniform(0.05, 1.0, size=(R, L))
    Psi = rng.uniform(0.01, 0.3, size=N)
    C = rng.uniform(0.5, 4.0, size=(R, K))
    z = rng.integers(1, K + 1, size=N)
    target = make_t_target(Y, M, Sigma, Psi, C, z)
    T = rng.uniform(0.1, 0.9, size=(R - 1, N))
    u_batch = target.potential(T)
    g_batch = target.gradient(T)
    for n in range(N):
        ctx = PixelContext(y=Y[:, n], M=M, Sigma=Sigma, psi2=Psi[n], c=C[:, z[n] - 1])
        u, g = potential_t(T[:, n], ctx)
        assert u_batch[n] == pytest.approx(u, rel=1e-12)
        np.testing.assert_allclose(g_batch[:, n], g, rtol=1e-11)


def test_batched_m_matches_single():
    rng = np.random.default_rng(14)
    L, R, N = 4, 3, 7
    Y = rng.random((L, N))
    A = rng.dirichlet(np.ones(R), size=N).T
    Sigma = rng.uniform(0.05, 1.0, size=(R, L))
    Psi = rng.uniform(0.01, 0.3, size=N)
    Mtilde = rng.uniform(0.2, 0.8, size=(L, R))
    target = make_m_target(Y, A, Sigma, Psi, Mtilde, 1e-2)
    Q = rng.uniform(0.2, 0.8, size=(R, L))
    v_batch = target.potential(Q)
    g_batch = target.gradient(Q)
    for l in range(L):
        ctx = BandContext(
            y_row=Y[l], A=A, sigma_col=Sigma[:, l], Psi=Psi,
            mtilde_row=Mtilde[l], epsilon2=1e-2,
        )
        v, g = potential_m(Q[:, l], ctx)
        assert v_batch[l] == pytest.approx(v, rel=1e-12)
        np.testing.assert_allclose(g_batch[:, l], g, rtol=1e-11)


def test_batched_sigma_matches_single():
    rng = np.random.default_rng(15)
    L, R, N = 4, 3, 7
    Y = rng.random((L, N))
    A = rng.dirichlet(np.ones(R), size=N).T
    M = rng.uniform(0.2, 0.8, size=(L, R))
    Psi = rng.uniform(0.01, 0.3, size=N)
    target = make_sigma_target(Y, A, M, Psi)
    Q = rng.uniform(0.1, 1.5, size=(R, L))
    w_batch = target.potential(Q)
    g_batch = target.gradient(Q)
    for l in range(L):
        ctx = BandContext(
            y_row=Y[l], A=A, sigma_col=Q[:, l], Psi=Psi,
            mtilde_row=M[l], epsilon2=1.0, m_row=M[l],
        )
        w, g = potential_sigma(Q[:, l], ctx)
        assert w_batch[l] == pytest.approx(w, rel=1e-12)
        np.testing.assert_allclose(g_batch[:, l], g, rtol=1e-11)


def test_batched_psi_matches_single():
    rng = np.random.default_rng(16)
    L, R, N = 4, 3, 7
    Y = rng.random((L, N))
    T = rng.uniform(0.1, 0.9, size=(R - 1, N))
    A = stick_to_abundance(T)
    M = rng.uniform(0.2, 0.8, size=(L, R))
    Sigma = rng.uniform(0.05, 1.0, size=(R, L))
    lam_rate = 3.0
    target = make_psi_target(Y, A, M, Sigma, lam_rate)
    Q = rng.uniform(0.01, 0.5, size=(1, N))
    h_batch = target.potential(Q)
    g_batch = target.gradient(Q)
    for n in range(N):
        ctx = PixelContext(
            y=Y[:, n], M=M, Sigma=Sigma, psi2=0.0, c=np.ones(R), t=T[:, n]
        )
        h, g = potential_psi(float(Q[0, n]), ctx, lam_rate)
        assert h_batch[n] == pytest.approx(h, rel=1e-12)
        assert g_batch[0, n] == pytest.approx(g, rel=1e-11)


def test_batched_c_matches_single_and_handles_empty():
    rng = np.random.default_rng(17)
    R, N, K = 3, 9, 3
    A = rng.dirichlet(np.ones(R), size=N).T
    z = np.array([1, 1, 1, 2, 2, 2, 2, 2, 2])  # class 3 empty
    target = make_c_target(A, z, K, alpha=0.3, gamma=0.7)
    Q = rng.uniform(0.5, 4.0, size=(R, K))
    p_batch = target.potential(Q)
    g_batch = target.gradient(Q)
    for k in range(2):
        ak = A[:, z == k + 1]
        p, g = potential_c(Q[:, k], ak, 0.3, 0.7)
        assert p_batch[k] == pytest.approx(p, rel=1e-12)
        np.testing.assert_allclose(g_batch[:, k], g, rtol=1e-11)
    # empty class: hyperprior potential, finite values and gradients
    assert np.isfinite(p_batch[2])
    fd = central_diff(
        lambda x: target.potential(np.column_stack([Q[:, 0], Q[:, 1], x]))[2], Q[:, 2]
    )
    np.testing.assert_allclose(g_batch[:, 2], fd, rtol=1e-5)


# ---------------------------------------------------------------------------
# grid consistency: exp(-potential) equals the conditional density built
# from independently tested likelihood/prior evaluators


def _normalized(v):
    v = np.asarray(v, dtype=float)
    v = np.exp(v - v.max())
    return v / v.sum()


def test_grid_consistency_t():
    rng = np.random.default_rng(18)
    L, R = 3, 2
    ctx = _pixel_ctx(rng, R=R, L=L)
    grid = np.linspace(0.01, 0.99, 400)
    pot = np.array([-potential_t(np.array([t]), ctx)[0] for t in grid])
    direct = np.array(
        [
            log_likelihood_pixel(
                ctx.y, stick_to_abundance(np.array([t])), ctx.M, ctx.Sigma, ctx.psi2
            )
            + log_prior_t(np.array([t]), ctx.c)
            for t in grid
        ]
    )
    assert np.max(np.abs(_normalized(pot) - _normalized(direct))) < 1e-8


def test_grid_consistency_m():
    rng = np.random.default_rng(19)
    R, N = 2, 3
    ctx = _band_ctx(rng, R=R, N=N)
    omega = ctx.sigma_col @ (ctx.A * ctx.A) + ctx.Psi
    xs = np.linspace(0.05, 0.95, 60)
    pot, direct = [], []
    for m1 in xs:
        for m2 in xs:
            m = np.array([m1, m2])
            pot.append(-potential_m(m, ctx)[0])
            mean = m @ ctx.A
            ll = sum(
                norm.logpdf(ctx.y_row[n], loc=mean[n], scale=np.sqrt(omega[n]))
                for n in range(N)
            )
            direct.append(ll + log_prior_m_col(m, ctx.mtilde_row, ctx.epsilon2))
    assert np.max(np.abs(_normalized(pot) - _normalized(direct))) < 1e-8


def test_grid_consistency_sigma():
    rng = np.random.default_rng(20)
    R, N = 2, 3
    ctx = _band_ctx(rng, R=R, N=N)
    xs = np.linspace(0.05, 2.0, 60)
    pot, direct = [], []
    mean = ctx.m_row @ ctx.A
    for s1 in xs:
        for s2 in xs:
            s = np.array([s1, s2])
            pot.append(-potential_sigma(s, ctx)[0])
            omega = s @ (ctx.A * ctx.A) + ctx.Psi
            ll = sum(
                norm.logpdf(ctx.y_row[n], loc=mean[n], scale=np.sqrt(omega[n]))
                for n in range(N)
            )
            direct.append(ll - np.log(s1) - np.log(s2))
    assert np.max(np.abs(_normalized(pot) - _normalized(direct))) < 1e-8


def test_grid_consistency_psi():
    rng = np.random.default_rng(21)
    ctx = _pixel_ctx(rng, R=2, L=3)
    lam_rate = 2.0
    a = stick_to_abundance(ctx.t)
    mean = ctx.M @ a
    base = ctx.Sigma.T @ (a * a)
    grid = np.linspace(0.0, 1.5, 500)
    pot = np.array([-potential_psi(float(p), ctx, lam_rate)[0] for p in grid])
    direct = np.array(
        [
            sum(
                norm.logpdf(ctx.y[l], loc=mean[l], scale=np.sqrt(base[l] + p))
                for l in range(3)
            )
            - lam_rate * p
            for p in grid
        ]
    )
    assert np.max(np.abs(_normalized(pot) - _normalized(direct))) < 1e-8


def test_grid_consistency_c():
    rng = np.random.default_rng(22)
    R, nk, alpha, gamma = 2, 3, 0.3, 0.5
    ak = rng.dirichlet(np.ones(R), size=nk).T
    xs = np.linspace(0.2, 6.0, 60)
    pot, direct = [], []
    for c1 in xs:
        for c2 in xs:
            c = np.array([c1, c2])
            pot.append(-potential_c(c, ak, alpha, gamma)[0])
            logf = 0.0
            for n in range(nk):
                logf += (gamma + 1.0) * (
                    math.lgamma(c1 + c2) - math.lgamma(c1) - math.lgamma(c2)
                )
                logf += -alpha * (c1 + c2) + R * alpha
                logf += (c1 - 1.0) * math.log(ak[0, n]) + (c2 - 1.0) * math.log(ak[1, n])
            direct.append(logf)
    assert np.max(np.abs(_normalized(pot) - _normalized(direct))) < 1e-8
