import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate as sint
from scipy.special import beta as beta_fn

from plapstab import (Bubble, Bump, Constant, DomainError, Paraboloid, QuadConfig,
                      QuadratureError, ball_mean, bubble_field, integrate, make_params, norms,
                      transform)
from plapstab.quadrature import NODES, WG, WK

from conftest import STANDARD


def test_kronrod_rule_exactness():
    # K15 is exact to degree 22 and G7 to degree 13 on [-1, 1]
    for k in range(23):
        exact = 0.0 if k % 2 else 2.0 / (k + 1)
        assert np.dot(WK, NODES ** k) == pytest.approx(exact, abs=1e-14)
    for k in range(14):
        exact = 0.0 if k % 2 else 2.0 / (k + 1)
        assert np.dot(WG, NODES ** k) == pytest.approx(exact, abs=1e-14)


@pytest.mark.parametrize("n", [2, 3, 4, 7])
def test_surface_measure(n):
    P = make_params(n, 1.5)
    assert P.sigma == pytest.approx(2 * math.pi ** (n / 2) / math.gamma(n / 2))
    if n == 4:
        assert P.sigma == pytest.approx(2 * math.pi ** 2)


def test_bump_closed_form(p42, quad):
    # int_0^R (1-r^2/R^2)^4 r^{n-1} dr = R^n B(n/2, 5)/2
    for R in [0.5, 1.0, 3.0]:
        val = integrate(Bump(R), p42, quad, breakpoints=(R,), decay=math.inf).value
        assert val == pytest.approx(p42.sigma * R ** 4 * beta_fn(2.0, 5.0) / 2, rel=1e-12)


def test_scipy_quad_oracle(quad):
    P = make_params(5, 2.5)
    f = bubble_field(Bubble(0.7), P) + 0.2 * Bump(1.5)
    g = lambda r: np.abs(f.derivs(np.atleast_1d(r), 1)[1]) ** P.p
    ours = integrate(g, P, quad, breakpoints=(1.5,), decay=P.p * (f.decay + 1)).value
    ref = P.sigma * sum(sint.quad(lambda r: g(r)[0] * r ** 4, a, b, epsabs=0, epsrel=1e-13,
                                  limit=500)[0] for a, b in [(0, 1.5), (1.5, 50), (50, np.inf)])
    assert ours == pytest.approx(ref, rel=1e-9)


def test_tail_vs_truncation_at_1e3():
    for n, p in STANDARD:
        P = make_params(n, p)
        u = bubble_field(Bubble(), P)
        a = norms(u, "lpstar", P, QuadConfig(r_cut=1e3), power=True)
        b = norms(u, "lpstar", P, QuadConfig(r_cut=1e3, tail_policy="hard-truncate"), power=True)
        assert abs(a - b) / a < 1e-5


@pytest.mark.parametrize("n,p", STANDARD)
def test_err_est_monotone_in_rel_tol(n, p):
    P = make_params(n, p)
    u = bubble_field(Bubble(), P) + 0.01 * Bump()
    g = lambda r: np.abs(u.derivs(r, 1)[1]) ** p
    errs = [integrate(g, P, QuadConfig(rel_tol=t), breakpoints=(1.0,),
                      decay=p * (u.decay + 1)).err_est for t in [1e-3, 1e-6, 1e-9, 1e-12, 1e-14]]
    assert all(b <= a for a, b in zip(errs, errs[1:]))


def test_err_est_is_honest(p42):
    f = lambda r: np.exp(-r) * np.sin(5 * r) ** 2
    res = integrate(f, p42, QuadConfig(rel_tol=1e-6), b=20.0)
    ref = p42.sigma * sint.quad(lambda r: f(r) * r ** 3, 0, 20, epsabs=0, epsrel=1e-13, limit=500)[0]
    assert abs(res.value - ref) <= res.err_est + 1e-15


def test_nonconvergence_reports_partial(p42):
    f = lambda r: np.abs(np.sin(1.0 / np.maximum(r, 1e-300))) / r ** 3.5
    with pytest.raises(QuadratureError) as info:
        integrate(f, p42, QuadConfig(max_subdivisions=50), b=1.0)
    assert math.isfinite(info.value.err_est) or info.value.err_est == math.inf


def test_divergent_tail_rejected(p42, quad):
    with pytest.raises(QuadratureError):
        integrate(Constant(1.0), p42, quad)


@given(c0=st.floats(-3, 3), c1=st.floats(-3, 3), t=st.floats(0.05, 5.0))
def test_ball_mean_paraboloid(c0, c1, t):
    # mean of c0 + c1 r^beta over B_t is c0 + c1 n t^beta/(n + beta)
    P = make_params(4, 3)
    f = Paraboloid(c0, c1, P.beta)
    m = ball_mean(f, t, P, QuadConfig())
    exact = c0 + c1 * P.n * t ** P.beta / (P.n + P.beta)
    assert m == pytest.approx(exact, rel=1e-10, abs=1e-12)


def test_ball_mean_constant(p42, quad):
    for t in [1e-3, 0.5, 10.0]:
        assert ball_mean(Constant(2.5), t, p42, quad) == pytest.approx(2.5, rel=1e-13)
    with pytest.raises(DomainError):
        ball_mean(Constant(1.0), 0.0, p42, quad)


@pytest.mark.parametrize("n,p", STANDARD)
@pytest.mark.parametrize("lam", [0.3, 3.0])
def test_norms_invariant_under_transform(n, p, lam, quad):
    P = make_params(n, p)
    f = bubble_field(Bubble(1.2), P) + 0.1 * Bump(1.0)
    g = transform(f, 0, lam, P)
    for kind in ("grad_lp", "lpstar"):
        assert norms(g, kind, P, quad) == pytest.approx(norms(f, kind, P, quad), rel=1e-6)


def test_lp_norm_and_weighted(p42, quad):
    b = Bump(1.0)
    # ||phi||_2^2 over R^4 = sigma * B(2, 9)/2
    assert norms(b, ("lp", 2.0), p42, quad, power=True) == \
        pytest.approx(p42.sigma * beta_fn(2.0, 9.0) / 2, rel=1e-12)
    w = norms(Constant(2.0), "weighted", p42, quad, w_exp=1.0, target=b, q=2.0)
    assert w == pytest.approx(2 * p42.sigma * beta_fn(2.0, 9.0) / 2, rel=1e-12)
    with pytest.raises(DomainError):
        norms(b, "sup", p42, quad)
