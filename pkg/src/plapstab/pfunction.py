"""The v-substitution, P-function, stress tensor W, and their checks.

For radial v the Jacobian W of the stress field |grad v|^{p-2} grad v is
diagonal in polar coordinates, with radial eigenvalue ``mu_r`` and tangential
eigenvalue ``mu_t`` (multiplicity n-1).
"""
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DegeneratePoint, DomainError, NonPositiveField
from .fields import KappaField, RadialField, power
from .params import Params
from .quadrature import QuadConfig, ball_mean, integrate


@dataclass(frozen=True, eq=False)
class VField:
    v: RadialField
    source: RadialField
    params: Params


def v_of_u(u, params: Params) -> VField:
    """v = u^{-p/(n-p)}."""
    if not u.positive:
        raise NonPositiveField("v substitution needs a positive u")
    return VField(power(u, params.v_exponent), u, params)


def _vd(vf, r, order):
    v = vf.v if isinstance(vf, VField) else vf
    return v.derivs(np.asarray(r, dtype=float), order)


def p_values(vf, params: Params, r):
    """P and its direct radial derivative, vectorized over r > 0."""
    v, v1, v2 = _vd(vf, r, 2)
    n, p, c = params.n, params.p, params.zeroth_coeff
    k = n * (p - 1.0) / p
    a1 = np.abs(v1)
    with np.errstate(all="ignore"):
        P = k * a1 ** p / v + c / v
        dP = k * (p * a1 ** (p - 2.0) * v1 * v2 / v - a1 ** p * v1 / v ** 2) - c * v1 / v ** 2
    return P, dP


def remainder_values(vf, kappa, params: Params, r):
    v = _vd(vf, r, 0)[0]
    return params.zeroth_coeff * (kappa(r) - 1.0) / v


def mu_values(vf, params: Params, r):
    """(mu_r, mu_t) on r > 0."""
    r = np.asarray(r, dtype=float)
    _, v1, v2 = _vd(vf, r, 2)
    p = params.p
    with np.errstate(all="ignore"):
        g = np.abs(v1) ** (p - 2.0)
        return (p - 1.0) * g * v2, g * v1 / r


def _check_radius(r):
    if not r > 0:
        raise DegeneratePoint("P-function quantities are evaluated on r > 0 only")


def p_and_remainder(vf: VField, kappa: KappaField, params: Params, r):
    _check_radius(r)
    P, _ = p_values(vf, params, np.array([r]))
    R = remainder_values(vf, kappa, params, np.array([r]))
    P, R = float(P[0]), float(R[0])
    if not (math.isfinite(P) and math.isfinite(R)):
        raise DegeneratePoint(f"P or R undefined at r={r}")
    return P, R


@dataclass(frozen=True)
class WComponents:
    mu_r: float
    mu_t: float
    tr_w: float
    ring_norm2: float


def w_components(vf: VField, params: Params, r) -> WComponents:
    _check_radius(r)
    v1 = float(_vd(vf, np.array([r]), 1)[1][0])
    if v1 == 0.0:
        raise DegeneratePoint(f"critical point of v at r={r}; W is extended by zero there")
    mr, mt = (float(x[0]) for x in mu_values(vf, params, np.array([r])))
    n = params.n
    return WComponents(mr, mt, mr + (n - 1) * mt, (n - 1) / n * (mr - mt) ** 2)


def trace_identity_residual(vf: VField, kappa: KappaField, params: Params, r):
    """max relative gap between tr W and P + R over radii r > 0."""
    r = np.asarray(r, dtype=float)
    mr, mt = mu_values(vf, params, r)
    tr = mr + (params.n - 1) * mt
    P, _ = p_values(vf, params, r)
    R = remainder_values(vf, kappa, params, r)
    scale = np.maximum(np.abs(tr), np.abs(P) + np.abs(R))
    return float(np.max(np.abs(tr - (P + R)) / scale))


def grad_p_identity(vf: VField, params: Params, r):
    """(direct P', (n/v)(mu_r - P/n) v') at radii r."""
    r = np.asarray(r, dtype=float)
    v, v1 = _vd(vf, r, 1)
    P, dP = p_values(vf, params, r)
    mr, _ = mu_values(vf, params, r)
    return dP, params.n / v * (mr - P / params.n) * v1


# -- the constant c_p and the random matrix inequalities ----------------------

@dataclass(frozen=True)
class CpConstant:
    rho_p: float
    c_p: float


def c_of_rho(rho):
    rho = np.asarray(rho, dtype=float)
    return (1.0 - rho) ** 2 / (1.0 + rho ** 2)


def c_p(p) -> CpConstant:
    if not p > 1:
        raise DomainError("c_p needs p > 1")
    rho = (p - 1.0) ** float(np.sign(2.0 - p))
    return CpConstant(rho, float(c_of_rho(rho)))


@dataclass(frozen=True)
class MatrixCheckReport:
    dim: int
    trials: int
    seed: int
    violations_antisym: int
    violations_trace: int
    max_slack_antisym: float
    max_slack_trace: float
    tol: float

    @property
    def passed(self):
        return self.violations_antisym == 0 and self.violations_trace == 0


def _random_pairs(rng, dim, trials):
    """SPD matrices with log-uniform spectra in [1e-3, 1] and symmetric partners."""
    g = rng.standard_normal((trials, dim, dim))
    q, _ = np.linalg.qr(g)
    lam = 10.0 ** rng.uniform(-3.0, 0.0, (trials, dim))
    P = np.einsum("tij,tj,tkj->tik", q, lam, q)
    P = 0.5 * (P + np.swapaxes(P, 1, 2))
    s = rng.standard_normal((trials, dim, dim))
    S = 0.5 * (s + np.swapaxes(s, 1, 2))
    return P, S, lam.min(axis=1) / lam.max(axis=1)


def matrix_inequality_check(dim, trials, seed, tol=1e-10) -> MatrixCheckReport:
    """Check, for X = P S with P SPD and S symmetric and c = c(lambda_min/lambda_max):
    |X - X^T|^2 <= 2c|X|^2 and tr X^2 - |X|^2 >= -c|X - (tr X/n) Id|^2.
    Slacks are reported relative to |X|^2.
    """
    if trials < 1:
        raise DomainError("trials must be >= 1")
    if not 2 <= dim <= 6:
        raise DomainError("dim must be in 2..6")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(dim)]))
    P, S, rho = _random_pairs(rng, dim, trials)
    X = P @ S
    c = c_of_rho(rho)
    fro2 = np.einsum("tij,tij->t", X, X)
    anti = X - np.swapaxes(X, 1, 2)
    anti2 = np.einsum("tij,tij->t", anti, anti)
    trX = np.trace(X, axis1=1, axis2=2)
    trX2 = np.einsum("tij,tji->t", X, X)
    ring2 = fro2 - trX ** 2 / dim
    s1 = (anti2 - 2.0 * c * fro2) / fro2
    s2 = (-c * ring2 - (trX2 - fro2)) / fro2
    return MatrixCheckReport(dim, trials, int(seed), int(np.sum(s1 > tol)), int(np.sum(s2 > tol)),
                             float(s1.max()), float(s2.max()), tol)


def c_monotone_check(points=100):
    rho = np.linspace(0.0, 1.0, points)
    c = c_of_rho(rho)
    return bool(np.all(np.diff(c) < 0)), rho, c


# -- the differential identity ------------------------------------------------

@dataclass(frozen=True)
class IdentityResidual:
    r: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    residual: np.ndarray

    @property
    def max_residual(self):
        return float(np.max(self.residual))


def _identity_constant(potential_p, n, c0):
    if c0 is not None:
        return c0
    # the identity is linear in this constant; p >= n has no natural value
    return (potential_p / (n - potential_p)) ** (potential_p - 1.0) if potential_p < n else 1.0


def identity_residual(w, potential_p, n, r, h=1e-4, c0=None, min_grad=0.1):
    """Both sides of div(w^{2-n} A grad P) = w^{1-n}{...} for V = |xi|^p/p.

    The left side differentiates the analytic radial flux by one central
    difference; the right side is assembled from Cartesian tensors at
    x = r e_1.
    """
    p = float(potential_p)
    c = _identity_constant(p, n, c0)
    r = np.atleast_1d(np.asarray(r, dtype=float))
    d = w.derivs(r, 3)
    if np.any(d[0] <= 0):
        raise NonPositiveField("identity check needs w > 0")
    if np.any(np.abs(d[1]) < min_grad):
        raise DegeneratePoint(f"|grad w| below {min_grad} at some requested radius")

    def flux(rr):
        w0, w1, w2 = w.derivs(rr, 2)
        a1 = np.abs(w1)
        P1 = n * (p - 1.0) * (a1 ** (p - 2.0) * w1 * w2 / w0 - a1 ** p / p * w1 / w0 ** 2) \
            - c * w1 / w0 ** 2
        return rr ** (n - 1) * w0 ** (2.0 - n) * (p - 1.0) * a1 ** (p - 2.0) * P1

    lhs = (flux(r + h) - flux(r - h)) / (2.0 * h) / r ** (n - 1)
    rhs = np.empty_like(r)
    scale = np.empty_like(r)
    for i in range(r.size):
        rhs[i], scale[i] = _identity_rhs([x[i] for x in d], r[i], p, n, c)
    res = np.abs(lhs - rhs) / np.maximum(scale, np.abs(lhs))
    return IdentityResidual(r, lhs, rhs, res)


def _identity_rhs(d, r, p, n, c):
    w0, w1, w2, w3 = d
    e = np.zeros(n)
    e[0] = 1.0
    I = np.eye(n)
    xi = w1 * e
    m = abs(w1)
    # V = |xi|^p / p and its derivatives
    V = m ** p / p
    a = m ** (p - 2.0) * xi
    A = m ** (p - 2.0) * I + (p - 2.0) * m ** (p - 4.0) * np.outer(xi, xi)
    T = (p - 2.0) * m ** (p - 4.0) * (np.einsum("k,ij->ijk", xi, I) + np.einsum("i,jk->ijk", xi, I)
                                      + np.einsum("j,ik->ijk", xi, I)) \
        + (p - 2.0) * (p - 4.0) * m ** (p - 6.0) * np.einsum("i,j,k->ijk", xi, xi, xi)
    # Hessian and third derivatives of the radial w at r e_1
    Ar, Br = w2 - w1 / r, w1 / r
    dAr, dBr = w3 - w2 / r + w1 / r ** 2, w2 / r - w1 / r ** 2
    H = Ar * np.outer(e, e) + Br * I
    D3 = dAr * np.einsum("i,j,k->ijk", e, e, e) + dBr * np.einsum("k,ij->ijk", e, I) \
        + Ar / r * (np.einsum("ik,j->ijk", I - np.outer(e, e), e)
                    + np.einsum("i,jk->ijk", e, I - np.outer(e, e)))
    Wm = A @ H
    trW = np.trace(Wm)
    trW2 = np.trace(Wm @ Wm)
    P = n * (p - 1.0) * V / w0 + c / w0
    gradP = n * (p - 1.0) * (H @ a) / w0 - P * xi / w0
    # d_j tr W = d_j (A_ik w_ki) = T_ikl w_lj w_ki + A_ik w_kij
    grad_trW = np.einsum("ikl,lj,ki->j", T, H, H) + np.einsum("ik,kij->j", A, D3)
    terms = [
        -n * xi @ (A @ gradP),
        -P * trW,
        n * (p - 1.0) * trW2,
        n * (p - 1.0) * grad_trW @ a,
        -P * np.einsum("j,ijk,ki->", xi, T, H),
    ]
    pref = w0 ** (1.0 - n)
    return pref * math.fsum(terms), pref * sum(abs(t) for t in terms)


# -- weighted integral diagnostics --------------------------------------------

@dataclass(frozen=True)
class WeightedDiagnostics:
    t_exp: float
    r_ball: float
    t_ball: float
    p_bar: float
    deficit: float
    ring_weighted: float  # int v^{1-n} |W_ring|^2 P^t
    grad_p_weighted: float  # int v^{2-n} |v'|^{p-2} P^{t-1} |P'|^2
    ring_plain: float  # int v^{-n} |W_ring|^2
    ball_q1: float  # int_{B_r} v^{-n} |W - (Pbar/n) Id|
    ball_q2: float
    ratios: dict = field(default_factory=dict)


def weighted_diagnostics(u, kappa, params: Params, quad: QuadConfig = QuadConfig(),
                         t_exp=1.0, r_ball=1.0, t_ball=1.0, deficit=None):
    from .deficit import deficit_cfm

    if t_exp < 1:
        raise DomainError("t_exp must be >= 1")
    if not r_ball > 0:
        raise DomainError("r_ball must be positive")
    vf = v_of_u(u, params)
    n, p = params.n, params.p
    brk = tuple(u.breakpoints())
    dec = params.beta * (n - 1)

    def ring(r):
        mr, mt = mu_values(vf, params, r)
        return (n - 1) / n * (mr - mt) ** 2

    def f1(r):
        v = _vd(vf, r, 0)[0]
        P, _ = p_values(vf, params, r)
        return v ** (1.0 - n) * ring(r) * P ** t_exp

    def f2(r):
        v, v1 = _vd(vf, r, 1)
        P, dP = p_values(vf, params, r)
        with np.errstate(all="ignore"):
            return v ** (2.0 - n) * np.abs(v1) ** (p - 2.0) * P ** (t_exp - 1.0) * dP ** 2

    def f3(r):
        return _vd(vf, r, 0)[0] ** (-float(n)) * ring(r)

    Pfun = lambda r: p_values(vf, params, r)[0]
    p_bar = ball_mean(Pfun, t_ball, params, quad, breakpoints=brk)

    def dev(r):
        mr, mt = mu_values(vf, params, r)
        mu = p_bar / n
        return np.sqrt((mr - mu) ** 2 + (n - 1) * (mt - mu) ** 2)

    def ball(q):
        g = lambda r: _vd(vf, r, 0)[0] ** (-float(n)) * dev(r) ** q
        return integrate(g, params, quad, b=r_ball, breakpoints=brk).value

    I1 = integrate(f1, params, quad, breakpoints=brk, decay=dec).value
    I2 = integrate(f2, params, quad, breakpoints=brk, decay=dec).value
    I0 = integrate(f3, params, quad, breakpoints=brk, decay=params.beta * n).value
    B1, B2 = ball(1.0), ball(2.0)
    if deficit is None:
        deficit = deficit_cfm(u, kappa, params, quad)
    ratios = {}
    if deficit > 0:
        ratios = {"ring_weighted": I1 / deficit, "grad_p_weighted": I2 / deficit,
                  "ring_plain": I0 / deficit, "ball_q1": B1 / deficit ** 0.5,
                  "ball_q2": B2 / deficit}
    return WeightedDiagnostics(t_exp, r_ball, t_ball, p_bar, deficit, I1, I2, I0, B1, B2, ratios)
