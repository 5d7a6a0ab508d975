"""Sharpness experiment: perturbed bubbles, distances, dual bounds, sweeps."""
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np

from .bubble import Bubble, TalentiElement, bubble_field, sobolev_level, talenti_field
from .deficit import deficit_cfm, kappa0_pair, sobolev_deficit
from .errors import DomainError
from .extraction import ENVELOPE_GRID, ExtractionConfig, extract
from .fields import Bump, Talenti, dilate, induced_kappa
from .params import Params
from .pfunction import weighted_diagnostics
from .quadrature import NODES, WK, QuadConfig, integrate, norms

log = logging.getLogger(__name__)


def make_perturbed(params: Params, lam=1.0, epsilon=1e-3, phi_radius=1.0):
    """u = U_p[0,lam] + epsilon * bump and its induced kappa."""
    if not 0 <= epsilon < 1:
        raise DomainError(f"epsilon must lie in [0, 1), got {epsilon!r}")
    U = bubble_field(Bubble(lam), params)
    phi = Bump(phi_radius)
    u = U + epsilon * phi if epsilon > 0 else U
    r = np.linspace(0.0, 1.5 * phi_radius, 33)[1:]
    lhs = np.abs(u.d1(r))
    rhs = np.abs(U.d1(r)) + epsilon * np.abs(phi.d1(r))
    if np.max(np.abs(lhs - rhs) / rhs) > 1e-12:
        raise AssertionError("gradient collinearity |grad u| = |grad U| + eps |grad phi| fails")
    return u, induced_kappa(u, params)


@dataclass(frozen=True)
class EnvelopeFit:
    c0: float
    C0: float
    C1: float
    violations: int
    accepted: bool
    reason: str = ""


def decay_envelope(u, params: Params, grid=ENVELOPE_GRID):
    """Bounds c0 <= u (1 + r^{(n-p)/(p-1)}) <= C0 and |u'| (1 + r^{(n-1)/(p-1)}) <= C1.

    Constants are the extremes on a log grid; violations are counted on an
    interleaved validation grid.
    """
    su, sg = params.u_decay, params.grad_decay

    def ratios(r):
        f, f1 = u.derivs(r, 1)
        return f * (1 + r ** su), np.abs(f1) * (1 + r ** sg)

    a, b = ratios(grid)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        return EnvelopeFit(math.nan, math.nan, math.nan, 0, False, "non-finite samples")
    # a field that does not decay at the bubble rate shows up as growth of the ratio
    tailgrid = grid[grid >= 10.0]
    at = ratios(tailgrid)[0]
    if at[-1] > 10.0 * max(at[0], 1e-300) or np.min(a) <= 0:
        return EnvelopeFit(float(np.min(a)), float(np.max(a)), float(np.max(b)), 0, False,
                           "non-decaying")
    c0, C0, C1 = float(np.min(a)), float(np.max(a)), float(np.max(b))
    mid = np.sqrt(grid[:-1] * grid[1:])
    am, bm = ratios(mid)
    viol = int(np.sum(am < c0 * (1 - 1e-12)) + np.sum(am > C0 * (1 + 1e-12))
               + np.sum(bm > C1 * (1 + 1e-12)))
    return EnvelopeFit(c0, C0, C1, viol, True)



# -- dual-norm lower bound --------------------------------------------------------

def dictionary(params: Params, size, quad: QuadConfig = QuadConfig()):
    """First ``size`` test functions, each with unit gradient L^p norm.

    Alternates bubbles and bumps over the scale sequence 1, 2, 1/2, 4, 1/4, ...
    so a longer dictionary always extends a shorter one.
    """
    out = []
    k = 0
    while len(out) < size:
        s = 2.0 ** ((k + 1) // 2 * (1 if k % 2 else -1)) if k else 1.0
        for label, f in ((f"bubble(lam={s:g})", bubble_field(Bubble(s), params)),
                         (f"bump(R={s:g})", Bump(s))):
            if len(out) < size:
                nrm = norms(f, "grad_lp", params, quad)
                out.append((label, f / nrm))
        k += 1
    return out


def _pairing(u, eta, params, quad):
    p, ps = params.p, params.p_star

    def g(r):
        u0, u1 = u.derivs(r, 1)
        e0, e1 = eta.derivs(r, 1)
        return -np.abs(u1) ** (p - 2.0) * u1 * e1 + u0 ** (ps - 1.0) * e0

    brk = tuple(sorted(set(u.breakpoints()) | set(eta.breakpoints())))
    if eta.support is not None:
        return integrate(g, params, quad, b=eta.support, breakpoints=brk).value
    s = u.decay
    dec = None if s is None else min(ps * s, p * (s + 1.0))
    return integrate(g, params, quad, breakpoints=brk, decay=dec).value


def dual_lower_bound(u, params: Params, quad: QuadConfig = QuadConfig(), dictionary_size=16,
                     detail=False):
    """max over the dictionary of |int -|u'|^{p-2}u' eta' + u^{p*-1} eta dV|."""
    best, label = 0.0, None
    for lab, eta in dictionary(params, dictionary_size, quad):
        val = abs(_pairing(u, eta, params, quad))
        if val > best:
            best, label = val, lab
    return (best, label) if detail else best


# -- projection onto the concentric Talenti slice ---------------------------------

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _golden(f, lo, hi, tol=1e-9, maxit=200):
    c, d = hi - GOLDEN * (hi - lo), lo + GOLDEN * (hi - lo)
    fc, fd = f(c), f(d)
    it = 0
    while hi - lo > tol and it < maxit:
        if fc < fd:
            hi, d, fd = d, c, fc
            c = hi - GOLDEN * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + GOLDEN * (hi - lo)
            fd = f(d)
        it += 1
    return (c, fc) if fc < fd else (d, fd)


def _fixed_nodes(params, quad, breaks, per_decade=16):
    edges = {0.0, 1e-6, quad.r_cut}
    edges.update(np.geomspace(1e-6, quad.r_cut, int(per_decade * math.log10(quad.r_cut / 1e-6)) + 1))
    edges.update(b for b in breaks if 0 < b < quad.r_cut)
    e = np.array(sorted(edges))
    lo, hi = e[:-1], e[1:]
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    x = (mid[:, None] + half[:, None] * NODES[None, :]).ravel()
    w = (half[:, None] * WK[None, :]).ravel() * params.sigma * x ** (params.n - 1)
    return x, w


@dataclass
class ProjectionResult:
    distance: float
    best: TalentiElement
    history: list
    converged: bool

    def __iter__(self):
        return iter((self.distance, self.best))


def _half_max_radius(u):
    top = u(0.0)
    lo, hi = 0.0, 1.0
    while u(hi) > 0.5 * top:
        hi *= 2.0
        if hi > 1e12:
            raise DomainError("field does not fall to half its peak")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if u(mid) > 0.5 * top else (lo, mid)
    return 0.5 * (lo + hi)


def projection_distance(u, params: Params, quad: QuadConfig = QuadConfig(), starts=3):
    """Distance in gradient L^p from u to {a (1 + b r^beta)^{-(n-p)/p}}.

    Nested golden sections: log b outside, amplitude inside. The returned value
    is re-integrated adaptively at the best point, so it is a feasible upper
    bound on the true distance.
    """
    p, beta, g = params.p, params.beta, params.gamma
    x, w = _fixed_nodes(params, quad, u.breakpoints())
    du = u.derivs(x, 1)[1]
    history = []

    def shape(logb):
        return Talenti(1.0, math.exp(logb), beta, g).derivs(x, 1)[1]

    def inner(logb):
        t1 = shape(logb)
        a2 = float(np.dot(w, du * t1) / np.dot(w, t1 * t1))
        if p == 2.0:
            a = a2
        else:
            a, _ = _golden(lambda a: float(np.dot(w, np.abs(du - a * t1) ** p)),
                           0.5 * a2, 1.5 * a2, tol=1e-12 * abs(a2))
        J = float(np.dot(w, np.abs(du - a * t1) ** p))
        history.append(min(J, history[-1]) if history else J)
        return J, a

    r_h = _half_max_radius(u)
    guess = math.log((2.0 ** (1.0 / g) - 1.0) / r_h ** beta)
    best = None
    converged = True
    for k in range(starts):
        s = guess + (k - (starts - 1) / 2.0)
        lb, J = _golden(lambda lb: inner(lb)[0], s - 1.0, s + 1.0, tol=1e-10)
        if abs(lb - (s - 1.0)) < 1e-6 or abs(lb - (s + 1.0)) < 1e-6:
            converged = False
        if best is None or J < best[1]:
            best = (lb, J)
    lb = best[0]
    a = inner(lb)[1]
    # the global best must lie inside some start's bracket
    converged = converged or any(abs(lb - (guess + k - (starts - 1) / 2.0)) < 1.0 - 1e-6
                                 for k in range(starts))
    elem = TalentiElement(a, math.exp(lb))
    diff = u - talenti_field(elem, params)
    dist = norms(diff, "grad_lp", params, quad)
    if not converged:
        log.warning("projection optimizer stalled at a bracket edge; best-so-far reported")
    return ProjectionResult(dist, elem, history, converged)


# -- sweep ---------------------------------------------------------------------

@dataclass(frozen=True)
class SweepConfig:
    params: Params
    epsilon_grid: tuple = (1e-2, 3e-3, 1e-3, 3e-4, 1e-4)
    phi_radius: float = 1.0
    lam: float = 1.0
    quad: QuadConfig = QuadConfig()
    extraction: ExtractionConfig = ExtractionConfig()
    seed: int = 0
    dictionary_size: int = 16
    workers: int = 1

    def __post_init__(self):
        e = list(self.epsilon_grid)
        if not e or any(x >= 1 or x <= 0 for x in e):
            raise DomainError("epsilon grid must lie in (0, 1)")
        if any(b >= a for a, b in zip(e, e[1:])):
            raise DomainError("epsilon grid must be strictly decreasing")


@dataclass
class SweepRecord:
    epsilon: float
    lhs_norm: float = math.nan
    deficit_cfm: float = math.nan
    sobolev_deficit: float = math.nan
    projection_distance: float = math.nan
    extraction_error: float = math.nan
    dual_lower_bound: float = math.nan
    lambda_hat: float = math.nan
    err_interior: float = math.nan
    err_exterior: float = math.nan
    kappa0: float = math.nan
    dual_ceiling: float = math.nan
    gradient_norm: float = math.nan
    lhs_direct: float = math.nan
    weighted_ratios: dict = field(default_factory=dict)
    weighted_values: dict = field(default_factory=dict)
    error: Optional[str] = None


TABLE_COLUMNS = ("epsilon", "lhs_norm", "deficit_cfm", "sobolev_deficit", "projection_distance",
                 "extraction_error", "dual_lower_bound", "lambda_hat", "err_interior",
                 "err_exterior")


def _one_record(args):
    cfg, eps, phi_norm, level = args
    P, quad = cfg.params, cfg.quad
    rec = SweepRecord(eps)
    try:
        u, kappa = make_perturbed(P, cfg.lam, eps, cfg.phi_radius)
        U = bubble_field(Bubble(cfg.lam), P)
        rec.lhs_norm = eps * phi_norm
        rec.lhs_direct = norms(u - U, "grad_lp", P, quad)
        k0, _ = kappa0_pair(u, kappa, P, quad)
        rec.kappa0 = k0
        rec.deficit_cfm = deficit_cfm(u, kappa, P, quad, k0=k0)
        rec.sobolev_deficit = sobolev_deficit(u, P, quad, level)
        rec.gradient_norm = norms(u, "grad_lp", P, quad)
        rec.projection_distance = projection_distance(u, P, quad).distance
        ex = extract(u, kappa, P, quad, cfg.extraction, level)
        rec.extraction_error = ex.err_total
        rec.lambda_hat = ex.lam
        rec.err_interior, rec.err_exterior = ex.err_interior, ex.err_exterior
        rec.dual_lower_bound = dual_lower_bound(u, P, quad, cfg.dictionary_size)
        # |int (1-kappa) u^{p*-1} eta| <= (d + |k0-1| ||u||_{p*}^{p*-1}) ||eta||_{p*}, ||eta||_{p*} <= 1/S
        mass = norms(u, "lpstar", P, quad)
        rec.dual_ceiling = (rec.deficit_cfm + abs(k0 - 1.0) * mass ** (P.p_star - 1.0)) / level.s
        wd = weighted_diagnostics(u, kappa, P, quad, t_exp=1.0, r_ball=cfg.phi_radius,
                                  t_ball=ex.t_used, deficit=rec.deficit_cfm)
        rec.weighted_ratios = dict(wd.ratios)
        rec.weighted_values = {"ring_weighted": wd.ring_weighted,
                               "grad_p_weighted": wd.grad_p_weighted,
                               "ring_plain": wd.ring_plain, "ball_q1": wd.ball_q1,
                               "ball_q2": wd.ball_q2}
    except Exception as exc:  # recorded, sweep continues
        log.error("sweep record eps=%g failed: %s", eps, exc)
        rec.error = f"{type(exc).__name__}: {exc}"
    return rec


def fit_slope(eps, y, rms_floor=1e-9):
    """Log-log least-squares slope; drops the largest eps if it is a 3x-RMS outlier.

    The outlier test is leave-one-out: the largest eps is compared against the
    fit through the others, since a point's residual in a fit that includes it
    can never exceed sqrt(points) times the RMS.
    """
    eps, y = np.asarray(eps, float), np.asarray(y, float)
    ok = np.isfinite(y) & (y > 0)
    x, z = np.log(eps[ok]), np.log(y[ok])
    if x.size < 2:
        return {"slope": math.nan, "intercept": math.nan, "dropped": None, "points": int(x.size)}
    A = np.vstack([x, np.ones_like(x)]).T
    coef = np.linalg.lstsq(A, z, rcond=None)[0]
    dropped = None
    i = int(np.argmax(x))
    if x.size >= 4:
        keep = np.arange(x.size) != i
        c2 = np.linalg.lstsq(A[keep], z[keep], rcond=None)[0]
        rms = max(math.sqrt(float(np.mean((z[keep] - A[keep] @ c2) ** 2))), rms_floor)
        res = float(z[i] - A[i] @ c2)
        if abs(res) > 3.0 * rms:
            dropped = float(math.exp(x[i]))
            log.info("slope fit: dropped eps=%g (residual %.3g > 3 x RMS %.3g)", dropped, res, rms)
            coef = c2
    return {"slope": float(coef[0]), "intercept": float(coef[1]), "dropped": dropped,
            "points": int(x.size) - (dropped is not None)}


@dataclass
class SweepResult:
    records: list
    slopes: dict
    stability_constant: float
    phi_norm: float
    s: float


SLOPE_KEYS = ("lhs_norm", "deficit_cfm", "extraction_error", "sobolev_deficit",
              "dual_lower_bound", "projection_distance")


def sweep(cfg: SweepConfig) -> SweepResult:
    P, quad = cfg.params, cfg.quad
    level = sobolev_level(P, quad)
    phi_norm = norms(Bump(cfg.phi_radius), "grad_lp", P, quad)
    jobs = [(cfg, float(e), phi_norm, level) for e in cfg.epsilon_grid]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            records = list(pool.map(_one_record, jobs))
    else:
        records = [_one_record(j) for j in jobs]
    eps = [r.epsilon for r in records]
    slopes = {k: fit_slope(eps, [getattr(r, k) for r in records]) for k in SLOPE_KEYS}
    slopes["extraction_error_vs_deficit"] = _slope_xy([r.deficit_cfm for r in records],
                                                      [r.extraction_error for r in records])
    expo = max(2.0, P.p)
    quot = [r.sobolev_deficit / (r.projection_distance / r.gradient_norm) ** expo
          for r in records if r.error is None and r.projection_distance > 0]
    return SweepResult(records, slopes, float(min(quot)) if quot else math.nan, phi_norm, level.s)


def _slope_xy(x, y):
    x, y = np.asarray(x, float), np.asarray(y, float)
    ok = np.isfinite(x) & np.isfinite(y) & (x > 0) & (y > 0)
    if ok.sum() < 2:
        return {"slope": math.nan}
    return {"slope": float(np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)[0])}
