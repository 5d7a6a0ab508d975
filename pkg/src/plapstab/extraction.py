"""Constructive bubble recovery: peak, ball mean of P, paraboloids, bubble, errors."""
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .bubble import Bubble, bubble_field, sobolev_level
from .deficit import deficit_cfm, energy_window, kappa0_pair
from .errors import DomainError, ExtractionError, ScheduleError
from .fields import Paraboloid
from .params import Params
from .pfunction import p_values, v_of_u
from .quadrature import QuadConfig, ball_mean, integrate, norms

log = logging.getLogger(__name__)

T_MIN, T_MAX = 1e-3, 1.0
ENVELOPE_GRID = np.logspace(-2, 3, 301)


@dataclass(frozen=True)
class Schedule:
    t: float
    tau: float
    r_big: float
    m_exp: float
    q: float
    frak_p: float
    alpha: float
    r_big_raw: float = math.nan
    r_big_clamped: bool = False


def schedule(deficit, params: Params, alpha=0.5, r_floor=2.0, r_max=1e3) -> Schedule:
    """Default schedule: t = tau = d^{1/(8(n-1))}, r_big = d^{-m}, clamped to [r_floor, r_max]."""
    if not 0 < deficit < 1:
        raise ScheduleError(f"schedule needs 0 < deficit < 1, got {deficit!r}")
    if not 0 < alpha < 1:
        raise DomainError("alpha must lie in (0, 1)")
    n, p = params.n, params.p
    q = min(p, p / (p - 1.0))
    pos = max(2.0 - p, 0.0)
    frak = 2 * n * q + p / (p - 1.0) * (2 * n + pos)
    m = q / (4.0 * frak)
    if pos > 0:
        m = min(m, alpha * q * (p - 1.0) ** 2 / (16.0 * (n - 1) * p * pos))
    t = deficit ** (1.0 / (8.0 * (n - 1)))
    raw = deficit ** (-m)
    rb = min(max(raw, r_floor), r_max)
    return Schedule(t, t, rb, m, q, frak, alpha, raw, rb != raw)


def locate_peak(u, r_max=1e3, samples=400):
    """0 for radially nonincreasing u, else a golden-section refined argmax."""
    r = np.concatenate([[0.0], np.geomspace(1e-4, r_max, samples)])
    y = u.derivs(r, 0)[0]
    if not np.all(np.isfinite(y)):
        raise DomainError("field is not finite on the sampling grid")
    top = np.max(np.abs(y))
    if not top > 0 or abs(y[-1]) > 0.5 * top or (abs(y[-1]) > 1e-12 * top and y[-1] >= y[-2]):
        raise DomainError("non-decaying field")
    if np.all(np.diff(y) <= 1e-14 * top):
        return 0.0
    i = int(np.argmax(y))
    lo, hi = r[max(i - 1, 0)], r[min(i + 1, len(r) - 1)]
    g = (math.sqrt(5.0) - 1.0) / 2.0
    c, d = hi - g * (hi - lo), lo + g * (hi - lo)
    fc, fd = u(c), u(d)
    while hi - lo > 1e-12 * max(1.0, hi):
        if fc > fd:
            hi, d, fd = d, c, fc
            c = hi - g * (hi - lo)
            fc = u(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + g * (hi - lo)
            fd = u(d)
    return 0.5 * (lo + hi)


def bubble_scale_from_p(p_bar, params: Params):
    """Scale of the bubble whose P-function equals p_bar."""
    n, p = params.n, params.p
    return (1.0 / p_bar) * (p / (p - 1.0)) ** (p - 1.0) * n ** (1.0 / p) \
        * ((n - p) / (p - 1.0)) ** (-(p - 1.0) ** 2 / p)


def paraboloids(vf, p_bar, params: Params, v_at_x0=None):
    """(Q_field, curly_Q, lam); both paraboloids share the same r^{p/(p-1)} coefficient."""
    if not p_bar > 0:
        raise DomainError("p_bar must be positive")
    n, p, beta = params.n, params.p, params.beta
    v0 = vf.v(0.0) if v_at_x0 is None else v_at_x0
    Qf = Paraboloid(v0, (p - 1.0) / p * (p_bar / n) ** (1.0 / (p - 1.0)), beta)
    lam = bubble_scale_from_p(p_bar, params)
    den = lam ** (1.0 / (p - 1.0)) * params.bubble_const
    curly = Paraboloid(lam ** beta / den, 1.0 / den, beta)
    return Qf, curly, lam


def localization_radius(vf, params: Params, grid=ENVELOPE_GRID):
    """R = ((C0 - c0)/c0)^{(p-1)/p} from envelopes c0 (1+r^beta) <= v <= C0 (1+r^beta)."""
    ratio = vf.v(grid) / (1 + grid ** params.beta)
    c0, C0 = float(np.min(ratio)), float(np.max(ratio))
    return ((C0 - c0) / c0) ** ((params.p - 1.0) / params.p), c0, C0


@dataclass(frozen=True)
class ExtractionConfig:
    alpha: float = 0.5
    t: Optional[float] = None
    r_big: Optional[float] = None
    r_max: float = 1e3
    window_variant: str = "kappa0-scaled"


@dataclass(frozen=True)
class ExtractionReport:
    x0_radius: float
    v_at_x0: float
    p_bar: float
    lam: float
    bubble: Bubble
    err_interior: float
    err_exterior: float
    err_total: float
    deficit: float
    schedule: Schedule
    t_used: float
    kappa0: float
    r_localization: float
    x0_in_ball: bool
    energy_window_ok: bool
    schedule_clamped: bool
    quad_id: str = ""


def _stage(name, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except ExtractionError:
        raise
    except Exception as exc:  # tag and propagate
        raise ExtractionError(name, exc) from exc


def extract(u, kappa, params: Params, quad: QuadConfig = QuadConfig(),
            cfg: ExtractionConfig = ExtractionConfig(), level=None):
    n, p = params.n, params.p
    x0 = _stage("locate_peak", locate_peak, u)
    if x0 != 0.0:
        raise ExtractionError("locate_peak", f"peak at r={x0} is off the origin")
    vf = _stage("v_of_u", v_of_u, u, params)
    k0, _ = _stage("kappa0", kappa0_pair, u, kappa, params, quad)
    d = _stage("deficit", deficit_cfm, u, kappa, params, quad, k0=k0)
    R_loc, _, _ = _stage("envelope", localization_radius, vf, params)
    # the schedule is only defined for 0 < d < 1; clamp into that range and flag it
    d_sched = min(max(d, 1e-300), 0.5)
    sched = _stage("schedule", schedule, d_sched, params, cfg.alpha, R_loc + 2.0, cfg.r_max)
    if cfg.r_big is not None:
        sched = replace(sched, r_big=float(cfg.r_big))
    t = cfg.t if cfg.t is not None else min(max(sched.t, T_MIN), T_MAX)
    brk = tuple(u.breakpoints())
    Pfun = lambda r: p_values(vf, params, r)[0]
    p_bar = _stage("ball_mean", ball_mean, Pfun, t, params, quad, breakpoints=brk)
    v0 = float(vf.v(x0))
    _, curly, lam = _stage("paraboloids", paraboloids, vf, p_bar, params, v0)
    U = bubble_field(Bubble(lam), params)

    diff = u - U
    g = lambda r: np.abs(diff.derivs(r, 1)[1]) ** p
    rb = sched.r_big
    dec = p * (params.grad_decay)
    inner = _stage("error_norms", integrate, g, params, quad, b=rb, breakpoints=brk).value
    outer = _stage("error_norms", integrate, g, params, quad, a=rb, breakpoints=brk,
                   decay=dec).value
    inner, outer = max(inner, 0.0), max(outer, 0.0)

    level = level or _stage("sobolev_level", sobolev_level, params, quad)
    energy = _stage("energy", norms, u, "grad_lp", params, quad, power=True)
    lo, hi = energy_window(params, level.s_pow_n,
                           k0 if cfg.window_variant == "kappa0-scaled" else None)
    window_ok = lo <= energy <= hi
    if not window_ok:
        log.warning("energy %.6g outside window [%.6g, %.6g]; proceeding", energy, lo, hi)
    return ExtractionReport(
        x0_radius=x0, v_at_x0=v0, p_bar=p_bar, lam=lam, bubble=Bubble(lam),
        err_interior=inner ** (1 / p), err_exterior=outer ** (1 / p),
        err_total=(inner + outer) ** (1 / p), deficit=d, schedule=sched, t_used=t,
        kappa0=k0, r_localization=R_loc, x0_in_ball=x0 <= R_loc,
        energy_window_ok=bool(window_ok), schedule_clamped=d_sched != d or sched.r_big_clamped,
        quad_id=quad.ident)
