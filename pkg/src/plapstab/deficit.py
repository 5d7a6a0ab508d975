"""Deficit functionals and the kappa_0 normalization."""
import logging
from dataclasses import dataclass, field

import numpy as np

from .bubble import sobolev_level
from .errors import DomainError
from .fields import KappaField, scale
from .params import Params
from .quadrature import QuadConfig, integrate, norms

log = logging.getLogger(__name__)

# relative mismatch between the two kappa_0 quotients above which we warn
QUOTIENT_WARN = 1e-6


def _brk(u, kappa):
    return tuple(sorted(set(u.breakpoints()) | set(kappa.breakpoints())))


def kappa0_pair(u, kappa: KappaField, params: Params, quad: QuadConfig):
    """(int kappa u^{p*} / int u^{p*}, int |grad u|^p / int u^{p*})."""
    ps = params.p_star
    dec = None if u.decay is None else ps * u.decay
    mass = norms(u, "lpstar", params, quad, power=True)
    if not mass > 0:
        raise DomainError("zero denominator: u vanishes identically")
    weighted = integrate(lambda r: kappa(r) * u.derivs(r, 0)[0] ** ps, params, quad,
                         breakpoints=_brk(u, kappa), decay=dec).value
    energy = norms(u, "grad_lp", params, quad, power=True)
    return weighted / mass, energy / mass


def kappa0(u, kappa: KappaField, params: Params, quad: QuadConfig = QuadConfig()):
    k_w, k_e = kappa0_pair(u, kappa, params, quad)
    if abs(k_w - k_e) > QUOTIENT_WARN * abs(k_w):
        log.warning("kappa0 quotients disagree: %r vs %r", k_w, k_e)
    return k_w


def deficit_cfm(u, kappa: KappaField, params: Params, quad: QuadConfig = QuadConfig(),
                k0=None):
    """|| (kappa - kappa_0) u^{p*-1} ||_{(p*)'}."""
    if k0 is None:
        k0 = kappa0(u, kappa, params, quad)
    q = params.p_star_conj
    ps = params.p_star
    dec = None if u.decay is None else ps * u.decay
    g = lambda r: np.abs(kappa(r) - k0) ** q * u.derivs(r, 0)[0] ** ps
    val = integrate(g, params, quad, breakpoints=_brk(u, kappa), decay=dec).value
    return max(val, 0.0) ** (1.0 / q)


def sobolev_deficit(u, params: Params, quad: QuadConfig = QuadConfig(), level=None):
    """||grad u||_p / ||u||_{p*} - S."""
    level = level or sobolev_level(params, quad)
    g = norms(u, "grad_lp", params, quad)
    m = norms(u, "lpstar", params, quad)
    if not (g > 0 and m > 0):
        raise DomainError("zero norm")
    return g / m - level.s


def normalize(u, kappa: KappaField, params: Params, quad: QuadConfig = QuadConfig()):
    """(w, kappa_hat, k0) with w = k0^{1/(p*-p)} u and kappa_hat = kappa/k0."""
    k0 = kappa0(u, kappa, params, quad)
    if not k0 > 0:
        raise DomainError(f"nonpositive kappa0 {k0!r}")
    w = scale(k0 ** (1.0 / (params.p_star - params.p)), u)
    return w, kappa.scaled(1.0 / k0), k0


@dataclass(frozen=True)
class DeficitReport:
    kappa0: float
    kappa0_energy: float
    deficit_cfm: float
    sobolev_deficit: float
    energy: float
    energy_window: tuple
    energy_window_ok: bool
    window_variant: str
    quad_id: str = ""


def energy_window(params: Params, s_pow_n, k0=None):
    """[S^n/2, 3 S^n/2], scaled by k0^{p/(p-p*)} when k0 is given."""
    c = 1.0 if k0 is None else k0 ** (params.p / (params.p - params.p_star))
    return 0.5 * c * s_pow_n, 1.5 * c * s_pow_n


def deficit_report(u, kappa: KappaField, params: Params, quad: QuadConfig = QuadConfig(),
                   variant="kappa0-scaled", level=None):
    if variant not in ("kappa0-scaled", "unscaled"):
        raise DomainError(f"unknown energy window variant {variant!r}")
    level = level or sobolev_level(params, quad)
    k_w, k_e = kappa0_pair(u, kappa, params, quad)
    d = deficit_cfm(u, kappa, params, quad, k0=k_w)
    sd = sobolev_deficit(u, params, quad, level)
    energy = norms(u, "grad_lp", params, quad, power=True)
    lo, hi = energy_window(params, level.s_pow_n, k_w if variant == "kappa0-scaled" else None)
    return DeficitReport(k_w, k_e, d, sd, energy, (lo, hi), bool(lo <= energy <= hi),
                         variant, quad.ident)
