"""The bubble family, Talenti elements, dilations and the Sobolev energy level."""
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, QuadratureError, UnsupportedConfiguration
from .fields import Talenti, dilate
from .params import Params
from .quadrature import QuadConfig, norms

ORIGIN = (0.0,)


def _check_origin(z):
    if z is None:
        return
    if np.any(np.asarray(z, dtype=float) != 0.0):
        raise UnsupportedConfiguration("only concentric (z = 0) fields are supported")


@dataclass(frozen=True)
class Bubble:
    lam: float = 1.0
    center_z: tuple = ORIGIN

    def __post_init__(self):
        if not self.lam > 0:
            raise DomainError("bubble scale must be positive")
        _check_origin(self.center_z)


@dataclass(frozen=True)
class TalentiElement:
    amp_a: float
    b: float
    center_z: tuple = ORIGIN

    def __post_init__(self):
        if self.amp_a == 0 or not self.b > 0:
            raise DomainError("Talenti element needs a != 0 and b > 0")
        _check_origin(self.center_z)


@dataclass(frozen=True)
class SobolevLevel:
    s_pow_n: float
    s: float
    mass: float  # ||U||_{p*}^{p*}, the cross-check
    err_est: float


class BubbleField(Talenti):
    """A Talenti node that remembers which bubble it is."""

    def __init__(self, bubble: Bubble, params: Params):
        e = to_talenti(bubble, params)
        super().__init__(e.amp_a, e.b, params.beta, params.gamma)
        object.__setattr__(self, "bubble", bubble)


def to_talenti(b: Bubble, params: Params) -> TalentiElement:
    """Same function written as a (1 + b r^{p/(p-1)})^{-(n-p)/p}."""
    return TalentiElement((params.bubble_const / b.lam) ** params.gamma,
                          b.lam ** (-params.beta), b.center_z)


def talenti_field(e: TalentiElement, params: Params):
    return Talenti(e.amp_a, e.b, params.beta, params.gamma)


def bubble_field(b: Bubble, params: Params):
    return BubbleField(b, params)


def bubble_eval(b: Bubble, params: Params, r):
    """Value and radial derivative, straight from the closed form."""
    if r < 0:
        raise DomainError("radius must be nonnegative")
    p, beta, g = params.p, params.beta, params.gamma
    lb = b.lam ** beta
    num = b.lam ** (1.0 / (p - 1.0)) * params.bubble_const
    den = lb + r ** beta
    val = (num / den) ** g
    dden = beta * r ** (beta - 1.0)
    return val, -g * val * dden / den


def talenti_eval(e: TalentiElement, params: Params, r):
    if r < 0:
        raise DomainError("radius must be nonnegative")
    return e.amp_a * (1.0 + e.b * r ** params.beta) ** (-params.gamma)


def transform(f, z, lam, params: Params):
    """lam^{(n-p)/p} f(lam (x - z)); z must be the origin."""
    _check_origin(z)
    if not lam > 0:
        raise DomainError("scale must be positive")
    return dilate(f, lam, lam ** params.gamma)


def sobolev_level(params: Params, quad: QuadConfig = QuadConfig(), cross_tol=1e-6):
    """S^n as the Dirichlet energy of U_p[0,1], checked against its L^{p*} mass."""
    u = bubble_field(Bubble(1.0), params)
    grad = norms(u, "grad_lp", params, quad, power=True)
    mass = norms(u, "lpstar", params, quad, power=True)
    if not math.isfinite(grad) or abs(grad - mass) > cross_tol * abs(grad):
        raise QuadratureError("energy and mass of the unit bubble disagree", grad,
                              abs(grad - mass))
    return SobolevLevel(grad, grad ** (1.0 / params.n), mass, abs(grad - mass))
