"""Exponents and dimensional constants."""
import math
import numbers
from dataclasses import dataclass, field

from scipy.special import gamma as _gamma

from .errors import DomainError


def surface_measure(n):
    """Area of the unit sphere in R^n."""
    return 2.0 * math.pi ** (n / 2.0) / float(_gamma(n / 2.0))


@dataclass(frozen=True)
class Params:
    n: int
    p: float
    p_star: float = field(init=False)
    p_conj: float = field(init=False)
    p_star_conj: float = field(init=False)

    def __post_init__(self):
        n, p = self.n, self.p
        if not isinstance(n, numbers.Integral) or isinstance(n, bool) or n < 2:
            raise DomainError(f"dimension must be an integer >= 2, got {n!r}")
        if not (1.0 < p < n):
            raise DomainError(f"exponent must satisfy 1 < p < n, got p={p!r}, n={n}")
        ps = n * p / (n - p)
        object.__setattr__(self, "n", int(n))
        object.__setattr__(self, "p", float(p))
        object.__setattr__(self, "p_star", ps)
        object.__setattr__(self, "p_conj", p / (p - 1.0))
        object.__setattr__(self, "p_star_conj", ps / (ps - 1.0))

    @property
    def beta(self):
        """Exponent p/(p-1) of the paraboloid profile."""
        return self.p_conj

    @property
    def gamma(self):
        """Exponent (n-p)/p of the bubble profile."""
        return (self.n - self.p) / self.p

    @property
    def u_decay(self):
        """Decay rate (n-p)/(p-1) of finite-energy solutions."""
        return (self.n - self.p) / (self.p - 1.0)

    @property
    def grad_decay(self):
        """Decay rate (n-1)/(p-1) of their gradients."""
        return (self.n - 1.0) / (self.p - 1.0)

    @property
    def bubble_const(self):
        """n^{1/p} ((n-p)/(p-1))^{(p-1)/p}."""
        n, p = self.n, self.p
        return n ** (1.0 / p) * ((n - p) / (p - 1.0)) ** ((p - 1.0) / p)

    @property
    def v_exponent(self):
        """Exponent -p/(n-p) taking u to v."""
        return -self.p / (self.n - self.p)

    @property
    def zeroth_coeff(self):
        """(p/(n-p))^{p-1}, the constant term coefficient in P."""
        return (self.p / (self.n - self.p)) ** (self.p - 1.0)

    @property
    def sigma(self):
        return surface_measure(self.n)


def make_params(n, p):
    if isinstance(n, float) and n.is_integer():
        n = int(n)
    return Params(n, float(p))
