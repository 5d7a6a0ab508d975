"""Radial scalar fields as expression trees with analytic derivatives.

Every node maps an array of radii to ``[f, f', f'', f''']`` (truncated to the
requested order). Combinators propagate derivatives by the chain rule, so no
finite differences are involved anywhere in evaluation.
"""
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import (DegeneratePoint, DerivativeUndefined, DomainError,
                     NonPositiveField)
from .params import Params

MAX_ORDER = 3


def _arr(r):
    return np.asarray(r, dtype=float)


def _power_chain(d, alpha, order):
    """Derivatives of f**alpha from derivatives ``d`` of f (Faa di Bruno)."""
    f = d[0]
    with np.errstate(all="ignore"):
        if float(alpha).is_integer() and alpha >= 0:
            pw = lambda k: f ** (alpha - k) if alpha - k >= 0 else np.zeros_like(f)
        else:
            pw = lambda k: f ** (alpha - k)
        out = [pw(0)]
        if order >= 1:
            out.append(alpha * pw(1) * d[1])
        if order >= 2:
            out.append(alpha * (alpha - 1) * pw(2) * d[1] ** 2 + alpha * pw(1) * d[2])
        if order >= 3:
            out.append(alpha * (alpha - 1) * (alpha - 2) * pw(3) * d[1] ** 3
                       + 3 * alpha * (alpha - 1) * pw(2) * d[1] * d[2]
                       + alpha * pw(1) * d[3])
    return out


def _monomial(r, beta, order):
    """Derivatives of r**beta; a vanishing falling-factorial coefficient gives 0."""
    out = []
    coef = 1.0
    with np.errstate(all="ignore"):
        for k in range(order + 1):
            if coef == 0.0:
                out.append(np.zeros_like(r))
            else:
                out.append(coef * r ** (beta - k))
            coef *= beta - k
    return out


class RadialField:
    """Base node. Subclasses implement ``derivs``."""

    positive = False
    nonnegative = False
    support: Optional[float] = None  # radius beyond which the field vanishes
    decay: Optional[float] = None  # f ~ r^{-decay} at infinity; inf if compact
    reduced_precision = False

    def derivs(self, r, order=0):
        raise NotImplementedError

    def __call__(self, r):
        r = _arr(r)
        v = self.derivs(np.atleast_1d(r), 0)[0]
        return v.reshape(r.shape) if r.ndim else float(v[0])

    def d1(self, r):
        return self.derivs(_arr(r), 1)[1]

    def breakpoints(self):
        return ()

    def __add__(self, other):
        return field_sum(self, as_field(other))

    __radd__ = __add__

    def __sub__(self, other):
        return field_sum(self, scale(-1.0, as_field(other)))

    def __rsub__(self, other):
        return field_sum(as_field(other), scale(-1.0, self))

    def __neg__(self):
        return scale(-1.0, self)

    def __mul__(self, c):
        if isinstance(c, RadialField):
            return NotImplemented
        return scale(float(c), self)

    __rmul__ = __mul__

    def __truediv__(self, c):
        return scale(1.0 / float(c), self)

    def __pow__(self, alpha):
        return power(self, alpha)


def as_field(x):
    return x if isinstance(x, RadialField) else Constant(float(x))


@dataclass(frozen=True, eq=False)
class Constant(RadialField):
    c: float

    @property
    def positive(self):
        return self.c > 0

    @property
    def nonnegative(self):
        return self.c >= 0

    @property
    def support(self):
        return 0.0 if self.c == 0 else None

    @property
    def decay(self):
        return math.inf if self.c == 0 else 0.0

    def derivs(self, r, order=0):
        r = _arr(r)
        return [np.full_like(r, self.c)] + [np.zeros_like(r) for _ in range(order)]


@dataclass(frozen=True, eq=False)
class Paraboloid(RadialField):
    """c0 + c1 r^beta."""
    c0: float
    c1: float
    beta: float

    @property
    def positive(self):
        return self.c0 > 0 and self.c1 >= 0

    @property
    def nonnegative(self):
        return self.c0 >= 0 and self.c1 >= 0

    @property
    def decay(self):
        return -self.beta if self.c1 != 0 else 0.0

    def derivs(self, r, order=0):
        r = _arr(r)
        m = _monomial(r, self.beta, order)
        out = [self.c0 + self.c1 * m[0]]
        out += [self.c1 * mk for mk in m[1:]]
        return out


@dataclass(frozen=True, eq=False)
class Bump(RadialField):
    """(1 - (r/R)^2)^4 on [0, R], zero beyond; C^3 across r = R."""
    radius: float = 1.0

    nonnegative = True

    def __post_init__(self):
        if not self.radius > 0:
            raise DomainError("bump radius must be positive")

    @property
    def support(self):
        return self.radius

    decay = math.inf

    def breakpoints(self):
        return (self.radius,)

    def derivs(self, r, order=0):
        r = _arr(r)
        R2 = self.radius ** 2
        t = [1.0 - r * r / R2, -2.0 * r / R2, np.full_like(r, -2.0 / R2), np.zeros_like(r)]
        out = _power_chain(t[: order + 1], 4, order)
        inside = r < self.radius
        return [np.where(inside, o, 0.0) for o in out]


@dataclass(frozen=True, eq=False)
class Talenti(RadialField):
    """a (1 + b r^beta)^{-expo}."""
    a: float
    b: float
    beta: float
    expo: float

    def __post_init__(self):
        if self.a == 0 or not self.b > 0:
            raise DomainError("Talenti element needs a != 0 and b > 0")

    @property
    def positive(self):
        return self.a > 0

    @property
    def nonnegative(self):
        return self.a > 0

    @property
    def decay(self):
        return self.expo * self.beta

    def derivs(self, r, order=0):
        g = Paraboloid(1.0, self.b, self.beta).derivs(r, order)
        return [self.a * d for d in _power_chain(g, -self.expo, order)]


@dataclass(frozen=True, eq=False)
class Sum(RadialField):
    terms: tuple

    @property
    def nonnegative(self):
        return all(t.nonnegative for t in self.terms)

    @property
    def positive(self):
        return self.nonnegative and any(t.positive for t in self.terms)

    @property
    def support(self):
        s = [t.support for t in self.terms]
        return None if any(x is None for x in s) else max(s)

    @property
    def decay(self):
        d = [t.decay for t in self.terms]
        return None if any(x is None for x in d) else min(d)

    @property
    def reduced_precision(self):
        return any(t.reduced_precision for t in self.terms)

    def breakpoints(self):
        return tuple(sorted(set(b for t in self.terms for b in t.breakpoints())))

    def derivs(self, r, order=0):
        parts = [t.derivs(r, order) for t in self.terms]
        return [sum(p[k] for p in parts) for k in range(order + 1)]


@dataclass(frozen=True, eq=False)
class Scale(RadialField):
    c: float
    f: RadialField

    @property
    def positive(self):
        return self.c > 0 and self.f.positive

    @property
    def nonnegative(self):
        return self.c == 0 or (self.c > 0 and self.f.nonnegative)

    @property
    def support(self):
        return self.f.support

    @property
    def decay(self):
        return self.f.decay

    @property
    def reduced_precision(self):
        return self.f.reduced_precision

    def breakpoints(self):
        return self.f.breakpoints()

    def derivs(self, r, order=0):
        return [self.c * d for d in self.f.derivs(r, order)]


@dataclass(frozen=True, eq=False)
class Power(RadialField):
    f: RadialField
    alpha: float

    @property
    def positive(self):
        return self.f.positive

    @property
    def nonnegative(self):
        return self.f.nonnegative or (float(self.alpha).is_integer() and self.alpha % 2 == 0)

    @property
    def support(self):
        return self.f.support if self.alpha > 0 else None

    @property
    def decay(self):
        d = self.f.decay
        if d is None:
            return None
        if math.isinf(d):
            return d if self.alpha > 0 else None
        return self.alpha * d

    @property
    def reduced_precision(self):
        return self.f.reduced_precision

    def breakpoints(self):
        return self.f.breakpoints()

    def derivs(self, r, order=0):
        return _power_chain(self.f.derivs(r, order), self.alpha, order)


@dataclass(frozen=True, eq=False)
class Dilate(RadialField):
    """amp * f(lam r)."""
    f: RadialField
    lam: float
    amp: float = 1.0

    @property
    def positive(self):
        return self.amp > 0 and self.f.positive

    @property
    def nonnegative(self):
        return self.amp > 0 and self.f.nonnegative

    @property
    def support(self):
        s = self.f.support
        return None if s is None else s / self.lam

    @property
    def decay(self):
        return self.f.decay

    @property
    def reduced_precision(self):
        return self.f.reduced_precision

    def breakpoints(self):
        return tuple(b / self.lam for b in self.f.breakpoints())

    def derivs(self, r, order=0):
        d = self.f.derivs(self.lam * _arr(r), order)
        return [self.amp * self.lam ** k * dk for k, dk in enumerate(d)]


@dataclass(frozen=True, eq=False)
class GridField(RadialField):
    """Quintic interpolating spline through imported samples.

    Beyond the last radius the field is taken as zero; it is always flagged
    reduced precision.
    """
    radii: tuple
    values: tuple
    spline: object = field(repr=False, default=None)
    diagnostics: dict = field(default_factory=dict, compare=False)

    reduced_precision = True

    @property
    def positive(self):
        return min(self.values) > 0

    @property
    def nonnegative(self):
        return min(self.values) >= 0

    @property
    def support(self):
        return self.radii[-1]

    decay = math.inf

    def breakpoints(self):
        return (self.radii[0], self.radii[-1]) if self.radii[0] > 0 else (self.radii[-1],)

    def derivs(self, r, order=0):
        r = _arr(r)
        inside = r <= self.radii[-1]
        rr = np.clip(r, self.radii[0], self.radii[-1])
        out = []
        for k in range(order + 1):
            out.append(np.where(inside, self.spline(rr, nu=k), 0.0))
        return out


# -- constructors with light canonicalization ---------------------------------

def scale(c, f):
    c = float(c)
    if c == 1.0:
        return f
    if isinstance(f, Constant):
        return Constant(c * f.c)
    if isinstance(f, Scale):
        return scale(c * f.c, f.f)
    if isinstance(f, Paraboloid):
        return Paraboloid(c * f.c0, c * f.c1, f.beta)
    return Scale(c, f)


def field_sum(*terms):
    flat = []
    for t in terms:
        flat.extend(t.terms if isinstance(t, Sum) else (t,))
    if len(flat) == 1:
        return flat[0]
    return Sum(tuple(flat))


def power(f, alpha):
    """f**alpha; non-integer or negative exponents need a positive field."""
    alpha = float(alpha)
    if alpha == 1.0:
        return f
    natural = alpha.is_integer() and alpha >= 0
    if not natural and not f.positive:
        raise NonPositiveField(f"power {alpha} of a field not known to be positive")
    if alpha == 0.0:
        return Constant(1.0)
    if isinstance(f, Constant):
        return Constant(f.c ** alpha)
    if f.positive:
        if isinstance(f, Power):
            return power(f.f, f.alpha * alpha)
        if isinstance(f, Scale):
            return scale(f.c ** alpha, power(f.f, alpha))
        if isinstance(f, Talenti):
            base = Paraboloid(1.0, f.b, f.beta)
            return scale(f.a ** alpha, power(base, -f.expo * alpha))
    return Power(f, alpha)


def reciprocal(f):
    return power(f, -1.0)


def dilate(f, lam, amp=1.0):
    """amp * f(lam r), merging nested dilations."""
    if not lam > 0:
        raise DomainError("dilation factor must be positive")
    if isinstance(f, Dilate):
        return dilate(f.f, f.lam * lam, f.amp * amp)
    if lam == 1.0:
        return scale(amp, f)
    return Dilate(f, float(lam), float(amp))


def eval_derivs(f, r, order=0):
    """Scalar derivatives [f(r), ..., f^{(order)}(r)]."""
    if not 0 <= order <= MAX_ORDER:
        raise DomainError("order must be in 0..3")
    if r < 0:
        raise DomainError("radius must be nonnegative")
    d = f.derivs(np.array([float(r)]), order)
    vals = [float(x[0]) for x in d]
    if not all(math.isfinite(v) for v in vals):
        raise DerivativeUndefined(f"derivative of order <= {order} undefined at r={r}")
    return vals


# -- p-Laplacian and induced kappa --------------------------------------------

def p_laplacian_values(f, params: Params, r):
    """Vectorized radial p-Laplacian; r = 0 entries use the limit branch."""
    r = _arr(r)
    p, n = params.p, params.n
    _, f1, f2 = f.derivs(r, 2)
    with np.errstate(all="ignore"):
        g = np.abs(f1) ** (p - 2.0)
        out = (p - 1.0) * g * f2 + (n - 1.0) * g * f1 / r
    zero = r == 0
    if np.any(zero):
        out = np.where(zero, _origin_limit(f, params), out)
    return out


def _origin_limit(f, params):
    f2 = f.derivs(np.array([0.0]), 2)[2][0]
    p = params.p
    if not math.isfinite(f2):
        raise DegeneratePoint("p-Laplacian at r=0: second derivative undefined")
    if p == 2.0:
        return params.n * f2
    if p > 2.0:
        return 0.0
    if f2 == 0.0:
        raise DegeneratePoint("p-Laplacian at r=0 is indeterminate for p<2")
    raise DegeneratePoint("p-Laplacian at r=0 diverges for p<2")


def p_laplacian(f, params: Params, r):
    if r < 0:
        raise DomainError("radius must be nonnegative")
    val = float(p_laplacian_values(f, params, np.array([float(r)]))[0])
    if not math.isfinite(val):
        raise DegeneratePoint(f"p-Laplacian undefined at r={r}")
    return val


SAMPLE_RADII = np.logspace(-3, 3, 121)


@dataclass(frozen=True, eq=False)
class KappaField:
    """A positive coefficient, either a closed-form field or induced by u.

    ``scale`` and ``dilation`` realize kappa -> c * kappa(lam r) without
    touching the underlying expression. Induced values are recomputed on
    every call.
    """
    expr: Optional[RadialField] = None
    source: Optional[RadialField] = None
    params: Optional[Params] = None
    scale: float = 1.0
    dilation: float = 1.0

    def __call__(self, r):
        r = _arr(r)
        x = self.dilation * np.atleast_1d(r)
        if self.expr is not None:
            val = self.expr.derivs(x, 0)[0]
        else:
            u = self.source.derivs(x, 0)[0]
            val = -p_laplacian_values(self.source, self.params, x) / u ** (self.params.p_star - 1.0)
        val = self.scale * val
        return val.reshape(r.shape) if r.ndim else float(val[0])

    @property
    def induced(self):
        return self.source is not None

    def scaled(self, c):
        return KappaField(self.expr, self.source, self.params, self.scale * c, self.dilation)

    def dilated(self, lam):
        return KappaField(self.expr, self.source, self.params, self.scale, self.dilation * lam)

    def breakpoints(self):
        f = self.expr if self.expr is not None else self.source
        return tuple(b / self.dilation for b in f.breakpoints())

    @classmethod
    def constant(cls, c):
        if not c > 0:
            raise DomainError("kappa must be positive")
        return cls(expr=Constant(float(c)))

    @classmethod
    def from_field(cls, f):
        return cls(expr=f)


def induced_kappa(u, params: Params):
    """kappa = -Delta_p u / u^{p*-1}, so that u solves the perturbed equation."""
    if not u.positive:
        raise NonPositiveField("induced kappa needs a positive field")
    k = KappaField(source=u, params=params)
    radii = np.union1d(SAMPLE_RADII, np.asarray(u.breakpoints(), dtype=float))
    vals = k(radii)
    if not np.all(np.isfinite(vals)) or np.any(vals <= 0):
        bad = radii[~(np.isfinite(vals) & (vals > 0))]
        raise DomainError(f"induced kappa is not positive at r={bad[:5].tolist()}")
    return k


# -- grid import ----------------------------------------------------------------

def load_grid(path):
    """Read (radius, value) rows, '#' comments, strictly increasing radii."""
    from scipy.interpolate import make_interp_spline

    rows = []
    with open(path) as fh:
        for line in fh:
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            parts = s.replace(",", " ").split()
            if len(parts) != 2:
                raise DomainError(f"expected two columns, got {s!r}")
            rows.append((float(parts[0]), float(parts[1])))
    if len(rows) < 8:
        raise DomainError("grid import needs at least 8 rows")
    r = np.array([x[0] for x in rows])
    y = np.array([x[1] for x in rows])
    if np.any(r < 0) or np.any(np.diff(r) <= 0):
        raise DomainError("radii must be nonnegative and strictly increasing")
    spl = make_interp_spline(r, y, k=5)
    # held-out diagnostic: refit on even nodes, compare on odd nodes
    half = make_interp_spline(r[::2], y[::2], k=5)
    scale_y = max(np.max(np.abs(y)), 1e-300)
    holdout = float(np.max(np.abs(half(r[1::2]) - y[1::2])) / scale_y)
    diag = {"kind": "quintic interpolating spline", "nodes": len(r),
            "holdout_rel_err": holdout}
    return GridField(tuple(r.tolist()), tuple(y.tolist()), spl, diag)
