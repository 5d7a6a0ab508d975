import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from plapstab import (Bubble, Bump, Constant, DegeneratePoint, DerivativeUndefined,
                      DomainError, KappaField, NonPositiveField, Paraboloid, Talenti,
                      bubble_field, dilate, eval_derivs, induced_kappa, load_grid, make_params,
                      p_laplacian, power, reciprocal)


def fd_derivs(f, r, h=1e-5):
    """Central differences of the next-lower analytic derivative."""
    d = [f.derivs(np.array([r - h, r + h]), k) for k in range(3)]
    return [(d[k][k][1] - d[k][k][0]) / (2 * h) for k in range(3)]


P42 = make_params(4, 2)

FIELDS = {
    "constant": Constant(1.7),
    "paraboloid": Paraboloid(0.4, 1.3, 1.5),
    "bump": Bump(1.3),
    "talenti": Talenti(2.0, 0.7, 2.0, 1.0),
    "bubble": bubble_field(Bubble(0.8), make_params(4, 3)),
    "sum": Talenti(2.0, 0.7, 2.0, 1.0) + 0.3 * Bump(1.0),
    "scale": -2.5 * Paraboloid(0.4, 1.3, 2.0),
    "power": power(Paraboloid(1.0, 0.5, 2.0), -0.7),
    "reciprocal": reciprocal(Talenti(2.0, 0.7, 1.5, 0.5) + Constant(0.1)),
    "dilate": dilate(Talenti(2.0, 0.7, 2.0, 1.0), 1.9, 0.6),
    "nested": power(Talenti(1.0, 1.0, 2.0, 1.0) + 0.1 * Bump(2.0), 1.5),
}


@pytest.mark.parametrize("name", sorted(FIELDS))
@given(r=st.floats(0.05, 5.0))
def test_analytic_vs_finite_difference(name, r):
    f = FIELDS[name]
    for b in f.breakpoints():
        assume(abs(r - b) > 1e-3)
    exact = f.derivs(np.array([r]), 3)
    approx = fd_derivs(f, r)
    for k in range(3):
        e = exact[k + 1][0]
        scale = max(abs(e), max(abs(x[0]) for x in exact))
        assert abs(approx[k] - e) <= 1e-6 * scale + 1e-9


def test_eval_derivs_scalar_and_undefined():
    f = Paraboloid(1.0, 1.0, 1.5)  # r^{3/2}: second derivative blows up at 0
    assert eval_derivs(f, 0.0, 1) == [1.0, 0.0]
    with pytest.raises(DerivativeUndefined):
        eval_derivs(f, 0.0, 2)
    assert eval_derivs(Paraboloid(1.0, 1.0, 2.0), 0.0, 3) == [1.0, 0.0, 2.0, 0.0]
    with pytest.raises(DomainError):
        eval_derivs(f, 1.0, 4)


def test_bump_profile_and_smoothness():
    b = Bump(2.0)
    r = np.array([0.0, 1.0, 2.0, 3.0])
    np.testing.assert_allclose(b(r), [1.0, (1 - 0.25) ** 4, 0.0, 0.0])
    # C^3 across the support edge
    left = b.derivs(np.array([2.0 - 1e-9]), 3)
    right = b.derivs(np.array([2.0 + 1e-9]), 3)
    for k in range(4):
        assert abs(left[k][0] - right[k][0]) < 1e-6
    assert b.support == 2.0 and b.nonnegative and not b.positive


def test_positivity_flags_propagate():
    U = bubble_field(Bubble(), P42)
    assert U.positive
    assert (U + 0.1 * Bump()).positive
    assert not (U - 0.1 * Bump()).positive
    assert power(U, -0.5).positive
    with pytest.raises(NonPositiveField):
        power(U - 0.1 * Bump(), 0.5)
    with pytest.raises(NonPositiveField):
        reciprocal(Bump())
    # natural powers are allowed on any field
    sq = power(Paraboloid(-1.0, 1.0, 2.0), 2)
    assert sq(0.0) == 1.0 and sq(1.0) == 0.0


def test_support_tracking():
    assert (Bump(1.0) + 2 * Bump(3.0)).support == 3.0
    assert dilate(Bump(1.0), 2.0).support == 0.5
    assert (Bump(1.0) + bubble_field(Bubble(), P42)).support is None


def test_power_canonicalization_keeps_values():
    U = bubble_field(Bubble(0.7), P42)
    v = power(U, -1.0)
    assert isinstance(v, Paraboloid)
    r = np.logspace(-2, 2, 9)
    np.testing.assert_allclose(v(r), 1.0 / U(r), rtol=1e-14)


@pytest.mark.parametrize("n,p", [(4, 2.0), (5, 2.0), (4, 3.0)])
@given(r=st.floats(0.01, 50.0))
def test_p_laplacian_matches_flux_difference(n, p, r):
    P = make_params(n, p)
    f = bubble_field(Bubble(1.1), P) + 0.05 * Bump(2.0)
    assume(abs(r - 2.0) > 1e-3)
    h = 1e-5 * r

    def flux(s):
        d = f.derivs(np.array([s]), 1)[1][0]
        return s ** (n - 1) * abs(d) ** (p - 2) * d

    fd = (flux(r + h) - flux(r - h)) / (2 * h) / r ** (n - 1)
    assert p_laplacian(f, P, r) == pytest.approx(fd, rel=1e-6, abs=1e-9)


def test_p_laplacian_origin_limit():
    U = bubble_field(Bubble(), P42)
    # Delta U(0) = n U''(0) and the bubble equation gives -U(0)^3
    assert p_laplacian(U, P42, 0.0) == pytest.approx(-U(0.0) ** 3, rel=1e-14)
    with pytest.raises(DegeneratePoint):
        p_laplacian(bubble_field(Bubble(), make_params(4, 3)), make_params(4, 3), 0.0)


def test_induced_kappa_of_bubble_is_one():
    for n, p in [(4, 2.0), (4, 3.0), (9, 3.0)]:
        P = make_params(n, p)
        k = induced_kappa(bubble_field(Bubble(1.5), P), P)
        r = np.logspace(-3, 3, 50)
        np.testing.assert_allclose(k(r), 1.0, rtol=1e-8)


def test_induced_kappa_sign_error():
    # a convex positive summand makes -Delta u negative at the center
    u = bubble_field(Bubble(), P42) + 5.0 * Paraboloid(1.0, 1.0, 2.0)
    assert u.positive
    with pytest.raises(DomainError):
        induced_kappa(u, P42)


def test_induced_kappa_needs_positive_field():
    with pytest.raises(NonPositiveField):
        induced_kappa(bubble_field(Bubble(), P42) - Bump(1.0), P42)


def test_kappa_field_scale_and_dilation():
    k = KappaField.from_field(Paraboloid(1.0, 1.0, 2.0))
    kd = k.dilated(2.0).scaled(3.0)
    assert kd(1.5) == pytest.approx(3.0 * (1 + 9.0))
    with pytest.raises(DomainError):
        KappaField.constant(0.0)


def test_grid_import_roundtrip(tmp_path):
    U = bubble_field(Bubble(), P42)
    r = np.linspace(0.0, 10.0, 201)
    path = tmp_path / "u.txt"
    with open(path, "w") as fh:
        fh.write("# radius value\n")
        for a, b in zip(r, U(r)):
            fh.write(f"{float(a)!r} {float(b)!r}\n")
    g = load_grid(path)
    assert g.reduced_precision
    x = np.linspace(0.05, 9.9, 37)
    np.testing.assert_allclose(g(x), U(x), rtol=1e-6)
    np.testing.assert_allclose(g.d1(x), U.d1(x), rtol=1e-4, atol=1e-6)
    assert g.diagnostics["holdout_rel_err"] < 1e-4
    assert g(20.0) == 0.0


def test_grid_import_rejects_bad_files(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("\n".join(f"{x} {x}" for x in [0, 1, 2, 2, 3, 4, 5, 6, 7]))
    with pytest.raises(DomainError):
        load_grid(p)
    p.write_text("0 1 2\n")
    with pytest.raises(DomainError):
        load_grid(p)
