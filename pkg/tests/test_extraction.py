import math

import numpy as np
import pytest

from plapstab import (Bubble, Bump, Constant, DomainError, ExtractionConfig, ExtractionError,
                      KappaField, Paraboloid, ScheduleError, bubble_field, extract, locate_peak,
                      make_params, make_perturbed, p_laplacian, paraboloids, power, reciprocal,
                      schedule, v_of_u)
from plapstab.extraction import bubble_scale_from_p, localization_radius
from plapstab.pfunction import p_values

from conftest import STANDARD


def test_schedule_reference_values(p42):
    s = schedule(1e-2, p42)
    assert s.q == 2.0 and s.frak_p == 32.0
    assert s.m_exp == pytest.approx(1.0 / 64.0)
    assert s.t == pytest.approx(0.01 ** (1.0 / 24.0)) and s.t == pytest.approx(0.8254, abs=1e-4)
    assert s.tau == s.t
    assert s.r_big == 2.0 and s.r_big_clamped  # 0.01^{-1/64} < 2 is lifted to the floor


def test_schedule_subquadratic_branch():
    P = make_params(4, 1.5)
    s = schedule(1e-3, P, alpha=0.5)
    q = 1.5
    frak = 2 * 4 * q + 3.0 * (8 + 0.5)
    second = 0.5 * q * 0.25 / (16 * 3 * 1.5 * 0.5)
    assert s.frak_p == pytest.approx(frak)
    assert s.m_exp == pytest.approx(min(q / (4 * frak), second))


@pytest.mark.parametrize("d", [0.0, 1.0, 2.0, -1e-3])
def test_schedule_rejects_out_of_range(d, p42):
    with pytest.raises(ScheduleError):
        schedule(d, p42)


def test_schedule_monotone_in_deficit(p42):
    ts = [schedule(d, p42, r_floor=0.0, r_max=1e300) for d in (1e-1, 1e-4, 1e-8, 1e-16)]
    assert all(b.t < a.t for a, b in zip(ts, ts[1:]))
    assert all(b.r_big > a.r_big for a, b in zip(ts, ts[1:]))


@pytest.mark.parametrize("n,p", STANDARD)
def test_paraboloids_share_gradient(n, p):
    P = make_params(n, p)
    u, _ = make_perturbed(P, 1.0, 0.01)
    vf = v_of_u(u, P)
    Qf, curly, lam = paraboloids(vf, 3.0, P)
    r = np.logspace(-2, 2, 9)
    np.testing.assert_allclose(Qf.d1(r), curly.d1(r), rtol=1e-13)
    gap = Qf(r) - curly(r)
    np.testing.assert_allclose(gap, gap[0], rtol=1e-12, atol=1e-12)
    assert Qf(0.0) == pytest.approx(vf.v(0.0))


@pytest.mark.parametrize("n,p", STANDARD)
@pytest.mark.parametrize("lam", [0.5, 1.0, 2.0])
def test_curly_paraboloid_is_bubble_v(n, p, lam):
    P = make_params(n, p)
    vb = v_of_u(bubble_field(Bubble(lam), P), P)
    p_bar = float(p_values(vb, P, np.array([1.0]))[0][0])
    assert bubble_scale_from_p(p_bar, P) == pytest.approx(lam, rel=1e-12)
    _, curly, lam2 = paraboloids(vb, p_bar, P)
    r = np.logspace(-2, 2, 9)
    np.testing.assert_allclose(curly(r), vb.v(r), rtol=1e-12)
    # the extracted bubble solves the critical equation
    U = bubble_field(Bubble(lam2), P)
    for x in (0.3, 1.0, 4.0):
        assert p_laplacian(U, P, x) == pytest.approx(-U(x) ** (P.p_star - 1), rel=1e-8)


@pytest.mark.parametrize("n,p", [(4, 2.0), (5, 2.0), (4, 3.0)])
@pytest.mark.parametrize("lam", [0.5, 1.0, 2.0])
def test_round_trip_on_bubbles(n, p, lam, quad):
    P = make_params(n, p)
    U = bubble_field(Bubble(lam), P)
    rep = extract(U, KappaField.constant(1.0), P, quad)
    assert rep.lam == pytest.approx(lam, rel=1e-8)
    assert rep.err_total < 1e-7 * (1 + lam ** -1)
    assert rep.x0_radius == 0.0 and rep.x0_in_ball
    assert rep.energy_window_ok
    assert rep.quad_id == quad.ident


def test_perturbed_extraction_is_close(p42, quad):
    u, kappa = make_perturbed(p42, 1.0, 1e-3)
    rep = extract(u, kappa, p42, quad)
    assert abs(rep.lam - 1.0) < 1e-2
    assert 0 < rep.err_total < 1e-2
    assert rep.err_total ** 2 == pytest.approx(rep.err_interior ** 2 + rep.err_exterior ** 2,
                                               rel=1e-12)


def test_exterior_error_decreases_with_radius(p42, quad):
    u, kappa = make_perturbed(p42, 1.0, 1e-2)
    ext = [extract(u, kappa, p42, quad, ExtractionConfig(r_big=rb)).err_exterior
           for rb in (2.0, 5.0, 20.0, 100.0)]
    assert all(b < a for a, b in zip(ext, ext[1:]))


def test_locate_peak_on_ring_field():
    ring = reciprocal(Constant(1.0) + power(Paraboloid(-1.0, 1.0, 2.0), 2))
    assert locate_peak(ring) == pytest.approx(1.0, abs=1e-6)
    assert locate_peak(bubble_field(Bubble(), make_params(4, 2))) == 0.0
    with pytest.raises(DomainError):
        locate_peak(Constant(1.0))


def test_off_center_peak_is_a_tagged_error(p42, quad):
    ring = reciprocal(Constant(1.0) + power(Paraboloid(-1.0, 1.0, 2.0), 2))
    with pytest.raises(ExtractionError) as info:
        extract(ring, KappaField.constant(1.0), p42, quad)
    assert info.value.stage == "locate_peak"


def test_stage_tagging_on_non_positive_field(p42, quad):
    u = bubble_field(Bubble(), p42) - 0.01 * Bump(1.0)
    with pytest.raises(ExtractionError) as info:
        extract(u, KappaField.constant(1.0), p42, quad)
    assert info.value.stage == "v_of_u"


def test_garbage_field_still_reports(p42, quad, caplog):
    # a bubble of the wrong family: the pipeline finishes and flags the energy window
    u = 5.0 * bubble_field(Bubble(0.3), p42) + 0.5 * Bump(3.0)
    rep = extract(u, KappaField.constant(1.0), p42, quad)
    assert math.isfinite(rep.err_total) and rep.err_total > 0.1
    assert not rep.energy_window_ok
    assert "outside window" in caplog.text


def test_localization_radius_of_bubble(p42):
    vb = v_of_u(bubble_field(Bubble(), p42), p42)
    R, c0, C0 = localization_radius(vb, p42)
    assert 0 <= R < 10 and c0 > 0 and C0 >= c0
