# tests/test_analytic.py
import math

import pytest

from interacting_urns import analytic
from interacting_urns.exceptions import InvalidParameterError
from tests.conftest import P_GRID


def characteristic(p, root):
    return (1 - p / 2) ** 2 * root ** 2 - root + (p / 2) ** 2


def test_roots_at_the_endpoints():
    assert analytic.lambda_pm(0.0) == (0.0, 1.0)
    radical = math.sqrt(55 / 64)
    lam_minus, lam_plus = analytic.lambda_pm(0.5)
    assert lam_minus == pytest.approx((1 - radical) / (9 / 8), abs=1e-15)
    assert lam_plus == pytest.approx((1 + radical) / (9 / 8), abs=1e-15)


@pytest.mark.parametrize("p", [0.0, *P_GRID, 0.5])
def test_roots_solve_the_characteristic_polynomial(p):
    lam_minus, lam_plus = analytic.lambda_pm(p)
    assert lam_minus <= lam_plus
    assert abs(characteristic(p, lam_minus)) < 1e-12
    assert abs(characteristic(p, lam_plus)) < 1e-12
    if p > 0:
        assert lam_plus > 1


@pytest.mark.parametrize("p", [-0.1, 0.51, 1.0])
def test_roots_reject_p_outside_range(p):
    with pytest.raises(InvalidParameterError):
        analytic.lambda_pm(p)


def test_endpoint_identities():
    assert analytic.C_of(0.0) == pytest.approx(0.5, abs=1e-12)
    assert analytic.C_of(0.5) == pytest.approx(1.0, abs=1e-12)
    assert analytic.A_of(0.0) == pytest.approx(0.0, abs=1e-12)
    assert analytic.A_of(0.5) == pytest.approx(0.0, abs=1e-12)
    assert analytic.q0(0.0) == pytest.approx(0.5, abs=1e-12)
    assert analytic.q0(0.5) == pytest.approx(1.0, abs=1e-12)


def test_closed_form_record():
    form = analytic.closed_form(0.3)
    assert form.q0 == analytic.q0(0.3)
    assert form.C_p + form.A_p == pytest.approx(form.q0)


def test_r_ell_values():
    for p in P_GRID:
        assert analytic.r_ell(p, 0) == pytest.approx((1 + p) / (2 - p))
    assert analytic.r_ell(0.0, 0) == 0.5
    assert analytic.r_ell(0.3, 1) == pytest.approx(0.39 / 1.19, abs=1e-12)
    assert analytic.r_ell(0.3, 1) == pytest.approx(analytic.r1(0.3))
    with pytest.raises(InvalidParameterError):
        analytic.r_ell(0.5, 1)


@pytest.mark.parametrize("p", [0.0, *P_GRID])
def test_q_ell_starts_at_q0_and_splits_the_first_step(p):
    assert analytic.q_ell(p, 0) == pytest.approx(analytic.q0(p), abs=1e-15)
    # the first draws agree with probability 1/2, otherwise the urns sit in C1(1)
    assert analytic.q0(p) == pytest.approx(0.5 + analytic.q_ell(p, 1) / 2, abs=1e-12)


@pytest.mark.parametrize("p", P_GRID)
def test_q_recurrence_residual(p):
    mu = p / (1 - p)
    for ell in range(1, 51):
        residual = (
            analytic.q_ell(p, ell)
            - (p / 2) ** 2 * analytic.q_ell(p, ell - 1)
            - (1 - p / 2) ** 2 * analytic.q_ell(p, ell + 1)
            - p * (1 + p) / 2 * mu ** (ell - 1)
        )
        assert abs(residual) < 1e-10


@pytest.mark.parametrize("p", P_GRID)
def test_r_recurrences(p):
    r = [analytic.r_ell(p, ell) for ell in range(60)]
    assert r[0] == pytest.approx((1 + p) / 2 + (1 - p) / 2 * r[1], abs=1e-12)
    for ell in range(1, 59):
        assert abs(r[ell] - p * r[ell - 1] - (1 - p) * r[ell + 1]) < 1e-12


@pytest.mark.parametrize("p", P_GRID)
def test_probabilities_stay_in_unit_interval(p):
    for ell in range(201):
        assert 0.0 <= analytic.q_ell(p, ell) <= 1.0
        assert 0.0 <= analytic.r_ell(p, ell) <= 1.0


def test_q0_curve_rises_from_half_to_one():
    curve = [analytic.q0(i / 100) for i in range(51)]
    assert curve[0] == pytest.approx(0.5)
    assert curve[-1] == pytest.approx(1.0)
    assert all(a <= b + 1e-15 for a, b in zip(curve, curve[1:]))


def test_q_ell_at_half_is_one():
    assert all(analytic.q_ell(0.5, ell) == 1.0 for ell in range(10))


@pytest.mark.parametrize("p", [0.1, 0.3, 0.45])
@pytest.mark.parametrize("x", [0.0, 0.5, 1.0, 1.7, 2.0])
def test_ode_residual_vanishes(p, x):
    assert abs(analytic.ode_residual(p, x)) < 1e-10


def test_generating_function_values():
    for x in (0.0, 1.0, 5.0):
        assert analytic.f_p_eval(0.0, x) == pytest.approx(0.5)
    for p in P_GRID:
        assert analytic.f_p_eval(p, 0.0) == pytest.approx(analytic.q0(p), abs=1e-15)
        assert analytic.growth_bound_holds(p, [i / 4 for i in range(41)])


def test_nonconformist_law_for_three_urns():
    assert analytic.nonconformist_pmf(3, 0.0) == pytest.approx((0.25, 0.75))
    for p in P_GRID:
        pmf = analytic.nonconformist_pmf(3, p)
        assert pmf[1] == pytest.approx(0.75 * (1 - analytic.r1(p)))
        assert sum(pmf) == pytest.approx(1.0)


@pytest.mark.parametrize("urns", [3, 5, 7, 21])
def test_nonconformist_support_respects_the_bound(urns):
    for p in P_GRID:
        pmf = analytic.nonconformist_pmf(urns, p)
        assert len(pmf) - 1 == (urns - 1) // 2
        assert len(pmf) - 1 < analytic.nonconformist_bound(urns, p)
        assert sum(pmf) == pytest.approx(1.0)


@pytest.mark.parametrize("urns", [2, 4, 1])
def test_nonconformist_law_needs_odd_urns(urns):
    with pytest.raises(InvalidParameterError):
        analytic.nonconformist_pmf(urns, 0.3)


def test_multicolor_fixation():
    for p in [0.0, *P_GRID, 0.5]:
        assert analytic.multicolor_q(2, p) == pytest.approx(analytic.q0(p), abs=1e-12)
    assert analytic.multicolor_q(3, 0.0) == pytest.approx(1 / 3)
    assert analytic.multicolor_q(3, 0.3) < analytic.q0(0.3)


class TestGaltonWatson:
    @pytest.mark.parametrize("p", [0.1, 0.2, 0.3, 0.4])
    def test_total_progeny_is_finite(self, p):
        assert analytic.gw_total_progeny_gf(p, 1.0) == pytest.approx(1.0, abs=1e-12)

    def test_radius(self):
        assert analytic.nu0(0.25) == pytest.approx(4 / 3)

    @pytest.mark.parametrize("p", [0.1, 0.2, 0.3, 0.4, 0.45])
    def test_fixed_point_and_monotonicity(self, p):
        limit = analytic.nu0(p)
        values = []
        for i in range(21):
            nu = limit * (i / 20)
            g = analytic.gw_total_progeny_gf(p, nu)
            assert abs(g - nu * (1 - p) / (1 - p * g)) < 1e-12
            values.append(g)
        assert values == sorted(values)

    def test_fixed_point_near_the_radius(self):
        g = analytic.gw_total_progeny_gf(0.3, 1.15)
        assert abs(g - 1.15 * 0.7 / (1 - 0.3 * g)) < 1e-12

    def test_rejects_nu_past_the_radius(self):
        with pytest.raises(InvalidParameterError):
            analytic.gw_total_progeny_gf(0.3, 1.2)
