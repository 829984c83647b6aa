import mpmath
import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from radwave import ConformalChart, GridSpec, Region, alpha_p, curve_H_and_interval_J, pull_solution, push_solution
from radwave.acceptance import box_omega_residual
from radwave.errors import ConfigurationError, CoverageError, DomainError, OrientationError, SupportViolationError
from radwave.grid import FieldKind, SpacetimeField

powers = st.sampled_from([3.0, 3.5, 4.0, 4.5])


# -- alpha_p ------------------------------------------------------------------


@pytest.mark.parametrize("p, value", [(3, 0.5), (4, 0.29289321881345254), (5, 0.20629947401590026)])
def test_alpha_values(p, value):
    assert alpha_p(p) == pytest.approx(value, rel=1e-14)


def test_alpha_domain():
    with pytest.raises(DomainError):
        alpha_p(2.0)


@given(p=st.floats(2.1, 50))
def test_alpha_range(p):
    a = alpha_p(p)
    assert 0 < a < 1
    if p >= 3:
        assert a <= 0.5


# -- maps ---------------------------------------------------------------------


@pytest.mark.parametrize(
    "p, uv, expected",
    [(3.0, (2, 1), (-0.5, -1.0)), (4.0, (2, 1), (-0.25, -1.0)), (3.0, (1, 1), (-1.0, -1.0))],
)
def test_map_forward_examples(p, uv, expected):
    assert tuple(map(float, ConformalChart(p).map_forward(*uv))) == expected


@pytest.mark.parametrize("p, uv, expected", [(3.0, (-0.5, -1.0), (2.0, 1.0)), (4.0, (-0.0625, -1.0), (4.0, 1.0))])
def test_map_inverse_examples(p, uv, expected):
    got = ConformalChart(p).map_inverse(*uv)
    assert tuple(map(float, got)) == pytest.approx(expected, rel=1e-15)


def test_map_errors():
    ch = ConformalChart(4.0)
    with pytest.raises(DomainError):
        ch.map_forward(0.0, 1.0)
    with pytest.raises(OrientationError) as err:
        ch.map_forward(1.0, 2.0)
    assert err.value.point == (1.0, 2.0)
    with pytest.raises(DomainError):
        ch.map_inverse(0.0, -1.0)
    with pytest.raises(OrientationError):
        ch.map_inverse(-2.0, -1.0)


def test_round_trip_random(rng):
    for p in (3.0, 3.5, 4.0, 4.5):
        ch = ConformalChart(p)
        t = 10 ** rng.uniform(0, 2, 1000)
        r = t * rng.uniform(0, 1, 1000)
        u, v = ch.map_inverse(*ch.map_forward(t + r, t - r))
        np.testing.assert_allclose(u, t + r, rtol=1e-12, atol=0)
        np.testing.assert_allclose(v, t - r, rtol=1e-12, atol=0)


def test_chart_validation():
    with pytest.raises(ConfigurationError):
        ConformalChart(2.0)
    with pytest.raises(ConfigurationError):
        ConformalChart(3.0, diagonal_threshold=0.1)


# -- Omega ----------------------------------------------------------------------


def test_omega_p3_off_axis():
    assert ConformalChart(3.0).omega(2.0, 1.0) == pytest.approx(1 / (1.5**2 - 0.5**2), rel=1e-15)


def test_omega_p4_from_radius_ratio():
    ch = ConformalChart(4.0)
    ut, vt = ch.map_forward(2.0, 1.0)
    r_tilde = 0.5 * (ut - vt)
    assert r_tilde == 0.375
    assert ch.omega(2.0, 1.0) == pytest.approx(r_tilde / 0.5, rel=1e-15)


def test_omega_axis_limit():
    assert ConformalChart(3.0).omega(2.0, 2.0) == pytest.approx(0.25, rel=1e-15)
    assert ConformalChart(4.5).omega_tr(3.0, 0.0) == pytest.approx(2.5 / 3.0**3.5, rel=1e-14)


def _r_tilde_mp(u, v, m):
    with mpmath.workdps(60):
        return float((mpmath.mpf(v) ** -mpmath.mpf(m) - mpmath.mpf(u) ** -mpmath.mpf(m)) / 2)


@given(p=powers, u=st.floats(1.0, 100.0), logs=st.floats(-13, -0.01))
def test_r_omega_identity(p, u, logs):
    v = u * (1 - 10**logs)
    assume(v < u)
    ch = ConformalChart(p)
    exact = _r_tilde_mp(u, v, ch.m)
    assert 0.5 * (u - v) * ch.omega(u, v) == pytest.approx(exact, rel=1e-12)


@given(p=powers, u=st.floats(1.0, 100.0), frac=st.floats(0.0, 1.0))
def test_omega_bound(p, u, frac):
    v = max(u * frac, 1e-3)
    assume(v <= u)
    ch = ConformalChart(p)
    assert 0 < ch.omega(u, v) <= ch.m / (u * v**ch.m) * (1 + 1e-14)


@pytest.mark.parametrize("p", [3.0, 3.5, 4.0, 4.5])
def test_omega_continuous_across_series_switch(p):
    ch = ConformalChart(p)
    u = 3.0
    eps = ch.diagonal_threshold
    below = ch.omega(u, u * (1 - eps * (1 - 1e-9)))
    above = ch.omega(u, u * (1 - eps * (1 + 1e-9)))
    assert below == pytest.approx(above, rel=1e-13)


@pytest.mark.parametrize("p", [3.0, 3.5, 4.0, 4.5])
def test_box_omega_second_order(p):
    ch = ConformalChart(p)
    res = [box_omega_residual(ch, h) for h in (0.1, 0.05, 0.025)]
    for a, b in zip(res, res[1:]):
        assert abs(np.log2(a / b) - 2.0) < 0.3


def test_box_omega_equal_steps_exact():
    # equal steps make the stencil exact for travelling waves
    assert box_omega_residual(ConformalChart(4.0), 0.05, ratio=1.0) < 1e-10


@pytest.mark.parametrize("p", [3.0, 4.0, 4.5])
def test_transformation_law(p):
    """Discrete box(Omega Phi^* f) against (p-2)^2 (uv)^-(p-1) Omega Phi^*(box f)."""
    ch = ConformalChart(p)

    def f(tt, rr):
        return tt**2 + rr**2 + tt**3

    def box_f(tt, rr):
        return 4.0 - 6.0 * tt

    def pulled(fn, t, r):
        ut, vt = ch.map_forward(t + r, t - r)
        return fn(0.5 * (ut + vt), 0.5 * (ut - vt))

    t, r = np.meshgrid(np.linspace(2, 4, 9), np.linspace(0.5, 1.2, 8), indexing="ij")

    def F(a, b):
        return ch.omega_tr(a, b) * pulled(f, a, b)

    rhs = ch.metric_factor(t + r, t - r) * ch.omega_tr(t, r) * pulled(box_f, t, r)
    errs = []
    for h in (0.04, 0.02, 0.01):
        k = 0.5 * h
        box = (-(F(t + k, r) - 2 * F(t, r) + F(t - k, r)) / k**2
               + (F(t, r + h) - 2 * F(t, r) + F(t, r - h)) / h**2
               + (F(t, r + h) - F(t, r - h)) / (r * h))
        errs.append(np.max(np.abs(box - rhs)))
    assert 3.5 < errs[0] / errs[1] < 4.5
    assert 3.5 < errs[1] / errs[2] < 4.5


# -- coefficient ------------------------------------------------------------------


def test_coefficient_p3_is_one(rng):
    ch = ConformalChart(3.0)
    t = -rng.uniform(1e-8, 1, 2000)
    r = -t * rng.uniform(0, 1, 2000)
    assert np.all(ch.coefficient_tr(t, r) == 1.0)
    assert np.all(ch.coefficient_tr(t, r, extend=True) == 1.0)


def test_coefficient_p4_off_axis():
    assert ConformalChart(4.0).conformal_coefficient(-0.25, -1.0) == pytest.approx(0.84375, rel=1e-14)


def test_coefficient_p4_oracle_from_preimage():
    ch = ConformalChart(4.0)
    u, v = 2.0, 1.0
    expected = (ch.omega(u, v) * u * v) ** 3 / 4
    assert ch.conformal_coefficient(*ch.map_forward(u, v)) == pytest.approx(expected, rel=1e-14)


def test_coefficient_p4_diagonal():
    ch = ConformalChart(4.0)
    assert ch.conformal_coefficient(-1.0, -1.0) == pytest.approx(2.0, rel=1e-15)
    for d in (1e-3, 1e-5, 1e-7):
        assert ch.conformal_coefficient(-1.0 + d / 2, -1.0 - d / 2) == pytest.approx(2.0, rel=5 * d)


@given(p=powers, a=st.floats(1e-3, 1.0), frac=st.floats(0, 1))
def test_coefficient_matches_preimage_formula(p, a, frac):
    ch = ConformalChart(p)
    b = a + frac * (1.0 - a) + a * 1e-12
    u, v = ch.map_inverse(-a, -b)
    expected = (ch.omega(u, v) * u * v) ** (p - 1) / ch.m**2
    assert ch.conformal_coefficient(-a, -b) == pytest.approx(float(expected), rel=1e-11)


@pytest.mark.parametrize("p", [3.5, 4.0, 4.5])
def test_coefficient_sign_and_monotone(p, rng):
    ch = ConformalChart(p)
    t = -rng.uniform(1e-3, 1, 5000)
    r = -t * rng.uniform(0, 1, 5000)
    d = 1e-3 * np.minimum(-t - r, -t)
    fd = (ch.coefficient_tr(t + d, r) - ch.coefficient_tr(t - d, r)) / (2 * d)
    an = ch.coefficient_time_derivative_tr(t, r)
    assert np.all(ch.coefficient_tr(t, r) >= 0)
    assert np.all(fd <= 1e-10)
    np.testing.assert_allclose(fd, an, rtol=1e-5, atol=1e-12)


@pytest.mark.parametrize("p", [3.5, 4.5])
def test_extension_continuous_and_nonincreasing(p):
    ch = ConformalChart(p)
    vt = -1.3
    # the approach to u~ = 0 is like (-u~)^k, so go very close
    inner = ch.conformal_coefficient(-1e-40, vt, extend=True)
    outer = ch.conformal_coefficient(1e-9, vt, extend=True)
    assert inner == pytest.approx(outer, rel=1e-12)
    t = np.linspace(-0.6, -0.1, 50)
    c = ch.coefficient_tr(t, 0.55, extend=True)
    assert np.all(np.diff(c) <= 1e-14)


def test_coefficient_domain():
    ch = ConformalChart(4.0)
    with pytest.raises(DomainError):
        ch.conformal_coefficient(0.1, -1.0)
    with pytest.raises(OrientationError):
        ch.conformal_coefficient(-1.0, -0.5)


# -- metric factor ------------------------------------------------------------------


@pytest.mark.parametrize("p, value", [(3.0, 0.25), (4.0, 0.5)])
def test_metric_factor_examples(p, value):
    assert ConformalChart(p).metric_factor(2.0, 1.0) == value


@given(p=powers, u=st.floats(1.0, 50.0), frac=st.floats(0.05, 0.95))
def test_metric_factor_finite_difference(p, u, frac):
    assert ConformalChart(p).metric_conformal_factor_check(u, u * frac) <= 1e-6


# -- geometry ---------------------------------------------------------------------


def test_H_degenerates_to_point():
    geo = curve_H_and_interval_J(1e-12, ConformalChart(3.0))
    t, r = geo.h_endpoint
    assert (float(t), float(r)) == pytest.approx((-1.0, 0.0), abs=1e-11)


def test_H_endpoint_p3():
    t, r = curve_H_and_interval_J(0.4, ConformalChart(3.0)).h_endpoint
    assert float(t) == pytest.approx(-25 / 21, rel=1e-14)
    assert float(r) == pytest.approx(10 / 21, rel=1e-14)


@given(p=st.floats(3.0, 4.99), frac=st.floats(0.0, 0.999))
def test_J_inside_unit_interval(p, frac):
    ch = ConformalChart(p)
    lo, hi = curve_H_and_interval_J(frac * ch.alpha, ch).J
    assert lo == 0.0 and 0 <= hi < 1


def test_support_violation():
    with pytest.raises(SupportViolationError):
        curve_H_and_interval_J(0.3, ConformalChart(4.0))


def test_regions(rng):
    ch = ConformalChart(4.0)
    assert ch.contains(Region.KPLUS, 2.0, 1.0)
    assert not ch.contains(Region.KPLUS, 1.0, 2.0)
    assert ch.contains(Region.K_STRIP, -0.5, 0.2)
    assert not ch.contains(Region.K_STRIP, -1.5, 0.2)
    assert ch.contains(Region.KMINUS, -1.5, 0.2)
    with pytest.raises(ConfigurationError):
        ch.contains(Region.FUTURE_OF_I, 2.0, 1.0)
    # Phi maps the future of I into the future of H
    rho = 0.25
    t = 1 + rng.uniform(0, 20, 500)
    r = rng.uniform(0, 1, 500) * (t - 1 + rho)
    inside = ch.contains(Region.FUTURE_OF_I, t, r, rho)
    ut, vt = ch.map_forward(t + r, t - r)
    assert np.all(ch.contains(Region.FUTURE_OF_H, 0.5 * (ut + vt), 0.5 * (ut - vt), rho)[inside])


# -- push and pull -------------------------------------------------------------------


def _field_from(fn, spec, p, kind=FieldKind.FORWARD):
    tt, rr = np.meshgrid(spec.t, spec.r, indexing="ij")
    chi, rate = fn(tt, rr)
    return SpacetimeField(spec, chi, p, kind, rate)


def _omega_field(ch, spec):
    def fn(t, r):
        inside = r < t - 1e-3
        rs = np.where(inside, r, 0.0)
        d = 1e-6
        om = ch.omega_tr(t, rs)
        rate = rs * (ch.omega_tr(t + d, rs) - ch.omega_tr(t - d, rs)) / (2 * d)
        return np.where(inside, rs * om, 0.0), np.where(inside, rate, 0.0)
    return _field_from(fn, spec, ch.p)


def test_push_zero_field():
    ch = ConformalChart(4.0)
    src = _field_from(lambda t, r: (0 * t, 0 * t), GridSpec(1.0, 10.0, 10.0, 1 / 16, 0.9), 4.0)
    out = push_solution(src, ch, GridSpec(-1.0, -0.1, 0.5, 1 / 16, 0.9), strict=False)
    vals = out.phi_levels()
    assert np.all((vals == 0) | np.isnan(vals))
    assert out.kind is FieldKind.TRANSFORMED


def test_push_omega_gives_one():
    ch = ConformalChart(3.0)
    src = _omega_field(ch, GridSpec(1.0, 10.0, 10.0, 1 / 32, 0.8))
    out = push_solution(src, ch, GridSpec(-0.875, -0.5, 0.25, 1 / 64, 1.0), strict=False)
    psi = out.phi_levels()[:, 1:]
    ok = np.isfinite(psi)
    assert ok.sum() > 50
    np.testing.assert_allclose(psi[ok], 1.0, atol=1e-5)


def test_pull_one_gives_omega():
    ch = ConformalChart(3.0)
    spec = GridSpec(-1.0, -0.1, 1.0, 1 / 64, 0.9)
    src = _field_from(lambda t, r: (r, 0 * r), spec, 3.0, FieldKind.TRANSFORMED)
    target = GridSpec(2.0, 4.0, 1.0, 1 / 16, 1.0)
    out = pull_solution(src, ch, target, strict=False)
    phi = out.phi_levels()[:, 1:]
    tt, rr = np.meshgrid(target.t, target.r, indexing="ij")
    om = ch.omega_tr(tt, rr)[:, 1:]
    ok = np.isfinite(phi)
    assert ok.sum() > 50
    np.testing.assert_allclose(phi[ok], om[ok], rtol=1e-10)


def test_pull_zero_field():
    ch = ConformalChart(4.0)
    spec = GridSpec(-1.0, -0.1, 1.0, 1 / 32, 0.9)
    src = _field_from(lambda t, r: (0 * t, 0 * t), spec, 4.0, FieldKind.TRANSFORMED)
    out = pull_solution(src, ch, GridSpec(2.0, 3.0, 1.0, 1 / 8, 1.0), strict=False)
    vals = out.values
    assert np.all((vals == 0) | np.isnan(vals))


def test_pull_push_round_trip():
    ch = ConformalChart(4.0)

    def fn(t, r):
        chi = np.sin(r) * np.exp(-((t - r - 2) ** 2))
        rate = -2 * (t - r - 2) * chi
        return chi, rate

    src = _field_from(fn, GridSpec(1.0, 12.0, 12.0, 1 / 32, 1.0), 4.0)
    mid = push_solution(src, ch, GridSpec(-0.5, -0.03125, 0.5, 1 / 256, 0.5), strict=False)
    back = pull_solution(mid, ch, GridSpec(3.0, 4.0, 1.0, 1 / 8, 1.0), strict=False)
    got = back.phi_levels()[:, 1:]
    want = src.phi_levels()[64:97:4, 0:33:4][:, 1:]
    ok = np.isfinite(got)
    assert ok.sum() > 20
    # two cubic resamplings on grids of spacing 1/32 and 1/256
    np.testing.assert_allclose(got[ok], want[ok], atol=1e-4)


def test_push_coverage_error_names_corner():
    ch = ConformalChart(4.0)
    src = _field_from(lambda t, r: (r, 0 * r), GridSpec(1.0, 2.0, 2.0, 1 / 8, 1.0), 4.0)
    with pytest.raises(CoverageError) as err:
        push_solution(src, ch, GridSpec(-1.0, -0.25, 0.5, 1 / 8, 1.0))
    t, r = err.value.corner
    assert -1.0 <= t <= -0.25 and 0 <= r <= 0.5
