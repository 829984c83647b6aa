import json

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad

from radwave import ConformalChart, GridSpec, InitialDataSpec, TimeSlice, evolve_forward, evolve_transformed
from radwave.conformal import push_slice
from radwave.diagnostics import (
    DiagnosticsSeries,
    conserved_energy,
    decay_bound_monitor,
    divergence_identity_residual,
    energy_series,
    fit_power_law,
    lightcone_flux,
    pseudo_energy,
    radial_derivative,
    summary_json,
    tail_exponent_fit,
    uniform_bound_report,
    window_ratio,
)
from radwave.errors import DegenerateInputError, DomainError, NoiseFloorError, OscillationError
from radwave.grid import FieldKind, SpacetimeField


def _zero_slice(n=33, t=1.0):
    r = np.linspace(0, 1, n)
    return TimeSlice(t, r, np.zeros(n), np.zeros(n))


def _dual(p, amp, rho, h, t_end=-0.05, lam=0.95):
    chart = ConformalChart(p)
    fwd = evolve_forward(InitialDataSpec(amp, rho), GridSpec(1.0, 5.5, 5.0, h, 0.9), p).field
    spec = GridSpec(-1.0, t_end, 2.0, h, lam)
    return evolve_transformed(push_slice(fwd, chart, -1.0, spec.r), spec, p, chart).field


# -- energies ------------------------------------------------------------------


def test_zero_energy():
    rec = conserved_energy(_zero_slice(), 3.0)
    assert rec.total == 0.0
    assert pseudo_energy(_zero_slice(t=-1.0), ConformalChart(4.0)).total == 0.0


def test_static_bump_energy_matches_adaptive_quadrature():
    rho, m, p = 0.4, 4, 3.0
    r = np.linspace(0, 1, 4097)
    data = InitialDataSpec(1.0, rho, m)
    rec = conserved_energy(TimeSlice(1.0, r, data.phi0(r), np.zeros_like(r)), p)

    def integrand(x):
        s = 1 - (x / rho) ** 2
        phi = s**m
        phi_r = -2 * m * x / rho**2 * s ** (m - 1)
        return x * x * (0.5 * phi_r**2 + abs(phi) ** (p + 1) / (p + 1))

    exact, _ = quad(integrand, 0, rho, epsabs=1e-14, epsrel=1e-13)
    assert rec.total == pytest.approx(exact, abs=1e-8)
    assert rec.kinetic == 0.0
    assert rec.total == rec.kinetic + rec.gradient + rec.potential


def test_energy_needs_three_nodes():
    with pytest.raises(DegenerateInputError):
        conserved_energy(TimeSlice(1.0, [0.0, 0.1], [1.0, 1.0], [0.0, 0.0]), 3.0)


@given(a=st.floats(-3, 3), b=st.floats(-3, 3), p=st.floats(2.5, 4.9))
def test_energy_parts_nonnegative(a, b, p):
    r = np.linspace(0, 1, 65)
    data = InitialDataSpec(a, 0.3, 4, b)
    rec = conserved_energy(TimeSlice(1.0, r, data.phi0(r), data.phi1(r)), p)
    assert min(rec.kinetic, rec.gradient, rec.potential) >= 0
    assert rec.total == pytest.approx(rec.kinetic + rec.gradient + rec.potential)


def test_linear_energy_drops_potential():
    r = np.linspace(0, 1, 65)
    data = InitialDataSpec(2.0, 0.3)
    sl = TimeSlice(1.0, r, data.phi0(r), data.phi1(r))
    assert conserved_energy(sl, 3.0, nonlinear=False).potential == 0.0


def test_pseudo_energy_p3_equals_energy():
    r = np.linspace(0, 2, 129)
    phi = np.where(r < 0.5, (1 - (r / 0.5) ** 2) ** 4, 0.0)
    sl = TimeSlice(-0.7, r, 3 * phi, -phi)
    assert pseudo_energy(sl, ConformalChart(3.0)) == conserved_energy(sl, 3.0)


def test_radial_derivative_fourth_order():
    errs = []
    for n in (41, 81, 161):
        r = np.linspace(0, 1, n)
        errs.append(np.max(np.abs(radial_derivative(np.cos(2 * r), r[1]) + 2 * np.sin(2 * r))))
    assert errs[0] / errs[1] > 12 and errs[1] / errs[2] > 12


def test_energy_drift_second_order():
    data = InitialDataSpec(1.0, 0.4)
    drift = []
    for h in (1 / 64, 1 / 128):
        f = evolve_forward(data, GridSpec(1.0, 4.6, 5.0, h, 0.9), 3.0, store_every=8).field
        tot = np.array([e.total for e in energy_series(f)])
        drift.append(np.max(np.abs(tot - tot[0])))
    assert 3.5 < drift[0] / drift[1] < 4.5


def test_pseudo_energy_nonincreasing_up_to_discretization():
    chart = ConformalChart(4.0)
    rises = []
    for h in (1 / 64, 1 / 128, 1 / 256):
        tot = np.array([e.total for e in energy_series(_dual(4.0, 5.0, 0.25, h), chart)])
        rises.append(max(np.max(np.diff(tot)), 0.0) / tot[0])
    # spurious growth vanishes at least at second order
    assert rises[0] / rises[1] > 3.5 and rises[1] / rises[2] > 3.5


# -- flux -------------------------------------------------------------------------


def test_zero_flux():
    spec = GridSpec(-1.0, -0.1, 2.0, 1 / 32, 0.9)
    f = SpacetimeField(spec, np.zeros((spec.n_t, spec.n_r)), 4.0, FieldKind.TRANSFORMED)
    rec = lightcone_flux(f, -0.5, ConformalChart(4.0))
    assert (rec.flux, rec.ratio) == (0.0, 0.0)


@pytest.mark.parametrize("p, rho", [(3.0, 0.4), (4.0, 0.25)])
def test_flux_bounded_by_initial_pseudo_energy(p, rho):
    chart = ConformalChart(p)
    f = _dual(p, 10.0, rho, 1 / 128)
    for t0 in (-0.9, -0.5, -0.2, -0.1):
        rec = lightcone_flux(f, t0, chart)
        assert rec.ratio <= 1.0 + 1e-3
        assert 0 <= rec.potential <= rec.flux


def test_flux_resampling_consistent():
    chart = ConformalChart(3.0)
    f = _dual(3.0, 1.0, 0.4, 1 / 128)
    a = lightcone_flux(f, -0.3, chart).flux
    b = lightcone_flux(f, -0.3, chart, samples_per_cell=4).flux
    assert abs(a - b) <= 10 * (1 / 128) ** 2 * abs(a)


def test_flux_domain():
    f = _dual(3.0, 1.0, 0.4, 1 / 32, t_end=-0.525, lam=0.95)
    with pytest.raises(DomainError):
        lightcone_flux(f, 0.0, ConformalChart(3.0))
    with pytest.raises(DomainError):
        lightcone_flux(f, -0.2, ConformalChart(3.0))


# -- divergence identity ----------------------------------------------------------------


def test_divergence_zero_field():
    spec = GridSpec(-1.0, -0.1, 1.0, 1 / 32, 0.9)
    f = SpacetimeField(spec, np.zeros((spec.n_t, spec.n_r)), 4.0, FieldKind.TRANSFORMED)
    assert divergence_identity_residual(f, ConformalChart(4.0)).max_norm == 0.0


def test_divergence_constant_field():
    """psi = 1: div E reduces to r^2 dc/dt / (p+1), which the source term cancels."""
    p = 4.0
    chart = ConformalChart(p)
    resid = []
    for k, h in enumerate((1 / 32, 1 / 64, 1 / 128)):
        spec = GridSpec(-1.0, -0.1, 1.0, h, 0.9)
        values = np.tile(spec.r, (spec.n_t, 1))
        f = SpacetimeField(spec, values, p, FieldKind.TRANSFORMED)
        out = divergence_identity_residual(f, chart)
        tt, rr = np.meshgrid(f.t, f.r, indexing="ij")
        m = out.mask
        analytic = rr[m] ** 2 * chart.coefficient_time_derivative_tr(tt[m], rr[m]) / (p + 1)
        assert np.max(np.abs(out.source[m] - analytic)) < 1e-12
        # compare on the coarse nodes; the mask edge moves with h
        s = 2**k
        resid.append(np.max(np.abs(np.where(m, out.divergence - out.source, 0.0)[::s, ::s])))
    assert 3.5 < resid[0] / resid[1] < 4.5 and 3.5 < resid[1] / resid[2] < 4.5


def test_divergence_residual_converges_on_solution():
    chart = ConformalChart(4.0)
    res = []
    for k, h in enumerate((1 / 64, 1 / 128, 1 / 256)):
        out = divergence_identity_residual(_dual(4.0, 5.0, 0.25, h), chart, t_range=(-1.0, -0.3))
        res.append(np.max(np.abs(np.where(out.mask, out.divergence - out.source, 0.0)[:: 2**k, :: 2**k])))
    assert res[0] / res[1] < res[1] / res[2]
    assert 3.5 < res[1] / res[2] < 4.5


# -- decay and boundedness ---------------------------------------------------------------


def test_bound_zero_field():
    spec = GridSpec(1.0, 2.8, 2.0, 1 / 8, 0.9)
    f = SpacetimeField(spec, np.zeros((spec.n_t, spec.n_r)), 3.0)
    b = decay_bound_monitor(f)
    assert not np.any(b.bound)
    assert uniform_bound_report(f, region="all").overall == 0.0


def test_bound_small_data_plateau():
    spec = GridSpec(1.0, 28.0, 28.0, 1 / 64, 0.9)
    f = evolve_forward(InitialDataSpec(1.0, 0.4), spec, 3.0, store_every=32).field
    b = decay_bound_monitor(f)
    assert b.bound[-1] > 0
    assert b.plateau_ratio() <= 1.05
    assert np.all(np.diff(b.running_max) >= 0)


def test_window_ratio_empty():
    with pytest.raises(DegenerateInputError):
        window_ratio([1.0, 2.0], [1.0, 1.0], (5, 6), (1, 2))


def test_uniform_bound_split():
    chart = ConformalChart(4.0)
    f = _dual(4.0, 10.0, 0.25, 1 / 64)
    rep = uniform_bound_report(f, (-1.0, -0.05))
    assert rep.window_ratio() <= 1.05
    assert rep.overall == pytest.approx(np.max(rep.sup))
    assert chart.p == f.p


# -- tail fits -----------------------------------------------------------------------


def test_exact_power_law():
    t = np.linspace(10, 100, 200)
    fit = fit_power_law(t, t**-2.0, (10, 100), 0.1)
    assert fit.exponent == pytest.approx(-2.0, abs=1e-6)
    assert fit.amplitude == pytest.approx(1.0, rel=1e-9)
    assert not fit.oscillating


@given(q=st.floats(0.5, 5), c=st.floats(1e-6, 1e3))
def test_power_law_property(q, c):
    t = np.geomspace(5, 50, 40)
    assert fit_power_law(t, -c * t**-q, (5, 50)).exponent == pytest.approx(-q, abs=1e-8)


def test_oscillating_fits_envelope():
    t = np.linspace(10, 100, 4000)
    fit = fit_power_law(t, np.cos(t) * t**-3.0, (10, 100))
    assert fit.oscillating
    assert fit.exponent == pytest.approx(-3.0, abs=0.05)


def test_oscillation_error_with_few_peaks():
    t = np.linspace(10, 20, 20)
    with pytest.raises(OscillationError):
        fit_power_law(t, (t - 15) * t**-2.0, (10, 20))


def test_noise_floor():
    t = np.linspace(1, 10, 20)
    y = np.exp(-40 * t)
    with pytest.raises(NoiseFloorError):
        fit_power_law(t, y, (1, 10))


def test_fit_window_validation():
    with pytest.raises(DomainError):
        fit_power_law(np.arange(1, 10.0), np.ones(9), (5, 2))
    spec = GridSpec(1.0, 2.8, 2.0, 1 / 8, 0.9)
    f = SpacetimeField(spec, np.ones((spec.n_t, spec.n_r)), 3.0)
    with pytest.raises(DomainError):
        tail_exponent_fit(f, 0.1, (1.0, 5.0))


def test_tail_fit_on_synthetic_field():
    spec = GridSpec(1.0, 10.0, 1.0, 1 / 10, 1.0)
    tt, rr = np.meshgrid(spec.t, spec.r, indexing="ij")
    f = SpacetimeField(spec, rr * tt**-2.0, 3.0)
    assert tail_exponent_fit(f, 0.1, (2.0, 10.0)).exponent == pytest.approx(-2.0, abs=1e-6)


# -- exports -------------------------------------------------------------------------


def test_series_csv(tmp_path):
    s = DiagnosticsSeries()
    s.extend("energy", [1.0, 1.5], [0.25, 0.125])
    s.add("flux", -0.5, 0.1)
    s.to_csv(tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().splitlines() == [
        "t,value,kind", "1.0,0.25,energy", "1.5,0.125,energy", "-0.5,0.1,flux"]


def test_summary_json(tmp_path):
    t = np.linspace(10, 100, 50)
    summary_json(tmp_path / "s.json", {"fit": fit_power_law(t, t**-2.0, (10, 100)), "x": np.float64(2.5)})
    doc = json.loads((tmp_path / "s.json").read_text())
    assert doc["x"] == 2.5
    assert doc["fit"]["exponent"] == pytest.approx(-2.0)
