"""Acceptance criteria 1-11, each returning a :class:`CriterionResult`.

The grids below are chosen so that every run finishes within minutes on
one core.  Durations are multiples of ``lam * h`` as :class:`GridSpec`
requires.
"""

from __future__ import annotations

import functools
import math
import time
from dataclasses import dataclass, field as dc_field

import numpy as np

from .conformal import ConformalChart, Region, push_slice, push_solution
from .diagnostics import (
    decay_bound_monitor,
    divergence_identity_residual,
    energy_series,
    lightcone_flux,
    pseudo_energy,
    tail_exponent_fit,
    uniform_bound_report,
)
from .grid import GridSpec, InitialDataSpec, TimeSlice
from .solver import convergence_order, evolve_forward, evolve_slice, evolve_transformed, exact_linear_solution


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    detail: str
    values: dict = dc_field(default_factory=dict)
    seconds: float = 0.0

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] criterion {self.number:2d} {self.title}: {self.detail} ({self.seconds:.1f}s)"


def _fmt(xs, spec=".3g"):
    return "[" + ", ".join(format(float(x), spec) for x in xs) + "]"


# ---------------------------------------------------------------------------
# shared runs


def _forward_horizon(rho, t_end):
    return float(math.ceil(rho + t_end - 1.0))


@functools.lru_cache(maxsize=None)
def _transformed_run(p, amplitude, rho, h):
    """Dual evolution on t~ in [-1, -0.05] from a pushed forward run (T = 5.5)."""
    chart = ConformalChart(p)
    data = InitialDataSpec(amplitude, rho, 4)
    fwd = evolve_forward(data, GridSpec(1.0, 5.5, _forward_horizon(rho, 5.5), h, 0.9), p).field
    tgrid = GridSpec(-1.0, -0.05, 2.0, h, 0.95)
    sl = push_slice(fwd, chart, -1.0, tgrid.r)
    return evolve_transformed(sl, tgrid, p, chart, support_radius=rho).field


# ---------------------------------------------------------------------------
# criteria


def criterion_1():
    """Forward solver against the d'Alembert solution with the nonlinearity off."""
    data = InitialDataSpec(1.0, 0.4, 4)
    errors = []
    for h in (1 / 256, 1 / 512, 1 / 1024):
        spec = GridSpec(1.0, 10.0, 10.0, h, 0.9)
        every = int(round(32 * (1 / 256) / h))
        field = evolve_forward(data, spec, 3.0, nonlinear=False, store_every=every).field
        tt, rr = np.meshgrid(field.t, field.r, indexing="ij")
        errors.append(float(np.max(np.abs(field.phi_levels() - exact_linear_solution(data, tt, rr)))))
    rep = convergence_order(errors)
    ok = errors[0] <= 1e-3 and all(abs(o - 2.0) <= 0.3 for o in rep.orders)
    return ok, f"max error at h=1/256 {errors[0]:.3e} (<= 1e-3), orders {_fmt(rep.orders)} (2.0 +- 0.3)", {
        "errors": errors, "orders": rep.orders}


def criterion_2():
    """Relative energy drift over t in [1, 20] shrinks fourfold per halving."""
    data = InitialDataSpec(1.0, 0.4, 4)
    drifts = []
    for h in (1 / 256, 1 / 512):
        spec = GridSpec(1.0, 20.0, 20.0, h, 0.8)
        every = int(round(32 * (1 / 256) / h))
        field = evolve_forward(data, spec, 3.0, store_every=every).field
        tot = np.array([e.total for e in energy_series(field)])
        drifts.append(float(np.max(np.abs(tot - tot[0])) / tot[0]))
    ratio = drifts[0] / drifts[1]
    ok = 3.5 <= ratio <= 4.5
    return ok, f"drift {_fmt(drifts)}, ratio {ratio:.3f} (3.5-4.5)", {"drifts": drifts, "ratio": ratio}


def _mp_oracle_r_tilde(u, v, m):
    import mpmath

    with mpmath.workdps(60):
        out = [(mpmath.mpf(b) ** -mpmath.mpf(m) - mpmath.mpf(a) ** -mpmath.mpf(m)) / 2 for a, b in zip(u, v)]
        return np.array([float(x) for x in out])


def box_omega_residual(chart, h, t=None, r=None, ratio=0.5):
    """Max |discrete box Omega| on a fixed patch of the forward cone.

    Steps ``k = ratio * h`` in time and ``h`` in radius; with ``k = h`` the
    stencil is exact for travelling waves and only round-off remains.
    """
    t = np.linspace(2.0, 5.0, 13) if t is None else t
    r = np.linspace(0.5, 1.5, 11) if r is None else r
    tt, rr = np.meshgrid(t, r, indexing="ij")
    om = chart.omega_tr
    k = ratio * h
    box = (-(om(tt + k, rr) - 2 * om(tt, rr) + om(tt - k, rr)) / k**2
           + (om(tt, rr + h) - 2 * om(tt, rr) + om(tt, rr - h)) / h**2
           + (om(tt, rr + h) - om(tt, rr - h)) / (rr * h))
    return float(np.max(np.abs(box)))


def criterion_3():
    """Map round trip, r Omega identity, metric factor and box Omega = 0."""
    rng = np.random.default_rng(20240601)
    n = 10_000
    worst = {"roundtrip": 0.0, "r_omega": 0.0, "metric": 0.0}
    orders = []
    for p in (3.0, 3.5, 4.0, 4.5):
        chart = ConformalChart(p)
        t = 10 ** rng.uniform(0, 2, n)
        r = t * rng.uniform(0, 1, n)
        u, v = t + r, t - r
        back_u, back_v = chart.map_inverse(*chart.map_forward(u, v))
        rt = max(np.max(np.abs(back_u - u) / u), np.max(np.abs(back_v - v) / v))
        worst["roundtrip"] = max(worst["roundtrip"], float(rt))

        # include points inside the series branch near the diagonal
        u2 = 10 ** rng.uniform(0, 2, 2000)
        v2 = u2 * (1 - 10 ** rng.uniform(-12, -1, 2000))
        for uu, vv in ((u[:2000], v[:2000]), (u2, v2)):
            lhs = 0.5 * (uu - vv) * chart.omega(uu, vv)
            rhs = _mp_oracle_r_tilde(uu, vv, chart.m)
            keep = rhs > 0
            rel = np.max(np.abs(lhs[keep] - rhs[keep]) / rhs[keep])
            worst["r_omega"] = max(worst["r_omega"], float(rel))

        for uu, vv in zip(u[:200], v[:200]):
            if vv < uu * (1 - 1e-3):
                worst["metric"] = max(worst["metric"], chart.metric_conformal_factor_check(uu, vv))
        res = [box_omega_residual(chart, h) for h in (0.1, 0.05, 0.025)]
        orders.extend(convergence_order(res).orders)
    ok = (worst["roundtrip"] <= 1e-12 and worst["r_omega"] <= 1e-12 and worst["metric"] <= 1e-6
          and all(abs(o - 2.0) <= 0.3 for o in orders))
    detail = (f"round trip {worst['roundtrip']:.2e}, r*Omega {worst['r_omega']:.2e} (<= 1e-12), "
              f"metric {worst['metric']:.2e} (<= 1e-6), box-Omega orders {_fmt(orders)} (2.0 +- 0.3)")
    return ok, detail, dict(worst, orders=orders)


def criterion_4():
    """At p = 3 the weight is identically one and the two evolutions coincide."""
    rng = np.random.default_rng(7)
    chart = ConformalChart(3.0)
    ts = -rng.uniform(1e-6, 1.0, 10_000)
    rs = -ts * rng.uniform(0, 1, 10_000)
    c_err = float(np.max(np.abs(chart.coefficient_tr(ts, rs) - 1.0)))
    spec = GridSpec(-1.0, -0.1, 2.0, 1 / 256, 0.9)
    r = spec.r
    bump = np.where(r < 0.5, (1 - (r / 0.5) ** 2) ** 4, 0.0)
    sl = TimeSlice(-1.0, r, 2.0 * bump, -0.5 * bump)
    a = evolve_transformed(sl, spec, 3.0, chart).field
    b = evolve_slice(sl, spec, 3.0, None).field
    same = bool(np.array_equal(a.values, b.values) and np.array_equal(a.rates, b.rates))
    ok = c_err <= 1e-12 and same
    return ok, f"max |c - 1| {c_err:.1e} (<= 1e-12), bitwise equal evolutions: {same}", {
        "c_error": c_err, "bitwise_equal": same}


def criterion_5():
    """c >= 0 and finite-difference dc/dt <= 1e-10 on sampled backward-cone points."""
    rng = np.random.default_rng(99)
    worst_c, worst_dc = math.inf, -math.inf
    for p in (3.0, 3.5, 4.0, 4.5):
        chart = ConformalChart(p)
        ts = -rng.uniform(1e-3, 1.0, 10_000)
        rs = -ts * rng.uniform(0, 1, 10_000)
        d = 1e-3 * np.minimum(-ts - rs, -ts)
        inside = (chart.contains(Region.KMINUS, ts + d, rs) & chart.contains(Region.KMINUS, ts - d, rs)
                  & chart.contains(Region.KMINUS, ts, rs))
        ts, rs, d = ts[inside], rs[inside], d[inside]
        c = chart.coefficient_tr(ts, rs)
        fd = (chart.coefficient_tr(ts + d, rs) - chart.coefficient_tr(ts - d, rs)) / (2 * d)
        worst_c = min(worst_c, float(np.min(c)))
        worst_dc = max(worst_dc, float(np.max(fd)))
    ok = worst_c >= 0 and worst_dc <= 1e-10
    return ok, f"min c {worst_c:.3e} (>= 0), max dc/dt {worst_dc:.3e} (<= 1e-10)", {
        "min_c": worst_c, "max_dcdt": worst_dc}


def criterion_6():
    """Divergence identity residual converges at second order (p = 4)."""
    chart = ConformalChart(4.0)
    res = [divergence_identity_residual(_transformed_run(4.0, 10.0, 0.25, h), chart).max_norm
           for h in (1 / 128, 1 / 256, 1 / 512)]
    rep = convergence_order(res)
    ok = all(abs(o - 2.0) <= 0.4 for o in rep.orders)
    return ok, f"residuals {_fmt(res)}, orders {_fmt(rep.orders)} (2.0 +- 0.4)", {
        "residuals": res, "orders": rep.orders}


FLUX_T0 = (-0.9, -0.5, -0.2, -0.1)
CASES = ((3.0, 1.0, 0.4), (3.0, 10.0, 0.4), (4.0, 1.0, 0.25), (4.0, 10.0, 0.25))


def criterion_7():
    """Flux through ingoing null segments stays below the initial pseudo-energy."""
    ok = True
    parts = []
    values = {}
    for p, amp, rho in CASES:
        chart = ConformalChart(p)
        excess = []
        worst = 0.0
        for h in (1 / 256, 1 / 512):
            field = _transformed_run(p, amp, rho, h)
            e0 = pseudo_energy(field.slice(0), chart).total
            ratios = [lightcone_flux(field, t0, chart, e0=e0).ratio for t0 in FLUX_T0]
            worst = max(ratios)
            excess.append(max(worst - 1.0, 0.0))
        case_ok = worst <= 1.05 and excess[1] <= excess[0]
        ok &= case_ok
        values[f"p={p:g},A={amp:g}"] = {"max_ratio": worst, "excess": excess}
        parts.append(f"p={p:g} A={amp:g}: max ratio {worst:.4f}")
    return ok, "; ".join(parts) + " (<= 1.05, excess non-increasing)", values


def criterion_8():
    """Late-over-early sup of the transformed field stays within 1.05."""
    ok = True
    parts = []
    values = {}
    for p, rho in ((3.0, 0.4), (4.0, 0.25)):
        field = _transformed_run(p, 10.0, rho, 1 / 512)
        rep = uniform_bound_report(field, (-1.0, -0.05))
        ratio = rep.window_ratio()
        ok &= ratio <= 1.05
        values[f"p={p:g}"] = {"ratio": ratio, "sup": rep.overall}
        parts.append(f"p={p:g}: ratio {ratio:.3f} sup {rep.overall:.3g}")
    return ok, "; ".join(parts) + " (<= 1.05)", values


def _long_run(p, amplitude, rho, h, velocity=0.0):
    spec = GridSpec(1.0, 100.0, 100.0, h, 0.9)
    every = int(round(128 * (1 / 256) / h))
    data = InitialDataSpec(amplitude, rho, 4, velocity)
    return evolve_forward(data, spec, p, store_every=every).field


def criterion_9():
    """Weighted decay bound B(t) plateaus: late max <= 1.05 x earlier max."""
    ok = True
    parts = []
    values = {}
    for p, rho in ((3.0, 0.4), (4.0, 0.25)):
        for amp in (1.0, 10.0):
            ratio = decay_bound_monitor(_long_run(p, amp, rho, 1 / 256)).plateau_ratio(100.0)
            ok &= ratio <= 1.05
            values[f"p={p:g},A={amp:g}"] = ratio
            parts.append(f"p={p:g} A={amp:g}: {ratio:.3f}")
    return ok, "; ".join(parts) + " (<= 1.05)", values


TAIL_CASES = (
    # p, A = B, rho, resolutions, target, tolerance
    (3.0, 1.0, 0.4, (1 / 128, 1 / 256), -2.0, 0.15),
    (4.0, 10.0, 0.25, (1 / 256, 1 / 512), -3.0, 0.25),
)


def criterion_10():
    """Tail exponent at r = 0.1 over t in [30, 100], resolution-converged."""
    ok = True
    parts = []
    values = {}
    for p, amp, rho, hs, target, tol in TAIL_CASES:
        fits = [tail_exponent_fit(_long_run(p, amp, rho, h, velocity=amp), 0.1, (30.0, 100.0)) for h in hs]
        exps = [f.exponent for f in fits]
        converged = abs(exps[1] - exps[0]) <= tol
        case_ok = abs(exps[1] - target) <= tol and converged
        ok &= case_ok
        values[f"p={p:g}"] = {"exponents": exps, "oscillating": [f.oscillating for f in fits]}
        parts.append(f"p={p:g}: exponents {_fmt(exps, '.3f')} (target {target:g} +- {tol:g})")
    return ok, "; ".join(parts), values


def _dual_discrepancy(p, amplitude, rho, h, coarse):
    chart = ConformalChart(p)
    data = InitialDataSpec(amplitude, rho, 4)
    fwd = evolve_forward(data, GridSpec(1.0, 10.0, _forward_horizon(rho, 10.0), h, 0.9), p).field
    tgrid = GridSpec(-1.0, -0.1, 2.0, h, 0.9)
    dual = evolve_transformed(push_slice(fwd, chart, -1.0, tgrid.r), tgrid, p, chart).field
    pushed = push_solution(fwd, chart, tgrid, strict=False)
    del fwd
    s = int(round(coarse / h))
    return dual.phi_levels()[::s, ::s], pushed.phi_levels()[::s, ::s]


def criterion_11():
    """Push-forward of the forward run against direct dual evolution."""
    ok = True
    parts = []
    values = {}
    hs = (1 / 128, 1 / 256, 1 / 512)
    for p, amp, rho in ((3.0, 1.0, 0.4), (4.0, 1.0, 0.25)):
        pairs = [_dual_discrepancy(p, amp, rho, h, hs[0]) for h in hs]
        mask = np.ones(pairs[0][0].shape, dtype=bool)
        for _, pushed in pairs:
            mask &= np.isfinite(pushed)
        disc = [float(np.max(np.abs(a - b)[mask])) for a, b in pairs]
        ratios = [disc[i] / disc[i + 1] for i in range(len(disc) - 1)]
        case_ok = 3.5 <= ratios[-1] <= 4.5
        ok &= case_ok
        values[f"p={p:g}"] = {"discrepancy": disc, "ratios": ratios}
        parts.append(f"p={p:g}: discrepancy {_fmt(disc)}, ratios {_fmt(ratios)}")
    return ok, "; ".join(parts) + " (finest ratio 3.5-4.5)", values


CRITERIA = {
    1: ("linear oracle", criterion_1),
    2: ("energy conservation", criterion_2),
    3: ("conformal identities", criterion_3),
    4: ("p=3 degeneracy", criterion_4),
    5: ("coefficient sign and monotonicity", criterion_5),
    6: ("divergence identity", criterion_6),
    7: ("flux bound", criterion_7),
    8: ("uniform boundedness", criterion_8),
    9: ("decay estimate", criterion_9),
    10: ("small-data tail rates", criterion_10),
    11: ("dual-evolution consistency", criterion_11),
}


def run_criterion(number) -> CriterionResult:
    title, fn = CRITERIA[number]
    start = time.perf_counter()
    passed, detail, values = fn()
    return CriterionResult(number, title, bool(passed), detail, values, time.perf_counter() - start)


def run_criteria(only=None):
    numbers = sorted(CRITERIA) if not only else sorted(only)
    return [run_criterion(n) for n in numbers]
