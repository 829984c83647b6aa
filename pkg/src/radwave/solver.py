"""Leapfrog evolution of the radial defocusing wave equation and its oracles.

Both the forward problem and the conformally transformed one are written for
the reduced variable ``chi = r phi``::

    chi_tt - chi_rr = -c(t, r) |chi|^(p-1) chi / r^(p-1)

with ``c = 1`` for the forward equation.  The nonlinear term vanishes on the
axis, and ``chi = 0`` is imposed at ``r = 0`` and ``r = r_max``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .conformal import ConformalChart, alpha_p
from .errors import BlowUpError, ConfigurationError, DegenerateInputError, DomainError, SupportViolationError
from .grid import FieldKind, GridSpec, InitialDataSpec, SpacetimeField, TimeSlice, sample_initial_data

BLOWUP_LIMIT = 1e12


@dataclass
class EvolutionReport:
    field: SpacetimeField
    steps: int
    max_abs_phi: float
    cfl_used: float
    nonlinearity_evaluations: int


def _weights(r, p):
    w = np.zeros_like(r)
    w[1:] = r[1:] ** -(p - 1)
    return w


def evolve_slice(slice_: TimeSlice, spec: GridSpec, p: float, coef=None, *, nonlinear=True,
                 store_every=1, store_r_every=1, backend=None, kind=FieldKind.FORWARD):
    """Evolve data on ``t = spec.t_start`` with the leapfrog scheme.

    ``coef`` is ``None`` (forward equation) or an array of shape
    ``(spec.steps + 1, spec.n_r)`` holding ``c`` at every time level.
    The second level comes from a second-order Taylor start.
    """
    if not p > 2:
        raise ConfigurationError(f"power p={p!r} must exceed 2", field="p")
    if spec.lam > 1:
        raise ConfigurationError("CFL violation", field="lam")
    n = spec.n_r
    if len(slice_.r_nodes) != n or not math.isclose(slice_.h, spec.h, rel_tol=1e-12):
        raise ConfigurationError("slice does not match the grid's radial nodes", field="r_max")
    steps = spec.steps
    if steps % store_every or (n - 1) % store_r_every:
        raise ConfigurationError("output strides must divide the step and node counts", field="store_every")
    if coef is not None:
        coef = np.ascontiguousarray(coef, dtype=float)
        if coef.shape != (steps + 1, n):
            raise ConfigurationError(f"coefficient array shape {coef.shape} != {(steps + 1, n)}")
    r = spec.r
    chi0 = np.ascontiguousarray(slice_.chi, dtype=float)
    rate0 = np.ascontiguousarray(slice_.chi_t, dtype=float)
    chi0[0] = chi0[-1] = 0.0
    rate0[0] = rate0[-1] = 0.0
    dt = spec.dt
    lam2 = spec.lam**2
    dt2 = dt * dt
    weight = _weights(r, p) if nonlinear else np.zeros(n)
    pm1 = float(p - 1)

    nl = np.abs(chi0) ** pm1 * chi0 * weight
    if coef is not None:
        nl = nl * coef[0]
    lap = np.zeros(n)
    lap[1:-1] = (chi0[2:] - 2.0 * chi0[1:-1]) + chi0[:-2]
    chi1 = chi0 + dt * rate0 + 0.5 * (lam2 * lap - dt2 * nl)
    chi1[0] = chi1[-1] = 0.0

    leapfrog = kernels.get_leapfrog(backend)
    values, rates, status, bad_level, bad_index = leapfrog(
        chi0, chi1, rate0, weight, coef, lam2, dt2, pm1, steps,
        store_every, store_r_every, 1.0 / (2.0 * dt), BLOWUP_LIMIT,
    )
    if status:
        t_bad = spec.t_start + bad_level * dt
        r_bad = bad_index * spec.h
        raise BlowUpError(f"non-finite or runaway value at t={t_bad!r}, r={r_bad!r}", t=t_bad, r=r_bad)
    field = SpacetimeField(spec, values, p, kind, rates, store_every, store_r_every)
    phi = field.phi_levels()
    return EvolutionReport(
        field=field,
        steps=steps,
        max_abs_phi=float(np.max(np.abs(phi))),
        cfl_used=spec.lam,
        nonlinearity_evaluations=(steps + 1) * (n - 2) if nonlinear else 0,
    )


def evolve_forward(data: InitialDataSpec, spec: GridSpec, p: float, *, nonlinear=True,
                   store_every=1, store_r_every=1, backend=None) -> EvolutionReport:
    """Evolve bump data posed at ``t = 1`` under the forward equation."""
    if not p > 2:
        raise ConfigurationError(f"power p={p!r} must exceed 2", field="p")
    needed = data.support_radius + (spec.t_end - spec.t_start)
    if spec.r_max < needed - 1e-12:
        raise ConfigurationError(
            f"r_max={spec.r_max!r} below support + horizon = {needed!r}", field="r_max"
        )
    slice_ = sample_initial_data(data, spec, p)
    report = evolve_slice(slice_, spec, p, None, nonlinear=nonlinear, store_every=store_every,
                          store_r_every=store_r_every, backend=backend)
    report.field.support_radius = data.support_radius
    return report


def transformed_coefficient_grid(spec: GridSpec, chart: ConformalChart):
    """``c`` on every node of ``spec`` (extended beyond ``u~ = 0``)."""
    tt, rr = np.meshgrid(spec.t, spec.r, indexing="ij")
    return chart.coefficient_tr(tt, rr, extend=True)


def evolve_transformed(slice_: TimeSlice, spec: GridSpec, p: float, chart: ConformalChart, *,
                       store_every=1, store_r_every=1, backend=None,
                       support_radius=None) -> EvolutionReport:
    """Evolve ``box psi + c psi |psi|^(p-1) = 0`` upward from ``t~ = -1``."""
    if not 3 <= p < 5:
        raise ConfigurationError(f"transformed evolution needs 3 <= p < 5, got {p!r}", field="p")
    if chart.p != p:
        raise ConfigurationError("chart power differs from p", field="p")
    if spec.t_end >= 0:
        raise DomainError(f"t_end={spec.t_end!r} must stay below 0", point=(spec.t_end, None))
    if spec.t_start < -1:
        raise DomainError("transformed evolution starts at t~ >= -1", point=(spec.t_start, None))
    nz = np.flatnonzero((slice_.phi != 0) | (slice_.phi_t != 0))
    if nz.size and slice_.r_nodes[nz[-1]] >= 1.0:
        raise SupportViolationError(
            f"slice support reaches r={float(slice_.r_nodes[nz[-1]])!r}, outside [0, 1)",
            field="support_radius",
        )
    coef = transformed_coefficient_grid(spec, chart)
    report = evolve_slice(slice_, spec, p, coef, store_every=store_every, store_r_every=store_r_every,
                          backend=backend, kind=FieldKind.TRANSFORMED)
    report.field.support_radius = support_radius
    return report


# ---------------------------------------------------------------------------
# oracles


def _bump_antiderivative(data: InitialDataSpec):
    """Polynomial antiderivative of ``r * (1 - (r/rho)^2)^m`` on ``[-rho, rho]``."""
    rho, m = data.support_radius, data.smoothness_exponent

    def prim(x):
        # d/dx of -(rho^2/(2(m+1))) (1 - x^2/rho^2)^(m+1) equals x (1 - x^2/rho^2)^m
        return -(rho**2) / (2.0 * (m + 1)) * (1.0 - (x / rho) ** 2) ** (m + 1)

    return prim


def _odd_integral(data, lo, hi):
    """Integral of the odd extension of ``r phi1(r)`` over ``[lo, hi]``."""
    rho = data.support_radius
    prim = _bump_antiderivative(data)
    # the odd extension of r*(1-(r/rho)^2)^m is the same polynomial on [-rho, rho]
    a = np.clip(lo, -rho, rho)
    b = np.clip(hi, -rho, rho)
    return data.velocity_amplitude * (prim(b) - prim(a))


def exact_linear_solution(data: InitialDataSpec, t, r):
    """Free radial wave with data at ``t = 1``, by d'Alembert on ``r phi``."""
    t, r = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(r, dtype=float))
    if np.any(t < 1):
        raise DomainError("exact_linear_solution needs t >= 1")
    if np.any(r < 0):
        raise DomainError("radius must be nonnegative")
    s = t - 1.0

    def g_hat(x):
        return x * data.phi0(np.abs(x))

    def chi(rr, ss):
        return 0.5 * (g_hat(rr + ss) + g_hat(rr - ss)) + 0.5 * _odd_integral(data, rr - ss, rr + ss)

    out = np.empty(t.shape)
    axis = r == 0
    off = ~axis
    out[off] = chi(r[off], s[off]) / r[off]
    if np.any(axis):
        # phi(t, 0) = d/dr chi at r = 0 = g'(s) + k(s) with g = r phi0, k = r phi1
        sa = s[axis]
        rho, m = data.support_radius, data.smoothness_exponent
        x = np.clip(1.0 - (sa / rho) ** 2, 0.0, None)
        inside = sa < rho
        g_prime = data.amplitude * np.where(inside, x**m - 2.0 * m * (sa / rho) ** 2 * x ** (m - 1), 0.0)
        k_val = sa * data.phi1(sa)
        out[axis] = g_prime + k_val
    initial = s == 0
    out[initial] = data.phi0(r[initial])  # avoid the r * phi0 / r round trip
    return float(out) if out.ndim == 0 else out


@dataclass
class ConvergenceReport:
    orders: list
    conclusive: bool
    errors: list

    @property
    def order(self):
        return self.orders[-1]


def convergence_order(errors=None, *, solutions=None, ratio=2.0):
    """Observed order from errors at ``h, h/2, h/4, ...``.

    With ``solutions`` (three arrays sampled at common points) the order is
    the self-convergence ``log2(|f_h - f_h2| / |f_h2 - f_h4|)``.  Errors that
    do not decrease give an inconclusive report rather than an exception.
    """
    if solutions is not None:
        if len(solutions) != 3:
            raise DegenerateInputError("self-convergence needs exactly three solutions")
        a, b, c = (np.asarray(s, dtype=float) for s in solutions)
        errors = [float(np.max(np.abs(a - b))), float(np.max(np.abs(b - c)))]
    errors = [float(e) for e in errors]
    if len(errors) < 2:
        raise DegenerateInputError("need at least two error values")
    if any(e == 0 for e in errors) or len(set(errors)) == 1:
        raise DegenerateInputError("errors are zero or identical; runs do not differ")
    orders = [math.log(errors[i] / errors[i + 1], ratio) for i in range(len(errors) - 1)]
    conclusive = all(errors[i + 1] < errors[i] for i in range(len(errors) - 1))
    return ConvergenceReport(orders, conclusive, errors)
