"""Power-law conformal map between the forward and backward light cones.

In null coordinates ``u = t + r``, ``v = t - r`` the map sends
``(u, v) -> (-u**-(p-2), -v**-(p-2))``.  With ``chi = r * phi`` the
transformation of solutions is plain composition, ``chi~ = chi o Phi^-1``,
because ``r * Omega = r~ o Phi``.

Closed forms for ``Omega``, the nonlinearity weight ``c`` and its time
derivative are 0/0 on the axis ``u = v``; they are evaluated with
``expm1``/``log1p`` away from it and by truncated Taylor series within a
relative distance ``diagonal_threshold``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConfigurationError,
    CoverageError,
    DomainError,
    OrientationError,
    SupportViolationError,
)
from .grid import FieldKind, GridSpec, SpacetimeField, TimeSlice, interpolate_array


def alpha_p(p):
    """Largest admissible data support radius, ``1 - 2**(-1/(p-2))``."""
    if not p > 2:
        raise DomainError(f"alpha_p needs p > 2, got {p!r}")
    return float(-np.expm1(-np.log(2.0) / (p - 2)))


def _arr(x):
    return np.asarray(x, dtype=float)


def _first_bad(mask, *coords):
    idx = tuple(np.argwhere(np.atleast_1d(mask))[0])
    return tuple(float(np.atleast_1d(c)[idx]) for c in coords)


class Region(enum.Enum):
    KPLUS = "Kplus"
    KMINUS = "Kminus"
    K_STRIP = "K_strip"
    FUTURE_OF_I = "future_of_I"
    FUTURE_OF_H = "future_of_H"


@dataclass(frozen=True)
class CausalGeometry:
    """Curve ``H = Phi(I)`` and interval ``J`` on ``t = -1`` for support ``[0, rho]``."""

    chart: "ConformalChart"
    rho: float

    def H(self, r):
        """Point ``(t~, r~)`` of ``H`` at parameter ``r`` in ``[0, rho]``."""
        ut, vt = self.chart.map_forward(1.0 + _arr(r), 1.0 - _arr(r))
        return 0.5 * (ut + vt), 0.5 * (ut - vt)

    @property
    def h_endpoint(self):
        return self.H(self.rho)

    @property
    def J(self):
        """Endpoints of the data interval on ``t~ = -1``.

        The outer end is where the outgoing null ray ``v~ = const`` leaving
        the far end of ``H`` crosses ``t~ = -1``.
        """
        v_edge = -((1.0 - self.rho) ** -self.chart.m)
        return 0.0, -1.0 - v_edge


@dataclass(frozen=True)
class ConformalChart:
    p: float
    diagonal_threshold: float = 1e-4

    def __post_init__(self):
        if not self.p > 2:
            raise ConfigurationError(f"chart needs p > 2, got {self.p!r}", field="p")
        if not 0 < self.diagonal_threshold <= 1e-2:
            raise ConfigurationError("diagonal_threshold must lie in (0, 1e-2]", field="diagonal_threshold")

    @property
    def m(self):
        return self.p - 2.0

    @property
    def k(self):
        return 1.0 / (self.p - 2.0)

    @property
    def alpha(self):
        return alpha_p(self.p)

    # -- maps -------------------------------------------------------------

    def map_forward(self, u, v):
        u, v = np.broadcast_arrays(_arr(u), _arr(v))
        bad = (u <= 0) | (v <= 0)
        if np.any(bad):
            raise DomainError("map_forward needs u > 0 and v > 0", point=_first_bad(bad, u, v))
        if np.any(v > u):
            raise OrientationError("map_forward needs v <= u", point=_first_bad(v > u, u, v))
        return -(u ** -self.m), -(v ** -self.m)

    def map_inverse(self, ut, vt):
        ut, vt = np.broadcast_arrays(_arr(ut), _arr(vt))
        bad = (ut >= 0) | (vt >= 0)
        if np.any(bad):
            raise DomainError("map_inverse needs negative arguments", point=_first_bad(bad, ut, vt))
        if np.any(vt > ut):
            raise OrientationError("map_inverse needs v~ <= u~", point=_first_bad(vt > ut, ut, vt))
        return (-ut) ** -self.k, (-vt) ** -self.k

    # -- conformal factor and coefficient ---------------------------------

    def omega(self, u, v):
        """Conformal factor ``Omega = r~/r`` at ``(u, v)`` in the forward cone."""
        u, v = np.broadcast_arrays(_arr(u), _arr(v))
        self.map_forward(u, v)
        m = self.m
        s = (u - v) / u
        small = s < self.diagonal_threshold
        with np.errstate(divide="ignore", invalid="ignore"):
            closed = -np.expm1(m * np.log1p(-s)) / ((u - v) * v**m)
        series = (
            m
            - m * (m - 1) / 2 * s
            + m * (m - 1) * (m - 2) / 6 * s**2
            - m * (m - 1) * (m - 2) * (m - 3) / 24 * s**3
        ) / (u * v**m)
        out = np.where(small, series, closed)
        return out if out.ndim else float(out)

    def omega_tr(self, t, r):
        t, r = np.broadcast_arrays(_arr(t), _arr(r))
        return self.omega(t + r, t - r)

    def _pushed_weight(self, a, b):
        """``Phi_*(Omega u v)`` as a function of ``a = -u~ <= b = -v~``."""
        k = self.k
        delta = (b - a) / a
        small = delta < self.diagonal_threshold
        with np.errstate(divide="ignore", invalid="ignore"):
            if k == 1.0:
                closed = (b - a) / (b - a)
            else:
                closed = a ** (1.0 - k) * delta / np.expm1(k * np.log1p(delta))
        series = a ** (1.0 - k) / (
            k
            * (
                1.0
                + (k - 1) / 2 * delta
                + (k - 1) * (k - 2) / 6 * delta**2
                + (k - 1) * (k - 2) * (k - 3) / 24 * delta**3
            )
        )
        return np.where(small, series, closed)

    def _check_backward(self, ut, vt):
        bad = (ut >= 0) | (vt >= 0)
        if np.any(bad):
            raise DomainError("point outside the backward cone", point=_first_bad(bad, ut, vt))
        if np.any(vt > ut):
            raise OrientationError("need v~ <= u~", point=_first_bad(vt > ut, ut, vt))

    def conformal_coefficient(self, ut, vt, extend=False):
        """Weight ``c`` of the nonlinearity in the transformed equation.

        With ``extend=True`` points with ``u~ >= 0`` (beyond the image of
        future null infinity) get the boundary value ``c(0, v~)``; this
        continuous extension keeps ``dc/dt <= 0``.
        """
        ut, vt = np.broadcast_arrays(_arr(ut), _arr(vt))
        if extend:
            outside = ut >= 0
            if np.any(vt >= 0) or np.any(vt > ut):
                raise DomainError("extended coefficient still needs v~ < 0 and v~ <= u~")
            a = np.where(outside, 1.0, -ut)
        else:
            self._check_backward(ut, vt)
            outside = np.zeros(ut.shape, dtype=bool)
            a = -ut
        b = -vt
        g = self._pushed_weight(a, b)
        if extend:
            g = np.where(outside, b ** (1.0 - self.k), g)
        out = g ** (self.p - 1) / self.m**2
        return out if out.ndim else float(out)

    def coefficient_tr(self, t, r, extend=False):
        t, r = np.broadcast_arrays(_arr(t), _arr(r))
        return self.conformal_coefficient(t + r, t - r, extend=extend)

    def coefficient_time_derivative(self, ut, vt):
        """Analytic ``dc/dt~`` on the backward cone."""
        ut, vt = np.broadcast_arrays(_arr(ut), _arr(vt))
        self._check_backward(ut, vt)
        a, b = -ut, -vt
        k, q = self.k, self.k - 1.0
        g = self._pushed_weight(a, b)
        delta = (b - a) / a
        small = delta < self.diagonal_threshold
        # (b**q - a**q) / (b - a)
        with np.errstate(divide="ignore", invalid="ignore"):
            closed = a ** (q - 1) * np.expm1(q * np.log1p(delta)) / delta
        series = a ** (q - 1) * (
            q
            + q * (q - 1) / 2 * delta
            + q * (q - 1) * (q - 2) / 6 * delta**2
            + q * (q - 1) * (q - 2) * (q - 3) / 24 * delta**3
        )
        slope = np.where(small, series, closed)
        dg = k * g**2 * slope
        out = (self.p - 1) / self.m**2 * g ** (self.p - 2) * dg
        return out if out.ndim else float(out)

    def coefficient_time_derivative_tr(self, t, r):
        t, r = np.broadcast_arrays(_arr(t), _arr(r))
        return self.coefficient_time_derivative(t + r, t - r)

    # -- geometry ---------------------------------------------------------

    def metric_factor(self, u, v):
        """``(du~/du)(dv~/dv) = (p-2)^2 (uv)^-(p-1)``."""
        u, v = _arr(u), _arr(v)
        return self.m**2 * (u * v) ** -(self.p - 1)

    def metric_conformal_factor_check(self, u, v, step=1e-5):
        """Relative gap between the analytic factor and a central-difference Jacobian."""
        if not v < u:
            raise DomainError("metric check needs a point off the axis", point=(u, v))
        du = step * u
        dv = step * v
        ut_p, _ = self.map_forward(u + du, v)
        ut_m, _ = self.map_forward(u - du, v)
        _, vt_p = self.map_forward(u, v + dv)
        _, vt_m = self.map_forward(u, v - dv)
        numeric = (ut_p - ut_m) / (2 * du) * (vt_p - vt_m) / (2 * dv)
        exact = self.metric_factor(u, v)
        return float(abs(numeric - exact) / exact)

    def causal_geometry(self, rho):
        return curve_H_and_interval_J(rho, self)

    def contains(self, region, t, r, rho=None):
        """Membership of ``(t, r)`` in one of the regions of the construction."""
        region = Region(region)
        t, r = np.broadcast_arrays(_arr(t), _arr(r))
        if region is Region.KPLUS:
            return (r >= 0) & (r < t)
        if region is Region.KMINUS:
            return (r >= 0) & (r < -t)
        if region is Region.K_STRIP:
            return (r >= 0) & (r < -t) & (t >= -1)
        if rho is None:
            raise ConfigurationError("region needs the data support radius", field="rho")
        if region is Region.FUTURE_OF_I:
            return (r >= 0) & (r < t) & (t >= 1) & (t - r >= 1 - rho)
        inside = (r >= 0) & (r < -t)
        out = np.zeros(t.shape, dtype=bool)
        if np.any(inside):
            u, v = self.map_inverse(t[inside] + r[inside], t[inside] - r[inside])
            out[inside] = self.contains(Region.FUTURE_OF_I, 0.5 * (u + v), 0.5 * (u - v), rho)
        return out


def curve_H_and_interval_J(rho, chart: ConformalChart) -> CausalGeometry:
    if not rho < chart.alpha:
        raise SupportViolationError(
            f"support radius {rho!r} is not below alpha_p={chart.alpha!r}", field="support_radius"
        )
    if rho < 0:
        raise SupportViolationError("support radius must be nonnegative", field="support_radius")
    return CausalGeometry(chart, float(rho))


# ---------------------------------------------------------------------------
# moving solutions between the cones


def _source_limits(field):
    return field.t[0], field.t[-1], field.r[-1]


def _sample_composed(field, t, r, dudx, dvdx):
    """``chi`` and its pushed time derivative at source points ``(t, r)``.

    ``dudx``/``dvdx`` are the derivatives of the source null coordinates with
    respect to the target ones; the target time derivative is
    ``dudx * chi_u + dvdx * chi_v``.
    """
    t0, dt, dr = field.spec.t_start, field.dt, field.dr
    chi = interpolate_array(field.values, t0, dt, dr, t, r)
    chi_t = interpolate_array(field.rates, t0, dt, dr, t, r)
    chi_r = interpolate_array(field.chi_r_levels(), t0, dt, dr, t, r)
    rate = 0.5 * dudx * (chi_t + chi_r) + 0.5 * dvdx * (chi_t - chi_r)
    return chi, rate


def _transport(field, chart, tt, rr, direction, strict):
    """Compose ``chi`` with the map (direction +1: forward cone to backward)."""
    tt, rr = np.broadcast_arrays(_arr(tt), _arr(rr))
    chi = np.full(tt.shape, np.nan)
    rate = np.full(tt.shape, np.nan)
    a, b = tt + rr, tt - rr  # target null coordinates
    if direction > 0:
        defined = (a < 0) & (b < 0) & (b <= a)
    else:
        defined = (a > 0) & (b > 0) & (b <= a)
    zero = np.zeros(tt.shape, dtype=bool)
    rho = field.support_radius
    if rho is not None:
        # outside the domain of influence of the data the solution vanishes
        v_edge = 1.0 - rho
        if direction > 0:
            with np.errstate(invalid="ignore", divide="ignore"):
                zero = (b < 0) & ((-np.where(b < 0, b, -1.0)) ** -chart.k < v_edge)
        else:
            zero = (b > 0) & (b < v_edge) & defined
    chi[zero] = 0.0
    rate[zero] = 0.0
    need = defined & ~zero
    if not np.any(need):
        return chi, rate
    a_n, b_n = a[need], b[need]
    if direction > 0:
        su, sv = chart.map_inverse(a_n, b_n)
        dudx = chart.k * (-a_n) ** (-chart.k - 1)
        dvdx = chart.k * (-b_n) ** (-chart.k - 1)
    else:
        su, sv = chart.map_forward(a_n, b_n)
        dudx = chart.m * a_n ** (-chart.m - 1)
        dvdx = chart.m * b_n ** (-chart.m - 1)
    st, sr = 0.5 * (su + sv), 0.5 * (su - sv)
    t_lo, t_hi, r_hi = _source_limits(field)
    slack = 1e-12 * max(1.0, abs(t_hi), r_hi)
    covered = (st >= t_lo - slack) & (st <= t_hi + slack) & (sr <= r_hi + slack)
    if strict and not np.all(covered):
        where = np.argwhere(need)[np.argmax(~covered)]
        corner = (float(tt[tuple(where)]), float(rr[tuple(where)]))
        raise CoverageError(
            f"target point (t={corner[0]!r}, r={corner[1]!r}) maps to "
            f"(t={float(st[~covered][0])!r}, r={float(sr[~covered][0])!r}) outside the source field",
            corner=corner,
        )
    st, sr = st[covered], sr[covered]
    c_vals, r_vals = _sample_composed(field, np.clip(st, t_lo, t_hi), np.clip(sr, 0, r_hi),
                                      dudx[covered], dvdx[covered])
    idx = np.flatnonzero(need)[covered]
    chi.flat[idx] = c_vals
    rate.flat[idx] = r_vals
    return chi, rate


def _transported_field(field, chart, target, direction, strict, kind):
    tt, rr = np.meshgrid(target.t, target.r, indexing="ij")
    chi, rate = _transport(field, chart, tt, rr, direction, strict)
    out = SpacetimeField(target, chi, chart.p, kind, rate, support_radius=field.support_radius)
    out.meta["transported_from"] = int(field.kind)
    return out


def push_solution(field: SpacetimeField, chart: ConformalChart, target: GridSpec, strict=True):
    """Transformed field ``psi = Phi_*(phi / Omega)`` on a backward-cone grid.

    Stored as ``chi~ = r~ psi``, which equals ``chi`` at the preimage.  Nodes
    outside the backward cone are NaN; with ``strict=False`` so are nodes
    whose preimage the source does not cover, otherwise those raise
    :class:`CoverageError`.
    """
    return _transported_field(field, chart, target, +1, strict, FieldKind.TRANSFORMED)


def pull_solution(field: SpacetimeField, chart: ConformalChart, target: GridSpec, strict=True):
    """Inverse of :func:`push_solution`: ``phi = Omega * Phi^* psi`` on a forward-cone grid."""
    return _transported_field(field, chart, target, -1, strict, FieldKind.FORWARD)


def push_slice(field: SpacetimeField, chart: ConformalChart, t, r_nodes, strict=True) -> TimeSlice:
    """Transformed ``(psi, psi_t)`` along ``t~ = t`` at radial nodes ``r_nodes``.

    Nodes outside the backward cone must lie outside the causal support of
    the data; they are set to zero.
    """
    r_nodes = _arr(r_nodes)
    tt = np.full(r_nodes.shape, float(t))
    chi, rate = _transport(field, chart, tt, r_nodes, +1, strict)
    undefined = np.isnan(chi)
    if np.any(undefined):
        if strict:
            raise CoverageError(
                f"slice node r={float(r_nodes[undefined][0])!r} has no preimage and no support bound",
                corner=(float(t), float(r_nodes[undefined][0])),
            )
        chi[undefined] = 0.0
        rate[undefined] = 0.0
    h = r_nodes[1] - r_nodes[0]
    phi = np.empty_like(chi)
    phi_t = np.empty_like(rate)
    from .grid import _divide_by_r

    phi[:] = _divide_by_r(chi, h)
    phi_t[:] = _divide_by_r(rate, h)
    return TimeSlice(float(t), r_nodes, phi, phi_t)
