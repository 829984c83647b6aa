"""Energies, light-cone flux, divergence identity and decay monitors.

All energies are per unit solid angle (the angular factor 4 pi is dropped).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field as dc_field

import numpy as np
from scipy.integrate import simpson, trapezoid

from .conformal import ConformalChart
from .errors import DegenerateInputError, DomainError, NoiseFloorError, OscillationError
from .grid import SpacetimeField, TimeSlice, _divide_by_r, interpolate, interpolate_array


@dataclass
class EnergyRecord:
    t: float
    kinetic: float
    gradient: float
    potential: float
    total: float


@dataclass
class FluxRecord:
    t0: float
    flux: float
    e0: float
    ratio: float
    potential: float = 0.0


@dataclass
class DecayFit:
    r_probe: float
    window: tuple
    exponent: float
    amplitude: float
    rms_residual: float
    oscillating: bool = False
    n_points: int = 0


@dataclass
class DecaySeries:
    t: np.ndarray
    bound: np.ndarray
    running_max: np.ndarray

    def plateau_ratio(self, t_final=None):
        """``max B`` over ``[T/2, T]`` divided by ``max B`` over ``[T/10, T/2]``."""
        T = self.t[-1] if t_final is None else t_final
        return window_ratio(self.t, self.bound, (T / 10, T / 2), (T / 2, T))


@dataclass
class DiagnosticsSeries:
    """Time-indexed scalar records exported as long-format CSV."""

    rows: list = dc_field(default_factory=list)

    def add(self, kind, t, value):
        self.rows.append((float(t), float(value), str(kind)))

    def extend(self, kind, ts, values):
        for t, v in zip(ts, values):
            self.add(kind, t, v)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "value", "kind"])
            for t, v, kind in self.rows:
                w.writerow([repr(t), repr(v), kind])


def window_ratio(t, values, early, late):
    t = np.asarray(t)
    values = np.asarray(values)
    e = values[(t >= early[0]) & (t <= early[1])]
    l = values[(t >= late[0]) & (t <= late[1])]
    if e.size == 0 or l.size == 0:
        raise DegenerateInputError("empty comparison window")
    return float(np.max(l) / np.max(e))


# ---------------------------------------------------------------------------
# energies


def radial_derivative(f, h):
    """Fourth-order d/dr of an even function of r sampled from the axis."""
    f = np.asarray(f, dtype=float)
    n = f.size
    if n < 5:
        return np.gradient(f, h, edge_order=2)
    ext = np.concatenate([f[2:0:-1], f])  # f(-r) = f(r)
    d = np.empty(n)
    core = (-ext[4:] + 8 * ext[3:-1] - 8 * ext[1:-3] + ext[:-4]) / (12 * h)
    d[: n - 2] = core
    # one-sided fourth-order at the last two nodes
    d[-2] = (3 * f[-1] + 10 * f[-2] - 18 * f[-3] + 6 * f[-4] - f[-5]) / (12 * h)
    d[-1] = (25 * f[-1] - 48 * f[-2] + 36 * f[-3] - 16 * f[-4] + 3 * f[-5]) / (12 * h)
    d[0] = 0.0
    return d


def _energy(slice_: TimeSlice, p, weight):
    r = slice_.r_nodes
    if r.size < 3:
        raise DegenerateInputError("energy quadrature needs at least 3 nodes")
    h = slice_.h
    phi, phi_t = slice_.phi, slice_.phi_t
    phi_r = radial_derivative(phi, h)
    r2 = r * r
    kinetic = simpson(0.5 * r2 * phi_t**2, dx=h)
    gradient = simpson(0.5 * r2 * phi_r**2, dx=h)
    potential = simpson(r2 * weight * np.abs(phi) ** (p + 1) / (p + 1), dx=h)
    kinetic, gradient, potential = (max(float(x), 0.0) for x in (kinetic, gradient, potential))
    return EnergyRecord(float(slice_.t), kinetic, gradient, potential, kinetic + gradient + potential)


def conserved_energy(slice_: TimeSlice, p, *, nonlinear=True) -> EnergyRecord:
    """Energy ``int r^2 (phi_t^2/2 + phi_r^2/2 + |phi|^(p+1)/(p+1)) dr``.

    With ``nonlinear=False`` the potential term is dropped (free equation).
    """
    return _energy(slice_, p, 1.0 if nonlinear else 0.0)


def pseudo_energy(slice_: TimeSlice, chart: ConformalChart, p=None) -> EnergyRecord:
    """Energy of the transformed field with the potential weighted by ``c``.

    The whole slice is integrated; beyond ``u~ = 0`` the extended ``c`` is
    used, which preserves monotonicity in time.
    """
    p = chart.p if p is None else p
    c = chart.coefficient_tr(np.full(slice_.r_nodes.shape, slice_.t), slice_.r_nodes, extend=True)
    return _energy(slice_, p, c)


def energy_series(field: SpacetimeField, chart: ConformalChart | None = None, *, nonlinear=True):
    """Energy (or pseudo-energy with ``chart``) at every stored level."""
    out = []
    for k in range(field.values.shape[0]):
        s = field.slice(k)
        if chart is None:
            out.append(conserved_energy(s, field.p, nonlinear=nonlinear))
        else:
            out.append(pseudo_energy(s, chart, field.p))
    return out


# ---------------------------------------------------------------------------
# light-cone flux


def lightcone_flux(field: SpacetimeField, t0, chart: ConformalChart, p=None, *, e0=None,
                   samples_per_cell=2) -> FluxRecord:
    """Energy flux through the ingoing null segment ``s -> (s, t0 - s)``, ``s in [-1, t0]``.

    The integrand ``(t0-s)^2 [ (psi_t - psi_r)^2 / 2 + c |psi|^(p+1)/(p+1) ]``
    is written through ``chi~`` as ``(chi_t - chi_r + psi)^2 / 2 + ...``.
    ``e0`` defaults to the pseudo-energy of the first stored level.
    """
    p = field.p if p is None else p
    if not -1 < t0 < 0:
        raise DomainError(f"t0={t0!r} outside (-1, 0)", point=(t0, None))
    t_first = field.t[0]
    if t_first > -1 + 1e-12 or field.t[-1] < t0 - 1e-12:
        raise DomainError("null segment not inside the stored field", point=(t0, None))
    if e0 is None:
        e0 = pseudo_energy(field.slice(0), chart, p).total
    length = t0 + 1.0
    n = max(int(math.ceil(length / min(field.dt, field.dr) * samples_per_cell)), 4)
    s = np.linspace(-1.0, t0, n + 1)
    r = t0 - s
    r[-1] = 0.0
    psi = interpolate(field, s, r)
    base = (field.spec.t_start, field.dt, field.dr)
    chi_t = interpolate_array(field.rates, *base, s, r)
    chi_r = interpolate_array(field.chi_r_levels(), *base, s, r)
    c = chart.coefficient_tr(s, r)
    kinetic = 0.5 * (chi_t - chi_r + psi) ** 2
    potential = r * r * c * np.abs(psi) ** (p + 1) / (p + 1)
    flux = float(trapezoid(kinetic + potential, s))
    pot = float(trapezoid(potential, s))
    ratio = flux / e0 if e0 > 0 else (0.0 if flux == 0 else math.inf)
    return FluxRecord(float(t0), flux, float(e0), float(ratio), pot)


# ---------------------------------------------------------------------------
# divergence identity


@dataclass
class DivergenceResidual:
    max_norm: float
    divergence: np.ndarray
    source: np.ndarray
    mask: np.ndarray


def _energy_current(chi, chi_t, dr, c, p):
    """Components ``(E^t, E^r)`` of the energy current from ``chi~`` samples."""
    psi = _divide_by_r(chi, dr)
    chi_r = np.gradient(chi, dr, axis=-1, edge_order=2)
    r = dr * np.arange(chi.shape[-1])
    w = np.zeros_like(r)
    w[1:] = r[1:] ** -(p - 1)
    r_psi_r = chi_r - psi
    pot = c * np.abs(chi) ** (p + 1) * w / (p + 1)
    et = 0.5 * chi_t**2 + 0.5 * r_psi_r**2 + pot
    er = -chi_t * r_psi_r
    return et, er


def divergence_identity_residual(field: SpacetimeField, chart: ConformalChart, p=None, *,
                                 edge_margin=0.1, t_range=None) -> DivergenceResidual:
    """Max-norm of ``div E - r^2 (dc/dt) |psi|^(p+1) / (p+1)`` by centered differences.

    Evaluated at interior stored nodes with ``u~ <= -edge_margin`` (so
    ``c`` stays smooth) and, optionally, ``t~`` within ``t_range``.
    """
    p = field.p if p is None else p
    t = field.t
    r = field.r
    dt, dr = field.dt, field.dr
    tt, rr = np.meshgrid(t, r, indexing="ij")
    inside = (tt + rr < 0)
    c = np.where(inside, chart.coefficient_tr(tt, rr, extend=True), 0.0)
    et, er = _energy_current(field.values, field.rates, dr, c, p)
    div = np.zeros_like(et)
    div[1:-1, 1:-1] = (et[2:, 1:-1] - et[:-2, 1:-1]) / (2 * dt) + (er[1:-1, 2:] - er[1:-1, :-2]) / (2 * dr)
    mask = np.zeros(tt.shape, dtype=bool)
    mask[1:-1, 1:-1] = True
    mask &= (tt + rr) <= -edge_margin
    if t_range is not None:
        mask &= (tt >= t_range[0]) & (tt <= t_range[1])
    src = np.zeros_like(et)
    if np.any(mask):
        dcdt = chart.coefficient_time_derivative_tr(tt[mask], rr[mask])
        w = rr[mask] ** -(p - 1)
        src[mask] = dcdt * np.abs(field.values[mask]) ** (p + 1) * w / (p + 1)
    resid = np.where(mask, div - src, 0.0)
    return DivergenceResidual(float(np.max(np.abs(resid))) if np.any(mask) else 0.0, div, src, mask)


# ---------------------------------------------------------------------------
# decay and boundedness monitors


def decay_bound_monitor(field: SpacetimeField, p=None) -> DecaySeries:
    """``B(t) = max_r |phi| (1+t+r)(1+t-r)^(p-2)`` over ``0 <= r <= t``."""
    p = field.p if p is None else p
    t = field.t
    r = field.r
    phi = field.phi_levels()
    tt, rr = np.meshgrid(t, r, indexing="ij")
    inside = rr <= tt
    weight = (1 + tt + rr) * np.abs(1 + tt - rr) ** (p - 2)
    b = np.where(inside, np.abs(phi) * weight, 0.0).max(axis=1)
    return DecaySeries(t, b, np.maximum.accumulate(b))


@dataclass
class BoundReport:
    t: np.ndarray
    sup: np.ndarray
    overall: float

    def window_ratio(self, split=None):
        """Late-over-early ratio of the sup series, split at the midpoint by default."""
        t0, t1 = self.t[0], self.t[-1]
        mid = 0.5 * (t0 + t1) if split is None else split
        return window_ratio(self.t, self.sup, (t0, mid), (mid, t1))


def uniform_bound_report(field: SpacetimeField, t_range=None, region="K") -> BoundReport:
    """``sup_r |psi(t, r)|`` per stored level (restricted to ``r < -t`` for region K)."""
    psi = field.phi_levels()
    tt, rr = np.meshgrid(field.t, field.r, indexing="ij")
    mask = np.isfinite(psi)
    if region == "K":
        mask &= rr < -tt
    keep = np.ones(field.t.shape, dtype=bool)
    if t_range is not None:
        keep = (field.t >= t_range[0] - 1e-12) & (field.t <= t_range[1] + 1e-12)
    sup = np.where(mask, np.abs(np.nan_to_num(psi)), 0.0).max(axis=1)[keep]
    return BoundReport(field.t[keep], sup, float(sup.max()) if sup.size else 0.0)


def fit_power_law(t, values, window, r_probe=float("nan")) -> DecayFit:
    """Least-squares line through ``log|values|`` against ``log t`` in ``window``."""
    t = np.asarray(t, dtype=float)
    values = np.asarray(values, dtype=float)
    lo, hi = window
    if not hi > lo >= 1:
        raise DomainError(f"fit window {window!r} needs t_hi > t_lo >= 1")
    sel = (t >= lo - 1e-9) & (t <= hi + 1e-9)
    if sel.sum() < 3:
        raise DegenerateInputError("fewer than three samples in the fit window")
    ts, ys = t[sel], values[sel]
    scale = np.max(np.abs(values))
    if np.any(np.abs(ys) <= 10 * np.finfo(float).eps * max(scale, np.finfo(float).tiny)):
        raise NoiseFloorError("signal at round-off level inside the fit window")
    oscillating = bool(np.any(np.sign(ys[1:]) != np.sign(ys[:-1])))
    if oscillating:
        a = np.abs(ys)
        peaks = np.flatnonzero((a[1:-1] >= a[:-2]) & (a[1:-1] >= a[2:])) + 1
        if peaks.size < 3:
            raise OscillationError("sign changes in the window and too few local maxima to fit")
        ts, ys = ts[peaks], ys[peaks]
    x = np.log(ts)
    y = np.log(np.abs(ys))
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    return DecayFit(float(r_probe), (float(lo), float(hi)), float(slope), float(math.exp(intercept)),
                    float(np.sqrt(np.mean(resid**2))), oscillating, int(ts.size))


def tail_exponent_fit(field: SpacetimeField, r_probe, window) -> DecayFit:
    """Power-law exponent of ``phi(t, r_probe)`` over the stored levels in ``window``."""
    lo, hi = window
    if lo < field.t[0] - 1e-9 or hi > field.t[-1] + 1e-9:
        raise DomainError(f"window {window!r} outside the run [{field.t[0]}, {field.t[-1]}]")
    t = field.t
    sel = (t >= lo - 1e-9) & (t <= hi + 1e-9)
    phi = interpolate(field, t[sel], np.full(sel.sum(), float(r_probe)))
    return fit_power_law(t[sel], phi, window, r_probe)


def summary_json(path, summary: dict):
    def default(o):
        if isinstance(o, np.generic):
            return o.item()
        if isinstance(o, np.ndarray):
            return o.tolist()
        if hasattr(o, "__dataclass_fields__"):
            return asdict(o)
        raise TypeError(type(o))

    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, default=default)
        fh.write("\n")
