"""Uniform (t, r) grids, field storage and interpolation.

Fields store the reduced variable ``chi = r * phi`` which turns the radial
wave operator into the flat 1+1 operator ``chi_tt - chi_rr``.  The physical
field is recovered by division by ``r`` away from the axis and by a one-sided
radial expansion close to it.
"""

from __future__ import annotations

import csv
import dataclasses
import enum
import math
import struct
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DomainError, SupportViolationError

_COMMENSURATE_TOL = 1e-9


class FieldKind(enum.IntEnum):
    FORWARD = 0
    TRANSFORMED = 1


def _steps(extent, step, name):
    ratio = extent / step
    n = round(ratio)
    if n < 1 or abs(ratio - n) > _COMMENSURATE_TOL * max(1.0, abs(ratio)):
        raise ConfigurationError(
            f"{name}={extent!r} is not an integer multiple of {step!r}", field=name
        )
    return int(n)


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid on ``[t_start, t_end] x [0, r_max]``.

    ``lam`` is the Courant ratio ``dt / h``.
    """

    t_start: float
    t_end: float
    r_max: float
    h: float
    lam: float = 0.9

    def __post_init__(self):
        if not self.t_end > self.t_start:
            raise ConfigurationError("t_end must exceed t_start", field="t_end")
        if not self.r_max > 0:
            raise ConfigurationError("r_max must be positive", field="r_max")
        if not self.h > 0:
            raise ConfigurationError("h must be positive", field="h")
        if not 0 < self.lam <= 1:
            raise ConfigurationError(
                f"Courant ratio lam={self.lam!r} outside (0, 1]", field="lam"
            )
        _steps(self.r_max, self.h, "r_max")
        _steps(self.t_end - self.t_start, self.lam * self.h, "t_end")

    @property
    def dt(self):
        return self.lam * self.h

    @property
    def n_r(self):
        return _steps(self.r_max, self.h, "r_max") + 1

    @property
    def steps(self):
        return _steps(self.t_end - self.t_start, self.dt, "t_end")

    @property
    def n_t(self):
        return self.steps + 1

    @property
    def r(self):
        return self.h * np.arange(self.n_r)

    @property
    def t(self):
        return self.t_start + self.dt * np.arange(self.n_t)

    def refine(self, factor=2):
        return dataclasses.replace(self, h=self.h / factor)


@dataclass(frozen=True)
class InitialDataSpec:
    """Compactly supported bump data ``A (1 - (r/rho)^2)^m`` given at ``t = 1``."""

    amplitude: float
    support_radius: float
    smoothness_exponent: int = 4
    velocity_amplitude: float = 0.0
    profile: str = "bump"

    def __post_init__(self):
        if self.profile != "bump":
            raise ConfigurationError(f"unknown profile {self.profile!r}", field="profile")
        if int(self.smoothness_exponent) != self.smoothness_exponent or self.smoothness_exponent < 3:
            raise ConfigurationError(
                "smoothness_exponent must be an integer >= 3", field="smoothness_exponent"
            )
        if not self.support_radius > 0:
            raise ConfigurationError("support_radius must be positive", field="support_radius")

    def _shape(self, r):
        r = np.asarray(r, dtype=float)
        x = 1.0 - (r / self.support_radius) ** 2
        return np.where(np.abs(r) < self.support_radius, np.maximum(x, 0.0) ** self.smoothness_exponent, 0.0)

    def phi0(self, r):
        return self.amplitude * self._shape(r)

    def phi1(self, r):
        return self.velocity_amplitude * self._shape(r)


@dataclass
class TimeSlice:
    """Field and time derivative sampled along a constant-t line."""

    t: float
    r_nodes: np.ndarray
    phi: np.ndarray
    phi_t: np.ndarray

    def __post_init__(self):
        self.r_nodes = np.asarray(self.r_nodes, dtype=float)
        self.phi = np.asarray(self.phi, dtype=float)
        self.phi_t = np.asarray(self.phi_t, dtype=float)
        n = len(self.r_nodes)
        if len(self.phi) != n or len(self.phi_t) != n:
            raise ConfigurationError("slice arrays must share length")
        if n >= 2:
            dr = np.diff(self.r_nodes)
            if self.r_nodes[0] != 0.0 or not np.allclose(dr, dr[0], rtol=1e-10, atol=0):
                raise ConfigurationError("slice nodes must be uniform and start at r = 0")

    @property
    def h(self):
        return float(self.r_nodes[1] - self.r_nodes[0])

    @property
    def chi(self):
        return self.r_nodes * self.phi

    @property
    def chi_t(self):
        return self.r_nodes * self.phi_t


@dataclass
class SpacetimeField:
    """Reduced field ``chi = r * phi`` stored on a (time level, radial node) array.

    Only every ``store_every``-th time level and every ``store_r_every``-th
    radial node of the computational grid is kept.  ``rates`` holds
    ``d chi / dt`` at the stored nodes.
    """

    spec: GridSpec
    values: np.ndarray
    p: float
    kind: FieldKind = FieldKind.FORWARD
    rates: np.ndarray | None = None
    store_every: int = 1
    store_r_every: int = 1
    support_radius: float | None = None
    meta: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        self.kind = FieldKind(self.kind)
        expected = (self.spec.steps // self.store_every + 1, (self.spec.n_r - 1) // self.store_r_every + 1)
        if self.values.shape != expected:
            raise ConfigurationError(
                f"values shape {self.values.shape} does not match grid {expected}", field="values"
            )
        if self.rates is None:
            self.rates = np.zeros_like(self.values)

    @property
    def t(self):
        return self.spec.t_start + self.dt * np.arange(self.values.shape[0])

    @property
    def r(self):
        return self.dr * np.arange(self.values.shape[1])

    @property
    def dt(self):
        """Spacing of the stored time levels."""
        return self.spec.dt * self.store_every

    @property
    def dr(self):
        """Spacing of the stored radial nodes."""
        return self.spec.h * self.store_r_every

    @property
    def axis_index(self):
        return 0

    @property
    def outer_index(self):
        return self.values.shape[1] - 1

    def phi_levels(self):
        """Physical field at every stored node."""
        return _divide_by_r(self.values, self.dr)

    def phi_t_levels(self):
        return _divide_by_r(self.rates, self.dr)

    def chi_r_levels(self):
        return np.gradient(self.values, self.dr, axis=1, edge_order=2)

    def level_index(self, t):
        k = (t - self.spec.t_start) / self.dt
        n = round(k)
        if abs(k - n) > 1e-9 or not 0 <= n < self.values.shape[0]:
            raise DomainError(f"t={t!r} is not a stored time level", point=(t, None))
        return int(n)

    def slice(self, k):
        """TimeSlice at stored level index ``k``."""
        phi = _divide_by_r(self.values[k][None, :], self.dr)[0]
        phi_t = _divide_by_r(self.rates[k][None, :], self.dr)[0]
        return TimeSlice(float(self.t[k]), self.r, phi, phi_t)


def _divide_by_r(chi, dr):
    """``chi / r`` with the axis value from quadratic extrapolation of nodes 1..3."""
    chi = np.asarray(chi, dtype=float)
    n = chi.shape[-1]
    r = dr * np.arange(n)
    out = np.empty_like(chi)
    out[..., 1:] = chi[..., 1:] / r[1:]
    if n >= 4:
        out[..., 0] = 3.0 * out[..., 1] - 3.0 * out[..., 2] + out[..., 3]
    elif n >= 2:
        out[..., 0] = out[..., 1]
    else:
        out[..., 0] = 0.0
    return out


def build_grid(spec: GridSpec, p: float = 3.0, kind=FieldKind.FORWARD) -> SpacetimeField:
    """Zero-initialized field on every node of ``spec``."""
    values = np.zeros((spec.n_t, spec.n_r))
    return SpacetimeField(spec, values, p, kind)


def sample_initial_data(data: InitialDataSpec, spec: GridSpec, p: float) -> TimeSlice:
    """Sample ``(phi0, phi1)`` on the radial nodes of ``spec`` at ``t = 1``."""
    from .conformal import alpha_p

    if spec.t_start != 1:
        raise ConfigurationError("forward data are posed at t_start = 1", field="t_start")
    alpha = alpha_p(p)
    if not data.support_radius < alpha:
        raise SupportViolationError(
            f"support radius {data.support_radius!r} is not below alpha_p={alpha!r} for p={p!r}",
            field="support_radius",
        )
    r = spec.r
    return TimeSlice(1.0, r, data.phi0(r), data.phi1(r))


# ---------------------------------------------------------------------------
# interpolation


def _stencil(s, n, order=4):
    """First node index and Lagrange weights for fractional positions ``s``.

    Stencils are shifted inward at the ends so every query uses ``order``
    nodes when available.
    """
    s = np.asarray(s, dtype=float)
    nearest = np.rint(s)
    s = np.where(np.abs(s - nearest) < 1e-9, nearest, s)
    order = min(order, n)
    if order <= 1:
        return np.zeros(s.shape, dtype=np.intp), np.ones(s.shape + (1,))
    i0 = np.clip(np.floor(s).astype(np.intp) - (order - 1) // 2, 0, n - order)
    x = s - i0
    w = np.ones(s.shape + (order,))
    for m in range(order):
        for l in range(order):
            if l != m:
                w[..., m] *= (x - l) / (m - l)
    return i0, w


def interpolate_array(values, t0, dt, dr, t, r, order=4):
    """Tensor-product Lagrange interpolation of a uniformly sampled array.

    ``values[k, j]`` is the sample at ``(t0 + k dt, j dr)``.  The default
    order 4 is cubic in each direction.
    """
    values = np.asarray(values)
    t, r = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(r, dtype=float))
    nt, nr = values.shape
    it, wt = _stencil((t - t0) / dt, nt, order)
    ir, wr = _stencil(r / dr, nr, order)
    out = np.zeros(t.shape)
    for a in range(wt.shape[-1]):
        row = it + a
        for b in range(wr.shape[-1]):
            out += wt[..., a] * wr[..., b] * values[row, ir + b]
    return out


def _check_inside(field, t, r):
    t_lo, t_hi = field.t[0], field.t[-1]
    r_hi = field.r[-1]
    slack = 1e-12 * max(1.0, abs(t_hi), r_hi)
    bad = (t < t_lo - slack) | (t > t_hi + slack) | (r < -slack) | (r > r_hi + slack)
    if np.any(bad):
        idx = np.argwhere(np.atleast_1d(bad))[0]
        tt = np.atleast_1d(t)[tuple(idx)]
        rr = np.atleast_1d(r)[tuple(idx)]
        raise DomainError(f"query point (t={tt!r}, r={rr!r}) outside grid", point=(float(tt), float(rr)))


def interpolate_chi(field: SpacetimeField, t, r, array=None):
    """Interpolated ``chi`` (or any array stored like it) at ``(t, r)``."""
    t, r = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(r, dtype=float))
    _check_inside(field, t, r)
    src = field.values if array is None else array
    return interpolate_array(src, field.spec.t_start, field.dt, field.dr, t, r)


def interpolate(field: SpacetimeField, t, r, array=None):
    """Physical field ``phi = chi / r`` at ``(t, r)``.

    Below ``r = 2 dr`` the value comes from the quadratic in ``r`` through
    ``chi / r`` at the first three off-axis nodes, so ``phi(t, 0) = d chi/dr``.
    """
    scalar = np.ndim(t) == 0 and np.ndim(r) == 0
    t, r = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(r, dtype=float))
    _check_inside(field, t, r)
    src = field.values if array is None else array
    dr = field.dr
    out = np.empty(t.shape)
    far = r >= 2 * dr
    if np.any(far):
        chi = interpolate_array(src, field.spec.t_start, field.dt, dr, t[far], r[far])
        out[far] = chi / r[far]
    near = ~far
    if np.any(near):
        tn = t[near]
        it, wt = _stencil((tn - field.spec.t_start) / field.dt, src.shape[0])
        x = r[near] / dr
        nodes = []
        for j in (1, 2, 3):
            col = np.zeros(tn.shape)
            for a in range(wt.shape[-1]):
                col += wt[..., a] * src[it + a, j]
            nodes.append(col / (j * dr))
        y1, y2, y3 = nodes
        out[near] = (
            y1 * (x - 2) * (x - 3) / 2.0
            - y2 * (x - 1) * (x - 3)
            + y3 * (x - 1) * (x - 2) / 2.0
        )
    return float(out) if scalar else out


# ---------------------------------------------------------------------------
# persistence

_HEADER_INTS = "<6q"
_HEADER_FLOATS = "<7d"
FORMAT_VERSION = 1


def write_binary(field: SpacetimeField, path, array=None):
    """Raw little-endian snapshot: 6 int64, 7 float64, then row-major float64.

    Integers are (version, n_t, n_r, kind, store_every, store_r_every); floats
    are (t_start, t_end, r_max, h, lam, p, support_radius or NaN).
    """
    data = np.ascontiguousarray(field.values if array is None else array, dtype="<f8")
    s = field.spec
    support = math.nan if field.support_radius is None else field.support_radius
    with open(path, "wb") as fh:
        fh.write(struct.pack(_HEADER_INTS, FORMAT_VERSION, data.shape[0], data.shape[1],
                             int(field.kind), field.store_every, field.store_r_every))
        fh.write(struct.pack(_HEADER_FLOATS, s.t_start, s.t_end, s.r_max, s.h, s.lam, field.p, support))
        fh.write(data.tobytes(order="C"))


def read_binary(path, rates_path=None) -> SpacetimeField:
    raw = Path(path).read_bytes()
    ni = struct.calcsize(_HEADER_INTS)
    nf = struct.calcsize(_HEADER_FLOATS)
    version, n_t, n_r, kind, every, r_every = struct.unpack(_HEADER_INTS, raw[:ni])
    if version != FORMAT_VERSION:
        raise ConfigurationError(f"unsupported snapshot version {version}")
    t0, t1, r_max, h, lam, p, support = struct.unpack(_HEADER_FLOATS, raw[ni:ni + nf])
    values = np.frombuffer(raw[ni + nf:], dtype="<f8").reshape(n_t, n_r).astype(float)
    rates = None
    if rates_path is not None:
        rates = read_binary(rates_path).values
    return SpacetimeField(
        GridSpec(t0, t1, r_max, h, lam), values, p, FieldKind(kind), rates,
        int(every), int(r_every), None if math.isnan(support) else support,
    )


def write_csv(field: SpacetimeField, path):
    """Long-format CSV with columns t, r, phi, chi."""
    phi = field.phi_levels()
    t = field.t
    r = field.r
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "r", "phi", "chi"])
        for k in range(len(t)):
            tk = repr(float(t[k]))
            for j in range(len(r)):
                w.writerow([tk, repr(float(r[j])), repr(float(phi[k, j])), repr(float(field.values[k, j]))])
