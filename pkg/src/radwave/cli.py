"""Command-line driver: simulate, transform, fit, sweep and validate.

Every subcommand writes into an output directory that holds a
``manifest.json`` with the resolved configuration and the package version.
Errors are reported on stderr as one JSON line, and the exit code
classifies them (1 configuration, 2 numerical failure, 3 coverage).
"""

from __future__ import annotations

import argparse
import concurrent.futures
import copy
import csv
import json
import math
import os
import sys
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from . import __version__
from .conformal import ConformalChart, push_slice, push_solution
from .diagnostics import (
    DiagnosticsSeries,
    decay_bound_monitor,
    divergence_identity_residual,
    energy_series,
    lightcone_flux,
    tail_exponent_fit,
    uniform_bound_report,
)
from .errors import BlowUpError, ConfigurationError, CoverageError, DomainError, RadwaveError
from .grid import GridSpec, InitialDataSpec, SpacetimeField, read_binary, write_binary
from .solver import evolve_forward, evolve_transformed, exact_linear_solution

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_COVERAGE = 3

WORKERS_ENV = "RADWAVE_WORKERS"

DEFAULTS = {
    "p": 3.0,
    "data": {
        "amplitude": 1.0,
        "support_radius": 0.4,
        "smoothness_exponent": 4,
        "velocity_amplitude": 0.0,
        "profile": "bump",
    },
    "grid": {"t_start": 1.0, "t_end": 10.0, "r_max": None, "h": 1.0 / 128, "lam": 0.9},
    "probes": [0.1],
    "windows": [],
    "outputs": "run",
    "seed": 0,
    "nonlinear": True,
    "store_every": 1,
    "store_r_every": 1,
    "energy_tolerance": 1e-2,
    "transform": {
        "t_start": -1.0,
        "t_end": -0.05,
        "r_max": 2.0,
        "h": None,
        "lam": 0.95,
        "flux_t0": [-0.9, -0.5, -0.2, -0.1],
        "edge_margin": 0.1,
    },
}


def _merge(base, override):
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key not in out:
            raise ConfigurationError(f"unknown configuration key {key!r}", field=key)
        if isinstance(out[key], dict):
            if not isinstance(value, dict):
                raise ConfigurationError(f"{key!r} must be an object", field=key)
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


@dataclass
class ExperimentConfig:
    p: float
    data: InitialDataSpec
    grid: GridSpec
    probes: list = dc_field(default_factory=list)
    windows: list = dc_field(default_factory=list)
    outputs: str = "run"
    seed: int = 0
    nonlinear: bool = True
    store_every: int = 1
    store_r_every: int = 1
    energy_tolerance: float = 1e-2
    transform: dict = dc_field(default_factory=dict)
    raw: dict = dc_field(default_factory=dict, repr=False)

    @classmethod
    def from_dict(cls, doc):
        raw = _merge(DEFAULTS, doc)
        try:
            p = float(raw["p"])
            d = raw["data"]
            data = InitialDataSpec(
                float(d["amplitude"]), float(d["support_radius"]), int(d["smoothness_exponent"]),
                float(d["velocity_amplitude"]), str(d["profile"]),
            )
            g = dict(raw["grid"])
            if g["r_max"] is None:
                # wide enough that the outer boundary never sees the solution
                g["r_max"] = float(math.ceil(data.support_radius + g["t_end"] - g["t_start"]))
                raw["grid"]["r_max"] = g["r_max"]
            grid = GridSpec(float(g["t_start"]), float(g["t_end"]), float(g["r_max"]),
                            float(g["h"]), float(g["lam"]))
            probes = [float(x) for x in raw["probes"]]
            windows = [(float(lo), float(hi)) for lo, hi in raw["windows"]]
        except ConfigurationError:
            raise
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigurationError(f"malformed configuration: {exc}") from exc
        if not p > 2:
            raise ConfigurationError(f"power p={p!r} must exceed 2", field="p")
        for r in probes:
            if not 0 <= r < grid.r_max:
                raise ConfigurationError(f"probe radius {r!r} outside [0, r_max)", field="probes")
        for lo, hi in windows:
            if not hi > lo:
                raise ConfigurationError(f"window ({lo!r}, {hi!r}) is empty", field="windows")
        for key in ("store_every", "store_r_every"):
            if not isinstance(raw[key], int) or raw[key] < 1:
                raise ConfigurationError(f"{key} must be a positive integer", field=key)
        return cls(p, data, grid, probes, windows, str(raw["outputs"]), int(raw["seed"]),
                   bool(raw["nonlinear"]), raw["store_every"], raw["store_r_every"],
                   float(raw["energy_tolerance"]), dict(raw["transform"]), raw)

    def to_dict(self):
        return copy.deepcopy(self.raw)

    def transform_grid(self):
        tr = self.transform
        h = self.grid.h if tr["h"] is None else float(tr["h"])
        return GridSpec(float(tr["t_start"]), float(tr["t_end"]), float(tr["r_max"]), h, float(tr["lam"]))


def _parse_scalar(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def load_config(path=None, overrides=None, sets=()):
    """Read a JSON config, apply top-level ``overrides`` and dotted ``key=value`` sets."""
    doc = {}
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {str(path)!r}: {exc.strerror}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config {str(path)!r} is not valid JSON: {exc.msg}") from exc
        if not isinstance(doc, dict):
            raise ConfigurationError("config must be a JSON object")
    doc = copy.deepcopy(doc)
    for key, value in (overrides or {}).items():
        if value is not None:
            doc[key] = value
    for item in sets:
        if "=" not in item:
            raise ConfigurationError(f"--set expects key=value, got {item!r}", field=item)
        key, text = item.split("=", 1)
        _assign(doc, key.strip().split("."), _parse_scalar(text))
    return ExperimentConfig.from_dict(doc)


def _assign(doc, keys, value):
    node = doc
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigurationError(f"cannot set into non-object {k!r}", field=k)
    node[keys[-1]] = value


# ---------------------------------------------------------------------------
# output helpers


def _clean(obj):
    """JSON-safe copy: numpy scalars unwrapped, non-finite floats become null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(_clean(doc), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def write_manifest(outdir, cfg: ExperimentConfig, command, extra=None):
    doc = {"command": command, "version": __version__, "config": cfg.to_dict()}
    if extra:
        doc.update(extra)
    write_json(Path(outdir) / "manifest.json", doc)


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if x is None:
        return ""
    return str(x)


def _save_field(field: SpacetimeField, outdir, stem):
    write_binary(field, Path(outdir) / f"{stem}.bin")
    write_binary(field, Path(outdir) / f"{stem}_rates.bin", array=field.rates)


def load_run(run_dir) -> SpacetimeField:
    run_dir = Path(run_dir)
    path = run_dir / "field.bin"
    if not path.exists():
        raise ConfigurationError(f"no field snapshot in {str(run_dir)!r}", field="run")
    field = read_binary(path, run_dir / "field_rates.bin")
    return field


def run_config(run_dir):
    manifest = Path(run_dir) / "manifest.json"
    if not manifest.exists():
        raise ConfigurationError(f"no manifest in {str(run_dir)!r}", field="run")
    return ExperimentConfig.from_dict(json.loads(manifest.read_text())["config"])


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(cfg: ExperimentConfig, outdir=None):
    """Forward run: field snapshot, energy series and summary."""
    outdir = Path(cfg.outputs if outdir is None else outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    report = evolve_forward(cfg.data, cfg.grid, cfg.p, nonlinear=cfg.nonlinear,
                            store_every=cfg.store_every, store_r_every=cfg.store_r_every)
    field = report.field
    _save_field(field, outdir, "field")
    energies = energy_series(field, nonlinear=cfg.nonlinear)
    totals = np.array([e.total for e in energies])
    series = DiagnosticsSeries()
    series.extend("energy", field.t, totals)
    bound = decay_bound_monitor(field)
    series.extend("B", bound.t, bound.bound)
    series.to_csv(outdir / "energy.csv")
    e_ref = totals[0] if totals.size else 0.0
    drift = float(np.max(np.abs(totals - e_ref)) / e_ref) if e_ref > 0 else 0.0
    summary = {
        "max_abs_phi": report.max_abs_phi,
        "all_zero": bool(not np.any(field.values)),
        "steps": report.steps,
        "stored_levels": int(field.values.shape[0]),
        "energy_initial": e_ref,
        "energy_drift": drift,
        "energy_within_tolerance": drift <= cfg.energy_tolerance,
        "bound_max": float(bound.bound.max()),
    }
    if not cfg.nonlinear:
        tt, rr = np.meshgrid(field.t, field.r, indexing="ij")
        err = np.abs(field.phi_levels() - exact_linear_solution(cfg.data, tt, rr))
        summary["linear_oracle_error"] = float(err.max())
    write_json(outdir / "summary.json", summary)
    write_manifest(outdir, cfg, "simulate")
    return summary


def cmd_transform(run_dir, cfg: ExperimentConfig | None = None, outdir=None):
    """Push the forward run into the backward cone and evolve the dual problem."""
    field = load_run(run_dir)
    cfg = run_config(run_dir) if cfg is None else cfg
    outdir = Path(Path(run_dir) / "transform" if outdir is None else outdir)
    chart = ConformalChart(field.p)
    tgrid = cfg.transform_grid()
    sl = push_slice(field, chart, tgrid.t_start, tgrid.r)
    dual = evolve_transformed(sl, tgrid, field.p, chart, support_radius=field.support_radius).field
    pushed = push_solution(field, chart, tgrid, strict=False)
    outdir.mkdir(parents=True, exist_ok=True)
    _save_field(dual, outdir, "dual")
    _save_field(pushed, outdir, "push")

    diff = np.abs(dual.phi_levels() - pushed.phi_levels())
    covered = np.isfinite(diff)
    discrepancy = float(diff[covered].max()) if np.any(covered) else math.nan

    energies = energy_series(dual, chart)
    series = DiagnosticsSeries()
    series.extend("pseudo_energy", dual.t, [e.total for e in energies])
    bound = uniform_bound_report(dual)
    series.extend("sup_psi", bound.t, bound.sup)
    series.to_csv(outdir / "energy.csv")

    e0 = energies[0].total
    flux_rows = []
    for t0 in cfg.transform["flux_t0"]:
        rec = lightcone_flux(dual, float(t0), chart, e0=e0)
        flux_rows.append((rec.t0, rec.flux, rec.e0, rec.ratio, rec.potential))
    _write_rows(outdir / "flux.csv", ["t0", "flux", "e0", "ratio", "potential"], flux_rows)

    resid = divergence_identity_residual(dual, chart, edge_margin=float(cfg.transform["edge_margin"]))
    summary = {
        "discrepancy_max": discrepancy,
        "covered_nodes": int(covered.sum()),
        "pseudo_energy_initial": e0,
        "flux_ratio_max": max((row[3] for row in flux_rows), default=math.nan),
        "divergence_residual": resid.max_norm,
        "sup_psi": bound.overall,
        "all_zero": bool(not np.any(dual.values)),
    }
    write_json(outdir / "summary.json", summary)
    write_manifest(outdir, cfg, "transform", {"source": str(run_dir)})
    return summary


def cmd_fit(run_dir, probes=None, windows=None, outdir=None):
    """Tail fits at each (probe, window) pair plus the B(t) series."""
    field = load_run(run_dir)
    cfg = run_config(run_dir)
    probes = cfg.probes if probes is None else [float(x) for x in probes]
    windows = cfg.windows if windows is None else [tuple(float(x) for x in w) for w in windows]
    for lo, hi in windows:
        if lo < field.t[0] - 1e-9 or hi > field.t[-1] + 1e-9:
            raise DomainError(f"window ({lo!r}, {hi!r}) outside the run [{field.t[0]!r}, {field.t[-1]!r}]",
                              point=(lo, hi))
    outdir = Path(Path(run_dir) / "fit" if outdir is None else outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    rows = []
    for r in probes:
        for lo, hi in windows:
            try:
                fit = tail_exponent_fit(field, r, (lo, hi))
            except (DomainError, ValueError) as exc:
                rows.append((r, lo, hi, math.nan, math.nan, math.nan, False, 0, f"failed:{type(exc).__name__}"))
            else:
                rows.append((r, lo, hi, fit.exponent, fit.amplitude, fit.rms_residual, fit.oscillating,
                             fit.n_points, "ok"))
    _write_rows(outdir / "fits.csv", ["r_probe", "t_lo", "t_hi", "exponent", "amplitude", "rms_residual",
                                      "oscillating", "n_points", "status"], rows)
    bound = decay_bound_monitor(field)
    series = DiagnosticsSeries()
    series.extend("B", bound.t, bound.bound)
    series.to_csv(outdir / "bound.csv")
    cfg_out = copy.deepcopy(cfg)
    cfg_out.raw["probes"] = list(probes)
    cfg_out.raw["windows"] = [list(w) for w in windows]
    write_manifest(outdir, cfg_out, "fit", {"source": str(run_dir)})
    return rows


SWEEP_AXES = ("p", "amplitude", "h")


def _instantiate(cfg: ExperimentConfig, axis, value):
    doc = cfg.to_dict()
    if axis == "p":
        doc["p"] = value
    elif axis == "amplitude":
        doc["data"]["amplitude"] = value
    else:
        doc["grid"]["h"] = value
    return ExperimentConfig.from_dict(doc)


def _sweep_task(args):
    doc, axis, value, run_dir = args
    try:
        cfg = _instantiate(ExperimentConfig.from_dict(doc), axis, value)
        summary = cmd_simulate(cfg, run_dir)
        exponent = math.nan
        if cfg.windows and cfg.probes:
            rows = cmd_fit(run_dir, cfg.probes[:1], cfg.windows[:1])
            exponent = rows[0][3]
        return {"value": value, "status": "ok", "error": "", "max_abs_phi": summary["max_abs_phi"],
                "energy_drift": summary["energy_drift"], "exponent": exponent,
                "linear_error": summary.get("linear_oracle_error", math.nan)}
    except (RadwaveError, ValueError, FloatingPointError) as exc:
        return {"value": value, "status": "failed", "error": f"{type(exc).__name__}: {exc}".replace("\n", " "),
                "max_abs_phi": math.nan, "energy_drift": math.nan, "exponent": math.nan,
                "linear_error": math.nan}


def worker_count():
    text = os.environ.get(WORKERS_ENV)
    if text:
        try:
            n = int(text)
        except ValueError as exc:
            raise ConfigurationError(f"{WORKERS_ENV}={text!r} is not an integer", field=WORKERS_ENV) from exc
        if n < 1:
            raise ConfigurationError(f"{WORKERS_ENV} must be positive", field=WORKERS_ENV)
        return n
    return os.cpu_count() or 1


def _self_differences(run_dirs):
    """Max difference of phi between consecutive h runs at the coarse run's nodes."""
    fields = [load_run(d) for d in run_dirs]
    out = []
    for coarse, fine in zip(fields, fields[1:]):
        st = round(coarse.dt / fine.dt)
        sr = round(coarse.dr / fine.dr)
        a = coarse.phi_levels()
        b = fine.phi_levels()[::st, ::sr]
        n_t, n_r = min(a.shape[0], b.shape[0]), min(a.shape[1], b.shape[1])
        out.append(float(np.max(np.abs(a[:n_t, :n_r] - b[:n_t, :n_r]))))
    return out


def cmd_sweep(cfg: ExperimentConfig, axis, values, outdir=None):
    """Independent runs over one axis, aggregated in ascending order of the value."""
    if axis not in SWEEP_AXES:
        raise ConfigurationError(f"sweep axis must be one of {SWEEP_AXES}", field="axis")
    if not values:
        raise ConfigurationError("sweep needs at least one value", field="values")
    values = sorted(float(v) for v in values)
    outdir = Path(cfg.outputs if outdir is None else outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    doc = cfg.to_dict()
    tasks = [(doc, axis, v, str(outdir / f"run_{i:03d}")) for i, v in enumerate(values)]
    workers = min(worker_count(), len(tasks))
    if workers <= 1:
        results = [_sweep_task(t) for t in tasks]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_task, tasks))

    header = ["value", "status", "max_abs_phi", "energy_drift", "exponent", "linear_error", "error"]
    rows = [[r["value"], r["status"], r["max_abs_phi"], r["energy_drift"], r["exponent"], r["linear_error"],
             r["error"]] for r in results]
    if axis == "h":
        header[-1:-1] = ["self_difference", "order"]
        ok = [r["status"] == "ok" for r in results]
        errs = [math.nan] * len(rows)
        if cfg.nonlinear:
            # row i holds the difference between run i and the next finer run i - 1
            for i in range(1, len(rows)):
                if ok[i] and ok[i - 1]:
                    errs[i] = _self_differences([tasks[i][3], tasks[i - 1][3]])[0]
        else:
            errs = [r["linear_error"] for r in results]
        orders = [math.nan] * len(rows)
        for i in range(1, len(rows)):
            e0, e1 = errs[i - 1], errs[i]
            if all(math.isfinite(x) and x > 0 for x in (e0, e1)):
                orders[i] = math.log(e1 / e0) / math.log(values[i] / values[i - 1])
        for row, e, o in zip(rows, errs, orders):
            row[-1:-1] = [e, o]
    _write_rows(outdir / "sweep.csv", header, rows)
    write_manifest(outdir, cfg, "sweep", {"axis": axis, "values": values})
    return [dict(zip(header, row)) for row in rows]


def cmd_validate(only=None, stream=None):
    from .acceptance import run_criteria

    stream = sys.stdout if stream is None else stream
    results = run_criteria(only)
    for res in results:
        print(res.line(), file=stream, flush=True)
    return all(r.passed for r in results)


# ---------------------------------------------------------------------------
# argument parsing


def _floats(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _windows(text):
    out = []
    for part in text.split(";"):
        if part.strip():
            vals = _floats(part)
            if len(vals) != 2:
                raise argparse.ArgumentTypeError(f"window {part!r} needs two numbers lo,hi")
            out.append(vals)
    return out


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigurationError(f"usage: {message}", field="argv")


def build_parser():
    parser = _Parser(prog="radwave", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"radwave {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def config_args(sp):
        sp.add_argument("--config", help="JSON configuration file")
        sp.add_argument("--p", type=float, help="nonlinearity power")
        sp.add_argument("--outputs", help="output directory")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--probes", type=_floats, help="comma-separated probe radii")
        sp.add_argument("--windows", type=_windows, help="fit windows as 'lo,hi;lo,hi'")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a nested field, e.g. data.amplitude=2 (repeatable)")

    sp = sub.add_parser("simulate", help="forward evolution")
    config_args(sp)

    sp = sub.add_parser("transform", help="push-forward and dual evolution of a run")
    sp.add_argument("run", help="run directory produced by simulate")
    config_args(sp)

    sp = sub.add_parser("fit", help="tail exponents and decay bound of a run")
    sp.add_argument("run")
    sp.add_argument("--probes", type=_floats)
    sp.add_argument("--windows", type=_windows)
    sp.add_argument("--outputs")

    sp = sub.add_parser("sweep", help="independent runs over one parameter")
    config_args(sp)
    sp.add_argument("--axis", required=True, choices=SWEEP_AXES)
    sp.add_argument("--values", type=_floats, required=True)

    sp = sub.add_parser("validate", help="run the acceptance criteria")
    sp.add_argument("--only", type=lambda s: [int(x) for x in s.split(",")], help="criterion numbers")
    return parser


def _config_from_args(args):
    overrides = {"p": args.p, "outputs": args.outputs, "seed": args.seed, "probes": args.probes,
                 "windows": args.windows}
    return load_config(args.config, overrides, args.set)


def _exit_code(exc):
    if isinstance(exc, CoverageError):
        return EXIT_COVERAGE
    if isinstance(exc, (BlowUpError, FloatingPointError)):
        return EXIT_NUMERICAL
    return EXIT_CONFIG


def _report(exc, code):
    doc = {"error": type(exc).__name__, "exit_code": code, "message": str(exc).replace("\n", " ")}
    for attr in ("field", "point", "corner", "t", "r"):
        val = getattr(exc, attr, None)
        if val is not None:
            doc[attr] = val
    print(json.dumps(_clean(doc), sort_keys=True), file=sys.stderr)


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        if args.command == "simulate":
            cmd_simulate(_config_from_args(args))
        elif args.command == "transform":
            cfg = _config_from_args(args) if (args.config or args.set or args.p) else None
            cmd_transform(args.run, cfg, args.outputs)
        elif args.command == "fit":
            cmd_fit(args.run, args.probes, args.windows, args.outputs)
        elif args.command == "sweep":
            rows = cmd_sweep(_config_from_args(args), args.axis, args.values)
            if any(r["status"] != "ok" for r in rows):
                return EXIT_NUMERICAL
        elif args.command == "validate":
            return EXIT_OK if cmd_validate(args.only) else EXIT_NUMERICAL
    except (RadwaveError, ValueError, FloatingPointError) as exc:
        code = _exit_code(exc)
        _report(exc, code)
        return code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
