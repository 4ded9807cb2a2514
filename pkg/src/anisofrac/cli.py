"""Config-driven experiment runner.

Experiments are described by INI-style files with dotted sections
([kernel.body]) and ``key = value`` pairs; every experiment writes its
artifacts plus a manifest (config hash, version, wall time) into the output
directory.  Exit codes: 0 success, 2 validation failure, 3 certificate
failure.

Subcommands: ``run <config>``, ``validate <config>``, ``schema``.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .geometry import ConvexBody, surface_density, unit_vector
from .kernels import KernelProfile, make_kernel, validate_kernel
from .fields import GridDomain, GridField
from .energy import (BulkDensity, EnergyModel, FidelityTerm, TransitionFunction,
                     fidelity_energy, limit_energy, nonlocal_energy)
from .analysis import (ExtractionParams, convergence_sweep, extract_crack,
                       slicing_check)
from .scenarios import (JumpStrip2D, OneDElastic, OneDJump, ramp_band_field,
                        random_smooth_field, strip_jump_field)
from .solver import LoadCase, minimize
from . import io as aio

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_VALIDATION = 2
EXIT_CERTIFICATE = 3

KINDS = ("phi_table", "energy", "gamma1d", "recover2d", "extract",
         "slice_check", "minimize", "validate_kernel")

# Schema entries: (section, key) -> (parser, required-for-kinds, choices)
_FLOAT, _INT, _STR, _FLOALIST, _VERTS = "float", "int", "str", "floats", "vertices"

_BODY_KEYS = {
    ("kernel.body", "shape"): (_STR, ("ball", "ellipse", "polygon")),
    ("kernel.body", "dimension"): (_INT, None),
    ("kernel.body", "radius"): (_FLOAT, None),
    ("kernel.body", "semi_axes"): (_FLOALIST, None),
    ("kernel.body", "angle"): (_FLOAT, None),
    ("kernel.body", "vertices"): (_VERTS, None),
}
_KERNEL_KEYS = {
    ("kernel", "profile"): (_STR, ("uniform", "cone", "truncated_gaussian")),
    ("kernel", "sigma"): (_FLOAT, None),
    ("kernel", "eta"): (_FLOAT, None),
}
_MODEL_KEYS = {
    ("model", "W"): (_STR, ("p_power", "isotropic_elastic")),
    ("model", "p"): (_FLOAT, None),
    ("model", "mu"): (_FLOAT, None),
    ("model", "lambda"): (_FLOAT, None),
    ("model", "f"): (_STR, ("min_affine", "exp_saturating")),
    ("model", "alpha"): (_FLOAT, None),
    ("model", "beta"): (_FLOAT, None),
    ("model", "psi_q"): (_FLOAT, None),
}
_DOMAIN_KEYS = {
    ("domain", "bounds_x"): (_FLOALIST, None),
    ("domain", "bounds_y"): (_FLOALIST, None),
    ("grid", "cells"): (_INT, None),
    ("grid", "spacing"): (_FLOAT, None),
}
_OUTPUT_KEYS = {("output", "dir"): (_STR, None)}
_EXP_COMMON = {
    ("experiment", "kind"): (_STR, KINDS),
    ("experiment", "seed"): (_INT, None),
}

_KIND_KEYS = {
    "phi_table": {("experiment", "directions"): (_INT, None)},
    "energy": {("experiment", "eps"): (_FLOAT, None),
               ("experiment", "scenario"): (_STR, ("affine", "jump_strip")),
               ("experiment", "amplitude"): (_FLOAT, None)},
    "gamma1d": {("experiment", "eps_list"): (_FLOALIST, None),
                ("experiment", "scenario"): (_STR, ("jump", "elastic")),
                ("experiment", "cells_per_eps"): (_INT, None),
                ("experiment", "amplitude"): (_FLOAT, None)},
    "recover2d": {("experiment", "eps_list"): (_FLOALIST, None),
                  ("experiment", "normal"): (_STR, ("e1", "e2")),
                  ("experiment", "amplitude"): (_FLOAT, None),
                  ("experiment", "cells_per_eps"): (_INT, None),
                  ("experiment", "height_pad"): (_FLOAT, None)},
    "extract": {("experiment", "eps"): (_FLOAT, None),
                ("experiment", "delta"): (_FLOAT, None),
                ("experiment", "eta"): (_FLOAT, None),
                ("experiment", "levels"): (_INT, None),
                ("experiment", "band_width"): (_FLOAT, None),
                ("experiment", "amplitude"): (_FLOAT, None)},
    "slice_check": {("experiment", "eps"): (_FLOAT, None),
                    ("experiment", "delta"): (_FLOAT, None),
                    ("experiment", "xi_angle"): (_FLOAT, None),
                    ("experiment", "scenario"): (_STR, ("random_smooth", "ramp_band")),
                    ("experiment", "amplitude"): (_FLOAT, None)},
    "minimize": {("experiment", "eps"): (_FLOAT, None),
                 ("load", "edge"): (_STR, ("left", "right", "bottom", "top")),
                 ("load", "displacement"): (_FLOALIST, None),
                 ("load", "penalty"): (_FLOAT, None),
                 ("load", "max_iter"): (_INT, None),
                 ("load", "grad_tol"): (_FLOAT, None),
                 ("experiment", "init"): (_STR, ("affine", "ramp_seed", "zero"))},
    "validate_kernel": {("experiment", "eta"): (_FLOAT, None)},
}

_REQUIRED = {
    "phi_table": [("kernel.body", "shape"), ("output", "dir")],
    "energy": [("domain", "bounds_x"), ("domain", "bounds_y"), ("grid", "cells"),
               ("kernel", "profile"), ("kernel.body", "shape"), ("model", "f"),
               ("experiment", "eps"), ("experiment", "scenario"), ("output", "dir")],
    "gamma1d": [("model", "f"), ("experiment", "eps_list"),
                ("experiment", "scenario"), ("output", "dir")],
    "recover2d": [("kernel", "profile"), ("kernel.body", "shape"), ("model", "f"),
                  ("experiment", "eps_list"), ("experiment", "normal"),
                  ("output", "dir")],
    "extract": [("domain", "bounds_x"), ("domain", "bounds_y"), ("grid", "cells"),
                ("kernel", "profile"), ("kernel.body", "shape"), ("model", "f"),
                ("experiment", "eps"), ("output", "dir")],
    "slice_check": [("domain", "bounds_x"), ("domain", "bounds_y"), ("grid", "cells"),
                    ("kernel", "profile"), ("kernel.body", "shape"), ("model", "f"),
                    ("experiment", "eps"), ("output", "dir")],
    "minimize": [("domain", "bounds_x"), ("grid", "cells"), ("kernel", "profile"),
                 ("kernel.body", "shape"), ("model", "f"), ("experiment", "eps"),
                 ("load", "edge"), ("load", "displacement"), ("output", "dir")],
    "validate_kernel": [("kernel", "profile"), ("kernel.body", "shape"),
                        ("output", "dir")],
}


class ConfigError(Exception):
    pass


def _schema_for(kind: str) -> dict:
    keys = {}
    keys.update(_EXP_COMMON)
    keys.update(_OUTPUT_KEYS)
    keys.update(_BODY_KEYS)
    keys.update(_KERNEL_KEYS)
    keys.update(_MODEL_KEYS)
    keys.update(_DOMAIN_KEYS)
    keys.update(_KIND_KEYS[kind])
    return keys


def _parse_value(raw: str, typ: str, choices, path: str):
    raw = raw.strip()
    try:
        if typ == _FLOAT:
            return float(raw)
        if typ == _INT:
            return int(raw)
        if typ == _FLOALIST:
            return [float(tok) for tok in raw.replace(";", ",").split(",") if tok.strip()]
        if typ == _VERTS:
            pairs = [tok for tok in raw.split(";") if tok.strip()]
            return [[float(c) for c in tok.split(",")] for tok in pairs]
    except ValueError as exc:
        raise ConfigError(f"bad value for {path}: {exc}") from None
    if choices is not None and raw not in choices:
        raise ConfigError(f"bad value for {path}: {raw!r} not in {sorted(choices)}")
    return raw


def load_config(path) -> dict:
    """Parse and validate a config file into a nested {section: {key: value}}."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config {path}")
    raw = {sec: dict(parser.items(sec)) for sec in parser.sections()}
    kind = raw.get("experiment", {}).get("kind")
    if kind not in KINDS:
        raise ConfigError(f"experiment.kind must be one of {KINDS}, got {kind!r}")
    schema = _schema_for(kind)
    cfg = {}
    for sec, items in raw.items():
        for key, val in items.items():
            if (sec, key) not in schema:
                raise ConfigError(f"unknown key {sec}.{key}")
            typ, choices = schema[(sec, key)]
            cfg.setdefault(sec, {})[key] = _parse_value(val, typ, choices, f"{sec}.{key}")
    for sec, key in _REQUIRED[kind]:
        if key not in cfg.get(sec, {}):
            raise ConfigError(f"missing key {sec}.{key}")
    return cfg


def _get(cfg, sec, key, default=None):
    return cfg.get(sec, {}).get(key, default)


def build_body(cfg, dimension: int = 2) -> ConvexBody:
    sec = cfg.get("kernel.body", {})
    dim = int(sec.get("dimension", dimension))
    shape = sec["shape"]
    if shape == "ball":
        return ConvexBody.ball(sec.get("radius", 1.0), dimension=dim)
    if shape == "ellipse":
        axes = sec.get("semi_axes", [1.0, 1.0])
        return ConvexBody.ellipse(axes[0], axes[1], sec.get("angle", 0.0))
    return ConvexBody.polygon(sec.get("vertices"))


def build_kernel(cfg, dimension: int = 2):
    body = build_body(cfg, dimension)
    prof = KernelProfile(_get(cfg, "kernel", "profile", "uniform"),
                         sigma=_get(cfg, "kernel", "sigma", 0.5))
    return make_kernel(body, prof)


def build_model(cfg, dimension: int = 2) -> EnergyModel:
    kernel = build_kernel(cfg, dimension)
    W = BulkDensity(_get(cfg, "model", "W", "p_power"),
                    p=_get(cfg, "model", "p", 2.0),
                    mu=_get(cfg, "model", "mu", 1.0),
                    lam=_get(cfg, "model", "lambda", 0.0))
    f = TransitionFunction(_get(cfg, "model", "f", "min_affine"),
                           alpha=_get(cfg, "model", "alpha", 1.0),
                           beta=_get(cfg, "model", "beta", 1.0))
    psi_q = _get(cfg, "model", "psi_q")
    psi = FidelityTerm(psi_q) if psi_q is not None else None
    return EnergyModel(W, f, kernel, psi)


def build_grid(cfg) -> GridDomain:
    bx = _get(cfg, "domain", "bounds_x")
    by = _get(cfg, "domain", "bounds_y")
    bounds = [bx] if by is None else [bx, by]
    cells = _get(cfg, "grid", "cells")
    spacing = _get(cfg, "grid", "spacing")
    if cells is not None:
        return GridDomain.from_bounds(bounds, cells=cells)
    return GridDomain.from_bounds(bounds, spacing=spacing)


# ---------------------------------------------------------------------------
# Experiment implementations
# ---------------------------------------------------------------------------

def _run_phi_table(cfg, outdir):
    body = build_body(cfg)
    m = _get(cfg, "experiment", "directions", 256)
    angles = np.arange(m) * 2.0 * np.pi / m
    rows = [(a, float(surface_density(body, unit_vector(a)))) for a in angles]
    aio.write_csv(outdir / "phi_table.csv", ["angle", "phi_rho"], rows)
    return EXIT_OK, ["phi_table.csv"]


def _run_energy(cfg, outdir):
    grid = build_grid(cfg)
    model = build_model(cfg, grid.dimension)
    eps = _get(cfg, "experiment", "eps")
    amp = _get(cfg, "experiment", "amplitude", 1.0)
    scen = _get(cfg, "experiment", "scenario")
    bounds = list(zip(grid.lo, grid.hi))
    if scen == "affine":
        mat = amp * np.array([[0.3, 0.1], [0.1, -0.2]])
        u = GridField.from_function(grid, lambda p: p @ mat.T)
        from .fields import Piece, PiecewiseSmoothField
        pw = PiecewiseSmoothField([Piece(lambda p: np.ones(len(p), bool),
                                         lambda p: p @ mat.T,
                                         lambda p: np.broadcast_to(mat, (len(p), 2, 2)))],
                                  jump=None)
    else:
        pw = strip_jump_field(amp, length=grid.hi[0] - grid.lo[0])
        from .fields import rasterize
        u = rasterize(pw, grid)
    F = nonlocal_energy(model, u, eps)
    lim = limit_energy(model, pw, bounds)
    report = {"F_eps": F, "bulk_limit": lim.bulk, "surface_limit": lim.surface,
              "fidelity": lim.fidelity}
    if model.psi is not None:
        report["G_eps"] = fidelity_energy(model, u, eps)
    (outdir / "energy_report.json").write_text(json.dumps(report, indent=2))
    return EXIT_OK, ["energy_report.json"]


def _sweep_artifacts(report, outdir):
    aio.write_csv(outdir / "sweep.csv",
                  ["eps", "h_grid", "F_eps", "limit_target", "rel_gap"],
                  ([r["eps"], r["h_grid"], r["F_eps"], r["limit_target"], r["rel_gap"]]
                   for r in report.rows()))
    summary = {"extrapolated": report.extrapolated, "target": report.target,
               "rel_gap": report.rel_gap, "eps": report.eps_values,
               "energies": report.energies}
    (outdir / "summary.json").write_text(json.dumps(summary, indent=2))
    return ["sweep.csv", "summary.json"]


def _run_gamma1d(cfg, outdir):
    model = build_model(cfg, dimension=1)
    kind = _get(cfg, "experiment", "scenario")
    cells = _get(cfg, "experiment", "cells_per_eps", 64)
    amp = _get(cfg, "experiment", "amplitude", 1.0)
    scen = OneDJump(cells_per_eps=cells, amplitude=amp) if kind == "jump" \
        else OneDElastic(cells_per_eps=cells, slope=amp)
    report = convergence_sweep(model, scen, _get(cfg, "experiment", "eps_list"))
    return EXIT_OK, _sweep_artifacts(report, outdir)


def _run_recover2d(cfg, outdir):
    model = build_model(cfg)
    axis = 1 if _get(cfg, "experiment", "normal", "e2") == "e2" else 0
    scen = JumpStrip2D(model.kernel.body, axis=axis,
                       amplitude=_get(cfg, "experiment", "amplitude", 1.0),
                       cells_per_eps=_get(cfg, "experiment", "cells_per_eps", 32),
                       height_pad=_get(cfg, "experiment", "height_pad", 1.25))
    report = convergence_sweep(model, scen, _get(cfg, "experiment", "eps_list"))
    return EXIT_OK, _sweep_artifacts(report, outdir)


def _run_extract(cfg, outdir):
    grid = build_grid(cfg)
    model = build_model(cfg, grid.dimension)
    eps = _get(cfg, "experiment", "eps")
    params = ExtractionParams(delta=_get(cfg, "experiment", "delta", 0.3),
                              eta=_get(cfg, "experiment", "eta", 0.3),
                              levels=_get(cfg, "experiment", "levels", 16))
    width = _get(cfg, "experiment", "band_width", eps ** 3)
    u = ramp_band_field(grid, width, _get(cfg, "experiment", "amplitude", 1.0))
    result = extract_crack(model, u, eps, params)
    aio.write_pgm(outdir / "threshold_mask.pgm", result.threshold_mask)
    aio.write_pgm(outdir / "dilated_mask.pgm", result.dilated_mask)
    report = {"certified": result.certified, "chosen_level": result.chosen_level,
              "perimeter_estimate": result.perimeter_estimate,
              "F_eps": result.energy, "constants": result.constants}
    (outdir / "extract_report.json").write_text(json.dumps(report, indent=2))
    arts = ["threshold_mask.pgm", "dilated_mask.pgm", "extract_report.json"]
    return (EXIT_OK if result.all_certified else EXIT_CERTIFICATE), arts


def _run_slice_check(cfg, outdir):
    grid = build_grid(cfg)
    model = build_model(cfg, grid.dimension)
    eps = _get(cfg, "experiment", "eps")
    seed = _get(cfg, "experiment", "seed", 0)
    if _get(cfg, "experiment", "scenario", "random_smooth") == "random_smooth":
        u = random_smooth_field(grid, seed, scale=_get(cfg, "experiment", "amplitude", 1.0))
    else:
        u = ramp_band_field(grid, eps ** 3, _get(cfg, "experiment", "amplitude", 1.0))
    xi = unit_vector(_get(cfg, "experiment", "xi_angle", 0.0))
    report = slicing_check(model, u, eps, xi, delta=_get(cfg, "experiment", "delta", 0.3))
    (outdir / "slice_report.json").write_text(json.dumps(report, indent=2))
    return (EXIT_OK if report["pass"] else EXIT_CERTIFICATE), ["slice_report.json"]


def _run_minimize(cfg, outdir):
    grid = build_grid(cfg)
    model = build_model(cfg, grid.dimension)
    eps = _get(cfg, "experiment", "eps")
    seed = _get(cfg, "experiment", "seed", 0)
    disp = _get(cfg, "load", "displacement")
    load = LoadCase.edge(grid, _get(cfg, "load", "edge"), disp,
                         penalty=_get(cfg, "load", "penalty"))
    init_kind = _get(cfg, "experiment", "init", "affine")
    init = _initial_field(grid, load, init_kind, seed)
    u, rep = minimize(model, eps, load, init,
                      max_iter=_get(cfg, "load", "max_iter", 2000),
                      grad_tol=_get(cfg, "load", "grad_tol", 1e-6))
    aio.write_csv(outdir / "iterations.csv", ["iter", "energy", "grad_norm"],
                  ([i, e, gn] for i, (e, gn) in
                   enumerate(zip(rep.energies, rep.grad_norms))))
    aio.write_field_csv(outdir / "final_field.csv", u)
    report = {"iterations": rep.iterations, "energy": rep.energy,
              "converged": rep.converged, "wall_time": rep.wall_time}
    (outdir / "solve_report.json").write_text(json.dumps(report, indent=2))
    return EXIT_OK, ["iterations.csv", "final_field.csv", "solve_report.json"]


def _initial_field(grid, load, kind, seed):
    """Documented seeds: affine interpolation of the boundary data, a steep
    centered ramp between the boundary values, or zero."""
    ncomp = grid.dimension
    vals = np.zeros(grid.shape + (ncomp,))
    axis = 0
    x = grid.meshgrid()[axis]
    lo, hi = grid.lo[axis], grid.hi[axis]
    left = load.values[tuple([0] + [slice(None)] * (grid.dimension - 1))]
    right = load.values[tuple([-1] + [slice(None)] * (grid.dimension - 1))]
    left = np.mean(np.atleast_2d(left), axis=0)
    right = np.mean(np.atleast_2d(right), axis=0)
    t = ((x - lo) / (hi - lo))[..., None]
    if kind == "affine":
        vals = (1 - t) * left + t * right
    elif kind == "ramp_seed":
        # one-cell ramp: saturated windows have vanishing gradient, so the
        # seed width survives descent and must not pad the crack band
        width = grid.spacing
        mid = 0.5 * (lo + hi)
        s = np.clip((x - mid) / width + 0.5, 0.0, 1.0)[..., None]
        vals = (1 - s) * left + s * right
        rng = np.random.default_rng(seed)
        vals = vals + 1e-3 * rng.standard_normal(vals.shape)
    return GridField(grid, vals)


def _run_validate_kernel(cfg, outdir):
    kernel = build_kernel(cfg)
    report = validate_kernel(kernel, eta=_get(cfg, "experiment", "eta"))
    (outdir / "kernel_report.json").write_text(json.dumps(report, indent=2))
    ok = report["n1"]["pass"] and report["ball_minorant"]["positive"]
    return (EXIT_OK if ok else EXIT_VALIDATION), ["kernel_report.json"]


_RUNNERS = {
    "phi_table": _run_phi_table,
    "energy": _run_energy,
    "gamma1d": _run_gamma1d,
    "recover2d": _run_recover2d,
    "extract": _run_extract,
    "slice_check": _run_slice_check,
    "minimize": _run_minimize,
    "validate_kernel": _run_validate_kernel,
}


def run_experiment(config_path) -> int:
    config_path = Path(config_path)
    t0 = time.time()
    manifest = {"version": __version__, "config": str(config_path),
                "exit_code": EXIT_ERROR, "artifacts": []}
    outdir = None
    try:
        manifest["config_sha256"] = hashlib.sha256(config_path.read_bytes()).hexdigest()
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        cfg = load_config(config_path)
        kind = cfg["experiment"]["kind"]
        manifest["kind"] = kind
        outdir = Path(_get(cfg, "output", "dir", "out"))
        outdir.mkdir(parents=True, exist_ok=True)
        seed = _get(cfg, "experiment", "seed", 0)
        np.random.seed(seed % 2 ** 32)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            code, artifacts = _RUNNERS[kind](cfg, outdir)
        manifest["exit_code"] = code
        manifest["artifacts"] = artifacts
        return code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        manifest["error"] = str(exc)
        manifest["exit_code"] = EXIT_VALIDATION
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001 - manifest must record the failure
        print(f"error: {exc}", file=sys.stderr)
        manifest["error"] = str(exc)
        manifest["exit_code"] = EXIT_ERROR
        return EXIT_ERROR
    finally:
        manifest["wall_time_s"] = time.time() - t0
        if outdir is None:
            outdir = Path("out")
        try:
            outdir.mkdir(parents=True, exist_ok=True)
            (outdir / "manifest.json").write_text(json.dumps(manifest, indent=2))
        except OSError:
            pass


def print_schema() -> None:
    for kind in KINDS:
        print(f"[{kind}]")
        schema = _schema_for(kind)
        required = set(_REQUIRED[kind])
        for (sec, key), (typ, choices) in sorted(schema.items()):
            extra = f" choices={'|'.join(choices)}" if choices else ""
            req = " (required)" if (sec, key) in required else ""
            print(f"  {sec}.{key}: {typ}{extra}{req}")
        print()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="anisofrac",
                                     description="non-local fracture-energy experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="run an experiment config")
    run_p.add_argument("config")
    val_p = sub.add_parser("validate", help="validate a config without running")
    val_p.add_argument("config")
    sub.add_parser("schema", help="print the config schema")
    args = parser.parse_args(argv)

    if args.command == "schema":
        print_schema()
        return EXIT_OK
    if args.command == "validate":
        try:
            load_config(args.config)
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_VALIDATION
        print("config ok")
        return EXIT_OK
    return run_experiment(args.config)


if __name__ == "__main__":
    sys.exit(main())
