"""Command-line interface.

Subcommands ``phantom``, ``forward``, ``recon``, ``singscan`` and ``verify``.
Settings come from built-in defaults, then an optional ``--config`` file,
then command-line flags.  Every run writes ``manifest.json`` with the fully
resolved settings.

Exit codes: 0 success, 2 usage error (bad flags, unknown names or config
keys), 3 invalid input, 4 solver failure.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
import time
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__, io, verification
from .forward import Projector
from .grid import PixelGrid
from .phantoms import PHANTOMS, PhantomSpec, add_noise, default_n_det, make_geometry, make_phantom
from .regularizers import AdmissibleSet
from .solvers import SolverConfig, SolverError, joint_reconstruct, multibang_proportion

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_SOLVER = 0, 2, 3, 4

_SOLVER_TYPES = {f.name: f.type for f in fields(SolverConfig) if f.name != "admissible"}
_TYPE_NAMES = {"float": float, "int": int, "bool": bool, "str": str}

CONFIG_SCHEMA = {
    "run": {"seed": int, "out": str},
    "phantom": {"name": str, "grid": int},
    "geometry": {"projections": int, "n_det": int, "full_circle": bool, "noise": float},
    "solver": {"levels": tuple, **{k: _TYPE_NAMES[v] for k, v in _SOLVER_TYPES.items()}},
    "scan": {"checks": str, "omega": float, "n_s": int, "n_omega": int},
}

DEFAULTS = {
    "run": {"seed": 0, "out": "."},
    "phantom": {"name": "binary_shapes", "grid": 64},
    "geometry": {"projections": 12, "n_det": 0, "full_circle": False, "noise": 0.0},
    "solver": {},
    "scan": {"checks": "tangent,corner,generic,flat,recovery", "omega": 0.7,
             "n_s": 201, "n_omega": 48},
}

SCAN_KINDS = ("tangent", "corner", "generic", "flat", "recovery")

log = logging.getLogger("mbspect")


class InvalidInput(ValueError):
    """Raised for inputs that parse but cannot be used."""


class UsageError(ValueError):
    """Raised for unknown names or options given in a config file or flag."""


def _resolve(args) -> dict:
    cfg = {k: dict(v) for k, v in DEFAULTS.items()}
    if args.config:
        for section, values in io.read_config(args.config, CONFIG_SCHEMA).items():
            cfg[section].update(values)
    flag_map = {
        "seed": ("run", "seed"), "out": ("run", "out"), "grid": ("phantom", "grid"),
        "projections": ("geometry", "projections"), "noise": ("geometry", "noise"),
        "name": ("phantom", "name"),
    }
    for flag, (section, key) in flag_map.items():
        value = getattr(args, flag, None)
        if value is not None:
            cfg[section][key] = value
    if getattr(args, "full_circle", False):
        cfg["geometry"]["full_circle"] = True
    if getattr(args, "checks", None):
        cfg["scan"]["checks"] = args.checks
    return cfg


def _outdir(cfg) -> Path:
    out = Path(cfg["run"]["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _spec(cfg) -> PhantomSpec:
    name = cfg["phantom"]["name"]
    if name not in PHANTOMS:
        raise UsageError(f"unknown phantom {name!r}; choose from {sorted(PHANTOMS)}")
    return PhantomSpec(name)


def _grid(M) -> PixelGrid:
    if M < 2:
        raise InvalidInput("grid must have at least 2 pixels per side")
    return PixelGrid.unit_square(M)


def _manifest(out: Path, command: str, cfg: dict, extra: dict | None = None):
    payload = {"command": command, "version": __version__, "config": cfg}
    payload.update(extra or {})
    io.write_manifest(out / "manifest.json", payload)


def _write_image(out: Path, stem: str, values, M: int, vmin=None, vmax=None):
    io.write_image_csv(out / f"{stem}.csv", values, M)
    io.write_pgm(out / f"{stem}.pgm", values, M, vmin, vmax)


# -- subcommands ---------------------------------------------------------------


def cmd_phantom(args, cfg) -> int:
    spec = _spec(cfg)
    grid = _grid(cfg["phantom"]["grid"])
    a, f = make_phantom(spec, grid)
    out = _outdir(cfg)
    A = spec.admissible
    _write_image(out, "a", a, grid.M, A.lo, A.hi)
    _write_image(out, "f", f, grid.M)
    _manifest(out, "phantom", cfg, {"admissible": list(A.levels)})
    print(f"phantom {spec.name} on {grid.M}x{grid.M} written to {out}")
    return EXIT_OK


def _load_pair(args, cfg):
    if args.a or args.f:
        if not (args.a and args.f):
            raise InvalidInput("--a and --f must be given together")
        a, f = io.read_image_csv(args.a), io.read_image_csv(args.f)
        if a.size != f.size:
            raise InvalidInput(f"a has {a.size} pixels but f has {f.size}")
        return a, f, PixelGrid.unit_square(math.isqrt(a.size))
    grid = _grid(cfg["phantom"]["grid"])
    a, f = make_phantom(_spec(cfg), grid)
    return a, f, grid


def cmd_forward(args, cfg) -> int:
    a, f, grid = _load_pair(args, cfg)
    g = cfg["geometry"]
    n_det = g["n_det"] or default_n_det(grid)
    if g["projections"] < 1 or n_det < 2:
        raise InvalidInput("need at least one projection and two detector offsets")
    seed = cfg["run"]["seed"]
    geom = make_geometry(g["projections"], n_det, grid, seed, g["full_circle"])
    d = Projector(grid, geom).sinogram(a, f)
    if g["noise"] < 0:
        raise InvalidInput("noise level must be non-negative")
    d = add_noise(d, g["noise"], seed)
    out = _outdir(cfg)
    io.write_sinogram_csv(out / "sinogram.csv", d)
    _manifest(out, "forward", cfg, {"n_det": n_det, "grid": grid.M, "rays": geom.n_rays})
    print(f"{geom.n_rays} rays written to {out / 'sinogram.csv'}")
    return EXIT_OK


def _solver_config(cfg, levels) -> SolverConfig:
    params = dict(cfg["solver"])
    params.pop("levels", None)
    try:
        return SolverConfig(admissible=AdmissibleSet(levels), **params)
    except ValueError as exc:
        raise InvalidInput(str(exc)) from exc


def _confusion(a, truth, A: AdmissibleSet) -> dict:
    rec = A.array[np.argmin(np.abs(a[:, None] - A.array[None, :]), axis=1)]
    out = {}
    for i, lt in enumerate(A.levels):
        for j, lr in enumerate(A.levels):
            out[f"true_{i}_as_{j}"] = int(np.sum((truth == lt) & (rec == lr)))
    return out


def cmd_recon(args, cfg) -> int:
    d = io.read_sinogram_csv(args.sinogram)
    grid = _grid(cfg["phantom"]["grid"])
    levels = cfg["solver"].get("levels") or PHANTOMS.get(cfg["phantom"]["name"]) or (0.0, 1.0)
    scfg = _solver_config(cfg, levels)
    truth = None
    if args.truth:
        truth = io.read_image_csv(args.truth)
        if truth.size != grid.size:
            raise InvalidInput(f"truth has {truth.size} pixels, grid has {grid.size}")
    proj = Projector(grid, d.geometry)
    t0 = time.perf_counter()
    state = joint_reconstruct(d, proj, scfg)
    elapsed = time.perf_counter() - t0
    out = _outdir(cfg)
    A = scfg.admissible
    _write_image(out, "a_rec", state.a, grid.M, A.lo, A.hi)
    _write_image(out, "f_rec", state.f, grid.M)
    io.write_history_csv(out / "history.csv", state.history)
    last = state.history[-1]
    summary = {"outer_iterations": state.k, "converged": str(state.converged),
               "objective": last.objective,
               "mb_proportion": multibang_proportion(state.a, A, 0.0)}
    if truth is not None:
        nearest = A.nearest(state.a)
        summary["misclassification"] = float(np.mean(nearest != A.nearest(truth)))
        summary.update(_confusion(state.a, A.nearest(truth), A))
    io.write_report_csv(out / "summary.csv", [summary], list(summary))
    _manifest(out, "recon", cfg, {"solver": scfg.to_dict(), "sinogram": str(args.sinogram),
                                  "truth": args.truth})
    for k, v in summary.items():
        print(f"{k}: {v}")
    log.info("reconstruction took %.1f s", elapsed)
    return EXIT_OK


_REPORT_COLUMNS = ("check", "index", "measured", "predicted", "ratio", "exponent", "status")


def _scan_rows(kind, records, out: Path):
    rows = []
    for i, rec in enumerate(records):
        if "scan" in rec:
            io.write_scan_csv(out / f"scan_{kind}_{i}.csv", rec["scan"].offsets, rec["scan"].values)
        if kind == "tangent":
            ok = abs(rec["exponent"] + 0.5) <= 0.05 and abs(rec["ratio"] - 1) <= 0.03
            rows.append((rec["measured"], rec["predicted"], rec["ratio"], rec["exponent"], ok))
        elif kind == "corner":
            ok = abs(rec["ratio"] - 1) <= 0.02
            exp = min(rec["exponent_plus"], rec["exponent_minus"])
            rows.append((rec["measured"], rec["predicted"], rec["ratio"], exp, ok))
        elif kind == "generic":
            rows.append((rec["plus"], rec["minus"], math.nan, math.nan, rec["gap"] <= 1e-4))
        elif kind == "flat":
            rows.append((rec["jump"], math.nan, math.nan, math.nan, rec["detected"]))
        else:
            ok = max(rec.get("radius_error", 1), rec.get("center_error", 1)) <= 0.02
            rows.append((rec["radius"], math.nan, math.nan, math.nan, ok))
    return [dict(zip(_REPORT_COLUMNS, (kind, i, *r[:4], "pass" if r[4] else "fail")))
            for i, r in enumerate(rows)]


def cmd_singscan(args, cfg) -> int:
    sc = cfg["scan"]
    kinds = [k.strip() for k in sc["checks"].split(",") if k.strip()]
    bad = sorted(set(kinds) - set(SCAN_KINDS))
    if bad:
        raise UsageError(f"unknown checks {bad}; choose from {list(SCAN_KINDS)}")
    out = _outdir(cfg)
    report = []
    for kind in kinds:
        if kind == "tangent":
            recs = verification.tangent_records(sc["omega"])
        elif kind == "corner":
            recs = verification.corner_records()
        elif kind == "generic":
            recs = verification.generic_records()
        elif kind == "flat":
            recs = verification.flat_records()
            # the last case is a control ray that must not show a jump
            recs[-1]["detected"] = not recs[-1]["detected"]
        else:
            recs, sets = verification.recovery_records(sc["n_s"], sc["n_omega"])
            io.write_boundary_csv(out / "boundaries.csv", [s.points for s in sets])
        report.extend(_scan_rows(kind, recs, out))
    io.write_report_csv(out / "report.csv", report, _REPORT_COLUMNS)
    _manifest(out, "singscan", cfg)
    for row in report:
        print(f"{row['check']:>8} {row['index']}: measured={row['measured']:.6g} "
              f"predicted={row['predicted']:.6g} exponent={row['exponent']:.4g} {row['status']}")
    return EXIT_OK if all(r["status"] == "pass" for r in report) else EXIT_INVALID


def cmd_verify(args, cfg) -> int:
    """Quick property checks of the library; exits 3 if any fails."""
    from .selfcheck import run_checks

    results = run_checks(seed=cfg["run"]["seed"])
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    out = _outdir(cfg)
    io.write_report_csv(out / "verify.csv",
                        [{"check": n, "status": "pass" if ok else "fail", "detail": d}
                         for n, ok, d in results], ("check", "status", "detail"))
    _manifest(out, "verify", cfg)
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_INVALID


# -- argument parsing ----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="sectioned key = value settings file")
    common.add_argument("--seed", type=int, help="seed for angle jitter and noise")
    common.add_argument("--out", help="output directory")
    common.add_argument("--grid", type=int, help="pixels per side")
    common.add_argument("--projections", type=int, help="number of projection angles")
    common.add_argument("--noise", type=float, help="noise level relative to RMS of the data")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="mbspect", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("phantom", parents=[common], help="rasterize a phantom")
    sp.add_argument("--name", help=f"one of {sorted(PHANTOMS)}")

    sp = sub.add_parser("forward", parents=[common], help="compute a sinogram")
    sp.add_argument("--name", help="phantom to project (ignored with --a/--f)")
    sp.add_argument("--a", help="attenuation image CSV")
    sp.add_argument("--f", help="source image CSV")
    sp.add_argument("--full-circle", action="store_true", help="angles over [0, 2 pi)")

    sp = sub.add_parser("recon", parents=[common], help="joint reconstruction")
    sp.add_argument("--sinogram", required=True, help="sinogram CSV")
    sp.add_argument("--truth", help="true attenuation CSV for misclassification counts")
    sp.add_argument("--name", help="phantom whose admissible set to use by default")

    sp = sub.add_parser("singscan", parents=[common], help="singularity checks")
    sp.add_argument("--checks", help=f"comma list from {','.join(SCAN_KINDS)}")

    sub.add_parser("verify", parents=[common], help="run quick property checks")
    return p


COMMANDS = {"phantom": cmd_phantom, "forward": cmd_forward, "recon": cmd_recon,
            "singscan": cmd_singscan, "verify": cmd_verify}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _resolve(args)
        return COMMANDS[args.command](args, cfg)
    except (UsageError, io.ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SolverError as exc:
        print(f"error: solver failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
