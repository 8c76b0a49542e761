"""Command line front-end: ``cornerreg <command> GEOMETRY ...``.

Every command prints one JSON report (keys sorted, so repeated runs are
byte-identical) and exits 0.  Failures print a JSON error object on stderr and
exit with a code naming the failure class:

====  =====================================================
2     bad command line (argparse)
3     geometry or document schema violation
4     missing data (weights, spectra, unknown ids)
5     solver failure (eigensolver cap, non-finite norms)
6     request outside the supported scope
====  =====================================================

Geometries are JSON files or bundled names (square, lshape, slit_square,
cube, thick_l, fichera).  Fields are given as ``"name key=value ..."`` with
names ``corner_singular`` and ``monomial``.  ``CORNERREG_THREADS`` caps the
BLAS thread pools.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from importlib import metadata

from threadpoolctl import threadpool_limits

from . import fields, mesher, norms, spherical, weights
from .geometry import GeometryError, load_geometry
from .spectra2d import b_threshold, corner_spectrum_laplace

EXIT_SCHEMA = 3
EXIT_MISSING = 4
EXIT_SOLVER = 5
EXIT_UNSUPPORTED = 6


class CliError(Exception):
    def __init__(self, code: int, kind: str, message: str):
        super().__init__(message)
        self.code, self.kind = code, kind


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def _clean(obj):
    """JSON-safe copy: non-finite floats become strings, tuples become lists."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else repr(obj)
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if hasattr(obj, "item") and not isinstance(obj, (str, bytes)):
        return _clean(obj.item())
    return obj


def _dump(doc) -> str:
    return json.dumps(_clean(doc), sort_keys=True, indent=1)


def _report(command: str, geom, params: dict, body: dict) -> dict:
    return {
        "command": command,
        "geometry": geom.summary(),
        "provenance": {"tool": "cornerreg", "version": _version(), "parameters": params},
        "result": body,
    }


# ----------------------------------------------------------------------------
# field specifications
# ----------------------------------------------------------------------------

def parse_field(spec: str, geom) -> fields.DifferentiableField:
    """Build a field from ``"name key=value ..."``.

    ``corner_singular``: keys ``k`` (default 1), ``corner`` (default: largest
    opening), ``amplitude``.  ``monomial``: exponents ``a``, ``b`` about the
    origin and a coefficient ``c``.
    """
    parts = spec.split()
    if not parts:
        raise CliError(EXIT_SCHEMA, "field", "empty field specification")
    name, kv = parts[0], {}
    for p in parts[1:]:
        if "=" not in p:
            raise CliError(EXIT_SCHEMA, "field", f"expected key=value, got {p!r}")
        k, v = p.split("=", 1)
        kv[k] = v
    try:
        if name == "corner_singular":
            if geom.dimension != 2:
                raise CliError(EXIT_UNSUPPORTED, "field", "corner_singular needs a 2D geometry")
            if "corner" in kv:
                corner = geom.corner(int(kv.pop("corner")))
            else:
                corner = max(geom.corners, key=lambda c: (c.opening, -c.id))
            k = int(kv.pop("k", 1))
            amp = float(kv.pop("amplitude", 1.0))
            out = fields.corner_singular(corner, k=k, amplitude=amp)
        elif name == "monomial":
            a, b = int(kv.pop("a", 0)), int(kv.pop("b", 0))
            c = float(kv.pop("c", 1.0))
            out = fields.Polynomial({(a, b): c}, dim=2)
        else:
            raise CliError(EXIT_SCHEMA, "field", f"unknown field {name!r}; use corner_singular or monomial")
    except fields.CriticalExponentError as exc:
        raise CliError(EXIT_UNSUPPORTED, "critical", str(exc)) from None
    except GeometryError as exc:
        raise CliError(EXIT_MISSING, "missing", str(exc)) from None
    except ValueError as exc:
        raise CliError(EXIT_SCHEMA, "field", str(exc)) from None
    if kv:
        raise CliError(EXIT_SCHEMA, "field", f"unused field parameters {sorted(kv)}")
    return out


def _norm_weights(args, geom):
    """Scalar ``--beta`` with ``--beta-corner`` overrides, or a weights file."""
    if args.weights:
        return weights.load_weights(args.weights, geom)
    if args.beta is None:
        raise CliError(EXIT_MISSING, "missing", "give --beta or --weights")
    if not args.beta_corner:
        return args.beta
    vals = [args.beta] * len(geom.corners)
    for item in args.beta_corner:
        try:
            k, v = item.split("=", 1)
            vals[int(k)] = float(v)
        except (ValueError, IndexError):
            raise CliError(EXIT_MISSING, "missing", f"bad corner weight {item!r}") from None
    return weights.WeightMultiExponent(tuple(vals), ())


def _need_2d(geom, what):
    if geom.dimension != 2:
        raise CliError(EXIT_UNSUPPORTED, "scope", f"{what} is available for 2D geometries only")


# ----------------------------------------------------------------------------
# commands
# ----------------------------------------------------------------------------

def cmd_spectra(args, geom) -> dict:
    rows = []
    ents = geom.corners if geom.dimension == 2 else geom.edges
    for ent in ents:
        bc = ent.bc if args.bc == "inherit" else (args.bc, args.bc)
        spec = corner_spectrum_laplace(ent.opening, bc, args.window)
        try:
            b = b_threshold(spec)
        except ValueError:
            b = None
        rows.append({
            "entity": "corner" if geom.dimension == 2 else "edge",
            "id": ent.id,
            "opening": ent.opening,
            "kind": spec.kind,
            "b": b,
            "exponents": spec.to_dict()["values"],
            "exact": spec.to_dict()["exact"],
        })
    return {"spectra": rows}


def cmd_exponents(args, geom) -> dict:
    if geom.dimension != 3:
        raise CliError(EXIT_UNSUPPORTED, "scope", "limiting exponents come from spherical caps of 3D corners")
    try:
        res = spherical.corner_exponent_pipeline(geom, args.corner, args.kind, h=args.mesh_size,
                                                 levels=args.levels)
    except spherical.EigenSolverError as exc:
        raise CliError(EXIT_SOLVER, "eigensolver", f"{exc} (residual {exc.residual})") from None
    return res.to_dict()


def _corner_lambdas(args, geom) -> dict:
    lam = {}
    for item in args.corner_lambda or ():
        k, v = item.split("=", 1)
        lam[int(k)] = float(v)
    kind = "dirichlet" if args.problem == "dirichlet" else "neumann"
    for c in geom.corners:
        if c.id not in lam:
            lam[c.id] = spherical.corner_exponent_pipeline(geom, c.id, kind, h=args.mesh_size).value
    return lam


def cmd_admissible(args, geom) -> dict:
    if args.weights is not None:
        beta = weights.load_weights(args.weights, geom)
    elif args.beta is not None:
        beta = weights.WeightMultiExponent.uniform(geom, args.beta, args.beta_edge)
    else:
        raise CliError(EXIT_MISSING, "missing", "give a weights file or --beta")
    if geom.dimension == 2:
        verdicts = weights.admissible_2d(geom, beta, space=args.problem)
        extra = {}
    else:
        lam = _corner_lambdas(args, geom)
        verdicts = weights.admissible_3d(geom, beta, None, lam, args.problem)
        extra = {"corner_lambda": lam,
                 "shift_condition": [v.to_dict() for v in weights.shift_condition_aniso(geom, beta)]}
    rep = weights.verdict_report(verdicts, geom, problem=args.problem, kappa=weights.kappa(beta),
                                 weights=beta.to_dict(), **extra)
    rep["verdict"] = "admissible" if rep["admissible"] else "inadmissible"
    return rep


def cmd_norms(args, geom) -> dict:
    _need_2d(geom, "norm evaluation")
    u = parse_field(args.field, geom)
    dom = norms.PolygonDomain(geom)
    seq = norms.seminorm_sequence(u, dom, _norm_weights(args, geom), args.M, args.space)
    body = {"field": args.field, "space": args.space, "beta": args.beta, "sequence": seq.to_dict(),
            "rows": args.M + 1, "diverged_rows": sum(not norms.is_finite(v) for v in seq.values)}
    if seq.finite() and args.M >= 4:
        body["fit"] = norms.analytic_fit(seq).to_dict()
    text = seq.to_csv()
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write(text)
        body["csv"] = args.csv
    else:
        body["csv_text"] = text
    return body


def cmd_verify_shift(args, geom) -> dict:
    _need_2d(geom, "the shift check")
    u = parse_field(args.field, geom)
    center = getattr(u, "center", None)
    chi = fields.radial_cutoff(args.r0, args.r1, center=center)
    ut, f = fields.manufactured_pair(u, chi)
    dom = norms.PolygonDomain(geom)
    try:
        rep = norms.shift_constant_check(ut, f, dom, _norm_weights(args, geom), M=args.M)
    except ValueError as exc:
        raise CliError(EXIT_SOLVER, "norms", str(exc)) from None
    return {"field": args.field, "cutoff": [args.r0, args.r1], "beta": args.beta, **rep.to_dict()}


def cmd_mesh(args, geom) -> dict:
    try:
        if geom.dimension == 2 and not args.aniso:
            m = mesher.graded_mesh_2d(geom, args.sigma, args.layers, eps=args.eps)
        elif geom.dimension == 3:
            m = mesher.aniso_graded_mesh_3d(geom, args.sigma, args.layers, eps=args.eps)
        else:
            raise CliError(EXIT_UNSUPPORTED, "scope", "--aniso needs a 3D geometry")
    except NotImplementedError as exc:
        raise CliError(EXIT_UNSUPPORTED, "scope", str(exc)) from None
    files = []
    if args.out:
        for fmt in ("json", "vtk"):
            path = f"{args.out}.{fmt}"
            m.write(path, fmt)
            files.append(path)
    layers = sorted(set(int(x) for x in m.layer))
    return {
        "cell_type": m.cell_type,
        "n_vertices": len(m.vertices),
        "n_cells": m.n_cells,
        "cells_per_layer": {str(mu): int((m.layer == mu).sum()) for mu in layers},
        "max_aspect": float(m.aspect.max()),
        "params": m.params,
        "files": files,
    }


COMMANDS = {
    "spectra": cmd_spectra,
    "exponents": cmd_exponents,
    "admissible": cmd_admissible,
    "norms": cmd_norms,
    "verify-shift": cmd_verify_shift,
    "mesh": cmd_mesh,
}


def _weight_args(s):
    s.add_argument("--beta", type=float, help="weight exponent at every corner")
    s.add_argument("--beta-corner", action="append", metavar="ID=VALUE", help="override one corner's exponent")
    s.add_argument("--weights", help="weights JSON file (replaces --beta)")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cornerreg", description="Corner and edge regularity toolkit for the Laplacian.")
    p.add_argument("--version", action="version", version=f"cornerreg {_version()}")
    p.add_argument("--out-report", help="also write the JSON report to this file")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("spectra", help="Mellin spectra of corners (2D) or edges (3D)")
    s.add_argument("geometry")
    s.add_argument("--bc", default="inherit", choices=["inherit", "dirichlet", "neumann"])
    s.add_argument("--window", type=float, default=10.0)

    s = sub.add_parser("exponents", help="limiting exponent of a 3D corner from its spherical cap")
    s.add_argument("geometry")
    s.add_argument("corner", type=int)
    s.add_argument("kind", choices=["dirichlet", "neumann"])
    s.add_argument("--mesh-size", type=float, default=0.35)
    s.add_argument("--levels", type=int, default=3)

    s = sub.add_parser("admissible", help="admissibility verdicts for a weight multi-exponent")
    s.add_argument("geometry")
    s.add_argument("weights", nargs="?", help="weights JSON file")
    s.add_argument("--beta", type=float, help="uniform corner weight instead of a file")
    s.add_argument("--beta-edge", type=float, help="uniform edge weight (3D)")
    s.add_argument("--problem", default="dirichlet", choices=["dirichlet", "neumann", "mixed"])
    s.add_argument("--corner-lambda", action="append", metavar="ID=VALUE",
                   help="known limiting exponent of a 3D corner (skips the cap solve)")
    s.add_argument("--mesh-size", type=float, default=0.35)

    s = sub.add_parser("norms", help="weighted seminorm sequence of a closed-form field")
    s.add_argument("geometry")
    s.add_argument("field", help='e.g. "corner_singular k=1"')
    s.add_argument("--space", default="K", choices=["K", "M"])
    _weight_args(s)
    s.add_argument("-M", type=int, default=10)
    s.add_argument("--csv", help="write the per-order table here")

    s = sub.add_parser("verify-shift", help="regularity-shift constants for a cut-off singular field")
    s.add_argument("geometry")
    s.add_argument("field")
    _weight_args(s)
    s.add_argument("-M", type=int, default=12)
    s.add_argument("--r0", type=float, default=0.3)
    s.add_argument("--r1", type=float, default=0.7)

    s = sub.add_parser("mesh", help="graded meshes (JSON and legacy VTK)")
    s.add_argument("geometry")
    s.add_argument("--sigma", type=float, default=0.5)
    s.add_argument("--layers", type=int, default=4)
    s.add_argument("--eps", type=float)
    s.add_argument("--aniso", action="store_true", help="anisotropic edge grading (3D)")
    s.add_argument("--out", help="file prefix for <prefix>.json and <prefix>.vtk")
    return p


def _fail(code: int, kind: str, message: str) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message, "exit_code": code}, sort_keys=True) + "\n")
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    threads = os.environ.get("CORNERREG_THREADS")
    limit = int(threads) if threads else None
    try:
        with threadpool_limits(limits=limit):
            geom = load_geometry(args.geometry)
            body = COMMANDS[args.command](args, geom)
            params = {k: v for k, v in sorted(vars(args).items()) if k not in ("command", "out_report")}
            text = _dump(_report(args.command, geom, params, body))
    except CliError as exc:
        return _fail(exc.code, exc.kind, str(exc))
    except GeometryError as exc:
        return _fail(EXIT_SCHEMA, "geometry", str(exc))
    except weights.MissingDataError as exc:
        return _fail(EXIT_MISSING, "missing", str(exc))
    except spherical.EigenSolverError as exc:
        return _fail(EXIT_SOLVER, "eigensolver", str(exc))
    except NotImplementedError as exc:
        return _fail(EXIT_UNSUPPORTED, "scope", str(exc))
    except (json.JSONDecodeError, ValueError) as exc:
        return _fail(EXIT_SCHEMA, "input", str(exc))
    sys.stdout.write(text + "\n")
    if args.out_report:
        with open(args.out_report, "w") as fh:
            fh.write(text + "\n")
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
