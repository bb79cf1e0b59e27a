"""Command-line surface: file ingestion, analyses, CSV/JSON emission.

Every subcommand is a pure function of its inputs and the --seed flag;
repeated runs are byte-identical.  All floating-point output is printed
with 17 significant digits so values round-trip exactly.  Indices in CLI
files and flags (counts CSV, --ref-cell, reported cells) are 1-based; the
Python API underneath is 0-based.

Exit codes: 0 for completed analyses (an infeasible marginal or a missing
intersection is a result, not a failure), 2 for usage errors, 3 for
malformed input files.

File formats
------------
model JSON     {"shape": [r1, r2, r3], "p1": [...], "a": [[...]], "b": [[...]]}
joint JSON     {"shape": [r1, r2, r3], "cells": [... r1*r2*r3 floats ...]}
               (flat order: k fastest, then j, then i)
marginal JSON  {"shape": [r1, r3], "cells": [... r1*r3 floats, k fastest ...]}
q JSON         {"q": [[...]]}
counts CSV     header "i,k,count", 1-based indices, missing cells are 0
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import identifiability, likelihood, model, reparam
from .errors import (
    GeometryError,
    InvalidParameter,
    NoRealSolution,
    PathExitsPolytope,
    ZeroCell,
)
from .fiber import MixingMatrix, extreme_mixings, sample_fiber

USAGE_ERROR = 2
FILE_ERROR = 3


class CliFileError(Exception):
    """A named input file cannot be parsed or violates its schema."""


# ---------------------------------------------------------------------------
# deterministic rendering

def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        v = float(x)
        if v != v or v in (float("inf"), float("-inf")):
            return json.dumps(str(v))
        return format(v, ".17g")
    raise TypeError(f"cannot format {type(x)!r}")


def _render_json(obj, indent: int = 0) -> str:
    pad = "  " * indent
    inner = "  " * (indent + 1)
    if obj is None:
        return "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, (bool, np.bool_, int, np.integer, float, np.floating)):
        return _fmt(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{json.dumps(str(k))}: {_render_json(v, indent + 1)}"
                 for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        scalar = all(isinstance(v, (bool, np.bool_, int, np.integer,
                                    float, np.floating)) for v in seq)
        if scalar:
            return "[" + ", ".join(_fmt(v) for v in seq) + "]"
        items = [f"{inner}{_render_json(v, indent + 1)}" for v in seq]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    raise TypeError(f"cannot render {type(obj)!r}")


def _emit(text: str, output: str | None) -> None:
    if output is None:
        sys.stdout.write(text)
    else:
        Path(output).write_text(text, encoding="utf-8")


# ---------------------------------------------------------------------------
# file ingestion (all raising CliFileError on malformed content)

def _load_json(path: str) -> dict:
    try:
        raw = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliFileError(f"{path}: {exc}") from exc
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise CliFileError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise CliFileError(f"{path}: top-level JSON object expected")
    return data


def _require(data: dict, field: str, path: str):
    if field not in data:
        raise CliFileError(f"{path}: missing field {field!r}")
    return data[field]


def load_model(path: str) -> model.ChainParams:
    data = _load_json(path)
    try:
        shape = model.Shape(*(int(v) for v in _require(data, "shape", path)))
        return model.ChainParams(
            shape,
            np.asarray(_require(data, "p1", path), dtype=float),
            np.asarray(_require(data, "a", path), dtype=float),
            np.asarray(_require(data, "b", path), dtype=float),
        )
    except (InvalidParameter, TypeError, ValueError) as exc:
        raise CliFileError(f"{path}: {exc}") from exc


def load_joint(path: str) -> model.JointTable:
    data = _load_json(path)
    try:
        shape = model.Shape(*(int(v) for v in _require(data, "shape", path)))
        return model.JointTable.from_flat(
            shape, np.asarray(_require(data, "cells", path), dtype=float))
    except (InvalidParameter, TypeError, ValueError) as exc:
        raise CliFileError(f"{path}: {exc}") from exc


def load_marginal(path: str) -> model.MarginalTable:
    data = _load_json(path)
    try:
        r1, r3 = (int(v) for v in _require(data, "shape", path))
        cells = np.asarray(_require(data, "cells", path), dtype=float)
        return model.MarginalTable((r1, r3), cells.reshape(r1, r3))
    except (InvalidParameter, TypeError, ValueError) as exc:
        raise CliFileError(f"{path}: {exc}") from exc


def load_q(path: str) -> MixingMatrix:
    data = _load_json(path)
    try:
        return MixingMatrix(np.asarray(_require(data, "q", path), dtype=float))
    except (GeometryError, TypeError, ValueError) as exc:
        raise CliFileError(f"{path}: {exc}") from exc


def load_counts(path: str, shape: tuple[int, int] | None = None) -> likelihood.CountTable:
    """Counts CSV with header ``i,k,count`` and 1-based indices."""
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise CliFileError(f"{path}: {exc}") from exc
    rows: list[tuple[int, int, int]] = []
    body = [ln.strip() for ln in lines if ln.strip() and not ln.startswith("#")]
    if not body or [f.strip() for f in body[0].split(",")] != ["i", "k", "count"]:
        raise CliFileError(f"{path}: expected header 'i,k,count'")
    for lineno, ln in enumerate(body[1:], start=2):
        parts = [f.strip() for f in ln.split(",")]
        if len(parts) != 3:
            raise CliFileError(f"{path}:{lineno}: expected 3 fields")
        try:
            i, k, c = (int(p) for p in parts)
        except ValueError as exc:
            raise CliFileError(f"{path}:{lineno}: {exc}") from exc
        if i < 1 or k < 1:
            raise CliFileError(f"{path}:{lineno}: indices are 1-based")
        if c < 0:
            raise CliFileError(f"{path}:{lineno}: negative count")
        rows.append((i, k, c))
    if not rows:
        raise CliFileError(f"{path}: no count rows")
    if shape is None:
        shape = (max(r[0] for r in rows), max(r[1] for r in rows))
    counts = np.zeros(shape, dtype=np.int64)
    seen = set()
    for i, k, c in rows:
        if i > shape[0] or k > shape[1]:
            raise CliFileError(f"{path}: cell ({i}, {k}) outside shape {shape}")
        if (i, k) in seen:
            raise CliFileError(f"{path}: duplicate cell ({i}, {k})")
        seen.add((i, k))
        counts[i - 1, k - 1] = c
    try:
        return likelihood.CountTable(shape, counts)
    except InvalidParameter as exc:
        raise CliFileError(f"{path}: {exc}") from exc


def _model_dict(params: model.ChainParams) -> dict:
    return {
        "shape": list(params.shape.astuple()),
        "p1": params.p1,
        "a": [row for row in params.a],
        "b": [row for row in params.b],
    }


# ---------------------------------------------------------------------------
# run configuration

@dataclass(frozen=True)
class RunConfig:
    """Resolved options of one invocation (seed defaults to 0)."""

    command: str
    inputs: tuple[str, ...] = ()
    shape: tuple[int, ...] | None = None
    r2: int | None = None
    seed: int = 0
    tol: float | None = None
    restarts: int = 64
    steps: int = 33
    samples: int = 101
    n: int = 0
    maxiter: int = 500
    ref_cell: tuple[int, int] = (1, 1)
    vertex: int | None = None
    q_path: str | None = None
    side: str = "a"
    z: float | None = None
    c1: float | None = None
    c2: float | None = None
    output: str | None = None
    fmt: str | None = None


# ---------------------------------------------------------------------------
# subcommands

def cmd_dims(cfg: RunConfig) -> int:
    d = model.dims(model.Shape(*cfg.shape))
    report = {
        "d": d.d, "t": d.t, "s": d.s, "m": d.m, "fiber": d.fiber,
        "case": d.case.value, "constraints": d.constraint_count,
    }
    _emit(_render_json(report) + "\n", cfg.output)
    return 0


def cmd_check(cfg: RunConfig) -> int:
    path = cfg.inputs[0]
    data = _load_json(path)
    if "p1" in data:
        params = load_model(path)
        joint = model.joint_from_chain(params)
        kind = "model"
    else:
        joint = load_joint(path)
        kind = "joint"
    ref0 = (cfg.ref_cell[0] - 1, cfg.ref_cell[1] - 1)
    try:
        residuals = model.ci_residuals(joint, ref0)
    except InvalidParameter as exc:
        raise CliUsageError(str(exc))
    marginal, lambdas = reparam.split(joint)
    report = {
        "kind": kind,
        "shape": list(joint.shape.astuple()),
        "ref_cell": list(cfg.ref_cell),
        "ci_residuals": {
            "count": residuals.size,
            "max_abs": float(np.abs(residuals).max()),
            "values": residuals,
        },
        "marginal": marginal.flat,
        "lambda": {
            "values": lambdas.values.ravel(),
            "unconstrained_cells": [
                [int(i) + 1, int(k) + 1]
                for i, k in np.argwhere(lambdas.unconstrained)
            ],
        },
    }
    try:
        z = reparam.cross_ratios(marginal, ref0)
        report["cross_ratios"] = [row for row in z.values]
        report["zero_cell"] = None
        if z.values.shape == (2, 2):
            report["identity_residual_323"] = reparam.marginal_identity_323(z)
        else:
            report["identity_residual_323"] = None
    except ZeroCell as exc:
        report["cross_ratios"] = None
        report["zero_cell"] = [exc.cell[0] + 1, exc.cell[1] + 1]
        report["identity_residual_323"] = None
    _emit(_render_json(report) + "\n", cfg.output)
    return 0


def cmd_fig3(cfg: RunConfig) -> int:
    z, c1, c2 = cfg.z, cfg.c1, cfg.c2
    lines = [
        "# binary fiber cross-section at fixed lam(2,1) = c1, lam(1,2) = c2",
        "# z = d(1,1) d(2,2) / (d(1,2) d(2,1)); swapping the marginal's rows "
        "(or columns) maps z to 1/z",
        "curve,x,y",
    ]
    s = 1.0 - (1.0 - c1 - c2) / z
    p = c1 * c2 / z
    xs = [(i + 1) / (cfg.samples + 1) for i in range(cfg.samples)]
    for x in xs:
        lines.append(f"line,{_fmt(x)},{_fmt(s - x)}")
    for x in xs:
        lines.append(f"hyperbola,{_fmt(x)},{_fmt(p / x)}")
    try:
        sol = reparam.binary_fiber_solve(z, c1, c2)
        for x, y in sol.points:
            lines.append(f"intersection,{_fmt(x)},{_fmt(y)}")
    except NoRealSolution:
        lines.append("# warning: no real intersection")
    _emit("\n".join(lines) + "\n", cfg.output)
    return 0


def cmd_fiber(cfg: RunConfig) -> int:
    params = load_model(cfg.inputs[0])
    points = sample_fiber(params, cfg.n, seed=cfg.seed)
    _emit(_render_json([_model_dict(p) for p in points]) + "\n", cfg.output)
    return 0


def cmd_vertices(cfg: RunConfig) -> int:
    params = load_model(cfg.inputs[0])
    out = []
    for vertex in extreme_mixings(params, side=cfg.side):
        out.append({
            "pi": float(vertex.q.q[0, 0]),
            "rho": float(vertex.q.q[1, 0]),
            "q": [row for row in vertex.q.q],
            "branch": vertex.branch,
            "zeros": [
                {"matrix": mat, "row": r + 1, "col": c + 1}
                for mat, r, c in vertex.zeros
            ],
        })
    _emit(_render_json(out) + "\n", cfg.output)
    return 0


def cmd_consistency(cfg: RunConfig) -> int:
    path = cfg.inputs[0]
    if path.endswith(".csv"):
        counts = load_counts(path)
        cells = counts.counts / counts.total
        target = model.MarginalTable(counts.shape, cells)
    else:
        target = load_marginal(path)
    tol = cfg.tol if cfg.tol is not None else 1e-8
    report = identifiability.consistency_check(
        target, cfg.r2, restarts=cfg.restarts, tol=tol, seed=cfg.seed,
        maxiter=cfg.maxiter)
    payload = {
        "feasible": report.feasible,
        "best_divergence": report.best_divergence,
        "necessary_checks": {k: ("pass" if v else "fail")
                             for k, v in report.necessary_checks.items()},
        "proven_by": report.proven_infeasible_by,
        "tol": report.tol,
        "witness": _model_dict(report.witness) if report.witness else None,
    }
    _emit(_render_json(payload) + "\n", cfg.output)
    return 0


def cmd_profile(cfg: RunConfig) -> int:
    params = load_model(cfg.inputs[1])
    r1, _, r3 = params.shape.astuple()
    counts = load_counts(cfg.inputs[0], shape=(r1, r3))
    if cfg.q_path is not None:
        q_end = load_q(cfg.q_path)
    else:
        vertex = cfg.vertex if cfg.vertex is not None else 0
        vertices = extreme_mixings(params, side=cfg.side)
        if not 0 <= vertex < len(vertices):
            raise CliUsageError(
                f"--vertex {vertex} out of range (have {len(vertices)})")
        q_end = vertices[vertex].q
    lines = ["t,loglik,min_entry"]
    try:
        trace = likelihood.profile_along_fiber(counts, params, q_end, cfg.steps)
        for t, ll, me in zip(trace.t, trace.loglik, trace.min_entry):
            lines.append(f"{_fmt(t)},{_fmt(ll)},{_fmt(me)}")
    except PathExitsPolytope as exc:
        for t, ll, me in exc.prefix:
            lines.append(f"{_fmt(t)},{_fmt(ll)},{_fmt(me)}")
        lines.append(f"# path exits polytope at t={_fmt(exc.exit_t)}")
    _emit("\n".join(lines) + "\n", cfg.output)
    return 0


def cmd_emfit(cfg: RunConfig) -> int:
    shape = model.Shape(*cfg.shape)
    counts = load_counts(cfg.inputs[0], shape=(shape.r1, shape.r3))
    tol = cfg.tol if cfg.tol is not None else 1e-10
    fit = likelihood.em_fit_details(counts, shape, seed=cfg.seed,
                                    maxiter=cfg.maxiter, tol=tol)
    payload = {
        "model": _model_dict(fit.params),
        "summary": {
            "loglik": fit.loglik,
            "iterations": fit.iterations,
            "converged": fit.converged,
            "seed": cfg.seed,
            "total_count": counts.total,
        },
    }
    _emit(_render_json(payload) + "\n", cfg.output)
    return 0


# ---------------------------------------------------------------------------
# argument parsing and dispatch

class CliUsageError(Exception):
    pass


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="latentgeom",
        description="Geometry of the hidden-middle chain model on (Y1, Y3) data",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, fmt_default):
        p.add_argument("--seed", type=int, default=0,
                       help="RNG seed (default 0)")
        p.add_argument("--output", default=None, help="write here, not stdout")
        p.add_argument("--format", dest="fmt", choices=("json", "csv"),
                       default=fmt_default,
                       help=f"output format (only {fmt_default!r} supported)")
        return p

    p = common(sub.add_parser("dims", help="dimension bookkeeping of a shape"),
               "json")
    p.add_argument("r1", type=int)
    p.add_argument("r2", type=int)
    p.add_argument("r3", type=int)

    p = common(sub.add_parser(
        "check", help="quadric residuals, split and cross-ratios of a model "
                      "or joint file"), "json")
    p.add_argument("file")
    p.add_argument("--ref-cell", nargs=2, type=int, default=(1, 1),
                   metavar=("I", "K"), help="1-based reference cell")

    p = common(sub.add_parser(
        "fig3", help="line/hyperbola/intersection plot data of the binary "
                     "fiber cross-section"), "csv")
    p.add_argument("--z", type=float, required=True,
                   help="marginal cross-ratio d11*d22/(d12*d21)")
    p.add_argument("--c1", type=float, required=True, help="lam(2,1)")
    p.add_argument("--c2", type=float, required=True, help="lam(1,2)")
    p.add_argument("--samples", type=int, default=101)

    p = common(sub.add_parser("fiber", help="sample the unidentifiable fiber "
                                            "of a model"), "json")
    p.add_argument("file")
    p.add_argument("--n", type=int, default=10)

    p = common(sub.add_parser(
        "vertices", help="boundary mixings with their degeneracy flags"),
        "json")
    p.add_argument("file")
    p.add_argument("--side", choices=("a", "b"), default="a")

    p = common(sub.add_parser(
        "consistency", help="can this marginal come from an r2-state hidden "
                            "variable?"), "json")
    p.add_argument("file", help="counts .csv or marginal .json")
    p.add_argument("--r2", type=int, required=True)
    p.add_argument("--restarts", type=int, default=64)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--maxiter", type=int, default=500)

    p = common(sub.add_parser(
        "profile", help="log-likelihood trace along a fiber path"), "csv")
    p.add_argument("counts", help="counts .csv")
    p.add_argument("model", help="model .json")
    p.add_argument("--vertex", type=int, default=None,
                   help="index into the extreme mixings (default 0)")
    p.add_argument("--q", dest="q_path", default=None,
                   help="mixing matrix .json instead of a vertex")
    p.add_argument("--side", choices=("a", "b"), default="a")
    p.add_argument("--steps", type=int, default=33)

    p = common(sub.add_parser("emfit", help="EM fit of counts at a shape"),
               "json")
    p.add_argument("counts", help="counts .csv")
    p.add_argument("r1", type=int)
    p.add_argument("r2", type=int)
    p.add_argument("r3", type=int)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--maxiter", type=int, default=500)

    return parser


_NATURAL_FORMAT = {
    "dims": "json", "check": "json", "fig3": "csv", "fiber": "json",
    "vertices": "json", "consistency": "json", "profile": "csv",
    "emfit": "json",
}


def _config(args: argparse.Namespace) -> RunConfig:
    fmt = getattr(args, "fmt", None)
    if fmt is not None and fmt != _NATURAL_FORMAT[args.command]:
        raise CliUsageError(
            f"only --format {_NATURAL_FORMAT[args.command]} is supported here"
        )
    seed = getattr(args, "seed", 0)
    if not 0 <= seed < 2 ** 64:
        raise CliUsageError(f"--seed must be an unsigned 64-bit integer, got {seed}")
    base = dict(
        command=args.command,
        seed=seed,
        output=getattr(args, "output", None),
        fmt=fmt,
    )
    if args.command == "dims":
        return RunConfig(shape=(args.r1, args.r2, args.r3), **base)
    if args.command == "check":
        return RunConfig(inputs=(args.file,),
                         ref_cell=tuple(args.ref_cell), **base)
    if args.command == "fig3":
        return RunConfig(z=args.z, c1=args.c1, c2=args.c2,
                         samples=args.samples, **base)
    if args.command == "fiber":
        return RunConfig(inputs=(args.file,), n=args.n, **base)
    if args.command == "vertices":
        return RunConfig(inputs=(args.file,), side=args.side, **base)
    if args.command == "consistency":
        return RunConfig(inputs=(args.file,), r2=args.r2,
                         restarts=args.restarts, tol=args.tol,
                         maxiter=args.maxiter, **base)
    if args.command == "profile":
        return RunConfig(inputs=(args.counts, args.model), vertex=args.vertex,
                         q_path=args.q_path, side=args.side,
                         steps=args.steps, **base)
    if args.command == "emfit":
        return RunConfig(inputs=(args.counts,),
                         shape=(args.r1, args.r2, args.r3), tol=args.tol,
                         maxiter=args.maxiter, **base)
    raise CliUsageError(f"unknown command {args.command!r}")


_HANDLERS = {
    "dims": cmd_dims,
    "check": cmd_check,
    "fig3": cmd_fig3,
    "fiber": cmd_fiber,
    "vertices": cmd_vertices,
    "consistency": cmd_consistency,
    "profile": cmd_profile,
    "emfit": cmd_emfit,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 on --help
        return int(exc.code or 0)
    try:
        cfg = _config(args)
        return _HANDLERS[args.command](cfg)
    except CliUsageError as exc:
        print(f"latentgeom {args.command}: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except InvalidParameter as exc:
        # bad flag/argument values (e.g. a cardinality below 2)
        print(f"latentgeom {args.command}: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except CliFileError as exc:
        print(f"latentgeom {args.command}: {exc}", file=sys.stderr)
        return FILE_ERROR
    except GeometryError as exc:
        print(f"latentgeom {args.command}: {exc}", file=sys.stderr)
        return USAGE_ERROR


def run() -> None:
    sys.exit(main(None))
