"""Command-line front end.

Exit codes: 0 success, 1 a verification assertion failed, 2 bad input.
``--input``/``--shape`` take a JSON file or ``fixture:<name>``.
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys

import numpy as np

from . import fileio, fixtures, svg
from .anisotropy import normalize_shape, wulff_from_tension
from .errors import WulffLabError
from .geomset import anisotropic_perimeter, perimeter, volume

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


class InputError(Exception):
    pass


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("WULFFLAB_THREADS", "1")))
    except ValueError:
        raise InputError("WULFFLAB_THREADS must be an integer") from None


def _need(args, name):
    v = getattr(args, name)
    if v is None:
        raise InputError(f"--{name.replace('_', '-')} is required for {args.command}")
    return v


def _load_set(spec):
    if spec.startswith("fixture:"):
        return fixtures.domain(spec.split(":", 1)[1])
    return fileio.load_geomset(spec)


def _load_shape(spec):
    if spec.startswith("fixture:"):
        name = spec.split(":", 1)[1]
        corpus = fixtures.wulff_corpus()
        if name not in corpus:
            raise InputError(f"unknown shape fixture {name!r}; choose from {sorted(corpus)}")
        return corpus[name]
    return fileio.load_shape(spec)


def _center(args, omega):
    if args.center is not None:
        try:
            c = [float(v) for v in args.center.split(",")]
        except ValueError:
            raise InputError("--center takes comma-separated numbers") from None
        return np.array(c)
    if args.input.startswith("fixture:"):
        return np.array(fixtures.DOMAIN_CENTERS[args.input.split(":", 1)[1]])
    return omega.barycenter()


def _emit(args, text: str):
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _fmt(args, allowed, default):
    f = args.format or default
    if f not in allowed:
        raise InputError(f"{args.command} writes {', '.join(allowed)}, not {f}")
    return f


# -- commands ---------------------------------------------------------------------

def cmd_build_wulff(args):
    d = fileio.load(_need(args, "input"))
    if d.get("kind") == "tension":
        K = normalize_shape(wulff_from_tension(fileio.tension_from_json(d)))
    else:
        K = normalize_shape(fileio.shape_from_json(d, allow_offset=True))
    fmt = _fmt(args, ("json", "svg"), "json")
    if fmt == "svg":
        _emit(args, svg.sets_svg([([K.vertices], "black")]))
    else:
        _emit(args, fileio.dumps(dict(fileio.shape_to_json(K), volume=K.volume, m_K=K.m_K, M_K=K.M_K)))
    return EXIT_OK


def cmd_perimeter(args):
    E = _load_set(_need(args, "input"))
    out = {"volume": volume(E), "perimeter": perimeter(E)}
    if args.shape:
        out["P_K"] = anisotropic_perimeter(E, _load_shape(args.shape))
    _fmt(args, ("json",), "json")
    _emit(args, fileio.dumps(out))
    return EXIT_OK


def cmd_asymmetry(args):
    from .isoperimetry import asymmetry

    E = _load_set(_need(args, "input"))
    K = _load_shape(_need(args, "shape"))
    a = asymmetry(E, K, refine_tol=args.tol or 1e-5)
    _fmt(args, ("json",), "json")
    _emit(args, fileio.dumps({"A": a.value, "translation": a.translation, "method": a.method}))
    return EXIT_OK


def cmd_deficit(args):
    from .isoperimetry import deficit

    E = _load_set(_need(args, "input"))
    K = _load_shape(_need(args, "shape"))
    d = deficit(E, K)
    _fmt(args, ("json",), "json")
    _emit(args, fileio.dumps({"P_K": d.p_k, "bound": d.bound, "deficit": d.deficit}))
    return EXIT_OK


def _family(args, K):
    """--input is either a JSON {"family": [{"param": t, "set": {...}}, ...]} or
    fixture:ellipse / fixture:bumped_square with --params."""
    spec = _need(args, "input")
    if spec.startswith("fixture:"):
        name = spec.split(":", 1)[1]
        gens = {"ellipse": fixtures.ellipse, "bumped_square": fixtures.bumped_square}
        if name not in gens:
            raise InputError(f"unknown family fixture {name!r}; choose from {sorted(gens)}")
        params = [float(v) for v in (args.params or "0.2,0.1,0.05,0.025").split(",")]
        return [(t, gens[name](t, K)) for t in params]
    d = fileio.load(spec)
    try:
        return [(float(m["param"]), fileio.geomset_from_json(m["set"])) for m in d["family"]]
    except (KeyError, TypeError) as exc:
        raise InputError(f"malformed family file: {exc}") from None


def cmd_qwi_sweep(args):
    from .isoperimetry import qwi_sweep, write_sweep_csv

    K = _load_shape(_need(args, "shape"))
    rows = qwi_sweep(_family(args, K), K)
    fmt = _fmt(args, ("csv", "json", "svg"), "csv")
    if fmt == "csv":
        buf = io.StringIO()
        write_sweep_csv(rows, buf)
        _emit(args, buf.getvalue())
    elif fmt == "json":
        _emit(args, fileio.dumps({"rows": rows}))
    else:
        _emit(args, svg.scatter_svg([r["param"] for r in rows], [r["ratio"] for r in rows]))
    return EXIT_OK


def cmd_whitney(args):
    from .whitney import certify, overlap_multiplicity, whitney_decompose, write_cubes_csv

    E = _load_set(_need(args, "input"))
    W = whitney_decompose(E, args.max_level)
    fmt = _fmt(args, ("csv", "json", "svg"), "csv")
    if fmt == "csv":
        buf = io.StringIO()
        write_cubes_csv(W, buf)
        _emit(args, buf.getvalue())
    elif fmt == "svg":
        _emit(args, svg.whitney_svg(W, E))
    else:
        rep = certify(W, E)
        _emit(args, fileio.dumps({
            "max_level": W.max_level, "cubes": len(W.cubes), "certified": rep.passed,
            "ratio_failures": len(rep.ratio_failures), "coverage_defect": rep.coverage_defect,
            "uncovered_volume": W.uncovered_volume,
            "multiplicity": overlap_multiplicity(W, seed=args.seed)}))
    return EXIT_OK


def cmd_john(args):
    from .johnmetric import estimate_john
    from .whitney import whitney_decompose

    E = _load_set(_need(args, "input"))
    x0 = _center(args, E)
    W = whitney_decompose(E, args.max_level)
    est = estimate_john(E, x0, W)
    fmt = _fmt(args, ("json", "svg"), "json")
    if fmt == "svg":
        _emit(args, svg.john_svg(E, est.curves, x0))
        return EXIT_OK
    order = np.argsort(-est.target_ratios, kind="stable")[:10]
    _emit(args, fileio.dumps({
        "J_value": est.J_value, "center": x0, "max_level": W.max_level,
        "worst_start": est.worst_start,
        "worst_targets": [{"point": est.target_points[k], "ratio": est.target_ratios[k]} for k in order],
        "curves": [{"ratio": c.ratio, "points": c.points, "witness": c.witness} for c in est.curves],
    }))
    return EXIT_OK


def cmd_trace(args):
    from .tracelab import default_suite, load_suite, trace_constant
    from .whitney import whitney_decompose

    E = _load_set(_need(args, "input"))
    x0 = _center(args, E)
    suite = load_suite(args.suite, E) if args.suite else default_suite(E, 20, args.seed)
    W = whitney_decompose(E, args.max_level)
    rep = trace_constant(E, suite, W, x0)
    fmt = _fmt(args, ("json", "svg"), "json")
    if fmt == "svg":
        worst = max(rep.reports, key=lambda r: r.c_emp)
        _emit(args, svg.trace_svg(E, worst.boundary_samples))
    else:
        out = rep.to_json()
        out["boundary_samples"] = {r.field: r.boundary_samples for r in rep.reports}
        _emit(args, fileio.dumps(out))
    return EXIT_OK


def cmd_select(args):
    from .selection import SelectionProblem, SolverConfig, solve_selection

    d = fileio.load(_need(args, "input"))
    try:
        E = fileio.geomset_from_json(d["input_set"])
        K = fileio.shape_from_json(d["shape"])
        solver = SolverConfig(**d.get("solver", {}))
    except (KeyError, TypeError) as exc:
        raise InputError(f"malformed problem file: {exc}") from None
    if args.tol:
        solver = SolverConfig(solver.vertices, solver.step, solver.max_iter, args.tol, solver.energy_tol)
    P = SelectionProblem(E, K, d.get("lambda"), d.get("r0", 10.0), solver)
    res = solve_selection(P, seed=args.seed)
    fmt = _fmt(args, ("json", "svg"), "json")
    if fmt == "svg":
        _emit(args, svg.sets_svg([(E.loops, "gray"), (res.minimizer_raw.loops, "blue"),
                                  (res.minimizer.loops, "red"), ([K.vertices], "black")]))
    else:
        _emit(args, fileio.dumps(res.to_json()))
    return EXIT_OK


def cmd_verify(args):
    from .verify import run_suite

    results = run_suite(args.suite, seed=args.seed, workers=_workers())
    for r in results:
        print(r.line(), file=sys.stderr)
    _fmt(args, ("json",), "json")
    ok = all(r.ok for r in results)
    _emit(args, fileio.dumps({"suite": args.suite, "passed": all(r.passed for r in results),
                              "criteria": [r.to_json() for r in results]}))
    return EXIT_OK if ok else EXIT_FAIL


def cmd_plot(args):
    path = _need(args, "input")
    if path.endswith(".csv"):
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if rows and "ratio" in rows[0]:
            _emit(args, svg.scatter_svg([float(r["param"]) for r in rows],
                                        [float(r["ratio"]) for r in rows]))
            return EXIT_OK
        if rows and "level" in rows[0]:
            _emit(args, _cubes_svg(rows))
            return EXIT_OK
        raise InputError("CSV is neither a sweep nor a cube dump")
    d = fileio.load(path)
    if isinstance(d, dict) and "J_value" in d:
        E = _load_set(args.domain) if args.domain else None
        loops = E.loops if E is not None else [np.vstack([c["points"] for c in d["curves"]])]
        from .geomset import GeomSet

        dom = E if E is not None else GeomSet(2, tuple(np.asarray(lp) for lp in loops))
        _emit(args, svg.john_svg(dom, d["curves"], d["center"]))
        return EXIT_OK
    if isinstance(d, dict) and "minimizer" in d:
        _emit(args, svg.sets_svg([([np.array(d["minimizer_raw"])], "blue"),
                                  ([np.array(d["minimizer"])], "red")]))
        return EXIT_OK
    if isinstance(d, dict) and "rows" in d:
        _emit(args, svg.scatter_svg([r["param"] for r in d["rows"]],
                                    [np.nan if r["ratio"] is None else r["ratio"] for r in d["rows"]]))
        return EXIT_OK
    raise InputError("unrecognized report")


def _cubes_svg(rows):
    """Cube dump rendering; positions are relative to the dump's grid origin."""
    sides = np.array([float(r["side"]) for r in rows])
    lows = np.array([[int(r["ix"]), int(r["iy"])] for r in rows]) * sides[:, None]
    canvas = svg.Canvas(lows.min(0), (lows + sides[:, None]).max(0))
    for p, s in zip(lows, sides):
        canvas.rect(p, s)
    return canvas.render()


COMMANDS = {
    "build-wulff": cmd_build_wulff,
    "perimeter": cmd_perimeter,
    "asymmetry": cmd_asymmetry,
    "deficit": cmd_deficit,
    "qwi-sweep": cmd_qwi_sweep,
    "whitney": cmd_whitney,
    "john": cmd_john,
    "trace": cmd_trace,
    "select": cmd_select,
    "verify": cmd_verify,
    "plot": cmd_plot,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wulfflab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        if name == "verify":
            s.add_argument("suite", help="wulff, whitney, john, trace, qwi, selection or all")
        s.add_argument("--input", help="JSON file or fixture:<name>")
        s.add_argument("--shape", help="shape JSON or fixture:disc|square|hexagon")
        s.add_argument("--max-level", type=int, default=10, dest="max_level")
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("--tol", type=float, default=None)
        s.add_argument("--out", default=None, help="output path (stdout if omitted)")
        s.add_argument("--format", choices=("json", "csv", "svg"), default=None)
        s.add_argument("--center", default=None, help="x,y of the John center")
        s.add_argument("--suite-file", dest="suite_file", default=None, help="trace field suite JSON")
        s.add_argument("--params", default=None, help="comma-separated family parameters")
        s.add_argument("--domain", default=None, help="domain for plotting a john report")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "trace":
        args.suite = args.suite_file
    try:
        return COMMANDS[args.command](args)
    except (InputError, WulffLabError, FileNotFoundError, IsADirectoryError, KeyError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
