"""Command-line front end: ``microlocal <command> [flags]``."""
import argparse
import json
import math
import sys

import numpy as np

from .fbi import FbiPlan, default_ladder, fbi_transform, wavefront_report
from .field import classify_point, detect_F0, load_field, make_bump
from .first_integral import residual_check, solve_series
from .measures import decompose_trace, probe_measure
from .presets import PRESET_NAMES, preset
from .quadrature import QuadratureError
from .trace import TraceFunctional, pair_trace

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_ASSERTION = 4


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# output


def dumps(doc):
    """Deterministic JSON: sorted keys, shortest round-trip float repr."""
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"


def _write(text, path):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="\n") as fh:
            fh.write(text)


def _sidecar(path, suffix):
    if path is None or path == "-":
        return None
    stem = path[:-5] if path.endswith(".json") else path
    return stem + suffix


def _c(z):
    z = complex(z)
    return [z.real, z.imag]


# ---------------------------------------------------------------------------
# argument helpers


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from None


def _ladder(text):
    if text is None:
        return default_ladder()
    vals = _floats(text)
    if len(vals) != 3:
        raise ConfigError("--ladder takes min,max,ratio")
    lo, hi, ratio = vals
    if not (0 < lo < hi and ratio > 1):
        raise ConfigError("--ladder needs 0 < min < max and ratio > 1")
    return default_ladder(lo, hi, ratio)


def _phi(text, order):
    """``bump:centre,radius[,order]``."""
    kind, _, rest = text.partition(":")
    if kind != "bump":
        raise ConfigError(f"unknown test function {text!r}; use bump:centre,radius[,order]")
    vals = _floats(rest)
    if len(vals) not in (2, 3):
        raise ConfigError("bump takes centre,radius[,order]")
    return make_bump(vals[0], vals[1], int(vals[2]) if len(vals) == 3 else order)


def _preset(name):
    if name not in PRESET_NAMES:
        raise ConfigError(f"unknown preset {name!r}; known: {', '.join(PRESET_NAMES)}")
    return preset(name)


def _field(args):
    if args.field:
        try:
            return load_field(args.field)
        except (OSError, KeyError, ValueError, TypeError) as exc:
            raise ConfigError(f"cannot load field {args.field}: {exc}") from None
    if args.preset:
        return _preset(args.preset).field
    raise ConfigError("give --field or --preset")


def _trace_spec(args):
    if not args.trace and args.preset and "." in args.preset:
        args.trace = args.preset
    if not args.trace or "." not in args.trace:
        raise ConfigError("--trace takes preset.solution, e.g. cauchy_riemann.inv")
    name, sol = args.trace.split(".", 1)
    p = _preset(name)
    if sol not in p.solutions:
        raise ConfigError(f"preset {name} has no solution {sol!r}; known: {', '.join(p.solutions)}")
    return p, sol


def _trace(args, need):
    """The trace object for a command; ``need`` is ``"integrate"`` or ``"pair"``."""
    p, sol = _trace_spec(args)
    fld = load_field(args.field) if args.field else p.field
    oracle = p.trace_oracle.get(sol)
    source = args.source
    if source == "auto":
        source = "oracle" if oracle is not None and hasattr(oracle, need) and hasattr(oracle, "integrate") else "tower"
    if source == "oracle":
        if oracle is None or not hasattr(oracle, need):
            raise ConfigError(f"{args.trace} has no boundary-value oracle usable here")
        return oracle
    return TraceFunctional(p.sampler(sol), fld, k=args.k, first_integral=p.integral if fld is p.field else None)


def _points(args, default):
    pts = _floats(args.points) if args.points else list(default)
    if args.seed:
        rng = np.random.default_rng(args.seed)
        spacing = float(np.min(np.diff(pts))) if len(pts) > 1 else 1.0
        pts = list(np.asarray(pts) + rng.uniform(-1e-3, 1e-3, len(pts)) * spacing)
    return pts


# ---------------------------------------------------------------------------
# commands


def cmd_field_classify(args):
    fld = _field(args)
    dom = fld.domain
    pts = _points(args, np.linspace(dom.x_lo, dom.x_hi, 9))
    rows = []
    for x0 in pts:
        pc = classify_point(fld, x0, tol=args.tol)
        rows.append({"x": float(x0), "class": pc.tag, "order": pc.order})
    grid = np.linspace(dom.x_lo, dom.x_hi, 201)
    doc = {"field": fld.to_dict(), "points": rows}
    try:
        doc["F0"] = [[float(a), float(b)] for a, b in detect_F0(fld, args.eps, args.tol, grid)]
    except ValueError as exc:
        # the set F0 is defined for a = i b with b real only
        doc["F0"], doc["F0_note"] = None, str(exc)
    _write(dumps(doc), args.out)


def cmd_integral(args):
    fld = _field(args)
    k = 6 if args.k is None else args.k
    Z = solve_series(fld, k)
    dom = fld.domain
    res = residual_check(Z, fld, np.geomspace(0.05 * dom.T, 0.5 * dom.T, 8))
    doc = {"field": fld.to_dict(), "integral": Z.to_dict(), "residual_slope": _finite(res.slope), "exact": res.exact}
    _write(dumps(doc), args.out)
    side = _sidecar(args.out, ".residual.csv")
    if side:
        _write(res.to_csv(), side)


def _finite(v):
    return float(v) if math.isfinite(v) else None


def cmd_trace_pair(args):
    p, sol = _trace_spec(args)
    fld = load_field(args.field) if args.field else p.field
    s = p.sampler(sol)
    k = s.N + 1 if args.k is None else args.k
    phi = _phi(args.phi, k + 2)
    res = pair_trace(s, fld, phi, k, quad={"tol": args.quad_tol}, T=args.T)
    _write(dumps(res.to_dict()), args.out)


def _plan(args, points):
    return FbiPlan(tuple(points), ladder=_ladder(args.ladder), kappa=args.kappa, cutoff_radius=args.cutoff_radius)


def cmd_fbi_scan(args):
    tr = _trace(args, "integrate")
    scan = fbi_transform(tr, _plan(args, _points(args, [0.0])), jobs=args.jobs)
    _write(scan.to_csv(), args.out)


def cmd_wf_report(args):
    tr = _trace(args, "integrate")
    pts = _points(args, [0.0])
    report = wavefront_report(tr, pts, _plan(args, pts), jobs=args.jobs)
    _write(dumps(report.to_json_rows()), args.out)


def cmd_measure_probe(args):
    tr = _trace(args, "pair")
    pts = _points(args, [0.0])
    deltas = _floats(args.deltas)
    try:
        verdict = probe_measure(tr, pts, deltas)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    doc = verdict.to_dict()
    if args.decompose:
        model = decompose_trace(tr, pts, deltas)
        doc["residual"] = _finite(model.residual) if model.residual is not None else None
        doc["status"] = model.status
    _write(dumps(doc), args.out)
    side = _sidecar(args.out, ".window.csv")
    if side:
        _write(verdict.window_csv(), side)


def cmd_example(args):
    name = args.name or args.preset
    if not name:
        raise ConfigError("example needs a preset name")
    p = _preset(name)
    dom = p.field.domain
    xs = np.asarray(_points(argparse.Namespace(points=None, seed=args.seed), np.linspace(dom.x_lo, dom.x_hi, 21)))
    ts = np.linspace(0.25, 1.0, 4) * dom.T
    sols = {}
    for sname, s in p.solutions.items():
        X, T = np.meshgrid(xs, ts)
        vals = np.asarray(s.f(X, T), dtype=complex)
        sols[sname] = {
            "N": s.N,
            "singular_points": list(s.singular_points),
            "values": [[_c(v) for v in row] for row in vals],
        }
    doc = {
        "preset": p.name,
        "field": p.field.to_dict(),
        "integral": p.integral.to_dict(),
        "notes": p.notes,
        "grid": {"x": [float(v) for v in xs], "t": [float(v) for v in ts]},
        "solutions": sols,
    }
    _write(dumps(doc), args.out)


def cmd_acceptance(args):
    from .acceptance import run_all

    numbers = [int(v) for v in _floats(args.only)] if args.only else None
    results = run_all(numbers)
    for r in results:
        print(r.line(), file=sys.stderr)
    doc = [r.to_dict(timings=False) for r in results]
    _write(dumps(doc), args.out)
    if not all(r.passed for r in results):
        raise AssertionError(f"{sum(not r.passed for r in results)} acceptance criteria failed")


COMMANDS = {
    "field-classify": cmd_field_classify,
    "integral": cmd_integral,
    "trace-pair": cmd_trace_pair,
    "fbi-scan": cmd_fbi_scan,
    "wf-report": cmd_wf_report,
    "measure-probe": cmd_measure_probe,
    "example": cmd_example,
    "acceptance": cmd_acceptance,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser():
    parser = _Parser(prog="microlocal", description=__doc__)
    common = _Parser(add_help=False)
    common.add_argument("--field", help="field description JSON")
    common.add_argument("--preset", help=f"preset name ({', '.join(PRESET_NAMES)})")
    common.add_argument("--trace", help="preset.solution, e.g. example41.h")
    common.add_argument("--out", help="output path (default stdout)")
    common.add_argument("--k", type=int, help="tower / series order")
    common.add_argument("--kappa", type=float, default=1.0)
    common.add_argument("--ladder", help="min,max,ratio of the |xi| ladder")
    common.add_argument("--tol", type=float, default=1e-12)
    common.add_argument("--jobs", type=int, default=1)
    common.add_argument("--seed", type=int, default=0, help="grid jitter seed (0 = none)")
    common.add_argument("--points", help="comma-separated x values")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("field-classify", parents=[common], help="classify points and find the set F0")
    p.add_argument("--eps", type=float, default=0.1)
    sub.add_parser("integral", parents=[common], help="series first integral and residual slope")
    p = sub.add_parser("trace-pair", parents=[common], help="<bf, phi> through the correction tower")
    p.add_argument("--phi", default="bump:0,1", help="bump:centre,radius[,order]")
    p.add_argument("--T", type=float, default=None, help="pairing depth")
    p.add_argument("--quad-tol", type=float, default=1e-6, help="Richardson tolerance of the pairing")
    for name, helptext in (("fbi-scan", "FBI values on a ladder (CSV)"), ("wf-report", "wave-front report (JSON)")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--cutoff-radius", type=float, default=1.0)
        p.add_argument("--source", choices=("auto", "tower", "oracle"), default="auto")
    p = sub.add_parser("measure-probe", parents=[common], help="atom and absolute-continuity probe")
    p.add_argument("--deltas", default="0.2,0.1,0.05,0.025")
    p.add_argument("--decompose", action="store_true")
    p.add_argument("--source", choices=("auto", "tower", "oracle"), default="auto")
    p = sub.add_parser("example", parents=[common], help="materialize a preset as JSON")
    p.add_argument("name", nargs="?")
    p = sub.add_parser("acceptance", parents=[common], help="run the acceptance suite")
    p.add_argument("--only", help="comma-separated criterion numbers")
    return parser


def _fail(kind, code, message, extra=None):
    doc = {"error": kind, "exit_code": code, "message": message}
    if extra:
        doc.update(extra)
    sys.stderr.write(dumps(doc))
    return code


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        if args.kappa <= 0:
            raise ConfigError("--kappa must be positive")
        COMMANDS[args.command](args)
    except ConfigError as exc:
        return _fail("config", EXIT_CONFIG, str(exc))
    except QuadratureError as exc:
        return _fail("numeric", EXIT_NUMERIC, str(exc), {"estimate": float(exc.estimate)})
    except AssertionError as exc:
        return _fail("assertion", EXIT_ASSERTION, str(exc))
    except (FileNotFoundError, ValueError, KeyError) as exc:
        # precondition violations raised by the library
        return _fail("config", EXIT_CONFIG, str(exc))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
