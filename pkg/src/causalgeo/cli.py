"""Command-line interface: invariant scans, trajectories, classification, catalog."""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import catalog, exprdsl
from .errors import ConfigError, GeometricError, InputError, ParseError, PreconditionError
from .flow import run_geodesic
from .geometry import CausalStructure, CPoint, invariant_report
from .oracle import Metric, graph_from_metric

EXIT_OK, EXIT_INPUT, EXIT_GEOMETRY = 0, 2, 3
MAX_REJECTIONS = 100
TIDAL_ZERO = 1e-6


# number formatting -----------------------------------------------------------

def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % float(v)


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON with 17 significant digits; NaN and infinities become null."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return "%.17g" % float(obj) if math.isfinite(obj) else "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        if len(obj) == 0:
            return "[]"
        items = [f"{pad}{dumps(v, indent, _level + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


# inputs ------------------------------------------------------------------------

_LINE = re.compile(r"^\s*(?:(const)\s+)?([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(.*?)\s*$")
_METRIC_KEY = re.compile(r"^g_?([0-9])([0-9])$")


def load_structure_file(path: str | Path) -> CausalStructure:
    """Parse the key-value structure format (F = ... or metric entries gij = ...)."""
    text = Path(path).read_text()
    dim = sig = None
    consts: dict[str, float] = {}
    F_src = None
    g_src: dict[tuple[int, int], tuple[str, int]] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        mt = _LINE.match(line)
        if not mt:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        is_const, key, val = mt.groups()
        where = f"{path}:{lineno}"
        if is_const:
            try:
                consts[key] = float(val)
            except ValueError:
                raise ConfigError(f"{where}: constant {key} needs a number, got {val!r}") from None
        elif key == "dim":
            try:
                dim = int(val)
            except ValueError:
                raise ConfigError(f"{where}: dim must be an integer") from None
        elif key == "signature":
            try:
                sig = tuple(int(s) for s in val.split(","))
            except ValueError:
                raise ConfigError(f"{where}: signature must read p,q") from None
            if len(sig) != 2:
                raise ConfigError(f"{where}: signature must read p,q")
        elif key == "F":
            if F_src is not None:
                raise ConfigError(f"{where}: F given twice")
            F_src = (val, lineno)
        elif _METRIC_KEY.match(key):
            i, j = map(int, _METRIC_KEY.match(key).groups())
            if i > j:
                raise ConfigError(f"{where}: metric entries use i <= j, got {key}")
            g_src[(i, j)] = (val, lineno)
        else:
            raise ConfigError(f"{where}: unknown key {key!r}")
    if dim is None or sig is None:
        raise ConfigError(f"{path}: 'dim' and 'signature' are required")
    if dim < 4:
        raise ConfigError(f"{path}: dim must be at least 4")
    if sig[0] < 0 or sig[1] < 0 or sum(sig) != dim - 2:
        raise ConfigError(f"{path}: signature {sig} needs p + q = dim - 2 = {dim - 2}")
    if (F_src is None) == (not g_src):
        raise ConfigError(f"{path}: give exactly one of F or metric entries")
    n = dim - 1
    name = Path(path).stem
    if F_src is not None:
        ast = _parse_at(F_src, exprdsl.default_names(n, consts), path)
        return CausalStructure.from_expr(ast, n, sig, consts, name=name)
    names = frozenset(f"x{i}" for i in range(dim)) | frozenset(consts)
    entries = {}
    for (i, j), src in g_src.items():
        if j >= dim:
            raise ConfigError(f"{path}:{src[1]}: index g{i}{j} exceeds dim {dim}")
        entries[(i, j)] = _parse_at(src, names, path)
    m = Metric.from_exprs(entries, dim, (sig[0] + 1, sig[1] + 1), consts, name=name)
    return graph_from_metric(m, sig, name=name)


def _parse_at(src: tuple[str, int], names, path):
    text, lineno = src
    try:
        return exprdsl.parse(text, names, source=text)
    except ParseError as exc:
        raise ParseError(f"{path}:{lineno}: {exc.message}", exc.pos, text) from None


def resolve_structure(spec: str) -> CausalStructure:
    if os.path.exists(spec):
        return load_structure_file(spec)
    return catalog.get(spec).structure()


def parse_point(text: str, n: int) -> CPoint:
    """'x0,..,xn;y1,..,y(n-1)' -> CPoint, with offsets in diagnostics."""
    if text.count(";") != 1:
        pos = text.find(";", text.find(";") + 1) if text.count(";") > 1 else len(text)
        raise ParseError("point needs exactly one ';' between base and fiber coordinates", pos, text)
    vals: list[list[float]] = [[], []]
    offset = 0
    for part_i, part in enumerate(text.split(";")):
        pos = offset
        for item in part.split(","):
            s = item.strip()
            try:
                v = float(s)
                if not math.isfinite(v):
                    raise ValueError
            except ValueError:
                lead = len(item) - len(item.lstrip())
                raise ParseError(f"not a finite number: {s!r}", pos + lead, text) from None
            vals[part_i].append(v)
            pos += len(item) + 1
        offset += len(part) + 1
    xs, ys = vals
    if len(xs) != n + 1 or len(ys) != n - 1:
        raise ParseError(f"expected {n + 1} base and {n - 1} fiber coordinates, "
                         f"got {len(xs)} and {len(ys)}", len(text), text)
    return CPoint(tuple(xs), tuple(ys))


def threads() -> int:
    raw = os.environ.get("CAUSALGEO_THREADS", "")
    if not raw:
        return min(8, os.cpu_count() or 1)
    try:
        k = int(raw)
    except ValueError:
        raise ConfigError(f"CAUSALGEO_THREADS must be an integer, got {raw!r}") from None
    return max(1, k)


def ordered_map(fn: Callable, items: Sequence) -> list:
    """Parallel map with results in input order; exceptions are returned, not raised."""
    def safe(it):
        try:
            return fn(it)
        except GeometricError as exc:
            return exc
    k = threads()
    if k == 1 or len(items) <= 1:
        return [safe(it) for it in items]
    with ThreadPoolExecutor(max_workers=k) as pool:
        return list(pool.map(safe, items))


def random_point(rng: np.random.Generator, n: int, box: tuple[float, float]) -> CPoint:
    z = rng.uniform(box[0], box[1], 2 * n)
    return CPoint(tuple(z[:n + 1]), tuple(z[n + 1:]))


def sample_with_rejection(fn: Callable, rng, n: int, box, count: int):
    """Evaluate fn at ``count`` random points, redrawing slots that fail geometrically.

    Draws happen in slot order on the calling thread, so results are
    independent of the worker count.
    """
    points: list[CPoint | None] = [None] * count
    results: list = [None] * count
    todo = list(range(count))
    rejected = 0
    while todo:
        for i in todo:
            points[i] = random_point(rng, n, box)
        out = ordered_map(fn, [points[i] for i in todo])
        again = []
        for i, r in zip(todo, out):
            if isinstance(r, GeometricError):
                rejected += 1
                if rejected > MAX_REJECTIONS:
                    raise GeometricError(f"more than {MAX_REJECTIONS} rejected sample points; "
                                         f"last failure: {r}")
                again.append(i)
            else:
                results[i] = r
        todo = again
    return points, results, rejected


# writers ------------------------------------------------------------------------

@dataclass
class Table:
    header: list[str]
    rows: list[list]
    trailer: str | None = None

    def csv(self) -> str:
        lines = [",".join(self.header)]
        lines += [",".join(fmt(v) if not isinstance(v, str) else v for v in r) for r in self.rows]
        if self.trailer:
            lines.append(self.trailer)
        return "\n".join(lines) + "\n"

    def json(self) -> str:
        recs = [dict(zip(self.header, r)) for r in self.rows]
        obj: dict = {"rows": recs}
        if self.trailer:
            obj["aborted"] = self.trailer.removeprefix("# aborted: ")
        return dumps(obj) + "\n"


def emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
        sys.stdout.flush()


def render(table: Table, fmt_: str) -> str:
    return table.json() if fmt_ == "json" else table.csv()


def coord_names(n: int) -> list[str]:
    return [f"x{i}" for i in range(n + 1)] + [f"y{a}" for a in range(1, n)]


# commands ------------------------------------------------------------------------

def invariant_header(S: CausalStructure) -> list[str]:
    cols = coord_names(S.n) + ["inertia_p", "inertia_q", "fubini_norm", "pick", "apolarity_resid"]
    if S.n == 3:
        cols += ["fplus", "fminus"]
    return cols + ["flags"]


def invariant_row(S: CausalStructure, rep) -> list:
    flags = "|".join(k for k, v in rep.flags.items() if v)
    row = list(rep.point.x) + list(rep.point.y) + [rep.inertia[0], rep.inertia[1], rep.fubini_norm,
                                                   rep.pick, rep.apolarity_resid]
    if S.n == 3:
        row += [rep.fplus, rep.fminus]
    return row + [flags]


def cmd_invariants(args) -> int:
    S = resolve_structure(args.structure)
    header = invariant_header(S)
    fn = lambda p: invariant_report(S, p)
    if args.at:
        pts = [parse_point(a, S.n) for a in args.at]
        out = ordered_map(fn, pts)
        rows, trailer = [], None
        for p, r in zip(pts, out):
            if isinstance(r, GeometricError):
                trailer = f"# aborted: {r} at {fmt_point(p)}"
                break
            rows.append(invariant_row(S, r))
        emit(render(Table(header, rows, trailer), args.format), args.out)
        if trailer:
            print(f"causalgeo: geometric error at {fmt_point(p)}: {r}", file=sys.stderr)
            return EXIT_GEOMETRY
        return EXIT_OK
    rng = np.random.default_rng(args.seed)
    _, reps, _ = sample_with_rejection(fn, rng, S.n, args.box, args.samples)
    emit(render(Table(header, [invariant_row(S, r) for r in reps]), args.format), args.out)
    return EXIT_OK


def fmt_point(p: CPoint) -> str:
    return ",".join(fmt(v) for v in p.x) + ";" + ",".join(fmt(v) for v in p.y)


GEODESIC_TAIL = ["theta", "sigma2", "omega2", "pnn", "wsf_norm", "raych_residual", "omega0_drift"]


def geodesic_table(S: CausalStructure, run) -> Table:
    header = ["t"] + coord_names(S.n) + GEODESIC_TAIL
    rows = []
    traj, J, sc = run.traj, run.jacobi, run.scalars
    k = run.rows
    for i in range(k):
        row = [traj.t[i]] + list(traj.z[i])
        if sc is not None and i < len(sc.t):
            row += [sc.theta[i], sc.sigma2[i], sc.omega2[i], sc.pnn[i], sc.wsf_norm[i],
                    sc.raych_residual[i]]
        else:
            row += [math.nan] * 6
        row.append(J.omega0_drift[i] if J is not None and i < len(J.t) else math.nan)
        rows.append(row)
    trailer = f"# aborted: {run.error}" if run.error is not None else None
    return Table(header, rows, trailer)


def cmd_geodesic(args) -> int:
    S = resolve_structure(args.structure)
    p = parse_point(getattr(args, "from"), S.n)
    if not args.tmax > 0:
        raise ConfigError("--tmax must be positive")
    try:
        run = run_geodesic(S, p, (0.0, args.tmax), tol=args.tol, samples=args.samples,
                           exclude_steps=args.exclude_steps)
    except GeometricError as exc:
        emit(render(Table(["t"] + coord_names(S.n) + GEODESIC_TAIL, [], f"# aborted: {exc}"),
                    args.format), args.out)
        raise
    emit(render(geodesic_table(S, run), args.format), args.out)
    if run.error is not None:
        print(f"causalgeo: aborted: {run.error}", file=sys.stderr)
        return EXIT_GEOMETRY
    return EXIT_OK


def _max(vals) -> float:
    vals = [v for v in vals if v is not None and math.isfinite(v)]
    return max(vals) if vals else math.nan


def classify(S: CausalStructure, samples: int, trajectories: int, seed: int,
             box=(-0.5, 0.5), tmax: float = 1.0, traj_samples: int = 41, tol: float = 1e-9,
             exclude_steps: float = 10.0) -> dict:
    rng = np.random.default_rng(seed)
    _, reps, rej_pts = sample_with_rejection(lambda p: invariant_report(S, p), rng, S.n, box, samples)

    def traj_job(p):
        run = run_geodesic(S, p, (0.0, tmax), tol=tol, samples=traj_samples, exclude_steps=exclude_steps)
        if run.error is not None:
            raise run.error if isinstance(run.error, GeometricError) else GeometricError(str(run.error))
        return run

    _, runs, rej_traj = sample_with_rejection(traj_job, rng, S.n, box, trajectories)
    split4 = S.n == 3 and S.signature == (1, 1)
    fub = all(r.flags["fubini_zero"] for r in reps)
    wsf_vals, pnn_vals = [], []
    for run in runs:
        sc = run.scalars
        ok = ~sc.in_window & np.isfinite(sc.theta)
        wsf_vals += list(sc.wsf_norm[ok])
        pnn_vals += list(sc.pnn[ok])
    wsf_max = _max(wsf_vals)
    tidal_zero = bool(wsf_vals) and wsf_max < TIDAL_ZERO
    pos = sum(1 for v in pnn_vals if v > TIDAL_ZERO)
    neg = sum(1 for v in pnn_vals if v < -TIDAL_ZERO)
    verdict = {
        "structure": S.name,
        "fubini_zero": fub,
        "ruled_plus": all(r.flags["ruled_plus"] for r in reps) if split4 else None,
        "ruled_minus": all(r.flags["ruled_minus"] for r in reps) if split4 else None,
        "tidal_tracefree_zero": tidal_zero,
        "ssf_sign_profile": {"positive": pos, "negative": neg, "zero": len(pnn_vals) - pos - neg},
    }
    if split4:
        exact = S.x_independent or (fub and tidal_zero)
        verdict["halfflat"] = {
            "plus": verdict["ruled_plus"] and tidal_zero,
            "minus": verdict["ruled_minus"] and tidal_zero,
            "label": "exact" if exact else "proxy",
        }
    verdict["residuals"] = {
        "fubini_norm_max": _max(r.fubini_norm for r in reps),
        "apolarity_max": _max(r.apolarity_resid for r in reps),
        "fplus_abs_max": _max(abs(r.fplus) for r in reps) if split4 else None,
        "fminus_abs_min": min(abs(r.fminus) for r in reps) if split4 else None,
        "wsf_norm_max": wsf_max,
        "raych_max": _max(float(np.nanmax(np.abs(run.scalars.raych_residual[~run.scalars.in_window])))
                          for run in runs if np.any(~run.scalars.in_window)),
        "omega0_drift_max": _max(float(np.max(run.jacobi.omega0_drift)) for run in runs),
    }
    verdict["rejections"] = {"points": rej_pts, "trajectories": rej_traj}
    verdict["samples"] = samples
    verdict["trajectories"] = trajectories
    verdict["seed"] = seed
    return verdict


def cmd_classify(args) -> int:
    S = resolve_structure(args.structure)
    v = classify(S, args.samples, args.trajectories, args.seed, args.box, args.tmax,
                 tol=args.tol, exclude_steps=args.exclude_steps)
    emit(dumps(v) + "\n", args.out)
    return EXIT_OK


def cmd_catalog(args) -> int:
    if args.action == "list":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["name", "kind", "description"])
        for nm in catalog.names():
            e = catalog.get(nm)
            w.writerow([nm, e.kind, e.description])
        emit(buf.getvalue(), args.out)
        return EXIT_OK
    if not args.name:
        raise ConfigError("catalog show needs an entry name")
    emit(dumps(catalog.describe(args.name)) + "\n", args.out)
    return EXIT_OK


# argument parsing -------------------------------------------------------------------

def _box(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(s) for s in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("box must read lo,hi") from None
    if not lo < hi:
        raise argparse.ArgumentTypeError("box needs lo < hi")
    return lo, hi


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_INPUT)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="causalgeo", description="Local invariants of causal structures.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, seed=True):
        p.add_argument("--structure", required=True, help="catalog name or structure file")
        p.add_argument("--out", help="output path (default stdout)")
        if seed:
            p.add_argument("--seed", type=int, default=0)
            p.add_argument("--box", type=_box, default=(-0.5, 0.5), help="sampling box lo,hi")

    p = sub.add_parser("invariants", help="pointwise fiber invariants")
    common(p)
    p.add_argument("--at", action="append", help="point 'x0,..,xn;y1,..' (repeatable)")
    p.add_argument("--samples", type=int, default=10)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_invariants)

    p = sub.add_parser("geodesic", help="characteristic curve with optical scalars")
    common(p, seed=False)
    p.add_argument("--from", required=True, help="start point 'x0,..,xn;y1,..'")
    p.add_argument("--tmax", type=float, default=1.0)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--samples", type=int, default=101, help="output grid size")
    p.add_argument("--exclude-steps", type=float, default=10.0,
                   help="radius of the base-point exclusion window in mean steps")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_geodesic)

    p = sub.add_parser("classify", help="flag verdict from random points and trajectories")
    common(p)
    p.add_argument("--samples", type=int, default=25)
    p.add_argument("--trajectories", type=int, default=5)
    p.add_argument("--tmax", type=float, default=1.0)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--exclude-steps", type=float, default=10.0)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("catalog", help="list or show built-in entries")
    p.add_argument("action", choices=("list", "show"))
    p.add_argument("name", nargs="?")
    p.add_argument("--out")
    p.set_defaults(func=cmd_catalog)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    for attr in ("samples", "trajectories"):
        if getattr(args, attr, 1) is not None and getattr(args, attr, 1) < 1:
            print(f"causalgeo: error: --{attr} must be positive", file=sys.stderr)
            return EXIT_INPUT
    try:
        return args.func(args)
    except (InputError, PreconditionError, OSError) as exc:
        print(f"causalgeo: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except GeometricError as exc:
        print(f"causalgeo: geometric error: {exc}", file=sys.stderr)
        return EXIT_GEOMETRY


if __name__ == "__main__":
    sys.exit(main())
