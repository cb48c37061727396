"""Batch front-end for holonomy experiments.

Every command is a thin composition of library operations: load JSON
inputs, run the named computation, and emit a deterministic JSON report
(stdout, and ``<command>.json`` under ``--out`` when given).  Batch
commands additionally write a CSV summary and two-column ``.dat`` files
that any plotting tool can consume.  Nothing here owns numerics.

Exit codes: 0 success; 1 a mathematical verdict failed under ``--strict``;
2 usage or input errors; 3 numeric failures inside an operation.
Reports never embed timestamps or environment data, so a fixed command
line with a fixed seed reproduces byte-identical output.  The environment
variable ``HOLONOMY_LAB_THREADS`` caps worker fan-out for batch runs.
"""

from __future__ import annotations

import argparse
import json
import os
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import matrixgroups as mg
from .connections import (
    GeneralizedConnection,
    GeometryError,
    IndependenceError,
    SmoothConnection,
    generalized_from_dict,
    holonomy_general,
    holonomy_smooth,
    holonomy_smooth_path,
    edge_polyline,
    smooth_from_dict,
)
from .cylindrical import HaarMean, cyl_from_dict, invariance_check
from .pathgroupoid import (
    CompositionError,
    Graph,
    UnknownEdgeError,
    abelianize,
    graph_from_dict,
    word_from_tokens,
    word_to_tokens,
)
from .spectra import (
    LoopAssignment,
    abelian_obstruction_witness,
    approximation_experiment,
    closure_membership,
    loop_assignment_from_dict,
    orbit_representative,
    tree_basis,
    tree_decompose,
    tree_reconstruct,
)

DEFAULT_WORKERS = 4


class CliError(Exception):
    """Input or usage problem; carries the process exit code."""

    def __init__(self, message, code=2):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# input plumbing

def _load_json(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise CliError(f"{path}: no such file") from None
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None


def _load_graph(path):
    try:
        return graph_from_dict(_load_json(path))
    except (ValueError, KeyError) as exc:
        raise CliError(f"{path}: {exc}") from None


def _load_connection(graph, path):
    data = _load_json(path)
    try:
        if isinstance(data, dict) and "terms" in data:
            return smooth_from_dict(data)
        return generalized_from_dict(graph, data)
    except (ValueError, KeyError, mg.DescriptorMismatchError) as exc:
        raise CliError(f"{path}: {exc}") from None


def _load_function(graph, path):
    try:
        return cyl_from_dict(graph, _load_json(path))
    except (ValueError, KeyError) as exc:
        raise CliError(f"{path}: {exc}") from None


_SHORTHAND = re.compile(r"^(su|u|t|torus)(\d+)$")


def parse_group(text):
    """A descriptor from a JSON file path or shorthand like su2, u1xsu2."""
    if os.path.exists(text):
        try:
            return mg.descriptor_from_dict(_load_json(text))
        except ValueError as exc:
            raise CliError(f"{text}: {exc}") from None
    factors = []
    for part in text.lower().split("x"):
        m = _SHORTHAND.match(part.strip())
        if not m:
            raise CliError(f"cannot parse group {text!r} (file not found, "
                           f"and not shorthand like su2, u3, t2, u1xsu2)")
        kind, n = m.group(1), int(m.group(2))
        if kind == "su":
            factors.append(mg.SpecialUnitary(n))
        elif kind == "u":
            factors.append(mg.Unitary(n))
        else:
            factors.append(mg.Torus(n))
    return factors[0] if len(factors) == 1 else mg.ProductGroup(tuple(factors))


def parse_path_tokens(text):
    tokens = [t for t in re.split(r"[,\s]+", text.strip()) if t]
    if not tokens:
        raise CliError("empty --path")
    return tokens


def _path_word(graph, text):
    try:
        return word_from_tokens(graph, parse_path_tokens(text))
    except (ValueError, UnknownEdgeError, CompositionError) as exc:
        raise CliError(f"--path: {exc}") from None


def _holonomy(conn, graph, word, steps, tol):
    if isinstance(conn, SmoothConnection):
        return holonomy_smooth_path(conn, graph, word, steps, tol)
    return holonomy_general(conn, word)


def _as_generalized(conn, graph, steps, tol):
    """Edge holonomies of a smooth connection as a generalized one."""
    if isinstance(conn, GeneralizedConnection):
        return conn
    values = {}
    for eid in conn_edge_ids(graph):
        h = holonomy_smooth(conn, edge_polyline(graph, eid), steps, tol)
        values[eid] = h
    return GeneralizedConnection(graph, conn.descriptor, values, check=False)


def conn_edge_ids(graph):
    from .pathgroupoid import _id_key
    return sorted(graph.edges, key=_id_key)


def _pair(z):
    return [float(np.real(z)), float(np.imag(z))]


# ---------------------------------------------------------------------------
# output plumbing

def _dump(report):
    return json.dumps(report, sort_keys=True, indent=2) + "\n"


def _emit(report, out, name, extra_files=()):
    text = _dump(report)
    sys.stdout.write(text)
    if out is not None:
        directory = Path(out)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / f"{name}.json").write_text(text, encoding="utf-8")
        for fname, content in extra_files:
            (directory / fname).write_text(content, encoding="utf-8")


def _max_workers(jobs):
    cap = os.environ.get("HOLONOMY_LAB_THREADS", "")
    try:
        cap = int(cap) if cap else DEFAULT_WORKERS
    except ValueError:
        raise CliError(f"HOLONOMY_LAB_THREADS={cap!r} is not an integer")
    return max(1, min(jobs, cap))


# ---------------------------------------------------------------------------
# commands

def cmd_holonomy(args):
    graph = _load_graph(args.graph)
    conn = _load_connection(graph, args.connection)
    word = _path_word(graph, args.path)
    h = _holonomy(conn, graph, word, args.steps, args.tolerance)
    tr = complex(np.trace(h.matrix))
    report = {
        "command": "holonomy",
        "path": word_to_tokens(word),
        "source": word.source,
        "range": word.range,
        "group": mg.descriptor_to_dict(conn.descriptor),
        "matrix": mg.matrix_to_pairs(h.matrix),
        "trace": _pair(tr),
        "trace_normalized": _pair(tr / mg.dim(conn.descriptor)),
        "ok": True,
    }
    return report, []


def cmd_wilson(args):
    graph = _load_graph(args.graph)
    conn = _load_connection(graph, args.connection)
    word = _path_word(graph, args.path)
    if not word.is_loop():
        raise CliError(f"--path: wilson needs a loop, got {word.source!r} -> {word.range!r}")
    h = _holonomy(conn, graph, word, args.steps, args.tolerance)
    value = complex(np.trace(h.matrix)) / mg.dim(conn.descriptor)
    report = {
        "command": "wilson",
        "path": word_to_tokens(word),
        "basepoint": word.source,
        "group": mg.descriptor_to_dict(conn.descriptor),
        "value": _pair(value),
        "ok": True,
    }
    return report, []


def cmd_gauge_orbit(args):
    graph = _load_graph(args.graph)
    conn = _load_connection(graph, args.connection)
    desc = conn.descriptor
    basis = tree_basis(graph)
    if not basis.loop_ids:
        raise CliError("graph has no independent loops; the orbit is a point")
    values = [_holonomy(conn, graph, basis.loops[eid], args.steps, args.tolerance)
              for eid in basis.loop_ids]
    rep = orbit_representative(desc, values)
    report = {
        "command": "gauge-orbit",
        "group": mg.descriptor_to_dict(desc),
        "loop_ids": [str(eid) for eid in basis.loop_ids],
        "loop_values": [mg.matrix_to_pairs(v.matrix) for v in values],
        "representative": [mg.matrix_to_pairs(r.matrix) for r in rep],
        "seed": args.seed,
        "samples": args.samples,
        "ok": True,
    }
    if args.function is not None:
        f = _load_function(graph, args.function)
        drift = invariance_check(f, conn, desc, gauges=args.samples, seed=args.seed,
                                 graph=graph, steps=args.steps, tol=args.tolerance)
        report["function_drift"] = drift
        report["ok"] = drift <= args.check_tolerance
    return report, []


def cmd_haar_mean(args):
    graph = _load_graph(args.graph)
    conn = _load_connection(graph, args.connection)
    f = _load_function(graph, args.function)
    hm = HaarMean(f, conn.descriptor, layers=args.layers)

    def run(n):
        return hm.estimate(conn, n, args.seed, graph=graph,
                           steps=args.steps, tol=args.tolerance)

    ladder = sorted({max(2, args.samples >> k) for k in range(5, 0, -1)} | {args.samples})
    rows = []
    est = None
    for n in ladder:
        e = run(n)
        rows.append(f"{n} {e.value.real!r}\n")
        if n == args.samples:
            est = e
    report = {
        "command": "haar-mean",
        "group": mg.descriptor_to_dict(conn.descriptor),
        "value": _pair(est.value),
        "stderr": est.stderr,
        "samples": est.samples,
        "layers": est.layers,
        "seed": args.seed,
        "ok": True,
    }
    return report, [("haar-mean.dat", "".join(rows))]


def cmd_theta(args):
    graph = _load_graph(args.graph)
    conn = _load_connection(graph, args.connection)
    edge_conn = _as_generalized(conn, graph, args.steps, args.tolerance)
    basis = tree_basis(graph)
    dec = tree_decompose(basis, edge_conn)
    back = tree_reconstruct(basis, edge_conn.descriptor, dec.loop_values, frames=dec.frames)
    err = max(float(mg.distance(back.value(eid), edge_conn.value(eid)))
              for eid in graph.edges)
    report = {
        "command": "theta",
        "group": mg.descriptor_to_dict(edge_conn.descriptor),
        "tree_edges": sorted(str(eid) for eid in basis.tree_edges),
        "loop_ids": [str(eid) for eid in basis.loop_ids],
        "frames": {str(v): mg.matrix_to_pairs(dec.frames[v].matrix)
                   for v in graph.vertices},
        "loop_values": {str(eid): mg.matrix_to_pairs(dec.loop_values[eid].matrix)
                        for eid in basis.loop_ids},
        "roundtrip_error": err,
        "ok": err <= args.check_tolerance,
    }
    return report, []


def cmd_approx(args):
    family = _load_json(args.family)
    if args.graph is not None:
        graph = _load_graph(args.graph)
    elif "graph" in family:
        try:
            graph = graph_from_dict(family["graph"])
        except (ValueError, KeyError) as exc:
            raise CliError(f"{args.family}: {exc}") from None
    else:
        raise CliError(f"{args.family} has no graph; pass --graph")
    try:
        words = [word_from_tokens(graph, t) for t in family["words"]]
    except (KeyError, ValueError, UnknownEdgeError, CompositionError) as exc:
        raise CliError(f"{args.family}: {exc}") from None
    windows = family.get("windows")
    if windows is not None:
        windows = [tuple(w) for w in windows]
    label = family.get("label", "interpolation")
    desc = parse_group(args.group)
    seeds = list(range(args.seed, args.seed + args.seeds))

    def run(seed):
        return approximation_experiment(
            graph, words, desc, seed, windows=windows, bound=args.bound,
            label=label, steps=args.steps, tol=args.tolerance)

    if len(seeds) == 1:
        reports = [run(seeds[0])]
    else:
        with ThreadPoolExecutor(max_workers=_max_workers(len(seeds))) as pool:
            reports = list(pool.map(run, seeds))
    ok = all(r.verdict for r in reports)
    csv_rows = ["seed,max_error,verdict\n"]
    dat_rows = []
    for r in reports:
        worst = max(r.errors)
        csv_rows.append(f"{r.seed},{worst!r},{str(r.verdict).lower()}\n")
        dat_rows.append(f"{r.seed} {worst!r}\n")
    report = {
        "command": "approx",
        "group": mg.descriptor_to_dict(desc),
        "label": label,
        "bound": args.bound,
        "reports": [r.to_dict() for r in reports],
        "ok": ok,
    }
    extras = [("approx.csv", "".join(csv_rows)), ("approx-errors.dat", "".join(dat_rows))]
    return report, extras


def cmd_obstruction(args):
    graph = _load_graph(args.graph)
    if args.path is not None:
        word = _path_word(graph, args.path)
        exponents = abelianize(word)
        verdict = "Obstructed" if not exponents else "Unobstructed"
        report = {
            "command": "obstruction",
            "mode": "word",
            "word": word_to_tokens(word),
            "abelianization": {str(eid): c for eid, c in sorted(
                exponents.items(), key=lambda kv: str(kv[0]))},
            "verdict": verdict,
            "ok": True,
        }
        return report, []
    wit = abelian_obstruction_witness(graph)
    report = {
        "command": "obstruction",
        "mode": args.loops,
        "verdict": "Obstructed",
        "ok": wit.nonabelian_defect > 1.0,
    }
    report.update(wit.to_dict())
    if args.connection is not None:
        conn = _load_connection(graph, args.connection)
        defect = wit.abelian_defect(conn, graph=graph,
                                    steps=args.steps, tol=args.tolerance)
        report["abelian_defect"] = defect
        report["ok"] = report["ok"] and defect <= args.check_tolerance
    return report, []


def cmd_closure(args):
    graph = _load_graph(args.graph)
    if (args.family is None) == (args.connection is None):
        raise CliError("closure needs exactly one of --family or --connection")
    if args.connection is not None:
        data = _load_connection(graph, args.connection)
        if isinstance(data, SmoothConnection):
            data = _as_generalized(data, graph, args.steps, args.tolerance)
    else:
        try:
            data = loop_assignment_from_dict(graph, _load_json(args.family))
        except (ValueError, KeyError, mg.DescriptorMismatchError) as exc:
            raise CliError(f"{args.family}: {exc}") from None
    verdict = closure_membership(data, bound=args.bound, tol=args.check_tolerance)
    report = {"command": "closure", "ok": verdict.member}
    report.update(verdict.to_dict())
    return report, []


# ---------------------------------------------------------------------------
# argument wiring

def _build_parser():
    parser = argparse.ArgumentParser(
        prog="holonomy-lab",
        description="holonomy, gauge and closure experiments on finite graphs")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, **needs):
        p = sub.add_parser(name)
        p.set_defaults(func=func)
        p.add_argument("--graph", required=needs.get("graph", False))
        if "connection" in needs:
            p.add_argument("--connection", required=needs["connection"])
        if "function" in needs:
            p.add_argument("--function", required=needs["function"])
        if "group" in needs:
            p.add_argument("--group", required=needs["group"])
        if "path" in needs:
            p.add_argument("--path", required=needs["path"])
        if "family" in needs:
            p.add_argument("--family", required=needs["family"])
        if "seed" in needs:
            p.add_argument("--seed", type=int, required=needs["seed"])
        if "samples" in needs:
            p.add_argument("--samples", type=int, default=needs["samples"])
        if "seeds" in needs:
            p.add_argument("--seeds", type=int, default=1)
        if "layers" in needs:
            p.add_argument("--layers", type=int, default=1)
        if "bound" in needs:
            p.add_argument("--bound", type=needs["bound"][0], default=needs["bound"][1])
        if "loops" in needs:
            p.add_argument("--loops", choices=["commutator"], default="commutator")
        p.add_argument("--steps", type=int, default=8)
        p.add_argument("--tolerance", type=float, default=1e-9)
        p.add_argument("--check-tolerance", type=float, default=needs.get("check_tol", 1e-8))
        p.add_argument("--out", default=None)
        p.add_argument("--strict", action="store_true")
        return p

    add("holonomy", cmd_holonomy, graph=True, connection=True, path=True)
    add("wilson", cmd_wilson, graph=True, connection=True, path=True)
    add("gauge-orbit", cmd_gauge_orbit, graph=True, connection=True,
        function=False, seed=True, samples=20)
    add("haar-mean", cmd_haar_mean, graph=True, connection=True,
        function=True, seed=True, samples=4096, layers=1)
    add("theta", cmd_theta, graph=True, connection=True, check_tol=1e-9)
    add("approx", cmd_approx, graph=False, group=True, family=True,
        seed=True, seeds=True, bound=(float, 1e-6))
    add("obstruction", cmd_obstruction, graph=True, connection=False,
        path=False, loops=True)
    add("closure", cmd_closure, graph=True, connection=False, family=False,
        bound=(int, 6))
    return parser


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        report, extras = args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (IndependenceError, GeometryError, mg.BranchCutError,
            np.linalg.LinAlgError) as exc:
        print(f"error: {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    _emit(report, args.out, args.command, extras)
    if args.strict and not report.get("ok", True):
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
