"""Command-line front end.

Exit codes: 0 success, 2 validation error, 3 capacity error, 4 a bound or
sign check failed beyond its slack.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .batch import run_batch
from .closure import MIN, PRODUCT, Closure, EpidemicParams, closure_from_config, parse_closure_spec
from .correlation import SIGN_TOL, verify_nonnegative_correlation
from .errors import CapacityError, EpiboundError, PreconditionError, ValidationError
from .graph import Graph, read_graph
from .master import MasterDistribution, init_product_distribution, max_nodes, solve_master
from .meanfield import BOUND_SLACK, verify_bounds
from .report import check_writable, render_csv, render_json, write_outputs
from .steadystate import bifurcation_sweep, solve_steady_state

EXIT_OK, EXIT_VALIDATION, EXIT_CAPACITY, EXIT_VIOLATION = 0, 2, 3, 4


@dataclass
class Scenario:
    graph_path: Path | None = None
    tau: float = 1.0
    gamma: float = 1.0
    closure: Closure = PRODUCT
    init: Any = 0.1           # scalar broadcast or per-node list
    t_end: float = 10.0
    output_points: int = 50
    seed: int = 0
    extra: dict = field(default_factory=dict)

    def params(self) -> EpidemicParams:
        return EpidemicParams(self.tau, self.gamma)

    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.t_end, self.output_points)

    def init_vector(self, n: int) -> np.ndarray:
        v = np.atleast_1d(np.asarray(self.init, dtype=float))
        if v.size == 1:
            v = np.full(n, float(v[0]))
        if v.shape != (n,):
            raise ValidationError(f"init has {v.size} entries, graph has {n} nodes")
        if np.any(v < 0) or np.any(v > 1):
            raise ValidationError("init values must lie in [0, 1]")
        return v

    def meta(self) -> dict:
        return {
            "graph": str(self.graph_path),
            "tau": self.tau,
            "gamma": self.gamma,
            "closure": self.closure.config(),
            "init": self.init if np.isscalar(self.init) else list(np.asarray(self.init, float)),
            "t_end": self.t_end,
            "output_points": self.output_points,
        }


def _parse_init(raw: str):
    try:
        return float(raw)
    except ValueError:
        pass
    if "," in raw:
        try:
            return [float(x) for x in raw.split(",")]
        except ValueError:
            raise ValidationError(f"cannot parse init list {raw!r}") from None
    path = Path(raw)
    if not path.exists():
        raise ValidationError(f"init {raw!r} is neither a number, a list, nor a file")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from None


def _load_scenario(args) -> Scenario:
    sc = Scenario()
    if getattr(args, "scenario", None):
        path = Path(args.scenario)
        try:
            doc = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read scenario {path}: {exc}") from None
        graph = doc.get("graph_path", doc.get("graph"))
        if graph is not None:
            gp = Path(graph)
            sc.graph_path = gp if gp.is_absolute() else path.parent / gp
        for key in ("tau", "gamma", "t_end", "output_points", "seed", "init"):
            if key in doc:
                setattr(sc, key, doc[key])
        if "closure" in doc:
            c = doc["closure"]
            sc.closure = parse_closure_spec(c) if isinstance(c, str) else closure_from_config(c)
    if getattr(args, "graph", None):
        sc.graph_path = Path(args.graph)
    for attr, key in (("tau", "tau"), ("gamma", "gamma"), ("t_end", "t_end"),
                      ("points", "output_points"), ("seed", "seed")):
        v = getattr(args, attr, None)
        if v is not None:
            setattr(sc, key, v)
    if getattr(args, "closure", None):
        sc.closure = parse_closure_spec(args.closure)
    if getattr(args, "init", None) is not None:
        sc.init = _parse_init(args.init)
    if sc.t_end <= 0:
        raise ValidationError("t_end must be positive")
    if sc.output_points < 2:
        raise ValidationError("points must be at least 2")
    return sc


def _graph(sc: Scenario) -> Graph:
    if sc.graph_path is None:
        raise ValidationError("a graph is required (--graph PATH)")
    try:
        return read_graph(sc.graph_path)
    except OSError as exc:
        raise ValidationError(f"cannot read graph: {exc}") from None


def _base_meta(command: str, args) -> dict:
    return {"tool": f"epibound {__version__}", "command": command}


def _emit(args, meta, columns, rows, suffix: str = "") -> list[Path]:
    """Write CSV (and JSON mirror) to --out, or print to stdout."""
    rows = list(rows)
    csv_text = render_csv(meta, columns, rows)
    json_text = render_json(meta, columns, rows) if args.json else None
    if args.out:
        path = Path(args.out)
        if suffix:
            path = path.with_name(path.stem + suffix + path.suffix)
        return write_outputs(path, csv_text, json_text, args.force)
    sys.stdout.write(json_text if json_text is not None else csv_text)
    return []


def _targets(args, suffixes):
    if not args.out:
        return
    base = Path(args.out)
    paths = []
    for s in suffixes:
        p = base.with_name(base.stem + s + base.suffix)
        paths.append(p)
        if args.json:
            paths.append(p.with_suffix(p.suffix + ".json"))
    check_writable(paths, args.force)


# -- commands --------------------------------------------------------------


def cmd_bounds(args) -> int:
    sc = _load_scenario(args)
    g = _graph(sc)
    if g.n > max_nodes():
        raise CapacityError(f"graph has {g.n} nodes; exact solves are capped at {max_nodes()}")
    _targets(args, ["", "_report"])
    params, times, init = sc.params(), sc.times(), sc.init_vector(g.n)
    exact = solve_master(g, params, init_product_distribution(g.n, init), times)
    up = verify_bounds(g, params, init, times, PRODUCT, "upper", exact=exact)
    low = verify_bounds(g, params, init, times, MIN, "lower", exact=exact)
    reports = [("nimfa", up), ("min", low)]
    if sc.closure.kind == "product":
        reports.append(("closure", up))
    elif sc.closure.kind == "min":
        reports.append(("closure", low))
    else:
        direction = args.direction or "upper"
        reports.append(("closure", verify_bounds(g, params, init, times, sc.closure,
                                                  direction, exact=exact)))

    n = g.n
    columns = ["t"]
    blocks = [exact.infected()]
    columns += [f"exact_I{i + 1}" for i in range(n)]
    for name, rep in reports:
        columns += [f"{name}_I{i + 1}" for i in range(n)]
        blocks.append(rep.closed)
    table = np.column_stack([times] + blocks)
    meta = _base_meta("bounds", args)
    meta.update(sc.meta())
    meta.update({"bound_slack": BOUND_SLACK, "abs_tol": 1e-10, "rel_tol": 1e-10,
                 "clamped": exact.clamped})
    _emit(args, meta, columns, table.tolist())

    rcols = ["model", "closure", "direction", "worst_violation", "violation_time",
             "violation_node", "asserted", "passed"]
    rrows = []
    for name, rep in reports:
        asserted = name in ("nimfa", "min") or args.direction is not None
        rrows.append([name, rep.closure, rep.direction, rep.worst_violation,
                      rep.violation_time, rep.violation_node, int(asserted), int(rep.passed)])
    if args.out:
        _emit(args, meta, rcols, rrows, suffix="_report")
    else:
        for r in rrows:
            print("# report: " + ", ".join(f"{k}={v}" for k, v in zip(rcols, r)), file=sys.stderr)
    failed = any(r[6] and not r[7] for r in rrows)
    return EXIT_VIOLATION if failed else EXIT_OK


def _raw_init(path: str, n: int) -> MasterDistribution:
    try:
        probs = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read raw init {path}: {exc}") from None
    d = MasterDistribution(n, np.asarray(probs, dtype=float))
    d.validate()
    return d


def cmd_correlations(args) -> int:
    sc = _load_scenario(args)
    g = _graph(sc)
    if g.n < 2:
        raise ValidationError("correlations need at least 2 nodes")
    if g.n > max_nodes():
        raise CapacityError(f"graph has {g.n} nodes; exact solves are capped at {max_nodes()}")
    _targets(args, [""])
    init = _raw_init(args.raw_init, g.n) if args.raw_init else sc.init_vector(g.n)
    rep = verify_nonnegative_correlation(g, sc.params(), init, sc.times())
    corr = rep.report
    columns = ["t", "min_A", "min_II_excess"]
    n = g.n
    pairs = [(i, j) for i in range(n) for j in range(n) if i != j]
    if args.full:
        columns += [f"A_{i + 1}_{j + 1}" for i, j in pairs]
    off = ~np.eye(n, dtype=bool)
    rows = []
    for k, t in enumerate(corr.times):
        row = [t, float(corr.A[k][off].min()), float(corr.II_excess[k][off].min())]
        if args.full:
            row += [corr.A[k, i, j] for i, j in pairs]
        rows.append(row)
    meta = _base_meta("correlations", args)
    meta.update(sc.meta())
    if args.raw_init:
        meta["init"] = f"raw:{args.raw_init}"
    meta.update({
        "sign_tol": SIGN_TOL,
        "min_A": rep.min_A,
        "min_II_excess": rep.min_II_excess,
        "initial_min_A": rep.initial_min_A,
        "hypothesis_holds": int(rep.hypothesis_holds),
        "warning": int(bool(rep.warnings)),
        "identity_discrepancy": corr.identity_discrepancy,
    })
    for w in rep.warnings:
        print(f"warning: {w}", file=sys.stderr)
    _emit(args, meta, columns, rows)
    if rep.hypothesis_holds and not rep.passed:
        return EXIT_VIOLATION
    return EXIT_OK


def cmd_steady(args) -> int:
    sc = _load_scenario(args)
    g = _graph(sc)
    _targets(args, [""])
    init = None if args.init is None else sc.init_vector(g.n)
    res = solve_steady_state(g, sc.params(), sc.closure, init, tol=args.tol or 1e-10)
    print(f"Lambda = {res.lambda_max:.17g}", file=sys.stderr)
    print(f"gamma/tau = {res.alpha:.17g}", file=sys.stderr)
    print(f"regime = {res.regime}", file=sys.stderr)
    print(f"classification = {res.classification}", file=sys.stderr)
    meta = _base_meta("steady", args)
    meta.update(sc.meta())
    meta.update({"lambda_max": res.lambda_max, "alpha": res.alpha, "regime": res.regime,
                 "classification": res.classification, "residual": res.residual,
                 "iterations": res.iterations, "tol": args.tol or 1e-10})
    rows = [[i + 1, x] for i, x in enumerate(res.fixed_point)]
    _emit(args, meta, ["node", "x"], rows)
    return EXIT_OK


def cmd_sweep(args) -> int:
    sc = _load_scenario(args)
    g = _graph(sc)
    _targets(args, [""])
    lo, hi = args.tau_range
    curve = bifurcation_sweep(g, sc.gamma, sc.closure, (lo, hi), args.steps,
                              tol=args.tol or 1e-10, parallel=args.parallel)
    thr = curve.threshold_estimate
    print(f"Lambda = {curve.lambda_max:.17g}", file=sys.stderr)
    print(f"gamma/Lambda = {curve.predicted_threshold:.17g}", file=sys.stderr)
    print(f"threshold_estimate = {thr}", file=sys.stderr)
    meta = _base_meta("sweep", args)
    meta.update(sc.meta())
    meta.update({"lambda_max": curve.lambda_max, "predicted_threshold": curve.predicted_threshold,
                 "threshold_estimate": "none" if thr is None else thr,
                 "steps": args.steps, "parallel": int(args.parallel)})
    rows = [[t, m, r.classification, r.regime, r.residual]
            for t, m, r in zip(curve.tau_values, curve.steady_state_norms, curve.results)]
    _emit(args, meta, ["tau", "mean_steady_state", "classification", "regime", "residual"], rows)
    return EXIT_OK


def cmd_batch_verify(args) -> int:
    if args.count <= 0:
        raise ValidationError("count must be positive")
    _targets(args, [""])
    seed = args.seed if args.seed is not None else 42
    summary = run_batch(args.count, tuple(args.sizes), tuple(args.tau_range),
                        tuple(args.gamma_range), seed, args.t_end or 10.0, args.points or 50)
    text = summary.to_text()
    if args.out:
        write_outputs(Path(args.out), text, None, args.force)
    else:
        sys.stdout.write(text)
    return EXIT_OK if summary.passed else EXIT_VIOLATION


# -- parser ----------------------------------------------------------------


def _common(p, sweep=False):
    p.add_argument("--scenario", help="JSON scenario file; flags override its fields")
    p.add_argument("--graph", help="graph document (JSON)")
    p.add_argument("--tau", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--closure", help="product | min | geo_sqrt | JSON config | expression in x, y")
    p.add_argument("--init", help="scalar, comma list, or JSON file of node marginals")
    p.add_argument("--t-end", dest="t_end", type=float)
    p.add_argument("--points", type=int)
    _output(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--tol", type=float)


def _output(p):
    p.add_argument("--out", help="output file; stdout when omitted")
    p.add_argument("--json", action="store_true", help="also write a JSON mirror")
    p.add_argument("--force", action="store_true", help="overwrite existing outputs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="epibound", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"epibound {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bounds", help="exact vs NIMFA / min-closure trajectories")
    _common(p)
    p.add_argument("--direction", choices=["upper", "lower"],
                   help="assert a bound direction for a custom --closure")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("correlations", help="pair correlations of the exact chain")
    _common(p)
    p.add_argument("--full", action="store_true", help="dump every A_ij column")
    p.add_argument("--raw-init", dest="raw_init",
                   help="JSON array of 2^n configuration probabilities")
    p.set_defaults(func=cmd_correlations)

    p = sub.add_parser("steady", help="steady state of the closed model")
    _common(p)
    p.set_defaults(func=cmd_steady)

    p = sub.add_parser("sweep", help="steady states over a tau grid")
    _common(p)
    p.add_argument("--tau-range", dest="tau_range", nargs=2, type=float, default=[0.1, 0.6])
    p.add_argument("--steps", type=int, default=51)
    p.add_argument("--parallel", action="store_true", help="cold starts, evaluated concurrently")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("batch-verify", help="bounds and correlations on random graphs")
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--sizes", nargs=2, type=int, default=[3, 10])
    p.add_argument("--tau-range", dest="tau_range", nargs=2, type=float, default=[0.1, 2.0])
    p.add_argument("--gamma-range", dest="gamma_range", nargs=2, type=float, default=[0.1, 2.0])
    p.add_argument("--seed", type=int)
    p.add_argument("--t-end", dest="t_end", type=float)
    p.add_argument("--points", type=int)
    _output(p)
    p.set_defaults(func=cmd_batch_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except CapacityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except (ValidationError, PreconditionError, FileExistsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except EpiboundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
