"""Pair closure relations W(x, y) approximating <I_i I_j> from node marginals.

A closure must be symmetric and lie between the Frechet bounds
``max(x+y-1, 0) <= W(x, y) <= min(x, y)`` on the unit square. Closures with
``xy <= W(x, y) <= xy + V(x, y) min(x, y)`` for a continuous envelope V with
``V(0, 0) = 0`` and ``V <= r < 1`` keep the spectral epidemic threshold of the
product closure; :func:`check_wcond` tests that condition on a grid.
"""

from __future__ import annotations

import ast
import json
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import numpy as np

from .errors import ValidationError

__all__ = [
    "EpidemicParams",
    "Closure",
    "ClosureReport",
    "WcondReport",
    "PRODUCT",
    "MIN",
    "GEO_SQRT",
    "closure_from_config",
    "parse_closure_spec",
    "custom_closure",
    "eval_closure",
    "validate_closure",
    "check_wcond",
    "check_increasing_complement",
]

DOMAIN_SLACK = 1e-12
BOUND_TOL = 1e-12


@dataclass(frozen=True)
class EpidemicParams:
    """Transmission multiplier ``tau`` and recovery rate ``gamma``."""

    tau: float
    gamma: float

    def __post_init__(self):
        for name in ("tau", "gamma"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v)) or v < 0:
                raise ValidationError(f"{name} must be a finite nonnegative real, got {v!r}")
        object.__setattr__(self, "tau", float(self.tau))
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def alpha(self) -> float:
        return self.gamma / self.tau if self.tau > 0 else math.inf


Func2 = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Closure:
    """A closure relation; ``func`` is vectorized over numpy arrays."""

    kind: str
    func: Func2 = field(repr=False)
    envelope: Func2 | None = field(default=None, repr=False)
    r: float | None = None
    expr: str | None = None

    def __call__(self, x, y):
        return self.func(x, y)

    def config(self) -> dict:
        out: dict[str, Any] = {"kind": self.kind}
        if self.expr is not None:
            out["expr"] = self.expr
        if self.r is not None:
            out["r"] = self.r
        return out


def _product(x, y):
    return np.multiply(x, y)


def _min(x, y):
    return np.minimum(x, y)


def _geo_sqrt(x, y):
    return np.sqrt(np.multiply(x, y)) * np.minimum(np.sqrt(x), np.sqrt(y))


def _geo_sqrt_envelope(x, y):
    # W - xy = min(x,y) * (sqrt(M) - M) with M = max(x, y)
    m = np.maximum(x, y)
    return np.sqrt(m) - m


PRODUCT = Closure("product", _product, envelope=lambda x, y: np.zeros(np.broadcast(x, y).shape))
MIN = Closure("min", _min)
GEO_SQRT = Closure("geo_sqrt", _geo_sqrt, envelope=_geo_sqrt_envelope, r=0.25)

BUILTINS = {"product": PRODUCT, "min": MIN, "geo_sqrt": GEO_SQRT}


# -- custom closures from expression strings --------------------------------

_FUNCS = {
    "min": np.minimum,
    "max": np.maximum,
    "sqrt": np.sqrt,
    "pow": np.power,
    "abs": np.abs,
}
_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
    ast.Pow: np.power,
}


def _compile_expr(expr: str) -> Func2:
    try:
        tree = ast.parse(expr, mode="eval")
    except SyntaxError as exc:
        raise ValidationError(f"cannot parse closure expression {expr!r}: {exc.msg}") from None

    def build(node):
        if isinstance(node, ast.Expression):
            return build(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
                and not isinstance(node.value, bool):
            value = float(node.value)
            return lambda x, y: value
        if isinstance(node, ast.Name):
            if node.id == "x":
                return lambda x, y: x
            if node.id == "y":
                return lambda x, y: y
            raise ValidationError(f"unknown name {node.id!r} in closure expression")
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            inner = build(node.operand)
            sign = -1.0 if isinstance(node.op, ast.USub) else 1.0
            return lambda x, y: sign * inner(x, y)
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            op = _BINOPS[type(node.op)]
            lhs, rhs = build(node.left), build(node.right)
            return lambda x, y: op(lhs(x, y), rhs(x, y))
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) \
                and node.func.id in _FUNCS and not node.keywords:
            fn = _FUNCS[node.func.id]
            args = [build(a) for a in node.args]
            arity = 1 if node.func.id in ("sqrt", "abs") else 2
            if len(args) != arity:
                raise ValidationError(f"{node.func.id}() takes {arity} argument(s)")
            return lambda x, y: fn(*(a(x, y) for a in args))
        raise ValidationError(f"unsupported construct in closure expression: {ast.dump(node)}")

    body = build(tree)

    def func(x, y):
        with np.errstate(divide="ignore", invalid="ignore"):
            out = body(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        return np.broadcast_to(out, np.broadcast(x, y).shape).astype(float)

    return func


def custom_closure(expr: str, r: float | None = None, validate: bool = True) -> Closure:
    """Closure from an expression over ``x`` and ``y``.

    Validated against the Frechet bounds and symmetry at resolution 200
    unless ``validate`` is false.
    """
    if r is not None and not 0 < r < 1:
        raise ValidationError(f"r must lie in (0, 1), got {r}")
    c = Closure("custom", _compile_expr(expr), r=r, expr=expr)
    if validate:
        report = validate_closure(c, 200)
        if not report.passed:
            raise ValidationError(f"closure {expr!r} is not a valid closure: {report.summary()}")
    return c


def closure_from_config(cfg: Mapping[str, Any]) -> Closure:
    kind = cfg.get("kind")
    if kind in BUILTINS:
        return BUILTINS[kind]
    if kind == "custom":
        if "expr" not in cfg:
            raise ValidationError("custom closure needs 'expr'")
        return custom_closure(str(cfg["expr"]), cfg.get("r"))
    raise ValidationError(f"unknown closure kind {kind!r}")


def parse_closure_spec(spec: str) -> Closure:
    """Accept a builtin name, a JSON closure config, or a bare expression."""
    spec = spec.strip()
    if spec in BUILTINS:
        return BUILTINS[spec]
    if spec.startswith("{"):
        try:
            cfg = json.loads(spec)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"invalid closure JSON: {exc}") from None
        return closure_from_config(cfg)
    return custom_closure(spec)


def eval_closure(c: Closure, x: float, y: float) -> float:
    for v in (x, y):
        if not (-DOMAIN_SLACK <= v <= 1 + DOMAIN_SLACK):
            raise ValidationError(f"closure argument {v} outside [0, 1]")
    x = min(max(float(x), 0.0), 1.0)
    y = min(max(float(y), 0.0), 1.0)
    return float(c(np.float64(x), np.float64(y)))


# -- validation ---------------------------------------------------------------


def _grid(resolution: int):
    s = np.linspace(0.0, 1.0, resolution + 1)
    return s, np.meshgrid(s, s, indexing="ij")


@dataclass
class ClosureReport:
    passed: bool
    symmetry_violation: float
    lower_violation: float
    upper_violation: float
    worst_violation: float
    worst_location: tuple[float, float] | None
    worst_kind: str | None
    resolution: int

    def summary(self) -> str:
        if self.passed:
            return f"valid (resolution {self.resolution})"
        x, y = self.worst_location
        return (f"{self.worst_kind} violation {self.worst_violation:.3g} "
                f"at (x, y) = ({x:.6g}, {y:.6g})")


def validate_closure(c: Closure, grid_resolution: int = 200, tol: float = BOUND_TOL) -> ClosureReport:
    """Check symmetry and the Frechet bounds on a uniform grid."""
    if grid_resolution < 2:
        raise ValidationError("grid_resolution must be at least 2")
    _, (X, Y) = _grid(grid_resolution)
    W = np.asarray(c(X, Y), dtype=float)
    sym = np.abs(W - W.T)
    sym = np.where(np.isnan(sym), np.inf, sym)
    low = np.maximum(X + Y - 1, 0) - W
    up = W - np.minimum(X, Y)
    # NaN counts as a violation of both bounds
    low = np.where(np.isnan(low), np.inf, low)
    up = np.where(np.isnan(up), np.inf, up)
    parts = {"symmetry": sym, "lower-bound": low, "upper-bound": up}
    worst_kind, worst, loc = None, 0.0, None
    for kind, arr in parts.items():
        # ties go to the last grid point, i.e. the one farthest from the origin
        flat = arr.ravel()
        k = np.unravel_index(flat.size - 1 - int(np.argmax(flat[::-1])), arr.shape)
        if arr[k] > worst:
            worst, worst_kind, loc = float(arr[k]), kind, (float(X[k]), float(Y[k]))
    return ClosureReport(
        passed=worst <= tol,
        symmetry_violation=float(sym.max()),
        lower_violation=max(float(low.max()), 0.0),
        upper_violation=max(float(up.max()), 0.0),
        worst_violation=worst,
        worst_location=loc,
        worst_kind=worst_kind,
        resolution=grid_resolution,
    )


def check_increasing_complement(c: Closure, grid_resolution: int = 200) -> float:
    """Smallest increment of ``y -> y - W(x, y)`` along the grid.

    Nonnegative (up to rounding) when the map is nondecreasing for every x.
    """
    _, (X, Y) = _grid(grid_resolution)
    D = Y - np.asarray(c(X, Y))
    return float(np.diff(D, axis=1).min())


@dataclass
class WcondReport:
    passed: bool
    lower_ok: bool
    upper_ok: bool
    envelope_below_min: bool
    r_estimate: float
    r_ok: bool
    continuous: bool
    origin_limit: list[tuple[float, float]]
    origin_ok: bool
    envelope_source: str
    witness: tuple[float, float, float] | None
    notes: list[str]


def _envelope_values(c: Closure, X, Y):
    if c.envelope is not None:
        return np.asarray(c.envelope(X, Y), dtype=float) * np.ones_like(X), "declared"
    W = np.asarray(c(X, Y), dtype=float)
    m = np.minimum(X, Y)
    with np.errstate(divide="ignore", invalid="ignore"):
        V = np.where(m > 0, (W - X * Y) / m, np.nan)
    return V, "derived"


def _max_neighbour_jump(V):
    jumps = [np.abs(np.diff(V, axis=0)), np.abs(np.diff(V, axis=1))]
    return max(float(np.nanmax(j)) if np.any(np.isfinite(j)) else 0.0 for j in jumps)


def check_wcond(c: Closure, grid_resolution: int = 200, tol: float = BOUND_TOL) -> WcondReport:
    """Empirically check ``xy <= W <= xy + V min(x,y) <= min(x,y)``.

    V is the declared envelope when the closure carries one, otherwise
    ``(W - xy) / min(x, y)`` wherever ``min(x, y) > 0``. Continuity and
    ``V(0, 0) = 0`` are tested by grid refinement and by shrinking boxes at
    the origin, which can refute but never prove them.
    """
    _, (X, Y) = _grid(grid_resolution)
    W = np.asarray(c(X, Y), dtype=float)
    V, source = _envelope_values(c, X, Y)
    m = np.minimum(X, Y)
    P = X * Y
    notes = ["continuity and V(0,0)=0 are checked on samples only"]

    lower_ok = bool(np.all(W >= P - tol))
    defined = np.isfinite(V)
    upper_env = P + np.where(defined, V, 0.0) * m
    upper_ok = bool(np.all(W[defined] <= upper_env[defined] + tol))
    # where V is undefined min(x, y) = 0, so the bound collapses to W <= 0
    upper_ok = upper_ok and bool(np.all(W[~defined] <= tol))
    below_min = bool(np.all(upper_env[defined] <= m[defined] + tol))

    r_est = float(np.nanmax(V)) if np.any(defined) else 0.0
    r_bound = c.r if c.r is not None else r_est
    r_ok = bool(np.nanmin(V) >= -tol) and r_est <= r_bound + tol and r_bound < 1

    # refine 4x; a jump that does not shrink indicates a discontinuity
    _, (X4, Y4) = _grid(4 * grid_resolution)
    V4, _ = _envelope_values(c, X4, Y4)
    j1, j4 = _max_neighbour_jump(V), _max_neighbour_jump(V4)
    continuous = j1 <= 1e-9 or j4 <= 0.75 * j1

    origin = []
    for e in range(1, 9):
        delta = 10.0 ** (-e)
        s = np.linspace(delta / 64, delta, 64)
        bx, by = np.meshgrid(s, s, indexing="ij")
        Vb, _ = _envelope_values(c, bx, by)
        origin.append((delta, float(np.nanmax(np.abs(Vb)))))
    sups = [v for _, v in origin]
    origin_ok = sups[-1] <= 1e-2 and all(b <= a + 1e-12 for a, b in zip(sups, sups[1:]))

    witness = None
    if not origin_ok:
        d = np.array([1e-2, 1e-4, 1e-6, 1e-8])
        Vd, _ = _envelope_values(c, d, d)
        k = int(np.nanargmax(Vd))
        witness = (float(d[k]), float(d[k]), float(Vd[k]))
        notes.append("V along the diagonal: " + ", ".join(
            f"V({x:g},{x:g})={v:.6g}" for x, v in zip(d, Vd)))

    passed = lower_ok and upper_ok and below_min and r_ok and continuous and origin_ok
    return WcondReport(
        passed=passed,
        lower_ok=lower_ok,
        upper_ok=upper_ok,
        envelope_below_min=below_min,
        r_estimate=r_est,
        r_ok=r_ok,
        continuous=continuous,
        origin_limit=origin,
        origin_ok=origin_ok,
        envelope_source=source,
        witness=witness,
        notes=notes,
    )
