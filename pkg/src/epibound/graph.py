"""Weighted directed networks and their spectral / connectivity properties.

Convention: ``weights[i, j]`` is g_ij, the weight of the edge from node j to
node i, so that node i is infected by node j at rate ``tau * weights[i, j]``.
Node indices are 0-based in code and 1-based in graph documents.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import ConvergenceError, PreconditionError, ValidationError

__all__ = [
    "Graph",
    "SpectralInfo",
    "load_graph",
    "read_graph",
    "graph_to_document",
    "is_strongly_connected",
    "spectral_radius",
    "complete_graph",
    "directed_cycle",
    "star_graph",
    "path_graph",
    "random_strongly_connected",
]


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable weighted directed graph stored as a dense matrix."""

    weights: np.ndarray
    n: int = field(init=False)

    def __post_init__(self):
        w = np.array(self.weights, dtype=float, copy=True)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValidationError(f"weight matrix must be square, got shape {w.shape}")
        n = w.shape[0]
        if n == 0:
            raise ValidationError("graph must have at least one node")
        if not np.all(np.isfinite(w)):
            i, j = np.argwhere(~np.isfinite(w))[0]
            raise ValidationError(f"non-finite weight g[{i + 1},{j + 1}]")
        if np.any(w < 0):
            i, j = np.argwhere(w < 0)[0]
            raise ValidationError(
                f"negative weight {w[i, j]} on edge {j + 1}->{i + 1}"
            )
        diag = np.flatnonzero(np.diag(w) != 0)
        if diag.size:
            k = diag[0]
            raise ValidationError(f"self-loop on node {k + 1} (weight {w[k, k]})")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "n", n)

    def scaled(self, factor: float) -> "Graph":
        return Graph(self.weights * factor)

    def __repr__(self):
        return f"Graph(n={self.n}, edges={int(np.count_nonzero(self.weights))})"


@dataclass(frozen=True)
class SpectralInfo:
    lambda_max: float
    eigvec: np.ndarray
    iterations: int
    residual: float


def load_graph(source: Mapping[str, Any]) -> Graph:
    """Build a :class:`Graph` from a parsed graph document.

    The document carries ``n`` and either ``edges`` (list of
    ``{"from", "to", "weight"}`` with 1-based indices, meaning transmission
    from ``from`` to ``to``; ``w`` is accepted for ``weight``) or ``matrix``
    (row-major, entry [i][j] = g_ij).
    """
    if not isinstance(source, Mapping):
        raise ValidationError("graph document must be an object")
    if "n" not in source:
        raise ValidationError("graph document is missing 'n'")
    n = source["n"]
    if isinstance(n, bool) or not isinstance(n, int):
        raise ValidationError(f"'n' must be an integer, got {n!r}")
    if n <= 0:
        raise ValidationError(f"'n' must be positive, got {n}")
    has_edges = "edges" in source
    has_matrix = "matrix" in source
    if has_edges == has_matrix:
        raise ValidationError("graph document needs exactly one of 'edges' or 'matrix'")

    if has_matrix:
        try:
            w = np.asarray(source["matrix"], dtype=float)
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"malformed matrix: {exc}") from None
        if w.shape != (n, n):
            raise ValidationError(f"matrix shape {w.shape} does not match n={n}")
        return Graph(w)

    w = np.zeros((n, n))
    seen = set()
    for k, edge in enumerate(source["edges"]):
        try:
            src, dst = edge["from"], edge["to"]
            weight = float(edge.get("weight", edge.get("w", 1.0)))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed edge #{k + 1}: {edge!r} ({exc})") from None
        for idx in (src, dst):
            if isinstance(idx, bool) or not isinstance(idx, int) or not 1 <= idx <= n:
                raise ValidationError(f"edge #{k + 1}: node index {idx!r} outside 1..{n}")
        if (src, dst) in seen:
            raise ValidationError(f"duplicate edge {src}->{dst}")
        seen.add((src, dst))
        if src == dst and weight != 0:
            raise ValidationError(f"self-loop on node {src}")
        if not np.isfinite(weight):
            raise ValidationError(f"non-finite weight on edge {src}->{dst}")
        if weight < 0:
            raise ValidationError(f"negative weight {weight} on edge {src}->{dst}")
        w[dst - 1, src - 1] = weight
    return Graph(w)


def read_graph(path: str | Path) -> Graph:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from None
    return load_graph(doc)


def graph_to_document(g: Graph) -> dict:
    edges = [
        {"from": int(j) + 1, "to": int(i) + 1, "weight": float(g.weights[i, j])}
        for i, j in zip(*np.nonzero(g.weights))
    ]
    return {"n": g.n, "edges": edges}


def is_strongly_connected(g: Graph) -> bool:
    """True iff every node reaches every other through positive-weight edges."""
    if g.n == 1:
        return True
    ncomp, _ = connected_components(
        csr_matrix(g.weights > 0), directed=True, connection="strong"
    )
    return ncomp == 1


def spectral_radius(
    g: Graph, tol: float = 1e-12, max_iter: int = 100_000, shift: float = 1.0
) -> SpectralInfo:
    """Perron value and positive right eigenvector by shifted power iteration.

    Iterates on ``G + shift*I`` so that periodic irreducible matrices (directed
    cycles) still converge; the shift is removed from the reported value. The
    eigenvector is normalized to unit 1-norm.
    """
    if tol <= 0:
        raise PreconditionError("tol must be positive")
    if not is_strongly_connected(g):
        raise PreconditionError(
            "spectral_radius requires a strongly connected graph "
            "(unique positive Perron eigenvector)"
        )
    G = g.weights
    v = np.full(g.n, 1.0 / g.n)
    residual = np.inf
    for it in range(1, max_iter + 1):
        w = G @ v + shift * v
        lam = w.sum()  # v has unit 1-norm and is nonnegative
        v = w / lam
        residual = float(np.max(np.abs(G @ v - (lam - shift) * v)))
        if residual <= tol:
            break
    else:
        raise ConvergenceError(
            f"power iteration did not converge in {max_iter} iterations "
            f"(last residual {residual:.3e})",
            residual=residual,
        )
    lam_max = float((G @ v).sum())  # Rayleigh-type estimate with unit-sum v
    return SpectralInfo(max(lam_max, 0.0), v, it, residual)


# -- small generators used by tests, examples and the batch harness ---------


def complete_graph(n: int, weight: float = 1.0) -> Graph:
    return Graph(weight * (np.ones((n, n)) - np.eye(n)))


def directed_cycle(n: int, weight: float = 1.0) -> Graph:
    w = np.zeros((n, n))
    for j in range(n):
        w[(j + 1) % n, j] = weight  # edge j -> j+1
    return Graph(w)


def star_graph(leaves: int, weight: float = 1.0) -> Graph:
    w = np.zeros((leaves + 1, leaves + 1))
    w[0, 1:] = weight
    w[1:, 0] = weight
    return Graph(w)


def path_graph(n: int, weight: float = 1.0) -> Graph:
    """Directed path 1 -> 2 -> ... -> n."""
    w = np.zeros((n, n))
    for j in range(n - 1):
        w[j + 1, j] = weight
    return Graph(w)


def random_strongly_connected(
    rng: np.random.Generator,
    n: int,
    p: float = 0.5,
    wmin: float = 0.2,
    wmax: float = 1.5,
    max_tries: int = 10_000,
) -> Graph:
    """Directed Erdos-Renyi graph, uniform weights, rejection-sampled until
    strongly connected."""
    if n == 1:
        return Graph(np.zeros((1, 1)))
    for _ in range(max_tries):
        mask = rng.random((n, n)) < p
        np.fill_diagonal(mask, False)
        weights = rng.uniform(wmin, wmax, size=(n, n)) * mask
        g = Graph(weights)
        if is_strongly_connected(g):
            return g
    raise ConvergenceError(f"no strongly connected sample in {max_tries} draws")
