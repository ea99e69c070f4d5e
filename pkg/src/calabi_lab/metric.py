"""Intrinsic geometry of sampled immersions via shortest paths on the mesh graph.

Graph distances over-estimate the true intrinsic distance by a mesh-dependent
amount that vanishes under refinement; certificates of the form
``dist > rho`` should therefore carry an explicit margin.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix

from . import _kernels
from .weierstrass import ImmersionField

__all__ = [
    "MetricGraph",
    "build_metric_graph",
    "distance_field",
    "divergent_path_lengths",
    "intrinsic_distance",
    "shortest_path",
]

MODES = ("embedded_edges", "conformal_factor")


@dataclass
class MetricGraph:
    n_vertices: int
    edges: np.ndarray  # (E, 2)
    lengths: np.ndarray  # (E,)
    indptr: np.ndarray
    indices: np.ndarray
    weights: np.ndarray
    edge_of_entry: np.ndarray  # CSR entry -> edge index
    boundary: dict
    mode: str

    def with_lengths(self, lengths: np.ndarray) -> "MetricGraph":
        return _assemble(self.n_vertices, self.edges, np.asarray(lengths, dtype=float), self.boundary, self.mode)


def _assemble(n, edges, lengths, boundary, mode) -> MetricGraph:
    E = len(edges)
    rows = np.r_[edges[:, 0], edges[:, 1]]
    cols = np.r_[edges[:, 1], edges[:, 0]]
    eid = np.r_[np.arange(E), np.arange(E)]
    order = np.lexsort((cols, rows))
    rows, cols, eid = rows[order], cols[order], eid[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, rows + 1, 1)
    indptr = np.cumsum(indptr)
    return MetricGraph(
        n_vertices=n,
        edges=edges,
        lengths=lengths,
        indptr=indptr,
        indices=cols.astype(np.int64),
        weights=lengths[eid].astype(float),
        edge_of_entry=eid.astype(np.int64),
        boundary=boundary,
        mode=mode,
    )


def build_metric_graph(u: ImmersionField, mode: str = "embedded_edges") -> MetricGraph:
    """Edge-weighted graph of the mesh with lengths measured by the immersion.

    ``embedded_edges``: Euclidean length of the immersed edge.
    ``conformal_factor``: planar length times sqrt of the mean metric density
    at the two endpoints.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    dom = u.domain
    e = dom.edges()
    if mode == "embedded_edges":
        lengths = np.linalg.norm(u.u[:, e[:, 0]] - u.u[:, e[:, 1]], axis=0)
    else:
        lam = u.metric_density
        lengths = np.abs(dom.vertices[e[:, 0]] - dom.vertices[e[:, 1]]) * np.sqrt(0.5 * (lam[e[:, 0]] + lam[e[:, 1]]))
    if np.any(lengths <= 0):
        raise ValueError("zero-length immersed edge (degenerate immersion sample)")
    comps = sorted(int(c) for c in np.unique(dom.boundary_markers) if c > 0)
    boundary = {c: np.flatnonzero(dom.boundary_markers == c) for c in comps}
    return _assemble(dom.n_vertices, e, lengths, boundary, mode)


def distance_field(graph: MetricGraph, p0: int) -> np.ndarray:
    dist, _ = _kernels.dijkstra(graph.indptr, graph.indices, graph.weights, int(p0))
    return dist


def _targets(graph: MetricGraph, target) -> np.ndarray:
    if target is None or (isinstance(target, str) and target == "boundary"):
        return np.concatenate(list(graph.boundary.values()))
    if isinstance(target, (int, np.integer)) and int(target) in graph.boundary:
        return graph.boundary[int(target)]
    return np.asarray(target, dtype=np.int64).ravel()


def intrinsic_distance(graph: MetricGraph, p0: int, target=None) -> float:
    """Graph distance from ``p0`` to the nearest vertex of ``target``.

    ``target`` is a vertex index array, a boundary component marker, or
    ``None`` for the whole boundary.
    """
    t = _targets(graph, target)
    if t.size == 0:
        raise ValueError("empty target set")
    d = distance_field(graph, p0)[t].min()
    if not np.isfinite(d):
        raise ValueError("target set is disconnected from p0")
    return float(d)


def shortest_path(graph: MetricGraph, p0: int, target=None):
    """(length, vertex list from p0 to the nearest target)."""
    t = _targets(graph, target)
    dist, pred = _kernels.dijkstra(graph.indptr, graph.indices, graph.weights, int(p0))
    end = int(t[np.argmin(dist[t])])
    if not np.isfinite(dist[end]):
        raise ValueError("target set is disconnected from p0")
    path = [end]
    while path[-1] != p0:
        path.append(int(pred[path[-1]]))
    return float(dist[end]), np.array(path[::-1])


def _path_edges(graph: MetricGraph, path: np.ndarray) -> np.ndarray:
    out = []
    for a, b in zip(path[:-1], path[1:]):
        lo, hi = graph.indptr[a], graph.indptr[a + 1]
        k = lo + int(np.searchsorted(graph.indices[lo:hi], b))
        out.append(graph.edge_of_entry[k])
    return np.array(out, dtype=np.int64)


def divergent_path_lengths(graph: MetricGraph, p0: int, component=None, k: int = 8,
                           penalty: float = 4.0) -> list[float]:
    """True lengths of ``k`` successively edge-penalised shortest paths to the boundary.

    After each path its edges are multiplied by ``penalty`` in the search
    weights, pushing later searches onto other routes; the reported
    lengths are measured with the unpenalised metric, so the first one
    equals :func:`intrinsic_distance`.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    search = graph
    factors = np.ones(len(graph.lengths))
    out = []
    for _ in range(k):
        _, path = shortest_path(search, p0, component)
        eids = _path_edges(graph, path)
        out.append(float(graph.lengths[eids].sum()))
        factors[eids] *= penalty
        search = graph.with_lengths(graph.lengths * factors)
    return out
