"""Weierstrass representation of conformal minimal immersions into R^3.

Convention (fixed throughout the package)::

    Phi = (f (1 - g^2) / 2,  i f (1 + g^2) / 2,  f g),     u = Re  integral Phi dz

so ``Phi = 2 * du/dz`` componentwise, ``phi1^2 + phi2^2 + phi3^2 = 0`` and the
induced metric is ``lambda |dz|^2`` with ``lambda = (|phi1|^2 + |phi2|^2 + |phi3|^2) / 2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import breadth_first_order

from . import _kernels
from .complexgrid import PathInDomain, PlanarDomain, cotan_laplacian, path_integral, polyline_gauss_integral

__all__ = [
    "FluxVector",
    "ImmersionField",
    "PeriodError",
    "SampledHolomorphicTriple",
    "WeierstrassData",
    "conformality_residual",
    "flux",
    "harmonic_residual",
    "hole_periods",
    "integrate_triple",
    "lopez_ros",
    "triple_from_fg",
    "weierstrass_phi",
]


class PeriodError(ValueError):
    """Real period of Phi around a hole does not vanish; u would be multivalued."""

    def __init__(self, loop_id: int, period):
        self.loop_id = loop_id
        self.period = np.asarray(period)
        super().__init__(f"nonzero real period {self.period.tolist()} on hole loop {loop_id}")


def weierstrass_phi(f, g):
    """Stack (phi1, phi2, phi3) from samples of f and g."""
    f = np.asarray(f, dtype=complex)
    g = np.asarray(g, dtype=complex)
    g2 = g * g
    return np.stack([0.5 * f * (1 - g2), 0.5j * f * (1 + g2), f * g])


@dataclass(frozen=True)
class WeierstrassData:
    """Closed-form pair (f, g); both callables map complex arrays to complex arrays."""

    f: Callable
    g: Callable
    tag: str = ""

    def phi(self, z):
        return weierstrass_phi(self.f(z), self.g(z))


@dataclass
class SampledHolomorphicTriple:
    domain: PlanarDomain
    phi: np.ndarray  # (3, n) complex vertex samples
    source: str | None = None
    evaluator: Callable | None = None  # z -> (3, ...) exact values when known

    def at(self, z):
        if self.evaluator is None:
            raise ValueError("triple has no closed-form evaluator")
        return self.evaluator(np.asarray(z, dtype=complex))


@dataclass
class ImmersionField:
    domain: PlanarDomain
    u: np.ndarray  # (3, n) real
    metric_density: np.ndarray  # (n,)
    base_point: int
    triple: SampledHolomorphicTriple | None = None

    def positions(self) -> np.ndarray:
        """Vertex positions as an (n, 3) array."""
        return self.u.T.copy()

    def scaled(self, c: float) -> "ImmersionField":
        return ImmersionField(self.domain, c * self.u, c * c * self.metric_density, self.base_point, None)

    def translated(self, v) -> "ImmersionField":
        v = np.asarray(v, dtype=float).reshape(3, 1)
        return ImmersionField(self.domain, self.u + v, self.metric_density, self.base_point, self.triple)


@dataclass(frozen=True)
class FluxVector:
    loop: PathInDomain = field(repr=False)
    value: np.ndarray
    tol: float = 0.0

    def to_json(self, loop_id=0) -> dict:
        return {"loop_id": loop_id, "value": [float(x) for x in self.value], "tol": float(self.tol)}


def _metric_density(phi: np.ndarray) -> np.ndarray:
    return 0.5 * np.sum(np.abs(phi) ** 2, axis=0)


def triple_from_fg(f, g, domain: PlanarDomain, floor: float = 1e-12) -> SampledHolomorphicTriple:
    """Sample Phi from Weierstrass data on ``domain``.

    ``f`` and ``g`` are either callables or vertex arrays. With callables the
    returned triple keeps a closed-form evaluator, which later integration
    and flux computations use for exact quadrature.
    """
    evaluator = None
    tag = None
    if isinstance(f, WeierstrassData):
        tag = f.tag
        f, g = f.f, f.g
    if callable(f) and callable(g):
        fc, gc = f, g
        evaluator = lambda z: weierstrass_phi(fc(z), gc(z))  # noqa: E731
        fv, gv = fc(domain.vertices), gc(domain.vertices)
    else:
        fv = f(domain.vertices) if callable(f) else f
        gv = g(domain.vertices) if callable(g) else g
    fv = np.broadcast_to(np.asarray(fv, dtype=complex), domain.vertices.shape)
    gv = np.broadcast_to(np.asarray(gv, dtype=complex), domain.vertices.shape)
    if not (np.all(np.isfinite(fv)) and np.all(np.isfinite(gv * fv))):
        raise ValueError("Weierstrass data not finite at every sample")
    phi = weierstrass_phi(fv, gv)
    lam = _metric_density(phi)
    if lam.min() <= floor:
        raise ValueError(f"immersion floor violated: min metric density {lam.min():.3e} <= {floor:.1e}")
    return SampledHolomorphicTriple(domain=domain, phi=phi, source=tag, evaluator=evaluator)


def conformality_residual(phi) -> float:
    """max over samples of |phi1^2 + phi2^2 + phi3^2| / (|phi1|^2 + |phi2|^2 + |phi3|^2).

    Scale invariant; samples with Phi = 0 count as 0.
    """
    p = phi.phi if isinstance(phi, SampledHolomorphicTriple) else np.asarray(phi, dtype=complex)
    num = np.abs(np.sum(p * p, axis=0))
    den = np.sum(np.abs(p) ** 2, axis=0)
    ratio = np.divide(num, den, out=np.zeros_like(num, dtype=float), where=den > 0)
    return float(np.max(ratio))


def _loop_integral(triple: SampledHolomorphicTriple, ids: np.ndarray) -> np.ndarray:
    z = triple.domain.vertices[ids]
    if triple.evaluator is not None:
        return polyline_gauss_integral(triple.evaluator, z, closed=True)
    return path_integral(triple.phi, PathInDomain.from_vertices(triple.domain, ids, closed=True))


def hole_periods(triple: SampledHolomorphicTriple) -> dict:
    """Complex periods of Phi around every hole (keyed by boundary marker)."""
    dom = triple.domain
    comps = sorted(int(c) for c in np.unique(dom.boundary_markers) if c >= 2)
    return {c: _loop_integral(triple, dom.boundary_loop(c)) for c in comps}


def _edge_increments(triple: SampledHolomorphicTriple, parent: np.ndarray, order: np.ndarray) -> np.ndarray:
    dom = triple.domain
    n = dom.n_vertices
    incr = np.zeros((3, n), dtype=complex)
    vs = order[1:]
    ps = parent[vs]
    a, b = dom.vertices[ps], dom.vertices[vs]
    if triple.evaluator is not None:
        x, w = np.polynomial.legendre.leggauss(4)
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        nodes = mid[:, None] + half[:, None] * x[None, :]
        vals = triple.evaluator(nodes)  # (3, k, 4)
        incr[:, vs] = np.sum(vals * w[None, None, :], axis=-1) * half[None, :]
    else:
        incr[:, vs] = 0.5 * (triple.phi[:, ps] + triple.phi[:, vs]) * (b - a)[None, :]
    return incr


def spanning_tree(domain: PlanarDomain, root: int):
    """Breadth-first spanning tree over mesh edges: (order, parent)."""
    e = domain.edges()
    n = domain.n_vertices
    adj = coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n)).tocsr()
    order, pred = breadth_first_order(adj, root, directed=False, return_predecessors=True)
    if order.size != n:
        raise ValueError("mesh is not connected")
    parent = pred.astype(np.int64)
    parent[root] = root
    return order.astype(np.int64), parent


def integrate_triple(
    triple: SampledHolomorphicTriple,
    base_point: int,
    base_value=(0.0, 0.0, 0.0),
    period_tol: float | None = None,
) -> ImmersionField:
    """Recover u = Re of the primitive of Phi with u(base_point) = base_value.

    The primitive is accumulated along a breadth-first spanning tree of the
    mesh. Multiply connected domains are checked first: the real period of
    Phi around each hole must be below ``period_tol`` (default 1e-6 times
    the loop length), otherwise :class:`PeriodError` is raised.
    """
    dom = triple.domain
    for comp, period in hole_periods(triple).items():
        ids = dom.boundary_loop(comp)
        z = dom.vertices[ids]
        length = float(np.abs(np.roll(z, -1) - z).sum())
        tol = 1e-6 * length if period_tol is None else period_tol
        if np.max(np.abs(period.real)) > tol:
            raise PeriodError(comp, period.real)
    order, parent = spanning_tree(dom, int(base_point))
    incr = _edge_increments(triple, parent, order)
    base = np.asarray(base_value, dtype=complex)
    F = _kernels.tree_accumulate(order, parent, incr, base)
    return ImmersionField(
        domain=dom,
        u=F.real.copy(),
        metric_density=_metric_density(triple.phi),
        base_point=int(base_point),
        triple=triple,
    )


def harmonic_residual(imm: ImmersionField) -> float:
    """L1 norm of the discrete Laplacian of u over interior vertices.

    Sum over interior vertices of |(L u)_i|, i.e. the integral of the
    area-normalised cotangent Laplacian against the lumped mass; max over
    the three coordinates. The pointwise normalised Laplacian does not
    converge next to an unstructured boundary band, this norm does
    (first order in h).
    """
    L, _ = cotan_laplacian(imm.domain)
    interior = imm.domain.boundary_markers == 0
    lap = (L @ imm.u.T)[interior]
    return float(np.abs(lap).sum(axis=0).max())


def flux(triple: SampledHolomorphicTriple, loop: PathInDomain, tol: float = 0.0) -> FluxVector:
    """Flux along a closed loop, realised as Im of the loop integral of Phi."""
    if not loop.closed:
        raise ValueError("flux needs a closed loop")
    if triple.evaluator is not None:
        if loop.weights is not None:
            val = path_integral(triple.evaluator, loop)
        else:
            val = polyline_gauss_integral(triple.evaluator, loop.points, closed=True)
    else:
        val = path_integral(triple.phi, loop)
    return FluxVector(loop=loop, value=np.asarray(val).imag.astype(float), tol=tol)


def lopez_ros(f, g, h, samples=None):
    """Lopez-Ros deformation (f, g) -> (f h, g / h) for nonvanishing h.

    Arrays are transformed pointwise; callables are composed lazily, in
    which case ``samples`` (complex points) are used to check that h does
    not vanish. The third component f g is preserved.
    """
    if callable(h):
        if samples is not None:
            hv = h(np.asarray(samples, dtype=complex))
            if np.any(hv == 0) or not np.all(np.isfinite(hv)):
                raise ValueError("h vanishes or is singular at a sample")
        fc = f if callable(f) else (lambda z, _f=f: _f)
        gc = g if callable(g) else (lambda z, _g=g: _g)
        return (lambda z: fc(z) * h(z)), (lambda z: gc(z) / h(z))
    hv = np.asarray(h, dtype=complex)
    if np.any(hv == 0):
        raise ValueError("h vanishes at a sample")
    return np.asarray(f) * hv, np.asarray(g) / hv
