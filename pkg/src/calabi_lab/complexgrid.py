"""Meshed planar domains and the discrete complex calculus used everywhere else.

Points of the plane are stored as complex numbers. A :class:`PlanarDomain`
is a conforming Delaunay triangulation (Shewchuk's Triangle) of an outer
polygon minus convex polygonal holes, with boundary vertices tagged by the
component they lie on: ``0`` interior, ``1`` outer boundary, ``2 + k`` the
k-th hole.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import triangle as _triangle
from scipy import sparse
from scipy.spatial import cKDTree

__all__ = [
    "ComplexPolynomial",
    "DegenerateTriangleError",
    "DomainError",
    "FitReport",
    "PathError",
    "PathInDomain",
    "PlanarDomain",
    "annulus",
    "build_domain",
    "circle_polyline",
    "complex_derivative",
    "cotan_laplacian",
    "disc",
    "least_squares_polynomial_fit",
    "path_integral",
    "points_in_polygon",
]


class DomainError(ValueError):
    """Invalid domain description (overlapping holes, bad edge length, ...)."""


class DegenerateTriangleError(ValueError):
    pass


class PathError(ValueError):
    pass


# --------------------------------------------------------------------------
# polynomials


@dataclass(frozen=True)
class ComplexPolynomial:
    """Polynomial with complex coefficients in ascending degree."""

    coefficients: np.ndarray

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.coefficients, dtype=complex))
        nz = np.flatnonzero(c != 0)
        c = c[: nz[-1] + 1] if nz.size else np.zeros(1, dtype=complex)
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    def is_zero(self) -> bool:
        return not np.any(self.coefficients)

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        acc = np.zeros_like(z)
        for c in self.coefficients[::-1]:
            acc = acc * z + c
        return acc

    def derivative(self) -> "ComplexPolynomial":
        c = self.coefficients
        if len(c) == 1:
            return ComplexPolynomial([0])
        return ComplexPolynomial(c[1:] * np.arange(1, len(c)))

    def __add__(self, other):
        a, b = self.coefficients, ComplexPolynomial._coerce(other).coefficients
        n = max(len(a), len(b))
        return ComplexPolynomial(np.pad(a, (0, n - len(a))) + np.pad(b, (0, n - len(b))))

    def __mul__(self, other):
        if np.isscalar(other):
            return ComplexPolynomial(self.coefficients * other)
        return ComplexPolynomial(np.convolve(self.coefficients, ComplexPolynomial._coerce(other).coefficients))

    __rmul__ = __mul__

    @staticmethod
    def _coerce(x) -> "ComplexPolynomial":
        return x if isinstance(x, ComplexPolynomial) else ComplexPolynomial([x])

    def to_json(self) -> list:
        return [[float(c.real), float(c.imag)] for c in self.coefficients]

    @classmethod
    def from_json(cls, data) -> "ComplexPolynomial":
        return cls([complex(*c) if isinstance(c, (list, tuple)) else complex(c) for c in data])


@dataclass(frozen=True)
class FitReport:
    sup_residual: float
    rms_residual: float
    rank: int
    n_columns: int
    condition: float

    @property
    def rank_deficient(self) -> bool:
        return self.rank < self.n_columns


def least_squares_polynomial_fit(points, targets, degree: int, weights=None):
    """Fit a polynomial of the given degree to ``targets`` at ``points``.

    Columns of the Vandermonde matrix are built in the variable ``z / s``
    with ``s = max |z|`` and then normalised to unit length. Rank-deficient
    systems are solved in the minimum-norm sense (``numpy.linalg.lstsq``)
    and flagged in the returned :class:`FitReport`.

    Returns
    -------
    (ComplexPolynomial, FitReport)
    """
    z = np.asarray(points, dtype=complex).ravel()
    t = np.asarray(targets, dtype=complex).ravel()
    if degree < 0:
        raise ValueError("degree must be nonnegative")
    if z.shape != t.shape:
        raise ValueError("points and targets differ in length")
    if z.size < degree + 1:
        raise ValueError(f"need at least {degree + 1} samples, got {z.size}")
    if degree > 0 and np.all(z == z[0]):
        raise ValueError("sample points are all coincident")
    s = float(np.max(np.abs(z)))
    if s == 0.0:
        s = 1.0
    V = np.vander(z / s, degree + 1, increasing=True)
    norms = np.linalg.norm(V, axis=0)
    norms[norms == 0] = 1.0
    V = V / norms
    w = np.ones(z.size) if weights is None else np.sqrt(np.asarray(weights, dtype=float).ravel())
    sol, _, rank, sv = np.linalg.lstsq(V * w[:, None], t * w, rcond=None)
    coef = sol / norms / s ** np.arange(degree + 1)
    poly = ComplexPolynomial(coef)
    res = np.abs(poly(z) - t)
    cond = float(sv[0] / sv[-1]) if sv.size and sv[-1] > 0 else math.inf
    report = FitReport(
        sup_residual=float(res.max()),
        rms_residual=float(np.sqrt(np.mean(res**2))),
        rank=int(rank),
        n_columns=degree + 1,
        condition=cond,
    )
    return poly, report


# --------------------------------------------------------------------------
# polygons


def circle_polyline(radius: float, h: float, center: complex = 0.0) -> np.ndarray:
    """Counterclockwise regular polygon inscribed in a circle, sides <= h."""
    n = max(8, math.ceil(2 * math.pi * radius / h))
    th = 2 * math.pi * np.arange(n) / n
    return center + radius * np.exp(1j * th)


def points_in_polygon(points, polygon, strict: bool = False) -> np.ndarray:
    """Even-odd containment of complex ``points`` in a closed polygon.

    With ``strict=False`` points on the boundary (up to 1e-12 relative)
    count as inside; with ``strict=True`` they count as outside.
    """
    p = np.asarray(points, dtype=complex).ravel()
    poly = np.asarray(polygon, dtype=complex).ravel()
    chunk = max(1, 2_000_000 // max(1, poly.size))
    if p.size > chunk:
        return np.concatenate(
            [points_in_polygon(p[i : i + chunk], poly, strict) for i in range(0, p.size, chunk)]
        )
    x, y = p.real[:, None], p.imag[:, None]
    ax, ay = poly.real[None, :], poly.imag[None, :]
    bx, by = np.roll(poly.real, -1)[None, :], np.roll(poly.imag, -1)[None, :]
    cond = (ay > y) != (by > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = ax + (y - ay) * (bx - ax) / (by - ay)
    inside = np.sum(cond & (x < xint), axis=1) % 2 == 1
    # boundary proximity
    ex, ey = bx - ax, by - ay
    L2 = ex**2 + ey**2
    with np.errstate(divide="ignore", invalid="ignore"):
        tpar = np.clip(((x - ax) * ex + (y - ay) * ey) / np.where(L2 > 0, L2, 1), 0, 1)
    d = np.hypot(x - ax - tpar * ex, y - ay - tpar * ey).min(axis=1)
    scale = max(1.0, float(np.abs(poly).max()))
    on_edge = d <= 1e-12 * scale
    return (inside & ~on_edge) if strict else (inside | on_edge)


def _signed_area(poly: np.ndarray) -> float:
    x, y = poly.real, poly.imag
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _is_convex(poly: np.ndarray) -> bool:
    d1 = np.roll(poly, -1) - poly
    d2 = np.roll(d1, -1)
    cross = d1.real * d2.imag - d1.imag * d2.real
    return bool(np.all(cross >= -1e-14 * np.abs(d1).max() ** 2) or np.all(cross <= 1e-14 * np.abs(d1).max() ** 2))


def _ccw(poly) -> np.ndarray:
    poly = np.asarray(poly, dtype=complex).ravel()
    if len(poly) > 1 and poly[0] == poly[-1]:
        poly = poly[:-1]
    return poly if _signed_area(poly) > 0 else poly[::-1]


def _resample(poly: np.ndarray, h: float) -> np.ndarray:
    out = []
    for a, b in zip(poly, np.roll(poly, -1)):
        k = max(1, math.ceil(abs(b - a) / h))
        out.append(a + (b - a) * np.arange(k) / k)
    return np.concatenate(out)


def _convex_polygons_disjoint(p: np.ndarray, q: np.ndarray) -> bool:
    """Separating-axis test for two convex polygons (closed sets)."""
    for poly in (p, q):
        e = np.roll(poly, -1) - poly
        normals = -1j * e  # outward for ccw polygons, direction irrelevant here
        for nrm in normals:
            if nrm == 0:
                continue
            pa = (p * np.conj(nrm)).real
            qa = (q * np.conj(nrm)).real
            if pa.max() < qa.min() or qa.max() < pa.min():
                return True
    return False


# --------------------------------------------------------------------------
# domains


@dataclass
class PlanarDomain:
    """Triangulated planar domain with marked boundary components."""

    vertices: np.ndarray  # complex (n,)
    triangles: np.ndarray  # int (m, 3), counterclockwise
    boundary_markers: np.ndarray  # int (n,)
    outer_boundary: np.ndarray  # complex polygon, ccw
    holes: list = field(default_factory=list)  # complex polygons, ccw
    segments: np.ndarray | None = None  # int (s, 2) boundary edges
    segment_markers: np.ndarray | None = None

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_boundary_components(self) -> int:
        return len(np.unique(self.boundary_markers[self.boundary_markers > 0]))

    def boundary_vertices(self, component: int | None = None) -> np.ndarray:
        """Indices of boundary vertices; ``component`` uses the marker convention."""
        if component is None:
            return np.flatnonzero(self.boundary_markers > 0)
        return np.flatnonzero(self.boundary_markers == component)

    def hole_vertices(self) -> np.ndarray:
        return np.flatnonzero(self.boundary_markers >= 2)

    def boundary_loop(self, component: int) -> np.ndarray:
        """Boundary vertex indices of one component, ordered as a closed loop.

        The loop is counterclockwise for the outer boundary and for holes
        (i.e. holes are traversed with the domain on the right).
        """
        seg = self.segments[self.segment_markers == component]
        nbrs: dict[int, list[int]] = {}
        for a, b in seg:
            nbrs.setdefault(int(a), []).append(int(b))
            nbrs.setdefault(int(b), []).append(int(a))
        start = int(seg[0, 0])
        loop = [start]
        prev, v = start, nbrs[start][0]
        while v != start:
            loop.append(v)
            a, b = nbrs[v]
            prev, v = v, (b if a == prev else a)
        loop = np.array(loop)
        if _signed_area(self.vertices[loop]) < 0:
            loop = loop[::-1]
        return loop

    def edges(self) -> np.ndarray:
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0)

    def triangle_areas(self) -> np.ndarray:
        z = self.vertices[self.triangles]
        d1, d2 = z[:, 1] - z[:, 0], z[:, 2] - z[:, 0]
        return 0.5 * (d1.real * d2.imag - d1.imag * d2.real)

    def max_edge_length(self) -> float:
        e = self.edges()
        return float(np.abs(self.vertices[e[:, 0]] - self.vertices[e[:, 1]]).max())

    def contains(self, points, strict: bool = False) -> np.ndarray:
        """Containment in the closed domain (outer polygon minus open holes)."""
        inside = points_in_polygon(points, self.outer_boundary, strict=strict)
        for hole in self.holes:
            inside &= ~points_in_polygon(points, hole, strict=not strict)
        return inside

    def nearest_vertex(self, point: complex) -> int:
        return int(np.argmin(np.abs(self.vertices - point)))

    def vertex_areas(self) -> np.ndarray:
        """Barycentric (lumped) vertex areas."""
        a = self.triangle_areas() / 3.0
        out = np.zeros(self.n_vertices)
        for k in range(3):
            np.add.at(out, self.triangles[:, k], a)
        return out


def _hex_lattice(outer: np.ndarray, holes: list, spacing: float, anchor: complex | None = None) -> np.ndarray:
    """Hexagonal lattice points strictly inside ``outer`` and outside ``holes``.

    With ``anchor`` the lattice is shifted so that the anchor is a node.
    """
    x0, x1 = outer.real.min(), outer.real.max()
    y0, y1 = outer.imag.min(), outer.imag.max()
    dy = spacing * math.sqrt(3) / 2
    if anchor is not None:
        k = math.floor((anchor.imag - y0) / dy) + 1
        y0 = anchor.imag - k * dy
        shift = (k % 2) * spacing / 2
        x0 = anchor.real - shift - (math.floor((anchor.real - shift - x0) / spacing) + 1) * spacing
    rows = np.arange(y0, y1 + dy, dy)
    cols = np.arange(x0, x1 + spacing, spacing)
    X, Y = np.meshgrid(cols, rows)
    X = X + (np.arange(len(rows))[:, None] % 2) * spacing / 2
    pts = (X + 1j * Y).ravel()
    keep = _even_odd(pts, outer)
    for hl in holes:
        keep[keep] = ~_even_odd(pts[keep], hl)
    return pts[keep]


def _even_odd(points: np.ndarray, polygon: np.ndarray) -> np.ndarray:
    # ray casting without boundary handling; callers discard near-boundary points
    inside = np.zeros(points.size, dtype=bool)
    x, y = points.real, points.imag
    ax, ay = polygon.real, polygon.imag
    bx, by = np.roll(ax, -1), np.roll(ay, -1)
    for k in range(polygon.size):
        cross = (ay[k] > y) != (by[k] > y)
        if not cross.any():
            continue
        xint = ax[k] + (y[cross] - ay[k]) * (bx[k] - ax[k]) / (by[k] - ay[k])
        inside[cross] ^= x[cross] < xint
    return inside


def build_domain(outer, holes: Sequence = (), h: float = 0.1, extra_points: Sequence = ()) -> PlanarDomain:
    """Triangulate ``outer`` minus convex ``holes`` with edges no longer than ``h``.

    ``outer`` and each hole are closed polylines given as complex arrays
    (orientation is normalised). Boundary polylines are subdivided into
    segments of length <= h; interior vertices come from a hexagonal lattice
    and the constrained Delaunay triangulation recovers every boundary segment.
    A minimum angle of 30 degrees is enforced. ``extra_points`` (interior
    points, e.g. a base point) become vertices and displace nearby lattice
    points.
    """
    if not h > 0:
        raise DomainError("target edge length h must be positive")
    outer = _ccw(outer)
    holes = [_ccw(hl) for hl in holes]
    for k, hl in enumerate(holes):
        if not _is_convex(hl):
            raise DomainError(f"hole {k} is not convex")
        if not np.all(points_in_polygon(hl, outer, strict=True)):
            raise DomainError(f"hole {k} touches or crosses the outer boundary")
    for i in range(len(holes)):
        for k in range(i + 1, len(holes)):
            if not _convex_polygons_disjoint(holes[i], holes[k]):
                raise DomainError(f"holes {i} and {k} overlap")

    extra = np.asarray(extra_points, dtype=complex).ravel()
    if extra.size and not np.all(points_in_polygon(extra, outer, strict=True)):
        raise DomainError("extra points must lie inside the outer boundary")
    for hl in holes:
        if extra.size and np.any(points_in_polygon(extra, hl)):
            raise DomainError("extra points must avoid the holes")
    anchor = complex(extra[0]) if extra.size else None
    data = {}
    if holes:
        data["holes"] = np.array([[hl.mean().real, hl.mean().imag] for hl in holes])
    dense = np.concatenate([_resample(lp, h / 8) for lp in [outer] + holes])
    tree = cKDTree(np.c_[dense.real, dense.imag])
    spacing = 0.65 * h
    lattice = _hex_lattice(outer, holes, spacing, anchor)
    for _ in range(8):
        loops = [_resample(lp, spacing) for lp in [outer] + holes]
        verts, segs, vmark = [], [], []
        offset = 0
        for comp, loop in enumerate(loops, start=1):
            n = len(loop)
            idx = offset + np.arange(n)
            verts.append(loop)
            segs.append(np.c_[idx, np.roll(idx, -1)])
            vmark.append(np.full(n, comp))
            offset += n
        lat = lattice
        if lat.size:
            dist, _ = tree.query(np.c_[lat.real, lat.imag])
            lat = lat[dist > 0.5 * spacing]
        if extra.size:
            near = np.abs(lat[:, None] - extra[None, :]).min(axis=1) < 0.5 * spacing
            lat = np.r_[extra, lat[~near]]
        pts = np.r_[np.concatenate(verts), lat]
        data["vertices"] = np.c_[pts.real, pts.imag]
        data["vertex_markers"] = np.r_[np.concatenate(vmark), np.zeros(lat.size, dtype=np.int64)]
        data["segments"] = np.concatenate(segs)
        data["segment_markers"] = np.concatenate(vmark)
        tri = _triangle.triangulate(data, "pq30Q")
        z = tri["vertices"][:, 0] + 1j * tri["vertices"][:, 1]
        t = tri["triangles"].astype(np.int64)
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        if np.abs(z[e[:, 0]] - z[e[:, 1]]).max() <= h:
            break
        spacing *= 0.9
        lattice = _hex_lattice(outer, holes, spacing, anchor)
    else:  # pragma: no cover
        raise DomainError("could not reach target edge length")

    markers = tri["vertex_markers"].ravel().astype(np.int64)
    dom = PlanarDomain(
        vertices=z,
        triangles=t,
        boundary_markers=markers,
        outer_boundary=outer,
        holes=holes,
        segments=tri["segments"].astype(np.int64),
        segment_markers=tri["segment_markers"].ravel().astype(np.int64),
    )
    areas = dom.triangle_areas()
    if np.any(areas <= 0):
        raise DomainError("triangulation produced non-positive triangles")
    return dom


def disc(radius: float = 1.0, h: float = 0.1, center: complex = 0.0) -> PlanarDomain:
    if not h > 0:
        raise DomainError("target edge length h must be positive")
    return build_domain(circle_polyline(radius, 0.8 * h, center), (), h, extra_points=[center])


def annulus(r_in: float, r_out: float, h: float, center: complex = 0.0) -> PlanarDomain:
    if not 0 < r_in < r_out:
        raise DomainError("annulus needs 0 < r_in < r_out")
    if not h > 0:
        raise DomainError("target edge length h must be positive")
    return build_domain(circle_polyline(r_out, 0.8 * h, center), [circle_polyline(r_in, 0.8 * h, center)], h)


# --------------------------------------------------------------------------
# discrete calculus


def _gradients(domain: PlanarDomain):
    """Per-triangle gradients of the three linear hat functions, as complex numbers.

    The gradient of a real function is ``fx + i fy``; returns array (m, 3).
    """
    z = domain.vertices[domain.triangles]
    area2 = 2.0 * domain.triangle_areas()
    scale = np.abs(z - np.roll(z, 1, axis=1)).max(axis=1) ** 2
    if np.any(area2 <= 1e-14 * scale):
        raise DegenerateTriangleError("triangle area below machine threshold")
    # grad of barycentric coordinate i: left normal of the opposite edge over 2A
    zj = np.roll(z, -1, axis=1)
    zk = np.roll(z, -2, axis=1)
    return 1j * (zk - zj) / area2[:, None]


def complex_derivative(values, domain: PlanarDomain, conjugate: bool = False) -> np.ndarray:
    """Per-triangle d/dz (or d/dz-bar with ``conjugate=True``) of piecewise linear data."""
    f = np.asarray(values, dtype=complex)
    if f.shape[-1] != domain.n_vertices:
        raise ValueError("field must be defined at every vertex")
    g = _gradients(domain)  # gx + i gy per hat function
    fv = f[..., domain.triangles]
    fx = np.sum(fv * g.real, axis=-1)
    fy = np.sum(fv * g.imag, axis=-1)
    if conjugate:
        return 0.5 * (fx + 1j * fy)
    return 0.5 * (fx - 1j * fy)


def cotan_laplacian(domain_or_vertices, triangles=None):
    """Cotangent stiffness matrix (negative semidefinite) and lumped vertex areas.

    Works for planar domains and for triangle meshes in R^3 (pass an (n, 3)
    vertex array and the triangles).
    """
    if isinstance(domain_or_vertices, PlanarDomain):
        z = domain_or_vertices.vertices
        X = np.c_[z.real, z.imag, np.zeros_like(z.real)]
        T = domain_or_vertices.triangles
    else:
        X = np.asarray(domain_or_vertices, dtype=float)
        T = np.asarray(triangles)
    n = len(X)
    I, J, W = [], [], []
    for k in range(3):
        i, j, o = T[:, k], T[:, (k + 1) % 3], T[:, (k + 2) % 3]
        u, v = X[i] - X[o], X[j] - X[o]
        cot = np.einsum("ij,ij->i", u, v) / np.linalg.norm(np.cross(u, v), axis=1)
        I += [i, j]
        J += [j, i]
        W += [0.5 * cot, 0.5 * cot]
    I, J, W = np.concatenate(I), np.concatenate(J), np.concatenate(W)
    L = sparse.coo_matrix((W, (I, J)), shape=(n, n)).tocsr()
    L = L - sparse.diags(np.asarray(L.sum(axis=1)).ravel())
    areas = 0.5 * np.linalg.norm(np.cross(X[T[:, 1]] - X[T[:, 0]], X[T[:, 2]] - X[T[:, 0]]), axis=1)
    mass = np.zeros(n)
    for k in range(3):
        np.add.at(mass, T[:, k], areas / 3.0)
    return L, mass


# --------------------------------------------------------------------------
# paths


@dataclass(frozen=True)
class PathInDomain:
    """Ordered points of a path; closed paths do not repeat the first point.

    ``weights`` optionally carries quadrature weights ``dz`` per point (used
    for parametrised closed curves, where the periodic trapezoidal rule is
    spectrally accurate). ``vertex_ids`` ties the points to mesh vertices.
    """

    points: np.ndarray
    closed: bool = False
    vertex_ids: np.ndarray | None = None
    weights: np.ndarray | None = None

    @classmethod
    def circle(cls, center: complex, radius: float, n: int, clockwise: bool = False) -> "PathInDomain":
        th = 2 * np.pi * np.arange(n) / n
        if clockwise:
            th = -th
        pts = center + radius * np.exp(1j * th)
        w = (1j * (pts - center)) * (2 * np.pi / n) * (-1 if clockwise else 1)
        return cls(points=pts, closed=True, weights=w)

    @classmethod
    def segment(cls, a: complex, b: complex, n: int = 2) -> "PathInDomain":
        return cls(points=a + (b - a) * np.linspace(0, 1, n), closed=False)

    @classmethod
    def from_vertices(cls, domain: PlanarDomain, ids, closed: bool = False) -> "PathInDomain":
        ids = np.asarray(ids, dtype=np.int64)
        if closed and len(ids) > 1 and ids[0] == ids[-1]:
            ids = ids[:-1]
        return cls(points=domain.vertices[ids], closed=closed, vertex_ids=ids)

    def reversed(self) -> "PathInDomain":
        w = None if self.weights is None else -self.weights[::-1]
        ids = None if self.vertex_ids is None else self.vertex_ids[::-1]
        return PathInDomain(self.points[::-1], self.closed, ids, w)

    @property
    def length(self) -> float:
        if self.weights is not None:
            return float(np.abs(self.weights).sum())
        p = np.r_[self.points, self.points[:1]] if self.closed else self.points
        return float(np.abs(np.diff(p)).sum())


def _field_on_path(fieldv, path: PathInDomain):
    if callable(fieldv):
        return np.asarray(fieldv(path.points), dtype=complex)
    arr = np.asarray(fieldv, dtype=complex)
    if arr.ndim == 0:
        return np.full(path.points.shape, arr, dtype=complex)
    if path.vertex_ids is None:
        raise PathError("vertex data requires a path built from mesh vertices")
    return arr[..., path.vertex_ids]


def path_integral(fieldv, path: PathInDomain, domain: PlanarDomain | None = None):
    """Trapezoidal line integral of ``fieldv`` along ``path``.

    ``fieldv`` may be a callable of complex points, a scalar, or vertex data
    (trailing axis over vertices; leading axes are integrated independently).
    """
    if domain is not None and not np.all(domain.contains(path.points)):
        raise PathError("path leaves the domain")
    f = _field_on_path(fieldv, path)
    if path.weights is not None:
        return np.sum(f * path.weights, axis=-1)
    if path.closed:
        f = np.concatenate([f, f[..., :1]], axis=-1)
        p = np.r_[path.points, path.points[:1]]
    else:
        p = path.points
    dz = np.diff(p)
    return np.sum(0.5 * (f[..., 1:] + f[..., :-1]) * dz, axis=-1)


def polyline_gauss_integral(func: Callable, points: np.ndarray, closed: bool, order: int = 5):
    """Gauss-Legendre integral of a holomorphic callable along a polyline.

    Exact up to rounding for polynomial integrands of degree < 2*order on
    each chord; used where closed-form data is available.
    """
    x, w = np.polynomial.legendre.leggauss(order)
    p = np.r_[points, points[:1]] if closed else np.asarray(points)
    a, b = p[:-1], p[1:]
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    nodes = mid[:, None] + half[:, None] * x[None, :]
    vals = np.asarray(func(nodes), dtype=complex)
    return np.sum(vals * (w[None, :] * half[:, None]), axis=(-2, -1))
