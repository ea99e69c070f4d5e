"""Staged construction on a planar chart with a certificate ledger.

The model surface is the Riemann sphere seen in one chart. ``X_0`` is the
open disc ``|z| < disc_radius``, the Cantor tree's root lies inside it and
``K_j`` is the chart disc minus the open level-``j`` pieces (``K_0`` is the
annulus outside ``X_0``).

Immersions come from the integration-free Weierstrass formula. For a
potential ``G`` holomorphic on ``K_j`` and ``g(z) = z``::

    F = ((1 - z^2) G''/2 + z G' - G,  i (1 + z^2) G''/2 - i z G' + i G,  z G'' - G')

is a null curve with ``F' = G''' * (( 1 - z^2)/2, i (1 + z^2)/2, z)`` so
``u = Re F`` is a conformal minimal immersion with Weierstrass data
``(f, g) = (G''', z)`` wherever ``G''' != 0``. ``F`` is single valued, so no
period has to be killed. The stage-``j`` update adds rational terms with
poles at Cantor points inside the level-``j`` pieces; their coefficients are
fitted by least squares (small on ``K_{j-1}``, pushing ``bK_j`` toward the
band between ``L_j`` and ``L_{j+1}``) and then scaled so that
``sup_{K_{j-1}} |u_j - u_{j-1}| <= closeness_fraction * eps_j``.

Certificates for conditions (a)-(g) are pure functions of the arrays saved
per stage and of the run configuration, so a stored run can be re-checked.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .cantor import CantorTree, build_cantor_tree, complement_domain, quad_split, rectangle
from .complexgrid import PlanarDomain, annulus, circle_polyline
from .convexity import ScalarField3, SublevelComponent, sublevel_components
from .meshio import dump_json, write_ply
from .metric import build_metric_graph, distance_field
from .weierstrass import ImmersionField, WeierstrassData

__all__ = [
    "NullPotential",
    "RunConfig",
    "RunResult",
    "StageRecord",
    "cauchy_diagnostic",
    "evaluate_certificates",
    "hitting_check",
    "limit_set_report",
    "load_run",
    "properness_check",
    "recompute_certificates",
    "run_construction",
    "write_run",
]

SCHEMA_VERSION = 1


# --------------------------------------------------------------------------
# configuration


@dataclass
class RunConfig:
    """Parameters of a staged run (JSON round-trip via ``to_json``/``from_json``).

    ``values`` are the levels ``r_1 < r_2 < ...`` of the exhaustion function
    on the ball ``Omega`` of radius ``omega_radius``; ``phi`` is
    ``"quadratic"`` (``|x|^2``) or ``"blowup"`` (``R^2 / (R^2 - |x|^2)``).
    ``eps_j = eps1 * eps_factor**(j - 1)``.
    """

    J: int = 3
    gamma: float = 0.2
    root: tuple = (-0.6, 0.6, -0.6, 0.6)
    inset: float = 0.02
    disc_radius: float = 1.0
    chart_radius: float = 1.5
    p0: complex = 1.25
    h: float = 0.03
    omega_radius: float = 10.0
    phi: str = "quadratic"
    values: tuple = (9.0, 25.0, 49.0, 81.0)
    eps1: float = 0.1
    eps_factor: float = 0.49
    hit_set: tuple = ()
    hit_tol: float = 0.1
    f0: float = 2.0
    pole_orders: tuple = (1, 2)
    closeness_fraction: float = 0.9
    band_weight: float = 1.0
    fit_samples: int = 4000
    voxel_spacing: float = 0.25
    shell_samples: int = 256
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        self.root = tuple(float(x) for x in self.root)
        self.values = tuple(float(x) for x in self.values)
        self.hit_set = tuple(tuple(float(c) for c in a) for a in self.hit_set)
        self.pole_orders = tuple(int(k) for k in self.pole_orders)
        self.p0 = complex(self.p0)

    # exhaustion -----------------------------------------------------------
    def phi_field(self) -> ScalarField3:
        R = float(self.omega_radius)
        box = ((-R, R),) * 3
        if self.phi == "quadratic":
            return ScalarField3(lambda x: np.sum(x * x, axis=-1), box=box)

        def blowup(x):
            s = np.sum(x * x, axis=-1)
            with np.errstate(divide="ignore"):
                return np.where(s < R * R, R * R / np.maximum(R * R - s, 1e-300), np.inf)

        return ScalarField3(blowup, box=box)

    def level_radius(self, r: float) -> float:
        """Radius of the sphere ``{phi = r}``."""
        R = float(self.omega_radius)
        if self.phi == "quadratic":
            return math.sqrt(r)
        return R * math.sqrt(1.0 - 1.0 / r)

    def eps(self, j: int) -> float:
        return float(self.eps1) * float(self.eps_factor) ** (j - 1)

    def validate(self) -> None:
        """Raise ``ValueError`` on an invalid configuration."""
        if int(self.J) != self.J or self.J < 0:
            raise ValueError("J must be a nonnegative integer")
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        if self.phi not in ("quadratic", "blowup"):
            raise ValueError(f"unknown exhaustion {self.phi!r}")
        if len(self.values) < self.J + 1:
            raise ValueError(f"need at least J + 1 = {self.J + 1} exhaustion values")
        v = np.asarray(self.values)
        if np.any(np.diff(v) <= 0):
            raise ValueError("exhaustion values must increase strictly")
        floor = 0.0 if self.phi == "quadratic" else 1.0
        if v[0] <= floor:
            raise ValueError(f"exhaustion values must exceed min phi = {floor}")
        if any(self.level_radius(r) >= self.omega_radius for r in v):
            raise ValueError("a level set leaves Omega")
        if not (self.eps1 > 0 and 0 < self.eps_factor < 0.5):
            raise ValueError("need eps1 > 0 and 0 < eps_factor < 1/2")
        x0, x1, y0, y1 = self.root
        corners = np.array([complex(x0, y0), complex(x1, y0), complex(x1, y1), complex(x0, y1)])
        if not (x0 < x1 and y0 < y1) or np.abs(corners).max() >= self.disc_radius:
            raise ValueError("root rectangle must lie inside the disc X_0")
        if not self.disc_radius < abs(self.p0) < self.chart_radius:
            raise ValueError("p0 must lie in the interior of K_0")
        if self.h <= 0 or self.hit_tol <= 0 or self.voxel_spacing <= 0:
            raise ValueError("h, hit_tol and voxel_spacing must be positive")
        if not 0 < self.closeness_fraction < 1:
            raise ValueError("closeness_fraction must lie in (0, 1)")
        if not self.pole_orders or min(self.pole_orders) < 1:
            raise ValueError("pole orders must be positive integers")
        shells = [self.level_radius(r) for r in self.values]
        for a in self.hit_set:
            if len(a) != 3:
                raise ValueError("hit points must be 3-vectors")
            n = float(np.linalg.norm(a))
            if n >= self.omega_radius:
                raise ValueError(f"hit point {a} outside Omega")
            if min(abs(n - s) for s in shells) <= self.hit_tol:
                raise ValueError(f"hit point {a} within hit_tol of a level set")

    # serialisation ----------------------------------------------------------
    def to_json(self) -> dict:
        d = asdict(self)
        d["p0"] = [self.p0.real, self.p0.imag]
        d["root"] = list(self.root)
        d["values"] = list(self.values)
        d["hit_set"] = [list(a) for a in self.hit_set]
        d["pole_orders"] = list(self.pole_orders)
        return d

    @classmethod
    def from_json(cls, data: dict) -> "RunConfig":
        data = dict(data)
        version = data.pop("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ValueError(f"unsupported config schema_version {version}")
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "p0" in data and isinstance(data["p0"], (list, tuple)):
            data["p0"] = complex(*data["p0"])
        return cls(**data)

    def config_hash(self) -> str:
        text = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


# --------------------------------------------------------------------------
# null-curve potentials


def _null_from_derivs(z, G, G1, G2):
    return np.stack([
        0.5 * (1 - z * z) * G2 + z * G1 - G,
        0.5j * (1 + z * z) * G2 - 1j * z * G1 + 1j * G,
        z * G2 - G1,
    ])


def _pole_derivs(z, c, k):
    """G, G', G'', G''' of ``(z - c)^(-k)``."""
    w = 1.0 / (z - c)
    G = w**k
    return G, -k * G * w, k * (k + 1) * G * w * w, -k * (k + 1) * (k + 2) * G * w**3


@dataclass
class NullPotential:
    """``G(z) = f0 z^3 / 6 + sum_b a_b (z - c_b)^(-k_b)``."""

    f0: float
    centers: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=complex))
    orders: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    coefs: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=complex))

    def __post_init__(self):
        self.f0 = float(self.f0)
        self.centers = np.asarray(self.centers, dtype=complex).ravel()
        self.orders = np.asarray(self.orders, dtype=np.int64).ravel()
        self.coefs = np.asarray(self.coefs, dtype=complex).ravel()
        if not self.centers.size == self.orders.size == self.coefs.size:
            raise ValueError("centers, orders and coefs must have equal length")

    def extended(self, centers, orders, coefs) -> "NullPotential":
        return NullPotential(
            self.f0,
            np.r_[self.centers, np.asarray(centers, dtype=complex)],
            np.r_[self.orders, np.asarray(orders, dtype=np.int64)],
            np.r_[self.coefs, np.asarray(coefs, dtype=complex)],
        )

    def derivatives(self, z, chunk: int = 4096):
        """(G, G', G'', G''') at ``z`` (any shape)."""
        z = np.asarray(z, dtype=complex)
        flat = z.ravel()
        out = [np.empty_like(flat) for _ in range(4)]
        f0 = self.f0
        for s in range(0, flat.size, chunk):
            zz = flat[s:s + chunk]
            acc = [f0 * zz**3 / 6, f0 * zz**2 / 2, f0 * zz, np.full_like(zz, f0)]
            for k in np.unique(self.orders):
                sel = self.orders == k
                d = _pole_derivs(zz[:, None], self.centers[sel][None, :], int(k))
                for m in range(4):
                    acc[m] = acc[m] + d[m] @ self.coefs[sel]
            for m in range(4):
                out[m][s:s + chunk] = acc[m]
        return tuple(o.reshape(z.shape) for o in out)

    def null_curve(self, z) -> np.ndarray:
        G, G1, G2, _ = self.derivatives(z)
        return _null_from_derivs(np.asarray(z, dtype=complex), G, G1, G2)

    def weierstrass(self) -> WeierstrassData:
        return WeierstrassData(lambda z: self.derivatives(z)[3], lambda z: np.asarray(z, dtype=complex),
                               tag="null-potential")

    def immersion(self, domain: PlanarDomain, p0: complex, base_value=(0.0, 0.0, 0.0)) -> ImmersionField:
        """``u = Re (F - F(p0)) + base_value`` at the vertices of ``domain``.

        The normalisation uses the exact point ``p0``; the returned base
        point is the vertex nearest to it.
        """
        z = domain.vertices
        G, G1, G2, G3 = self.derivatives(z)
        F = _null_from_derivs(z, G, G1, G2)
        F0 = self.null_curve(np.array([p0]))
        u = (F - F0).real + np.asarray(base_value, dtype=float).reshape(3, 1)
        lam = np.abs(G3) ** 2 * (1 + np.abs(z) ** 2) ** 2 / 4
        return ImmersionField(domain, u, lam, domain.nearest_vertex(p0))

    def to_json(self) -> dict:
        return {
            "f0": self.f0,
            "centers": [[c.real, c.imag] for c in self.centers],
            "orders": self.orders.tolist(),
            "coefs": [[a.real, a.imag] for a in self.coefs],
        }

    @classmethod
    def from_json(cls, d: dict) -> "NullPotential":
        return cls(
            float(d["f0"]),
            np.array([complex(*c) for c in d["centers"]], dtype=complex),
            np.array(d["orders"], dtype=np.int64),
            np.array([complex(*a) for a in d["coefs"]], dtype=complex),
        )


def _basis_null(z, centers, orders):
    """Null curves of every basis term at ``z``: (3, len(z), n_basis)."""
    z = np.asarray(z, dtype=complex)[:, None]
    cols = np.empty((3, z.shape[0], len(centers)), dtype=complex)
    for k in np.unique(orders):
        sel = np.flatnonzero(orders == k)
        G, G1, G2, _ = _pole_derivs(z, centers[sel][None, :], int(k))
        cols[:, :, sel] = _null_from_derivs(z, G, G1, G2)
    return cols


# --------------------------------------------------------------------------
# geometry helpers


def _deep_point(piece, gamma: float, inset: float, first: int, steps: int = 16) -> complex:
    """A point of the Cantor set inside ``piece``: child ``first`` then alternate 4, 1."""
    p = piece
    pattern = [first] + [4 if i % 2 == 0 else 1 for i in range(steps - 1)]
    for c in pattern:
        p = quad_split(p, gamma, inset)[0][c - 1]
    return complex(p.centroid)


def _vertex_depths(z: np.ndarray, tree: CantorTree, disc_radius: float, J: int, tol: float = 1e-10):
    """Deepest level whose open (closed) union contains each vertex; -1 outside ``X_0``."""
    r = np.abs(z)
    d_open = np.where(r < disc_radius - tol, 0, -1)
    d_closed = np.where(r <= disc_radius + tol, 0, -1)
    x, y = z.real[:, None], z.imag[:, None]
    for i in range(1, J + 1):
        b = tree.level_bboxes(i)
        x0, x1, y0, y1 = (b[:, k][None, :] for k in range(4))
        inside_open = np.any((x > x0 + tol) & (x < x1 - tol) & (y > y0 + tol) & (y < y1 - tol), axis=1)
        inside_closed = np.any((x >= x0 - tol) & (x <= x1 + tol) & (y >= y0 - tol) & (y <= y1 + tol), axis=1)
        d_open = np.where(inside_open & (d_open == i - 1), i, d_open)
        d_closed = np.where(inside_closed & (d_closed == i - 1), i, d_closed)
    return d_open.astype(np.int8), d_closed.astype(np.int8)


def _tree(config: RunConfig) -> CantorTree:
    x0, x1, y0, y1 = config.root
    return build_cantor_tree(rectangle(x0, x1, y0, y1), config.gamma, max(config.J, 1), inset=config.inset)


def _stage_domain(config: RunConfig, tree: CantorTree, j: int) -> PlanarDomain:
    if j == 0:
        return annulus(config.disc_radius, config.chart_radius, config.h)
    outer = circle_polyline(config.chart_radius, 0.8 * config.h)
    return complement_domain(tree, j, outer=outer, h=config.h)


class _Levels:
    """Voxelised marked components ``L_i`` (``L_0`` is empty)."""

    def __init__(self, config: RunConfig):
        self.config = config
        self._phi = config.phi_field()
        self._cache = {}

    def __call__(self, i: int) -> SublevelComponent | None:
        if i <= 0:
            return None
        if i not in self._cache:
            self._cache[i] = sublevel_components(self._phi, self.config.values[i - 1],
                                                 self.config.voxel_spacing, marker=np.zeros(3))
        return self._cache[i]


def _in_voxels(points: np.ndarray, comp: SublevelComponent | None) -> np.ndarray:
    """Membership of (n, 3) points in a voxel set."""
    points = np.atleast_2d(points)
    if comp is None or points.size == 0:
        return np.zeros(len(points), dtype=bool)
    idx = np.round((points - comp.origin) / comp.spacing).astype(np.int64)
    ok = np.all((idx >= 0) & (idx < np.array(comp.mask.shape)), axis=1)
    out = np.zeros(len(points), dtype=bool)
    out[ok] = comp.mask[idx[ok, 0], idx[ok, 1], idx[ok, 2]]
    return out


# --------------------------------------------------------------------------
# checks


def hitting_check(u, A, region, tol: float) -> dict:
    """Nearest immersed sample to each target point.

    Parameters
    ----------
    u : ImmersionField or (3, n) array
    A : (m, 3) target points
    region : vertex indices (or boolean mask) allowed to hit
    tol : hit tolerance, must be positive

    Returns
    -------
    dict with ``distances``, ``nearest`` vertex ids, per-point ``hit`` flags
    and ``passed`` (all hit; vacuous for empty ``A``).
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    uu = u.u if isinstance(u, ImmersionField) else np.asarray(u, dtype=float)
    region = np.asarray(region)
    ids = np.flatnonzero(region) if region.dtype == bool else region.astype(np.int64)
    A = np.asarray(A, dtype=float).reshape(-1, 3)
    if len(A) == 0:
        return {"distances": [], "nearest": [], "hit": [], "passed": True, "tol": tol}
    if ids.size == 0:
        n = len(A)
        return {"distances": [math.inf] * n, "nearest": [-1] * n, "hit": [False] * n, "passed": False, "tol": tol}
    pts = uu[:, ids].T
    d, k = cKDTree(pts).query(A)
    hit = d < tol
    return {"distances": d.tolist(), "nearest": ids[k].tolist(), "hit": hit.tolist(),
            "passed": bool(np.all(hit)), "tol": tol}


def properness_check(points, L: SublevelComponent | None) -> tuple:
    """(no sample inside the voxel set ``L``, min distance to its voxel centres).

    ``points`` is ``(n, 3)``. An empty ``L`` passes with infinite clearance.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if L is None or L.n_voxels == 0 or pts.size == 0:
        return True, math.inf
    inside = _in_voxels(pts, L)
    d, _ = cKDTree(L.centres()).query(pts)
    return bool(not inside.any()), float(d.min())


# --------------------------------------------------------------------------
# records


@dataclass
class StageRecord:
    j: int
    arrays: dict = field(repr=False)  # everything the certificates read
    potential: NullPotential = field(repr=False)
    eps: float = math.nan
    scale: float = 1.0  # factor applied to the fitted update to meet (b)
    fit_residual: float = math.nan
    certificates: dict = field(default_factory=dict)

    @property
    def domain(self) -> PlanarDomain:
        return _domain_from_arrays(self.arrays)

    @property
    def n_vertices(self) -> int:
        return int(self.arrays["vertices"].size)

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.certificates.values())

    def immersion(self) -> ImmersionField:
        return ImmersionField(self.domain, self.arrays["u"], self.arrays["lam"], int(self.arrays["p0"]))

    def summary(self) -> dict:
        return {
            "j": self.j,
            "eps": self.eps,
            "n_vertices": self.n_vertices,
            "n_holes": int(len(np.unique(self.arrays["markers"][self.arrays["markers"] >= 2]))),
            "scale": self.scale,
            "fit_residual": self.fit_residual,
            "min_metric_density": float(self.arrays["lam"].min()),
            "certificates": self.certificates,
        }


@dataclass
class RunResult:
    config: RunConfig
    stages: list
    summary: dict


def evaluate_certificates(arrays: dict, config: RunConfig, levels: _Levels | None = None,
                          tree: CantorTree | None = None) -> dict:
    """Certificates (a)-(g) of one stage from its stored arrays.

    Every entry has ``passed`` plus the measured quantities it was decided
    on. The function reads nothing but ``arrays`` and ``config``.
    """
    j = int(arrays["j"])
    if j < 1:
        return {}
    levels = levels or _Levels(config)
    tree = tree or _tree(config)
    u, u_prev = arrays["u"], arrays["u_prev"]
    z = arrays["vertices"]
    d_open, d_closed = arrays["depth_open"], arrays["depth_closed"]
    markers = arrays["markers"]
    p0 = int(arrays["p0"])
    eps_j = config.eps(j)

    def cert_a():
        n_pieces = len(tree.level(j))
        n_holes = len(np.unique(markers[markers >= 2]))
        overlaps = tree.pairwise_overlaps(j)
        ok = n_pieces == 4**j and n_holes == 4**j and overlaps == 0
        return {"passed": bool(ok), "pieces": n_pieces, "holes": n_holes, "overlaps": overlaps, "expected": 4**j}

    def cert_b():
        sel = d_open < j  # K_{j-1}: outside the open level-(j-1) pieces
        sup = float(np.linalg.norm(u[:, sel] - u_prev[:, sel], axis=0).max())
        return {"passed": bool(sup < eps_j), "sup": sup, "eps": eps_j, "margin": eps_j - sup}

    def cert_c():
        band = markers >= 2
        pts = u[:, band].T
        inner, outer = levels(j), levels(j + 1)
        in_outer = _in_voxels(pts, outer)
        in_inner = _in_voxels(pts, inner)
        ok = bool(np.all(in_outer & ~in_inner))
        radii = np.linalg.norm(pts, axis=1)
        return {"passed": ok, "fraction_in_band": float(np.mean(in_outer & ~in_inner)),
                "min_radius": float(radii.min()), "max_radius": float(radii.max()),
                "shell": [config.level_radius(config.values[j - 1]), config.level_radius(config.values[j])]}

    def cert_d():
        sel = (d_open < j) & (d_closed >= j - 1)  # K_j minus the interior of K_{j-1}
        ok, clearance = properness_check(u[:, sel].T, levels(j - 1))
        return {"passed": ok, "clearance": clearance, "n_samples": int(sel.sum())}

    def cert_e():
        dist = distance_field(_graph_from_arrays(arrays), p0)
        radii, ok = [], True
        for i in range(1, j + 1):
            tgt = d_closed >= i
            r = float(dist[tgt].min()) if tgt.any() else math.inf
            radii.append(r)
            ok = ok and r > i
        return {"passed": bool(ok), "radii": radii, "required": list(range(1, j + 1))}

    def cert_f():
        A = np.asarray(config.hit_set, dtype=float).reshape(-1, 3)
        per_level, ok = [], True
        for i in range(1, j + 1):
            inside = _in_voxels(A, levels(i)) if len(A) else np.zeros(0, dtype=bool)
            region = (d_closed < i) & (d_open >= i - 1)
            res = hitting_check(u, A[inside], region, config.hit_tol)
            per_level.append({"i": i, "n_targets": int(inside.sum()), "distances": res["distances"]})
            ok = ok and res["passed"]
        return {"passed": bool(ok), "levels": per_level, "tol": config.hit_tol}

    def cert_g():
        if j == 1:
            return {"passed": True, "eps": eps_j, "note": "no predecessor"}
        prev = config.eps(j - 1)
        return {"passed": bool(eps_j < prev / 2), "eps": eps_j, "eps_prev": prev, "margin": prev / 2 - eps_j}

    checks = {"a": cert_a, "b": cert_b, "c": cert_c, "d": cert_d, "e": cert_e, "f": cert_f, "g": cert_g}
    levels(j - 1), levels(j), levels(j + 1)  # fill the cache before threads read it
    workers = max(1, min(len(checks), int(os.environ.get("CALABI_LAB_THREADS", "4") or 4)))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = {k: pool.submit(fn) for k, fn in checks.items()}
        return {k: futures[k].result() for k in checks}


def _domain_from_arrays(arrays: dict) -> PlanarDomain:
    return PlanarDomain(vertices=arrays["vertices"], triangles=arrays["triangles"],
                        boundary_markers=arrays["markers"], outer_boundary=np.zeros(0, dtype=complex))


def _graph_from_arrays(arrays: dict):
    dom = _domain_from_arrays(arrays)
    return build_metric_graph(ImmersionField(dom, arrays["u"], arrays["lam"], int(arrays["p0"])), "embedded_edges")


# --------------------------------------------------------------------------
# stage engine


def _stage_arrays(j: int, dom: PlanarDomain, imm: ImmersionField, u_prev, depths) -> dict:
    return {
        "j": np.int64(j),
        "vertices": dom.vertices,
        "triangles": dom.triangles,
        "markers": dom.boundary_markers,
        "u": imm.u,
        "u_prev": imm.u if u_prev is None else u_prev,
        "lam": imm.metric_density,
        "p0": np.int64(imm.base_point),
        "depth_open": depths[0],
        "depth_closed": depths[1],
    }


def _stage_basis(config: RunConfig, tree: CantorTree, j: int):
    centers = []
    for piece in tree.level(j):
        centers += [_deep_point(piece, config.gamma, config.inset, first) for first in (1, 2, 3, 4)]
    orders = np.repeat(np.asarray(config.pole_orders, dtype=np.int64)[None, :], len(centers), axis=0).ravel()
    centers = np.repeat(np.asarray(centers, dtype=complex), len(config.pole_orders))
    return centers, orders


def _subsample(ids: np.ndarray, n: int) -> np.ndarray:
    if ids.size <= n:
        return ids
    return ids[np.unique(np.linspace(0, ids.size - 1, n).round().astype(np.int64))]


def _fit_update(config: RunConfig, j: int, z, u_prev, close_ids, band_ids, centers, orders):
    """Least-squares coefficients of the stage terms; returns (coefs, relative residual)."""
    eps_j = config.eps(j)
    rho_j = config.level_radius(config.values[j - 1])
    rho_n = config.level_radius(config.values[j])
    rho_mid = 0.5 * (rho_j + rho_n)
    base = _basis_null(np.array([config.p0]), centers, orders)
    rows, rhs = [], []
    for ids, weight, target in (
        (close_ids, 1.0 / (math.sqrt(max(close_ids.size, 1)) * eps_j), None),
        (band_ids, config.band_weight / (math.sqrt(max(band_ids.size, 1)) * (rho_n - rho_j)), "band"),
    ):
        if ids.size == 0:
            continue
        B = _basis_null(z[ids], centers, orders) - base  # (3, n, nb)
        M = np.concatenate([B.real, -B.imag], axis=2).reshape(3 * ids.size, -1)
        if target is None:
            t = np.zeros((3, ids.size))
        else:
            up = u_prev[:, ids]
            norm = np.linalg.norm(up, axis=0)
            direction = np.where(norm > 1e-12, up / np.where(norm > 1e-12, norm, 1.0), np.array([[0.0], [0.0], [1.0]]))
            t = rho_mid * direction - up
        rows.append(weight * M)
        rhs.append(weight * t.reshape(-1))
    M, b = np.vstack(rows), np.concatenate(rhs)
    scale = np.linalg.norm(M, axis=0)
    scale[scale == 0] = 1.0
    x, *_ = np.linalg.lstsq(M / scale, b, rcond=1e-12)
    x = x / scale
    nb = centers.size
    coefs = x[:nb] + 1j * x[nb:]
    resid = float(np.linalg.norm(M @ x - b) / max(np.linalg.norm(b), 1e-300))
    return coefs, resid


def _run_stage(config: RunConfig, tree: CantorTree, potential: NullPotential, j: int):
    dom = _stage_domain(config, tree, j)
    depths = _vertex_depths(dom.vertices, tree, config.disc_radius, max(config.J, 1))
    u_prev = potential.immersion(dom, config.p0).u
    centers, orders = _stage_basis(config, tree, j)
    close_ids = np.flatnonzero(depths[0] < j)
    band_ids = np.flatnonzero(dom.boundary_markers >= 2)
    coefs, resid = _fit_update(config, j, dom.vertices, u_prev, _subsample(close_ids, config.fit_samples),
                               band_ids, centers, orders)
    trial = potential.extended(centers, orders, coefs).immersion(dom, config.p0)
    sup = float(np.linalg.norm(trial.u[:, close_ids] - u_prev[:, close_ids], axis=0).max())
    target = config.closeness_fraction * config.eps(j)
    scale = min(1.0, target / sup) if sup > 0 else 1.0
    new = potential.extended(centers, orders, scale * coefs)
    imm = new.immersion(dom, config.p0)
    arrays = _stage_arrays(j, dom, imm, u_prev, depths)
    return new, StageRecord(j, arrays, new, eps=config.eps(j), scale=scale, fit_residual=resid)


def run_construction(config: RunConfig) -> RunResult:
    """Run stages ``0..J`` and certify each one.

    Certificate failures are recorded, not raised. Meshing failures abort
    with the underlying exception.
    """
    config.validate()
    tree = _tree(config)
    levels = _Levels(config)
    potential = NullPotential(float(config.f0))
    dom0 = _stage_domain(config, tree, 0)
    imm0 = potential.immersion(dom0, config.p0)
    depths0 = _vertex_depths(dom0.vertices, tree, config.disc_radius, max(config.J, 1))
    stages = [StageRecord(0, _stage_arrays(0, dom0, imm0, None, depths0), potential, eps=math.nan)]
    for j in range(1, config.J + 1):
        potential, rec = _run_stage(config, tree, potential, j)
        rec.certificates = evaluate_certificates(rec.arrays, config, levels, tree)
        stages.append(rec)
    return RunResult(config, stages, _summary(config, stages))


def _summary(config: RunConfig, stages: list) -> dict:
    out = {
        "J": config.J,
        "config_hash": config.config_hash(),
        "stages": [s.summary() for s in stages],
    }
    certified = [s for s in stages if s.j >= 1]
    if certified:
        out["all_passed"] = {k: all(s.certificates[k]["passed"] for s in certified) for k in "abcdefg"}
    if len(stages) >= 3:
        out["cauchy"] = cauchy_diagnostic(stages, eps1=config.eps1)
    out["limit_set"] = limit_set_report(stages, config.omega_radius, config.shell_samples)
    return out


# --------------------------------------------------------------------------
# diagnostics


def _arrays(stage) -> dict:
    return stage.arrays if hasattr(stage, "arrays") else stage


def cauchy_diagnostic(stages, eps1: float | None = None, slack: float = 0.05, floor: float = 1e-13) -> dict:
    """Sup-differences ``d_j = sup_{K_0} |u_j - u_{j-1}|`` and ratios ``d_j / d_{j-1}``.

    Ratios with ``d_{j-1} <= floor`` are 0 when ``d_j <= floor`` as well
    (stalled iterates) and ``inf`` otherwise. ``compliant`` means every
    ratio is at most ``1/2 + slack``. With ``eps1`` the geometric bound
    ``sum d_j <= 2 eps1`` is also reported.
    """
    arrs = [_arrays(s) for s in stages]
    if len(arrs) < 3:
        raise ValueError("need at least 3 stages (two differences)")
    diffs = []
    for a in arrs[1:]:
        k0 = a["depth_open"] < 0
        diffs.append(float(np.linalg.norm(a["u"][:, k0] - a["u_prev"][:, k0], axis=0).max()))
    ratios = []
    for prev, cur in zip(diffs, diffs[1:]):
        if prev > floor:
            ratios.append(cur / prev)
        else:
            ratios.append(0.0 if cur <= floor else math.inf)
    bound = 0.5 + slack
    flagged = [i + 2 for i, r in enumerate(ratios) if r > bound]
    out = {"differences": diffs, "ratios": ratios, "bound": bound, "compliant": not flagged,
           "flagged_stages": flagged, "sum": float(sum(diffs))}
    if eps1 is not None:
        out["sum_bound"] = 2 * eps1
        out["sum_within_bound"] = bool(sum(diffs) <= 2 * eps1)
    return out


def _sphere_points(n: int) -> np.ndarray:
    k = np.arange(n) + 0.5
    polar = np.arccos(1 - 2 * k / n)
    azim = np.pi * (1 + 5**0.5) * k
    return np.c_[np.cos(azim) * np.sin(polar), np.sin(azim) * np.sin(polar), np.cos(polar)]


def limit_set_report(stages, omega_radius: float, n_samples: int = 256, late: int = 2) -> dict:
    """Distance from samples of the sphere ``bOmega`` to the last ``late`` stage images.

    With fewer than two certified stages the report is flagged
    ``insufficient`` and carries no gap statistic.
    """
    arrs = [_arrays(s) for s in stages if int(_arrays(s)["j"]) >= 1]
    if len(arrs) < 2:
        return {"insufficient": True, "n_stages": len(arrs)}
    pts = np.hstack([a["u"] for a in arrs[-late:]]).T
    shell = omega_radius * _sphere_points(n_samples)
    d, _ = cKDTree(pts).query(shell)
    return {"insufficient": False, "n_stages": len(arrs), "stages_used": [int(a["j"]) for a in arrs[-late:]],
            "max_gap": float(d.max()), "mean_gap": float(d.mean()), "omega_radius": omega_radius,
            "n_samples": n_samples}


# --------------------------------------------------------------------------
# artifacts


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_run(result: RunResult, out_dir, timing: dict | None = None) -> Path:
    """Write per-stage npz/PLY, certificates, metrics CSV and a manifest.

    Everything except the manifest's ``timing`` entry is a deterministic
    function of the configuration.
    """
    from . import __version__

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    certs = {}
    for s in result.stages:
        npz = out / f"stage_{s.j}.npz"
        np.savez(npz, **s.arrays)
        ply = out / f"stage_{s.j}.ply"
        write_ply(ply, s.arrays["u"].T, s.arrays["triangles"],
                  vertex_scalars={"depth": s.arrays["depth_open"], "lam": s.arrays["lam"]},
                  comments=(f"stage {s.j}",))
        (out / f"stage_{s.j}_potential.json").write_text(dump_json(s.potential.to_json()) + "\n")
        files += [npz.name, ply.name, f"stage_{s.j}_potential.json"]
        if s.j >= 1:
            certs[str(s.j)] = s.certificates
    dump_json(certs, out / "certificates.json")
    dump_json(result.summary, out / "summary.json")
    with open(out / "metrics.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["j", "eps", "n_vertices", "scale", "closeness_sup", "band_fraction", "min_radius_e",
                    "min_metric_density"] + [f"cert_{k}" for k in "abcdefg"])
        for s in result.stages[1:]:
            c = s.certificates
            w.writerow([s.j, repr(s.eps), s.n_vertices, repr(s.scale), repr(c["b"]["sup"]),
                        repr(c["c"]["fraction_in_band"]), repr(min(c["e"]["radii"])),
                        repr(float(s.arrays["lam"].min()))] + [int(c[k]["passed"]) for k in "abcdefg"])
    files += ["certificates.json", "summary.json", "metrics.csv"]
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "package_version": __version__,
        "config": result.config.to_json(),
        "config_hash": result.config.config_hash(),
        "modules": {"numpy": np.__version__, "scipy": _scipy_version(), "numba": _numba_version()},
        "timing": dict(timing or {}),
        "files": {name: _sha256(out / name) for name in files},
    }
    dump_json(manifest, out / "manifest.json")
    return out


def _scipy_version() -> str:
    import scipy

    return scipy.__version__


def _numba_version() -> str:
    try:
        import numba
    except ImportError:  # pragma: no cover
        return "unavailable"
    return numba.__version__


def load_run(out_dir):
    """(config, list of stage array dicts, stored certificates) of a written run."""
    out = Path(out_dir)
    manifest = json.loads((out / "manifest.json").read_text())
    config = RunConfig.from_json(manifest["config"])
    if config.config_hash() != manifest["config_hash"]:
        raise ValueError("config hash mismatch")
    stages = []
    for j in range(config.J + 1):
        with np.load(out / f"stage_{j}.npz") as data:
            stages.append({k: data[k] for k in data.files})
    certs = json.loads((out / "certificates.json").read_text())
    return config, stages, certs


def recompute_certificates(out_dir) -> dict:
    """Re-run every certificate on stored arrays and compare with the ledger.

    ``identical`` is True when the recomputed JSON text equals the stored
    text byte for byte.
    """
    out = Path(out_dir)
    config, stages, _ = load_run(out)
    levels, tree = _Levels(config), _tree(config)
    fresh = {str(int(a["j"])): evaluate_certificates(a, config, levels, tree) for a in stages if int(a["j"]) >= 1}
    stored_text = (out / "certificates.json").read_text()
    fresh_text = dump_json(fresh) + "\n"
    return {"identical": fresh_text == stored_text, "certificates": fresh}
