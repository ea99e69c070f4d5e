"""Minimal plurisubharmonicity, mean convexity and exhaustion sublevel sets in R^3.

A C^2 function is minimal plurisubharmonic iff ``lambda_1 + lambda_2 >= 0``
for the two smallest eigenvalues of its Hessian. Boundary mean convexity
uses the cotangent mean-curvature normal with mixed Voronoi areas.
Sublevel components are 26-connected voxel sets.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import ndimage

__all__ = [
    "ConvexityReport",
    "ExhaustionChain",
    "ScalarField3",
    "SublevelComponent",
    "check_minimal_psh",
    "exhaustion_chain",
    "hessian_eigs",
    "icosphere",
    "mean_convexity",
    "mean_curvature",
    "sublevel_components",
    "torus_mesh",
    "voxel_grid",
    "write_nrrd",
]

VERDICTS = ("strongly_minimal_psh", "minimal_psh_boundary_case", "not_minimal_psh")


@dataclass
class ScalarField3:
    """Real function on a box in R^3.

    ``func`` maps an ``(..., 3)`` array to ``(...)`` values. ``hessian``
    (optional) maps an ``(..., 3)`` array to ``(..., 3, 3)``.
    """

    func: Callable
    hessian: Callable | None = None
    box: tuple = ((-2.0, 2.0), (-2.0, 2.0), (-2.0, 2.0))
    scale: float = 1.0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        self._check_box(x)
        return np.asarray(self.func(x), dtype=float)

    def _check_box(self, x, margin=0.0):
        lo = np.array([b[0] for b in self.box]) - 1e-12
        hi = np.array([b[1] for b in self.box]) + 1e-12
        if np.any(x < lo + margin) or np.any(x > hi - margin):
            raise ValueError("evaluation outside the declared box")

    @classmethod
    def from_grid(cls, values: np.ndarray, box: tuple) -> "ScalarField3":
        """Trilinear interpolant of samples on a regular grid covering ``box``."""
        vals = np.asarray(values, dtype=float)
        axes = [np.linspace(b[0], b[1], n) for b, n in zip(box, vals.shape)]
        from scipy.interpolate import RegularGridInterpolator

        interp = RegularGridInterpolator(axes, vals, method="linear")
        return cls(func=lambda x: interp(np.reshape(x, (-1, 3))).reshape(np.shape(x)[:-1]), box=box)


def _fd_hessian(phi: ScalarField3, x: np.ndarray, step: float) -> np.ndarray:
    H = np.empty((3, 3))
    e = np.eye(3) * step
    f0 = float(phi.func(x))
    for i in range(3):
        H[i, i] = (float(phi.func(x + e[i])) - 2 * f0 + float(phi.func(x - e[i]))) / step**2
        for j in range(i + 1, 3):
            v = (
                float(phi.func(x + e[i] + e[j]))
                - float(phi.func(x + e[i] - e[j]))
                - float(phi.func(x - e[i] + e[j]))
                + float(phi.func(x - e[i] - e[j]))
            ) / (4 * step**2)
            H[i, j] = H[j, i] = v
    return H


def default_fd_step(phi: ScalarField3) -> float:
    return np.finfo(float).eps ** (1 / 3) * phi.scale


def hessian_eigs(phi: ScalarField3, x, fd_step: float | None = None) -> np.ndarray:
    """Sorted Hessian eigenvalues at ``x``: analytic if available, else central differences.

    Examples
    --------
    >>> phi = ScalarField3(lambda x: x[..., 0] * x[..., 1])
    >>> np.round(hessian_eigs(phi, [0.1, 0.2, 0.3]), 6) + 0.0
    array([-1.,  0.,  1.])
    """
    x = np.asarray(x, dtype=float).reshape(3)
    if phi.hessian is not None:
        phi._check_box(x)
        H = np.asarray(phi.hessian(x), dtype=float).reshape(3, 3)
    else:
        h = default_fd_step(phi) if fd_step is None else float(fd_step)
        phi._check_box(x, margin=h)
        H = _fd_hessian(phi, x, h)
    return np.linalg.eigvalsh(0.5 * (H + H.T))


@dataclass(frozen=True)
class ConvexityReport:
    min_value: float
    argmin: tuple
    verdict: str
    tolerance: float
    n_samples: int

    def to_json(self) -> dict:
        return {
            "min_lambda1_plus_lambda2": self.min_value,
            "argmin": list(self.argmin),
            "verdict": self.verdict,
            "tolerance": self.tolerance,
            "n_samples": self.n_samples,
        }


def _verdict(m: float, tol: float) -> str:
    if m > tol:
        return VERDICTS[0]
    if m >= -tol:
        return VERDICTS[1]
    return VERDICTS[2]


def check_minimal_psh(phi: ScalarField3, points, tol: float = 1e-6, fd_step: float | None = None) -> ConvexityReport:
    """min over ``points`` of lambda_1 + lambda_2 with a three-way verdict."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[0] == 0:
        raise ValueError("sample grid is empty")
    sums = np.array([np.sum(hessian_eigs(phi, p, fd_step)[:2]) for p in pts])
    k = int(np.argmin(sums))
    m = float(sums[k])
    return ConvexityReport(m, tuple(float(v) for v in pts[k]), _verdict(m, tol), float(tol), int(pts.shape[0]))


# --------------------------------------------------------------------------
# boundary meshes


def icosphere(level: int = 5, radius: float = 1.0):
    """Subdivided icosahedron projected to a sphere, outward oriented faces.

    Vertex count ``10 * 4**level + 2`` (10242 at level 5).
    """
    t = (1 + math.sqrt(5)) / 2
    v = np.array([[-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0], [0, -1, t], [0, 1, t],
                  [0, -1, -t], [0, 1, -t], [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1]], dtype=float)
    f = np.array([[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11], [1, 5, 9], [5, 11, 4],
                  [11, 10, 2], [10, 7, 6], [7, 1, 8], [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8],
                  [3, 8, 9], [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]], dtype=np.int64)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    for _ in range(level):
        e = np.sort(np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]]), axis=1)
        uniq, inv = np.unique(e, axis=0, return_inverse=True)
        mids = v[uniq[:, 0]] + v[uniq[:, 1]]
        mids /= np.linalg.norm(mids, axis=1, keepdims=True)
        m = inv.reshape(3, -1).T + len(v)
        v = np.vstack([v, mids])
        a, b, c = f[:, 0], f[:, 1], f[:, 2]
        ab, bc, ca = m[:, 0], m[:, 1], m[:, 2]
        f = np.concatenate([np.stack([a, ab, ca], 1), np.stack([b, bc, ab], 1),
                            np.stack([c, ca, bc], 1), np.stack([ab, bc, ca], 1)])
    return radius * v, f


def torus_mesh(R: float = 2.0, r: float = 0.5, n_major: int = 128, n_minor: int = 64):
    """Outward oriented torus around the z axis."""
    u = 2 * np.pi * np.arange(n_major) / n_major
    w = 2 * np.pi * np.arange(n_minor) / n_minor
    U, W = np.meshgrid(u, w, indexing="ij")
    x = np.stack([(R + r * np.cos(W)) * np.cos(U), (R + r * np.cos(W)) * np.sin(U), r * np.sin(W)], -1).reshape(-1, 3)
    idx = np.arange(n_major * n_minor).reshape(n_major, n_minor)
    i0 = idx
    i1 = np.roll(idx, -1, axis=0)
    i2 = np.roll(idx, -1, axis=1)
    i3 = np.roll(i1, -1, axis=1)
    f = np.concatenate([np.stack([i0, i1, i3], -1).reshape(-1, 3), np.stack([i0, i3, i2], -1).reshape(-1, 3)])
    return x, f


def _check_closed_oriented(faces: np.ndarray, n: int):
    he = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    key = he[:, 0] * n + he[:, 1]
    if np.unique(key).size != key.size:
        raise ValueError("mesh is not consistently oriented (repeated directed edge)")
    rev = he[:, 1] * n + he[:, 0]
    if not np.all(np.isin(rev, key)):
        raise ValueError("mesh is not closed (boundary edge found)")


def mean_curvature(vertices, faces) -> np.ndarray:
    """Discrete kappa_1 + kappa_2 per vertex (cotangent formula, mixed areas).

    Positive on a sphere whose faces are oriented outward, i.e. measured
    from the interior side.
    """
    v = np.asarray(vertices, dtype=float)
    f = np.asarray(faces, dtype=np.int64)
    n = len(v)
    _check_closed_oriented(f, n)
    p = [v[f[:, k]] for k in range(3)]
    lap = np.zeros((n, 3))
    area = np.zeros(n)
    fn = np.cross(p[1] - p[0], p[2] - p[0])
    tri_area = 0.5 * np.linalg.norm(fn, axis=1)
    cots = []
    for k in range(3):
        a, b, c = p[k], p[(k + 1) % 3], p[(k + 2) % 3]
        u1, u2 = b - a, c - a
        cots.append(np.einsum("ij,ij->i", u1, u2) / np.linalg.norm(np.cross(u1, u2), axis=1))
    for k in range(3):
        i, j = f[:, (k + 1) % 3], f[:, (k + 2) % 3]
        w = 0.5 * cots[k][:, None] * (v[j] - v[i])
        np.add.at(lap, i, w)
        np.add.at(lap, j, -w)
    # mixed areas (Meyer et al.)
    obtuse = np.stack([c < 0 for c in cots], axis=1)
    any_obtuse = obtuse.any(axis=1)
    for k in range(3):
        i = f[:, k]
        a, b, c = p[k], p[(k + 1) % 3], p[(k + 2) % 3]
        vor = (np.sum((c - a) ** 2, 1) * cots[(k + 1) % 3] + np.sum((b - a) ** 2, 1) * cots[(k + 2) % 3]) / 8
        mixed = np.where(~any_obtuse, vor, np.where(obtuse[:, k], tri_area / 2, tri_area / 4))
        np.add.at(area, i, mixed)
    hn = lap / area[:, None]  # equals -(kappa1 + kappa2) * outward normal
    vn = np.zeros((n, 3))
    for k in range(3):
        np.add.at(vn, f[:, k], fn)
    vn /= np.linalg.norm(vn, axis=1, keepdims=True)
    return -np.einsum("ij,ij->i", hn, vn)


def mean_convexity(vertices, faces) -> tuple:
    """(min over vertices of kappa_1 + kappa_2, argmin vertex index)."""
    H = mean_curvature(vertices, faces)
    k = int(np.argmin(H))
    return float(H[k]), k


# --------------------------------------------------------------------------
# sublevel sets


def voxel_grid(box: tuple, spacing: float):
    """Voxel centres covering ``box``: returns (axes, points (nx, ny, nz, 3))."""
    axes = [np.arange(b[0] + spacing / 2, b[1], spacing) for b in box]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    return axes, pts


@dataclass
class SublevelComponent:
    mask: np.ndarray = field(repr=False)  # boolean voxel occupancy
    volume: float
    spacing: float
    origin: np.ndarray = field(repr=False)  # centre of voxel (0, 0, 0)

    @property
    def n_voxels(self) -> int:
        return int(self.mask.sum())

    def centres(self) -> np.ndarray:
        return self.origin + self.spacing * np.argwhere(self.mask)

    def contains_point(self, x) -> bool:
        idx = np.round((np.asarray(x, dtype=float) - self.origin) / self.spacing).astype(int)
        if np.any(idx < 0) or np.any(idx >= self.mask.shape):
            return False
        return bool(self.mask[tuple(idx)])


def _values(phi: ScalarField3, spacing: float):
    axes, pts = voxel_grid(phi.box, spacing)
    vals = np.asarray(phi.func(pts), dtype=float)
    return axes, vals


def sublevel_components(phi: ScalarField3, c: float, spacing: float = 0.05, *, marker=None, _cache=None):
    """26-connected components of ``{phi <= c}`` sorted by volume (largest first).

    With ``marker`` only the component containing the marker point is
    returned (ValueError if it lies in none).
    """
    if not np.isfinite(c):
        raise ValueError("level c must be finite")
    axes, vals = _cache if _cache is not None else _values(phi, spacing)
    origin = np.array([a[0] for a in axes])
    labels, n = ndimage.label(vals <= c, structure=np.ones((3, 3, 3), dtype=bool))
    comps = []
    if n:
        counts = np.bincount(labels.ravel())[1:]
        for lab in np.argsort(-counts, kind="stable") + 1:
            mask = labels == lab
            comps.append(SublevelComponent(mask, float(counts[lab - 1]) * spacing**3, spacing, origin))
    if marker is None:
        return comps
    for comp in comps:
        if comp.contains_point(marker):
            return comp
    raise ValueError("marker lies outside every sublevel component")


@dataclass
class ExhaustionChain:
    values: tuple
    components: list
    strict_containment: list  # for j >= 1: L_{j-1} plus one voxel layer inside L_j
    warnings: list

    def to_json(self) -> dict:
        return {
            "values": list(self.values),
            "voxels": [c.n_voxels for c in self.components],
            "volumes": [c.volume for c in self.components],
            "strict_containment": self.strict_containment,
            "warnings": self.warnings,
        }


def exhaustion_chain(phi: ScalarField3, values, marker, spacing: float = 0.05, perturbation: float = 1e-3):
    """Nested marked components ``L_1 <= L_2 <= ...`` of sublevel sets.

    ``L_{j-1}`` is compactly contained in ``L_j`` when its one-voxel
    dilation lies inside ``L_j``. A value is flagged (``RuntimeWarning``)
    when the component count of ``{phi <= r}`` differs at ``r +- perturbation``,
    a heuristic for a nearby critical value.
    """
    vals = [float(v) for v in values]
    if len(vals) == 0 or any(b <= a for a, b in zip(vals, vals[1:])):
        raise ValueError("values must be strictly increasing")
    cache = _values(phi, spacing)
    comps, strict, notes = [], [], []
    for r in vals:
        comps.append(sublevel_components(phi, r, spacing, marker=marker, _cache=cache))
        nm = len(sublevel_components(phi, r - perturbation, spacing, _cache=cache))
        np_ = len(sublevel_components(phi, r + perturbation, spacing, _cache=cache))
        if nm != np_:
            msg = f"component count changes near r={r} ({nm} -> {np_}); value may be critical"
            notes.append(msg)
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
    st = np.ones((3, 3, 3), dtype=bool)
    for a, b in zip(comps, comps[1:]):
        grown = ndimage.binary_dilation(a.mask, structure=st)
        strict.append(bool(np.all(b.mask[grown])) and b.n_voxels > a.n_voxels)
    return ExhaustionChain(tuple(vals), comps, strict, notes)


def write_nrrd(path, mask: np.ndarray, spacing: float, origin) -> None:
    """Voxel occupancy as an NRRD file (ASCII header, raw uint8 body)."""
    m = np.ascontiguousarray(mask.astype(np.uint8).transpose(2, 1, 0))
    header = (
        "NRRD0004\n"
        "type: uint8\n"
        "dimension: 3\n"
        f"sizes: {mask.shape[0]} {mask.shape[1]} {mask.shape[2]}\n"
        f"space directions: ({spacing},0,0) (0,{spacing},0) (0,0,{spacing})\n"
        f"space origin: ({origin[0]},{origin[1]},{origin[2]})\n"
        "encoding: raw\n"
        "endian: little\n\n"
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(m.tobytes())
