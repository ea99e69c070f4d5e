"""Approximate Riemann-Hilbert problem on the disc and condition verifiers.

The disc solver uses the ansatz ``F(z) = f(z) + sum_k a_k(z) z^(kN)`` for
polynomial fibers ``g(z, xi) = f(z) + sum_k a_k(z) xi^k``: on ``|z| = 1``
``F(z) = g(z, z^N)`` lies on the fiber boundary, while ``z^(kN)`` is small on
a slightly smaller disc ``r' D``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .complexgrid import ComplexPolynomial, PathInDomain
from .convexity import ScalarField3
from .metric import build_metric_graph, intrinsic_distance
from .weierstrass import ImmersionField, flux

__all__ = [
    "FiberDiscFamily",
    "LemmaCertificate",
    "RHCertificate",
    "RHResult",
    "TheoremRHCertificate",
    "rh_candidate",
    "rh_solve_disc",
    "rh_verify",
    "verify_lemma_conditions",
    "verify_theorem_rh",
]


def _poly(p) -> ComplexPolynomial:
    if isinstance(p, ComplexPolynomial):
        return p
    if np.isscalar(p):
        return ComplexPolynomial([p])
    return ComplexPolynomial(p)


@dataclass(frozen=True)
class FiberDiscFamily:
    """``g(z, xi) = f(z) + sum_{k=1}^K a_k(z) xi^k`` with polynomial ``f`` and ``a_k``."""

    center: ComplexPolynomial
    coefficients: tuple  # a_1, ..., a_K

    @classmethod
    def make(cls, center, coefficients) -> "FiberDiscFamily":
        return cls(_poly(center), tuple(_poly(a) for a in coefficients))

    @property
    def K(self) -> int:
        return len(self.coefficients)

    @property
    def is_linear(self) -> bool:
        return self.K <= 1

    def __call__(self, z, xi):
        z = np.asarray(z, dtype=complex)
        xi = np.asarray(xi, dtype=complex)
        out = self.center(z) + 0 * xi
        xk = np.ones_like(out)
        for a in self.coefficients:
            xk = xk * xi
            out = out + a(z) * xk
        return out

    def coefficient_bound(self, n: int = 1024) -> float:
        """max_k max_{|z|=1} |a_k(z)| (equals the max over the closed disc)."""
        if not self.coefficients:
            return 0.0
        z = np.exp(2j * np.pi * np.arange(n) / n)
        return float(max(np.abs(a(z)).max() for a in self.coefficients))

    def to_json(self) -> dict:
        return {"center": self.center.to_json(), "coefficients": [a.to_json() for a in self.coefficients]}

    @classmethod
    def from_json(cls, obj: dict) -> "FiberDiscFamily":
        return cls(ComplexPolynomial.from_json(obj["center"]),
                   tuple(ComplexPolynomial.from_json(a) for a in obj["coefficients"]))


@dataclass(frozen=True)
class RHCertificate:
    r_prime: float
    center_closeness: float
    boundary_proximity: float
    annulus_proximity: float
    eps: float
    center_ok: bool
    boundary_ok: bool
    annulus_ok: bool
    n_boundary: int
    n_radii: int
    n_fiber: int

    @property
    def passed(self) -> bool:
        return self.center_ok and self.boundary_ok and self.annulus_ok

    def to_json(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d


@dataclass(frozen=True)
class RHResult:
    F: ComplexPolynomial
    r_prime: float
    N: int
    certificate: RHCertificate
    attempts: tuple = ()


def _fiber_samples(n_fiber: int, disc: bool) -> np.ndarray:
    th = np.exp(2j * np.pi * np.arange(n_fiber) / n_fiber)
    if not disc:
        return th
    rings = np.linspace(0.0, 1.0, 17)[1:]
    return np.r_[0.0, (rings[:, None] * th[None, :]).ravel()]


def _dist_to_fiber(w: np.ndarray, z: np.ndarray, family: FiberDiscFamily, disc: bool, n_fiber: int) -> np.ndarray:
    """Distance from ``w[i]`` to ``g(z[i], bD)`` (or ``g(z[i], closed D)``)."""
    c = family.center(z)
    if family.K == 0:
        return np.abs(w - c)
    if family.is_linear:
        rad = np.abs(family.coefficients[0](z))
        d = np.abs(w - c) - rad
        return np.maximum(d, 0.0) if disc else np.abs(d)
    xi = _fiber_samples(n_fiber, disc)
    out = np.empty(w.shape, dtype=float)
    for s in range(0, w.size, 256):
        sl = slice(s, s + 256)
        G = family(z[sl, None], xi[None, :])
        out[sl] = np.abs(G - w[sl, None]).min(axis=1)
    return out


def rh_verify(F, f, family: FiberDiscFamily, r_prime: float, eps: float, n_boundary: int = 256,
              n_radii: int = 32, n_fiber: int = 256) -> RHCertificate:
    """Measure the three classical bullets on polar grids.

    * ``center_closeness``: sup of ``|F - f|`` on ``r' D`` (``n_radii`` radii in ``[0, r']``);
    * ``boundary_proximity``: sup over ``|z| = 1`` of ``dist(F(z), g(z, bD))``;
    * ``annulus_proximity``: sup over ``|z| = 1``, ``rho in [r', 1]`` of ``dist(F(rho z), g(z, closed D))``.

    Linear fibers use the exact circle/disc distance; higher-degree fibers
    are sampled at ``n_fiber`` points per circle.
    """
    if n_boundary < 64 or n_radii < 16:
        raise ValueError("grids need >= 64 boundary points and >= 16 radii")
    F, f = _poly(F), _poly(f)
    z = np.exp(2j * np.pi * np.arange(n_boundary) / n_boundary)
    radii = np.linspace(0.0, r_prime, n_radii)
    inner = (radii[:, None] * z[None, :]).ravel()
    cc = float(np.abs(F(inner) - f(inner)).max())
    bp = float(_dist_to_fiber(F(z), z, family, False, n_fiber).max())
    rho = np.linspace(r_prime, 1.0, n_radii)
    zz = np.broadcast_to(z[None, :], (n_radii, n_boundary)).ravel()
    w = F((rho[:, None] * z[None, :]).ravel())
    ap = float(_dist_to_fiber(w, zz, family, True, n_fiber).max())
    return RHCertificate(float(r_prime), cc, bp, ap, float(eps), cc < eps, bp < eps, ap < eps,
                         n_boundary, n_radii, n_fiber)


def rh_candidate(f, family: FiberDiscFamily, N: int) -> ComplexPolynomial:
    """``F = f + sum_k a_k(z) z^(kN)``."""
    F = _poly(f)
    for k, a in enumerate(family.coefficients, start=1):
        shift = np.zeros(k * N + 1, dtype=complex)
        shift[-1] = 1.0
        F = F + a * ComplexPolynomial(shift)
    return F


def rh_solve_disc(f, family: FiberDiscFamily, r: float, eps: float, c: float | None = None,
                  N_max: int = 256, n_boundary: int = 256, n_radii: int = 32, n_fiber: int = 256) -> RHResult:
    """Smallest ``N = 1, 2, ...`` whose candidate passes :func:`rh_verify`.

    ``r' = max(r, 1 - c/N)`` with default ``c = log(2 K A / eps)`` (``A`` the
    largest ``|a_k|`` on the disc), which makes ``K A (1 - c/N)^N <= eps/2``.
    Degenerate fibers (all ``a_k = 0``) give ``F = f`` with
    ``r' = max(r, 1 - eps / (2 max|f'|))`` so that ``|f(rho z) - f(z)| < eps/2``.

    Raises
    ------
    RuntimeError
        If no ``N <= N_max`` passes; the exception carries ``best`` (an RHResult).
    """
    if not 0 < r < 1:
        raise ValueError("r must lie in (0, 1)")
    if eps <= 0:
        raise ValueError("eps must be positive")
    f = _poly(f)
    A = family.coefficient_bound()
    K = family.K
    if c is None:
        c = math.log(2 * K * A / eps) if K and A > 0 else 0.0
    attempts = []
    best = None
    if K == 0 or A == 0:
        # degenerate fibers: F = f and only the annulus bullet constrains r'
        z = np.exp(2j * np.pi * np.arange(1024) / 1024)
        lip = float(np.abs(f.derivative()(z)).max())
        rp = max(r, 1 - eps / (2 * lip)) if lip > 0 else r
        cert = rh_verify(f, f, family, rp, eps, n_boundary, n_radii, n_fiber)
        return RHResult(f, rp, 1, cert, ((1, rp, cert.passed),))
    for N in range(1, N_max + 1):
        rp = max(r, 1 - c / N) if c > 0 else r
        F = rh_candidate(f, family, N)
        cert = rh_verify(F, f, family, rp, eps, n_boundary, n_radii, n_fiber)
        attempts.append((N, rp, cert.passed))
        res = RHResult(F, rp, N, cert, tuple(attempts))
        if cert.passed:
            return res
        score = max(cert.center_closeness, cert.boundary_proximity, cert.annulus_proximity)
        if best is None or score < best[0]:
            best = (score, res)
    err = RuntimeError(f"no N <= {N_max} passed the certificate")
    err.best = best[1]
    raise err


# --------------------------------------------------------------------------
# Riemann-Hilbert verifier for minimal surfaces (five bullets)


@dataclass(frozen=True)
class TheoremRHCertificate:
    closeness_off_omega: bool
    boundary_proximity: bool
    collar_proximity: bool
    jet_interpolation: bool
    flux_preserved: bool
    measured: dict
    retraction: str = "nearest_boundary_vertex"

    @property
    def passed(self) -> bool:
        return (self.closeness_off_omega and self.boundary_proximity and self.collar_proximity
                and self.jet_interpolation and self.flux_preserved)

    def to_json(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d


def _same_mesh(u: ImmersionField, v: ImmersionField):
    if u.domain is not v.domain and not (
        u.domain.n_vertices == v.domain.n_vertices and np.array_equal(u.domain.vertices, v.domain.vertices)
    ):
        raise ValueError("immersions live on different meshes")


def _set_distance(points: np.ndarray, sets: np.ndarray) -> np.ndarray:
    """points (n, 3), sets (n, m, 3) -> min_j |points_i - sets_ij|."""
    return np.linalg.norm(sets - points[:, None, :], axis=2).min(axis=1)


def jet_residual(domain, diff: np.ndarray, vertex: int, order: int, radius: float | None = None) -> float:
    """Largest Taylor coefficient (orders 0..d) of a local polynomial fit of ``diff`` at ``vertex``.

    ``diff`` is a (3, n) field. Fits use total degree ``order + 1`` in the
    local coordinates over vertices within ``radius`` (default: 4 edge
    lengths, enlarged until the system is determined).
    """
    z = domain.vertices
    z0 = z[vertex]
    h = domain.max_edge_length()
    rad = 4 * h if radius is None else radius
    deg = order + 1
    ncols = (deg + 1) * (deg + 2) // 2
    while True:
        ids = np.flatnonzero(np.abs(z - z0) <= rad)
        if ids.size >= 2 * ncols or rad > 1e3 * h:
            break
        rad *= 1.5
    x = (z[ids] - z0).real / rad
    y = (z[ids] - z0).imag / rad
    cols, scale = [], []
    for tot in range(deg + 1):
        for i in range(tot + 1):
            cols.append(x ** (tot - i) * y**i)
            scale.append((tot, rad**tot))
    V = np.stack(cols, axis=1)
    coef, *_ = np.linalg.lstsq(V, diff[:, ids].T, rcond=None)
    keep = [k for k, (tot, _) in enumerate(scale) if tot <= order]
    s = np.array([scale[k][1] for k in keep])
    return float(np.abs(coef[keep] / s[:, None]).max()) if keep else 0.0


def verify_theorem_rh(u: ImmersionField, u_tilde: ImmersionField, r_support, alpha: Callable, omega, eps: float,
                      Lambda=(), d: int = 0, flux_loops=(), flux_tol: float = 1e-8, jet_tol: float | None = None,
                      boundary_component: int | None = None, n_fiber: int = 64) -> TheoremRHCertificate:
    """Check the five bullets of the Riemann-Hilbert theorem for minimal surfaces on a mesh.

    Parameters
    ----------
    r_support : array (n_vertices,)
        Values of ``r`` in [0, 1]; only boundary entries are used.
    alpha : callable
        ``alpha(ids, xi) -> (3, len(ids), len(xi))``: the fiber immersions at
        boundary vertices ``ids``, with ``alpha(ids, 0) = 0``.
    omega : vertex index array
        The neighbourhood Omega (taken as input, not discovered).
    flux_loops : sequence of PathInDomain
        One closed loop per hole; both immersions need attached triples.

    The retraction of Omega onto bM maps a vertex to its nearest boundary
    vertex.
    """
    _same_mesh(u, u_tilde)
    dom = u.domain
    n = dom.n_vertices
    omega = np.asarray(omega, dtype=np.int64)
    r_support = np.asarray(r_support, dtype=float)
    n_holes = sum(1 for c in np.unique(dom.boundary_markers) if c >= 2)
    if len(flux_loops) < n_holes:
        raise ValueError(f"need one flux loop per hole ({n_holes}), got {len(flux_loops)}")
    if boundary_component is None:
        bd = np.flatnonzero(dom.boundary_markers > 0)
    else:
        bd = dom.boundary_vertices(boundary_component)
    U, Ut = u.u.T, u_tilde.u.T
    diff = np.linalg.norm(Ut - U, axis=1)
    off = np.ones(n, dtype=bool)
    off[omega] = False
    m1 = float(diff[off].max()) if off.any() else 0.0

    xi_b = np.exp(2j * np.pi * np.arange(n_fiber) / n_fiber)
    chi_b = U[bd][:, None, :] + np.moveaxis(alpha(bd, r_support[bd][:, None] * xi_b[None, :]), 0, -1)
    m2 = float(_set_distance(Ut[bd], chi_b).max()) if bd.size else 0.0

    if omega.size:
        bz = dom.vertices[bd]
        nearest = bd[np.argmin(np.abs(dom.vertices[omega][:, None] - bz[None, :]), axis=1)]
        xi_d = _fiber_samples(n_fiber, disc=True)
        chi_d = U[nearest][:, None, :] + np.moveaxis(alpha(nearest, r_support[nearest][:, None] * xi_d[None, :]), 0, -1)
        m3 = float(_set_distance(Ut[omega], chi_d).max())
    else:
        m3 = 0.0

    jt = eps if jet_tol is None else jet_tol
    dfield = u_tilde.u - u.u
    m4 = max((jet_residual(dom, dfield, int(p), d) for p in Lambda), default=0.0)

    m5 = 0.0
    for loop in flux_loops:
        if u.triple is None or u_tilde.triple is None:
            raise ValueError("flux check needs immersions with attached triples")
        m5 = max(m5, float(np.abs(flux(u_tilde.triple, loop).value - flux(u.triple, loop).value).max()))

    return TheoremRHCertificate(
        closeness_off_omega=m1 < eps,
        boundary_proximity=m2 < eps,
        collar_proximity=m3 < eps,
        jet_interpolation=m4 <= jt,
        flux_preserved=m5 <= flux_tol,
        measured={"closeness": m1, "boundary_distance": m2, "collar_distance": m3, "jet_residual": m4,
                  "flux_difference": m5, "eps": eps, "jet_tol": jt, "flux_tol": flux_tol, "order": d},
    )


# --------------------------------------------------------------------------
# boundary-band lemma verifier


@dataclass(frozen=True)
class LemmaCertificate:
    boundary_band: bool
    no_deep_drop: bool
    closeness_on_K: bool
    intrinsic_radius: bool
    interpolation: bool
    measured: dict

    @property
    def passed(self) -> bool:
        return self.boundary_band and self.no_deep_drop and self.closeness_on_K and self.intrinsic_radius and self.interpolation

    def to_json(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d


def verify_lemma_conditions(u: ImmersionField, u_tilde: ImmersionField, phi: ScalarField3, a_prime: float, b: float,
                            delta: float, eps: float, mu: float, K_vertices, Lambda, p0: int, graph=None,
                            interp_tol: float = 0.0) -> LemmaCertificate:
    """Five bullets: ``a' < phi(u~) < b`` on bM; ``phi(u~) > phi(u) - delta``;
    ``|u~ - u| < eps`` on K; ``dist_u~(p0, bM) > mu``; ``u~ = u`` on Lambda."""
    _same_mesh(u, u_tilde)
    dom = u.domain
    bd = np.flatnonzero(dom.boundary_markers > 0)
    pu = phi(u.u.T)
    pt = phi(u_tilde.u.T)
    band_lo = float(pt[bd].min())
    band_hi = float(pt[bd].max())
    drop = float((pu - pt).max())
    K = np.asarray(K_vertices, dtype=np.int64)
    close = float(np.linalg.norm(u_tilde.u[:, K] - u.u[:, K], axis=0).max()) if K.size else 0.0
    g = build_metric_graph(u_tilde) if graph is None else graph
    dist = intrinsic_distance(g, int(p0), bd)
    L = np.asarray(Lambda, dtype=np.int64)
    interp = float(np.abs(u_tilde.u[:, L] - u.u[:, L]).max()) if L.size else 0.0
    return LemmaCertificate(
        boundary_band=(a_prime < band_lo) and (band_hi < b),
        no_deep_drop=drop < delta,
        closeness_on_K=close < eps,
        intrinsic_radius=dist > mu,
        interpolation=interp <= interp_tol,
        measured={"phi_boundary_min": band_lo, "phi_boundary_max": band_hi, "max_phi_drop": drop,
                  "closeness_on_K": close, "intrinsic_distance": dist, "interpolation_error": interp,
                  "a_prime": a_prime, "b": b, "delta": delta, "eps": eps, "mu": mu},
    )
