"""Nadirashvili's schedule (r_j, rho_j, eps_j) and per-step certificates.

The recurrences are

    r_j = sqrt(r_{j-1}^2 + 1/j^2),   rho_j = rho_{j-1} + 1/j,   eps_j = eps_{j-1} / 2

so that r_j increases to ``r_inf = sqrt(r_1^2 + pi^2/6 - 1)`` while rho_j
diverges like log j. The construction of the immersions u_j is not
implemented here; candidate pairs produced elsewhere are only verified.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import _kernels
from .metric import build_metric_graph, intrinsic_distance
from .weierstrass import ImmersionField

__all__ = [
    "Schedule",
    "StepCertificate",
    "make_schedule",
    "pythagoras_check",
    "verify_step",
]


@dataclass(frozen=True)
class Schedule:
    """Sequences indexed from j = 1 (stored at position j - 1).

    ``eps`` underflows to 0.0 after about 1075 halvings; ``eps_exponent``
    keeps the exact value as ``eps_mantissa * 2**(-eps_exponent)``.
    """

    r: np.ndarray
    rho: np.ndarray
    eps: np.ndarray
    eps_mantissa: float
    r_inf: float

    @property
    def J(self) -> int:
        return int(self.r.size)

    @property
    def eps_exponent(self) -> np.ndarray:
        return np.arange(self.J)

    def at(self, j: int) -> tuple:
        """(r_j, rho_j, eps_j) for 1-based ``j``."""
        if not 1 <= j <= self.J:
            raise IndexError(f"j={j} outside 1..{self.J}")
        return float(self.r[j - 1]), float(self.rho[j - 1]), float(self.eps[j - 1])

    def to_json(self, limit: int | None = 1000) -> dict:
        k = self.J if limit is None else min(self.J, limit)
        return {
            "J": self.J,
            "r": self.r[:k].tolist(),
            "rho": self.rho[:k].tolist(),
            "eps": self.eps[:k].tolist(),
            "eps_mantissa": self.eps_mantissa,
            "r_inf": self.r_inf,
            "truncated": k < self.J,
        }


def make_schedule(r1: float, rho1: float, eps1: float, J: int) -> Schedule:
    """Generate the first ``J`` terms of the schedule.

    Examples
    --------
    >>> s = make_schedule(1.0, 1.0, 0.1, 2)
    >>> round(float(s.r[1]), 9)
    1.118033989
    """
    if not (r1 > 0 and rho1 > 0 and eps1 > 0):
        raise ValueError("r1, rho1, eps1 must be positive")
    if int(J) != J or J < 1:
        raise ValueError("J must be a positive integer")
    J = int(J)
    r = _kernels.radius_recurrence(float(r1), J)
    inc = np.empty(J)
    inc[0] = rho1
    inc[1:] = 1.0 / np.arange(2, J + 1)
    rho = np.cumsum(inc)
    eps = np.ldexp(float(eps1), -np.arange(J))
    r_inf = math.sqrt(r1 * r1 + math.pi**2 / 6 - 1)
    return Schedule(r=r, rho=rho, eps=eps, eps_mantissa=float(eps1), r_inf=r_inf)


@dataclass(frozen=True)
class StepCertificate:
    base_point_zero: bool
    closeness_on_shrunk_disc: bool
    range_in_ball: bool
    intrinsic_radius_exceeds: bool
    max_center_offset: float
    max_closeness_violation: float
    max_norm: float
    measured_intrinsic_radius: float
    tolerances: dict

    @property
    def passed(self) -> bool:
        return self.base_point_zero and self.closeness_on_shrunk_disc and self.range_in_ball and self.intrinsic_radius_exceeds

    def to_json(self) -> dict:
        return asdict(self)


def verify_step(u_prev: ImmersionField, u_next: ImmersionField, j: int, schedule: Schedule,
                center_tol: float = 1e-12, graph_mode: str = "embedded_edges") -> StepCertificate:
    """Check Nadirashvili's conditions for the pair (u_{j-1}, u_j) on a disc mesh.

    * ``u_j(0) = 0`` within ``center_tol`` (vertex nearest the origin);
    * ``|u_j - u_{j-1}| < eps_j`` at vertices with ``|z| <= 1 - eps_j``;
    * ``|u_j| <= r_j`` at every vertex;
    * graph distance from the centre vertex to the boundary exceeds ``rho_j``.

    ``max_closeness_violation`` is the largest sampled ``|u_j - u_{j-1}|``.
    """
    dom = u_next.domain
    if u_prev.domain is not dom and (
        u_prev.domain.n_vertices != dom.n_vertices or not np.array_equal(u_prev.domain.vertices, dom.vertices)
    ):
        raise ValueError("u_prev and u_next live on different meshes")
    r_j, rho_j, eps_j = schedule.at(j)
    c = dom.nearest_vertex(0.0)
    offset = float(np.linalg.norm(u_next.u[:, c]))
    shrunk = np.abs(dom.vertices) <= 1 - eps_j
    diff = np.linalg.norm(u_next.u - u_prev.u, axis=0)
    closeness = float(diff[shrunk].max()) if np.any(shrunk) else 0.0
    max_norm = float(np.linalg.norm(u_next.u, axis=0).max())
    radius = intrinsic_distance(build_metric_graph(u_next, graph_mode), c, 1)
    return StepCertificate(
        base_point_zero=offset <= center_tol,
        closeness_on_shrunk_disc=closeness < eps_j,
        range_in_ball=max_norm <= r_j,
        intrinsic_radius_exceeds=radius > rho_j,
        max_center_offset=offset,
        max_closeness_violation=closeness,
        max_norm=max_norm,
        measured_intrinsic_radius=radius,
        tolerances={"center_tol": center_tol, "eps_j": eps_j, "r_j": r_j, "rho_j": rho_j},
    )


def pythagoras_check(points, r: float, s: float, tol: float = 0.0) -> tuple:
    """(max|x| <= sqrt(r^2 + s^2) + tol, max|x|)."""
    if r < 0 or s < 0:
        raise ValueError("r and s must be nonnegative")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    max_norm = float(np.linalg.norm(pts, axis=1).max()) if pts.size else 0.0
    return max_norm <= math.hypot(r, s) + tol, max_norm
