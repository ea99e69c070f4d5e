"""Labyrinths in a boundary collar and the Jorge-Xavier completeness step.

A labyrinth is a family of disjoint annular-sector blocks in the collar
``1 - delta <= |z| <= 1``. A polynomial ``p`` fitted to be large on the blocks
and small on the core ``|z| <= 1 - 2 delta`` is applied through the
Lopez-Ros deformation with ``h = exp(p)``. The third coordinate ``f g`` is
unchanged while the metric density is amplified on the blocks.

Notes
-----
Blocks that span almost a full turn are Runge sets, but polynomial
approximation of a constant on such an arc together with ``0`` on the core
converges extremely slowly (the best sup residual stays near the target
magnitude for all degrees up to several hundred). :func:`runge_fit`
therefore always reports the achieved residuals and
:func:`jorge_xavier_step` accepts ``eps=None`` to run with the achieved
value instead of a prescribed one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .complexgrid import ComplexPolynomial, PlanarDomain, least_squares_polynomial_fit
from .weierstrass import (
    ImmersionField,
    WeierstrassData,
    integrate_triple,
    lopez_ros,
    spanning_tree,
    triple_from_fg,
)

__all__ = [
    "Block",
    "JorgeXavierStep",
    "Labyrinth",
    "RungeError",
    "RungeFit",
    "build_labyrinth",
    "jorge_xavier_step",
    "make_block",
    "radial_block_crossings",
    "runge_fit",
    "runge_large_on_labyrinth",
]


@dataclass(frozen=True)
class Block:
    """Closed annular sector ``r_in <= |z| <= r_out``, ``theta0 <= arg z <= theta1``.

    ``target`` is a unit-scale complex value; fits aim at ``m * target``.
    """

    id: int
    ring: int
    r_in: float
    r_out: float
    theta0: float
    theta1: float
    target: complex = 1.0
    samples: np.ndarray = field(default=None, repr=False, compare=False)

    @property
    def span(self) -> float:
        return self.theta1 - self.theta0

    def polygon(self, n_arc: int = 64) -> np.ndarray:
        th = np.linspace(self.theta0, self.theta1, n_arc)
        return np.r_[self.r_out * np.exp(1j * th), self.r_in * np.exp(1j * th[::-1])]

    def contains(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        r = np.abs(z)
        d = np.mod(np.angle(z) - self.theta0, 2 * np.pi)
        return (r >= self.r_in) & (r <= self.r_out) & (d <= self.span)


def _block_samples(r_in, r_out, theta0, theta1, spacing) -> np.ndarray:
    nr = max(2, math.ceil((r_out - r_in) / spacing) + 1)
    rr = np.linspace(r_in, r_out, nr)
    nt = max(2, math.ceil(r_out * (theta1 - theta0) / spacing) + 1)
    th = np.linspace(theta0, theta1, nt)
    return (rr[:, None] * np.exp(1j * th)[None, :]).ravel()


def make_block(id, ring, r_in, r_out, theta0, theta1, target=1.0, spacing=None) -> Block:
    """Block with samples on a polar grid of the given spacing (default: a third of the thickness)."""
    if not (0 <= r_in < r_out) or not (0 < theta1 - theta0 < 2 * np.pi):
        raise ValueError("invalid block geometry")
    sp = (r_out - r_in) / 3 if spacing is None else spacing
    return Block(int(id), int(ring), float(r_in), float(r_out), float(theta0), float(theta1), complex(target),
                 _block_samples(r_in, r_out, theta0, theta1, sp))


@dataclass
class Labyrinth:
    delta: float
    depth: int
    gap_fraction: float
    blocks: tuple
    core_samples: np.ndarray = field(repr=False)

    @property
    def collar(self) -> tuple:
        return (1.0 - self.delta, 1.0)

    @property
    def core_radius(self) -> float:
        return 1.0 - 2.0 * self.delta

    def subset(self, ids) -> "Labyrinth":
        keep = set(int(i) for i in ids)
        return Labyrinth(self.delta, self.depth, self.gap_fraction,
                         tuple(b for b in self.blocks if b.id in keep), self.core_samples)

    def overlay(self, points) -> np.ndarray:
        """Per point: ``1 + block id`` for points in a block, else 0 (PLY overlay layer)."""
        out = np.zeros(np.shape(points), dtype=float)
        for b in self.blocks:
            out[b.contains(points) & (out == 0)] = b.id + 1
        return out

    def to_json(self, n_arc: int = 64) -> dict:
        return {
            "delta": self.delta,
            "depth": self.depth,
            "gap_fraction": self.gap_fraction,
            "blocks": [
                {
                    "id": b.id,
                    "ring": b.ring,
                    "target": [b.target.real, b.target.imag],
                    "polygon": [[p.real, p.imag] for p in b.polygon(n_arc)],
                }
                for b in self.blocks
            ],
        }


def build_labyrinth(n: int, delta: float, gap_fraction: float = 0.1, *, targets: str = "same",
                    margin: float = 0.2, core_samples: int = 256) -> Labyrinth:
    """Alternating-gap ring labyrinth in the collar ``1 - delta <= |z| <= 1``.

    The collar is cut into ``2n`` rings of thickness ``t = delta / (2n)``; ring
    ``k`` carries one block occupying radii ``[r_k + margin t, r_k + (1 - margin) t]``
    and all angles except a gap of angular width ``2 pi gap_fraction``. Gaps
    are centred at angle 0 on even rings and at angle pi on odd rings.

    Parameters
    ----------
    targets : {"same", "alternating"}
        Unit targets per block: all ``+1``, or ``(-1)**ring``.
    """
    if int(n) != n or n < 1:
        raise ValueError("depth n must be a positive integer")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if not 0 < gap_fraction < 1:
        raise ValueError("gap fraction must lie in (0, 1)")
    if not 0 < margin < 0.5:
        raise ValueError("margin must lie in (0, 1/2)")
    if targets not in ("same", "alternating"):
        raise ValueError("targets must be 'same' or 'alternating'")
    rings = 2 * int(n)
    t = delta / rings
    if (1 - 2 * margin) * t <= 1e-9 or margin * t <= 1e-12:
        raise ValueError("rings too thin: blocks would overlap at floating-point resolution")
    half_gap = math.pi * gap_fraction
    blocks = []
    for k in range(rings):
        r0 = 1.0 - delta + k * t
        centre = 0.0 if k % 2 == 0 else math.pi
        target = 1.0 if targets == "same" else (-1.0) ** k
        blocks.append(make_block(k, k, r0 + margin * t, r0 + (1 - margin) * t,
                                 centre + half_gap, centre + 2 * math.pi - half_gap, target))
    rc = 1.0 - 2.0 * delta
    core = np.r_[0.0, rc * np.exp(2j * np.pi * np.arange(core_samples) / core_samples)] if rc > 0 else np.zeros(1)
    return Labyrinth(float(delta), int(n), float(gap_fraction), tuple(blocks), core.astype(complex))


def radial_block_crossings(lab: Labyrinth, theta: float) -> int:
    """Number of blocks met by the radial segment at angle ``theta`` across the collar."""
    r = np.linspace(lab.collar[0], lab.collar[1], 4 * 64 * max(1, len(lab.blocks)) + 1)
    z = r * np.exp(1j * theta)
    return int(sum(bool(np.any(b.contains(z))) for b in lab.blocks))


# --------------------------------------------------------------------------
# Runge fit


@dataclass(frozen=True)
class RungeFit:
    poly: ComplexPolynomial
    degree: int
    block_residual: float
    core_residual: float
    degrees_tried: tuple = ()

    @property
    def residual(self) -> float:
        return max(self.block_residual, self.core_residual)


class RungeError(RuntimeError):
    """Degree cap reached before the tolerance was met; ``best`` holds the best fit found."""

    def __init__(self, best: RungeFit, eps: float):
        self.best = best
        self.eps = eps
        super().__init__(f"degree cap {best.degrees_tried[-1] if best.degrees_tried else 0} reached: "
                         f"best residual {best.residual:.3e} (degree {best.degree}) >= eps {eps:.3e}")


def _fit_once(lab: Labyrinth, m: float, degree: int) -> RungeFit:
    zb = np.concatenate([b.samples for b in lab.blocks])
    tb = np.concatenate([np.full(b.samples.size, m * b.target) for b in lab.blocks])
    zc = lab.core_samples
    pts = np.r_[zb, zc]
    tgt = np.r_[tb, np.zeros(zc.size)]
    # balance the two sample sets so neither dominates the objective
    w = np.r_[np.full(zb.size, 1.0 / zb.size), np.full(zc.size, 1.0 / zc.size)]
    poly, _ = least_squares_polynomial_fit(pts, tgt, degree, weights=w)
    rb = float(np.abs(poly(zb) - tb).max())
    rc = float(np.abs(poly(zc)).max())
    return RungeFit(poly, degree, rb, rc)


def runge_fit(lab: Labyrinth, m: float, eps: float | None = None, degree_cap: int = 48,
              degree_start: int = 4, degree_step: int = 4) -> RungeFit:
    """Polynomial close to ``m * target`` on every block and to 0 on the core.

    Degrees ``degree_start, degree_start + degree_step, ...`` up to
    ``degree_cap`` are tried; the first fit with residual below ``eps`` is
    returned. With ``eps=None`` every degree is tried and the best fit is
    returned without error.

    Raises
    ------
    RungeError
        If ``eps`` is given and no degree up to the cap meets it.
    """
    if m < 0:
        raise ValueError("magnitude m must be nonnegative")
    if not lab.blocks:
        raise ValueError("labyrinth has no blocks")
    if m == 0:
        return RungeFit(ComplexPolynomial([0.0]), 0, 0.0, 0.0, (0,))
    tried = []
    best = None
    for d in range(degree_start, degree_cap + 1, degree_step):
        fit = _fit_once(lab, m, d)
        tried.append(d)
        if best is None or fit.residual < best.residual:
            best = fit
        if eps is not None and fit.residual < eps:
            return RungeFit(fit.poly, d, fit.block_residual, fit.core_residual, tuple(tried))
    best = RungeFit(best.poly, best.degree, best.block_residual, best.core_residual, tuple(tried))
    if eps is not None:
        raise RungeError(best, eps)
    return best


def runge_large_on_labyrinth(lab: Labyrinth, m: float, eps: float, degree_cap: int = 48) -> ComplexPolynomial:
    """Polynomial ``p`` with ``|p - m c_k| < eps`` on block samples and ``|p| < eps`` on the core."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    return runge_fit(lab, m, eps, degree_cap).poly


# --------------------------------------------------------------------------
# Jorge-Xavier step


@dataclass
class JorgeXavierStep:
    data: WeierstrassData
    fit: RungeFit
    eps: float
    eps_prime: float
    amplification: float
    amplification_threshold: float
    x3_change: float
    before: ImmersionField = field(repr=False)
    after: ImmersionField = field(repr=False)

    @property
    def ok(self) -> bool:
        return self.x3_change < self.eps_prime and self.amplification >= self.amplification_threshold

    def report(self) -> dict:
        return {
            "degree": self.fit.degree,
            "eps": self.eps,
            "block_residual": self.fit.block_residual,
            "core_residual": self.fit.core_residual,
            "eps_prime": self.eps_prime,
            "x3_change": self.x3_change,
            "amplification": self.amplification,
            "amplification_threshold": self.amplification_threshold,
        }


def _lambda(phi: np.ndarray) -> np.ndarray:
    return 0.5 * np.sum(np.abs(phi) ** 2, axis=0)


def _min_lr_factor(a: np.ndarray, b: np.ndarray, g2: np.ndarray) -> np.ndarray:
    """min over x in [a, b] of ((e^x + |g|^2 e^-x) / (1 + |g|^2))^2."""
    # e^x + s e^-x is convex with minimiser x* = log(s)/2
    with np.errstate(divide="ignore"):
        xs = 0.5 * np.log(g2)
    x = np.clip(xs, a, b)
    return ((np.exp(x) + g2 * np.exp(-x)) / (1 + g2)) ** 2


def _tree_path_length(domain: PlanarDomain, base: int) -> float:
    order, parent = spanning_tree(domain, base)
    step = np.abs(domain.vertices - domain.vertices[parent])
    acc = np.zeros(domain.n_vertices)
    for v in order[1:]:
        acc[v] = acc[parent[v]] + step[v]
    return float(acc.max())


def jorge_xavier_step(data: WeierstrassData, domain: PlanarDomain, lab: Labyrinth, m: float,
                      eps: float | None = None, degree_cap: int = 48, base_point: int | None = None,
                      base_value=(0.0, 0.0, 0.0)) -> JorgeXavierStep:
    """One completeness step: ``(f, g) -> (f e^p, g e^-p)`` with ``p`` from :func:`runge_fit`.

    ``eps=None`` uses the best achieved fit residual as the step's ``eps``.
    The reported ``eps_prime = eps * sup|f g| * L`` bounds the change of the
    third coordinate for a relative perturbation ``eps`` of ``f g`` integrated
    along the spanning tree of maximal path length ``L``; Lopez-Ros keeps
    ``f g`` fixed, so the measured change is at rounding level.

    The amplification threshold is the Lopez-Ros lower bound
    ``((|h| + |g|^2/|h|) / (1 + |g|^2))^2`` minimised over
    ``log|h| in [Re(m c_k) - eps, Re(m c_k) + eps]`` at each block sample; for
    ``g = 0`` and positive targets it equals ``exp(2 (m - eps))``.
    """
    if base_point is None:
        base_point = domain.nearest_vertex(0.0)
    fit = runge_fit(lab, m, eps, degree_cap)
    eps_used = fit.residual if eps is None else float(eps)
    poly = fit.poly
    h = lambda z: np.exp(poly(z))  # noqa: E731
    f_new, g_new = lopez_ros(data.f, data.g, h, samples=domain.vertices)
    new = WeierstrassData(f_new, g_new, tag=f"{data.tag}+jx(m={m})")

    before = integrate_triple(triple_from_fg(data, None, domain), base_point, base_value)
    after = integrate_triple(triple_from_fg(new, None, domain), base_point, base_value)
    x3_change = float(np.abs(after.u[2] - before.u[2]).max())
    phi3 = np.abs(before.triple.phi[2])
    eps_prime = eps_used * max(float(phi3.max()), np.finfo(float).tiny) * _tree_path_length(domain, base_point)

    zb = np.concatenate([b.samples for b in lab.blocks])
    tb = np.concatenate([np.full(b.samples.size, m * b.target) for b in lab.blocks])
    ratio = _lambda(new.phi(zb)) / _lambda(data.phi(zb))
    g2 = np.abs(np.broadcast_to(data.g(zb), zb.shape)) ** 2
    thr = _min_lr_factor(tb.real - fit.block_residual, tb.real + fit.block_residual, g2)
    return JorgeXavierStep(
        data=new,
        fit=fit,
        eps=eps_used,
        eps_prime=float(eps_prime),
        amplification=float(ratio.min()),
        # the bound is attained where Re p hits the residual edge; allow rounding
        amplification_threshold=float(thr.min()) * (1 - 1e-12),
        x3_change=x3_change,
        before=before,
        after=after,
    )
