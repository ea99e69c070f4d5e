"""Cantor sets from iterated quad-splitting of convex planar pieces.

A piece is split by removing a vertical strip of width ``gamma * width``
centred on the line that halves its width, then a horizontal strip of
height ``gamma * height`` from each half. Level ``i`` of the tree has
``4**i`` disjoint convex pieces and ``C`` is approximated by the deepest
level built.

Children are numbered 1 (lower left), 2 (lower right), 3 (upper left),
4 (upper right); a piece id is the string of child numbers from the root.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .complexgrid import PlanarDomain, _is_convex, _signed_area, build_domain, circle_polyline, points_in_polygon

__all__ = [
    "CantorTree",
    "ConvexPiece",
    "Membership",
    "build_cantor_tree",
    "complement_domain",
    "membership",
    "quad_split",
    "rectangle",
]


@dataclass(frozen=True)
class ConvexPiece:
    polygon: np.ndarray = field(repr=False)  # complex, counterclockwise
    id: str = ""
    level: int = 0

    def __post_init__(self):
        if len(self.id) != self.level:
            raise ValueError("piece id length must equal its level")

    @property
    def bbox(self) -> tuple:
        p = self.polygon
        return float(p.real.min()), float(p.real.max()), float(p.imag.min()), float(p.imag.max())

    @property
    def area(self) -> float:
        return float(_signed_area(self.polygon))

    @property
    def diameter(self) -> float:
        p = self.polygon
        return float(np.abs(p[:, None] - p[None, :]).max())

    @property
    def centroid(self) -> complex:
        return complex(self.polygon.mean())

    def contains(self, z, strict: bool = False) -> np.ndarray:
        return points_in_polygon(z, self.polygon, strict=strict)


def rectangle(x0: float, x1: float, y0: float, y1: float, id: str = "", level: int = 0) -> ConvexPiece:
    if not (x1 > x0 and y1 > y0):
        raise ValueError("rectangle needs positive width and height")
    poly = np.array([complex(x0, y0), complex(x1, y0), complex(x1, y1), complex(x0, y1)])
    return ConvexPiece(poly, id, level)


def _clip_halfplane(poly: np.ndarray, a: complex, b: complex) -> np.ndarray:
    """Part of the convex polygon left of the directed line a -> b (Sutherland-Hodgman)."""
    d = b - a

    def side(p):
        return (d.conjugate() * (p - a)).imag

    out = []
    n = len(poly)
    for i in range(n):
        p, q = poly[i], poly[(i + 1) % n]
        sp, sq = side(p), side(q)
        if sp >= 0:
            out.append(p)
        if (sp >= 0) != (sq >= 0):
            t = sp / (sp - sq)
            out.append(p + t * (q - p))
    return np.array(out, dtype=complex)


def _is_rect(poly: np.ndarray) -> bool:
    if len(poly) != 4:
        return False
    x0, x1 = poly.real.min(), poly.real.max()
    y0, y1 = poly.imag.min(), poly.imag.max()
    return bool(np.all(np.isin(poly.real, [x0, x1])) and np.all(np.isin(poly.imag, [y0, y1])))


def quad_split(piece: ConvexPiece, gamma: float, inset: float = 0.0):
    """Split ``piece`` into four children and three gap polygons.

    Parameters
    ----------
    gamma : float in (0, 1)
        Gap width as a fraction of the piece width (vertical strip) and of
        each half's height (horizontal strips).
    inset : float in [0, 1/2)
        The piece is shrunk by the factor ``1 - 2 inset`` about its centroid
        before splitting; for rectangles this trims ``inset`` of the width
        and height from each side. ``inset > 0`` makes children lie in the
        open interior of the parent.

    Returns
    -------
    (list of 4 ConvexPiece, list of 3 gap polygons)
        Children ordered lower-left, lower-right, upper-left, upper-right.
    """
    if not 0 < gamma < 1:
        raise ValueError("gamma must lie in (0, 1)")
    if not 0 <= inset < 0.5:
        raise ValueError("inset must lie in [0, 1/2)")
    if piece.area <= 0:
        raise ValueError("piece has no positive area")
    poly = piece.polygon
    if inset > 0:
        # homothety about the centroid keeps a convex piece in the open parent
        c = piece.centroid
        poly = c + (1 - 2 * inset) * (poly - c)
    x0, x1 = poly.real.min(), poly.real.max()
    xm = 0.5 * (x0 + x1)
    gw = gamma * (x1 - x0) / 2
    left = _clip_halfplane(poly, complex(xm - gw, 0), complex(xm - gw, 1))
    right = _clip_halfplane(poly, complex(xm + gw, 1), complex(xm + gw, 0))
    vgap = _clip_halfplane(_clip_halfplane(poly, complex(xm - gw, 1), complex(xm - gw, 0)),
                           complex(xm + gw, 0), complex(xm + gw, 1))
    children, gaps = [None] * 4, [vgap]
    for k, half in enumerate((left, right)):
        ly0, ly1 = half.imag.min(), half.imag.max()
        ym = 0.5 * (ly0 + ly1)
        gh = gamma * (ly1 - ly0) / 2
        lower = _clip_halfplane(half, complex(1, ym - gh), complex(0, ym - gh))
        upper = _clip_halfplane(half, complex(0, ym + gh), complex(1, ym + gh))
        hgap = _clip_halfplane(_clip_halfplane(half, complex(0, ym - gh), complex(1, ym - gh)),
                               complex(1, ym + gh), complex(0, ym + gh))
        children[k] = lower
        children[2 + k] = upper
        gaps.append(hgap)
    out = []
    for k, c in enumerate(children):
        c = _dedupe(c)
        if len(c) < 3 or _signed_area(c) <= 0:
            raise ValueError("split produced an empty piece")
        out.append(ConvexPiece(c, piece.id + str(k + 1), piece.level + 1))
    return out, [_dedupe(g) for g in gaps]


def _dedupe(poly: np.ndarray) -> np.ndarray:
    if len(poly) == 0:
        return poly
    keep = np.abs(poly - np.roll(poly, 1)) > 1e-15 * max(1.0, float(np.abs(poly).max()))
    return poly[keep]


@dataclass
class CantorTree:
    root: ConvexPiece
    levels: list  # levels[i] = list of pieces at depth i + 1
    gamma: float
    depth: int
    inset: float = 0.0
    _rects: list = field(default_factory=list, repr=False)  # per level (n, 4) bboxes when axis-aligned

    def level(self, i: int) -> list:
        """Pieces at depth ``i`` (``level(0) == [root]``)."""
        if i == 0:
            return [self.root]
        return self.levels[i - 1]

    def level_bboxes(self, i: int) -> np.ndarray:
        if i == 0:
            return np.array([self.root.bbox])
        if self._rects and self._rects[i - 1] is not None:
            return self._rects[i - 1]
        return np.array([p.bbox for p in self.levels[i - 1]])

    def pairwise_overlaps(self, i: int) -> int:
        """Number of overlapping closed-bbox pairs at level ``i`` (0 means pairwise disjoint)."""
        b = np.ascontiguousarray(self.level_bboxes(i))
        return int(_kernels.rect_overlap_count(b[:, 0].copy(), b[:, 1].copy(), b[:, 2].copy(), b[:, 3].copy()).sum())

    def max_diameter(self, i: int) -> float:
        b = self.level_bboxes(i)
        if self.root_is_rect:
            return float(np.hypot(b[:, 1] - b[:, 0], b[:, 3] - b[:, 2]).max())
        return max(p.diameter for p in self.level(i))

    @property
    def root_is_rect(self) -> bool:
        return _is_rect(self.root.polygon)

    def to_json(self, max_level: int | None = None) -> dict:
        top = self.depth if max_level is None else min(self.depth, max_level)
        return {
            "gamma": self.gamma,
            "depth": self.depth,
            "inset": self.inset,
            "root": [[p.real, p.imag] for p in self.root.polygon],
            "levels": [
                [{"id": p.id, "polygon": [[q.real, q.imag] for q in p.polygon]} for p in self.level(i)]
                for i in range(1, top + 1)
            ],
        }

    def to_svg(self, level: int, size: int = 512) -> str:
        x0, x1, y0, y1 = self.root.bbox
        s = size / max(x1 - x0, y1 - y0)

        def pts(poly):
            return " ".join(f"{(p.real - x0) * s:.3f},{(y1 - p.imag) * s:.3f}" for p in poly)

        parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}">',
                 f'<polygon points="{pts(self.root.polygon)}" fill="none" stroke="black"/>']
        parts += [f'<polygon points="{pts(p.polygon)}" fill="black"/>' for p in self.level(level)]
        parts.append("</svg>")
        return "\n".join(parts)


def _split_rect_level(b: np.ndarray, gamma: float, inset: float) -> np.ndarray:
    """Vectorised quad split of axis-aligned boxes (n, 4) -> (4n, 4), children interleaved per parent."""
    x0, x1, y0, y1 = b.T
    w, h = x1 - x0, y1 - y0
    x0, x1, y0, y1 = x0 + inset * w, x1 - inset * w, y0 + inset * h, y1 - inset * h
    xm, gw = 0.5 * (x0 + x1), gamma * (x1 - x0) / 2
    ym, gh = 0.5 * (y0 + y1), gamma * (y1 - y0) / 2
    lo = np.stack([x0, xm - gw, y0, ym - gh], axis=1)
    ro = np.stack([xm + gw, x1, y0, ym - gh], axis=1)
    lu = np.stack([x0, xm - gw, ym + gh, y1], axis=1)
    ru = np.stack([xm + gw, x1, ym + gh, y1], axis=1)
    return np.stack([lo, ro, lu, ru], axis=1).reshape(-1, 4)


class _LazyRectLevel(list):
    """Rectangle pieces of one level, materialised on first access."""

    def __init__(self, boxes: np.ndarray, ids: np.ndarray, level: int):
        super().__init__()
        self._boxes, self._ids, self._level, self._built = boxes, ids, level, False

    def _build(self):
        if not self._built:
            self._built = True
            super().extend(rectangle(*bx, id=str(i), level=self._level) for bx, i in zip(self._boxes, self._ids))

    def __len__(self):
        return len(self._boxes)

    def __iter__(self):
        self._build()
        return super().__iter__()

    def __getitem__(self, k):
        self._build()
        return super().__getitem__(k)


def build_cantor_tree(root: ConvexPiece, gamma: float, depth: int, inset: float = 0.02) -> CantorTree:
    """Nested levels 1..depth of quad splits.

    Rectangle roots are split level-wise in vectorised form and pieces are
    created lazily; other convex roots are split piece by piece.
    """
    if int(depth) != depth or depth < 1:
        raise ValueError("depth must be >= 1")
    if not 0 < gamma < 1:
        raise ValueError("gamma must lie in (0, 1)")
    if not _is_convex(root.polygon):
        raise ValueError("root must be convex")
    levels, rects = [], []
    if _is_rect(root.polygon):
        boxes = np.array([root.bbox])
        ids = np.array([""], dtype=object)
        for i in range(1, depth + 1):
            boxes = _split_rect_level(boxes, gamma, inset)
            ids = (np.repeat(ids, 4) + np.tile(np.array(["1", "2", "3", "4"], dtype=object), len(ids)))
            if np.any(boxes[:, 1] <= boxes[:, 0]) or np.any(boxes[:, 3] <= boxes[:, 2]):
                raise ValueError("split produced an empty piece")
            rects.append(boxes)
            levels.append(_LazyRectLevel(boxes, ids, i))
    else:
        cur = [root]
        for _ in range(depth):
            nxt = []
            for p in cur:
                nxt.extend(quad_split(p, gamma, inset)[0])
            levels.append(nxt)
            rects.append(None)
            cur = nxt
    return CantorTree(root=root, levels=levels, gamma=float(gamma), depth=int(depth), inset=float(inset), _rects=rects)


@dataclass(frozen=True)
class Membership:
    level: int  # deepest level whose piece contains the point
    piece_id: str | None
    escaped: bool  # True if the point left the tree above the built depth

    def describe(self) -> str:
        if self.escaped:
            return f"escaped at level {self.level + 1} via gap" if self.level >= 0 else "outside root"
        return f"contained through level {self.level} in piece {self.piece_id}"


def membership(point: complex, tree: CantorTree) -> Membership:
    """Descend the tree from the root through closed pieces containing ``point``.

    A point outside the root reports ``level=-1`` (escaped at level 0); a
    point that lies in a gap at level ``k`` reports ``level=k-1`` and
    ``escaped=True`` (it belongs to ``K_k``).
    """
    z = complex(point)
    if not bool(tree.root.contains(np.array([z]))[0]):
        return Membership(-1, None, True)
    pid = ""
    for i in range(1, tree.depth + 1):
        found = None
        for k in "1234":
            cand = pid + k
            piece = _piece_by_id(tree, cand)
            if bool(piece.contains(np.array([z]))[0]):
                found = cand
                break
        if found is None:
            return Membership(i - 1, pid, True)
        pid = found
    return Membership(tree.depth, pid, False)


def _piece_by_id(tree: CantorTree, pid: str) -> ConvexPiece:
    idx = 0
    for ch in pid:
        idx = 4 * idx + (int(ch) - 1)
    return tree.levels[len(pid) - 1][idx]


def complement_domain(tree: CantorTree, j: int, outer=None, h: float = 0.05) -> PlanarDomain:
    """Mesh of ``K_j``: the outer region minus the open level-``j`` pieces.

    ``outer`` defaults to a circle of radius 1.5 times the root's
    circumradius about its centroid; it must contain the root strictly.
    """
    if not 0 <= j <= tree.depth:
        raise ValueError(f"level j={j} outside 0..{tree.depth}")
    if outer is None:
        c = tree.root.centroid
        R = float(np.abs(tree.root.polygon - c).max())
        outer = circle_polyline(1.5 * R, 0.8 * h, c)
    outer = np.asarray(outer, dtype=complex)
    if not np.all(points_in_polygon(tree.root.polygon, outer, strict=True)):
        raise ValueError("outer boundary must strictly contain the root")
    holes = [p.polygon for p in tree.level(j)]
    return build_domain(outer, holes, h)
