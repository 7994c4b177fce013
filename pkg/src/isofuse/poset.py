"""Design points and the componentwise partial order.

A design poset collects the distinct covariate combinations and the
monotonicity constraints between them: an edge (i, j) requires
value_i <= value_j. Edges are stored as a transitive reduction; the order
itself is defined by componentwise dominance of the coordinates, so
reachability along edges always equals dominance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionMismatch, DuplicateDesignPoint


@dataclass(frozen=True, order=True)
class DesignPoint:
    """A point in covariate space (coordinates in application units)."""

    coords: tuple[float, ...]

    def __post_init__(self) -> None:
        coords = tuple(float(c) for c in self.coords)
        if len(coords) == 0:
            raise DimensionMismatch("a design point needs at least one coordinate")
        if not all(math.isfinite(c) for c in coords):
            raise ValueError(f"non-finite coordinates: {coords}")
        object.__setattr__(self, "coords", coords)

    @property
    def dim(self) -> int:
        return len(self.coords)

    def dominated_by(self, other: "DesignPoint") -> bool:
        """Componentwise self <= other."""
        return all(a <= b for a, b in zip(self.coords, other.coords))


def as_point(value) -> DesignPoint:
    """Coerce a scalar, sequence, or DesignPoint to a DesignPoint."""
    if isinstance(value, DesignPoint):
        return value
    if np.isscalar(value):
        return DesignPoint((float(value),))
    return DesignPoint(tuple(float(c) for c in value))


@dataclass(frozen=True)
class DesignPoset:
    """Distinct design points plus monotonicity edges (transitive reduction).

    ``edges`` lists pairs (i, j) meaning value_i <= value_j is required.
    Reachability through the edges equals componentwise dominance of the
    points, which is what consumers rely on; the reduction is a storage
    choice.
    """

    points: tuple[DesignPoint, ...]
    edges: tuple[tuple[int, int], ...]
    _index: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self) -> None:
        idx = {p.coords: i for i, p in enumerate(self.points)}
        object.__setattr__(self, "_index", idx)

    @property
    def n(self) -> int:
        return len(self.points)

    @property
    def dim(self) -> int:
        return self.points[0].dim if self.points else 0

    def index_of(self, point) -> int:
        """Index of an exact design point; KeyError when absent."""
        return self._index[as_point(point).coords]

    def __contains__(self, point) -> bool:
        try:
            return as_point(point).coords in self._index
        except (DimensionMismatch, ValueError, TypeError):
            return False

    def dominates(self, i: int, j: int) -> bool:
        """True when points[i] <= points[j] componentwise and i != j."""
        return i != j and self.points[i].dominated_by(self.points[j])

    def dominance_matrix(self) -> np.ndarray:
        """Boolean (n, n) strict-dominance matrix; [i, j] True iff i < j."""
        coords = np.asarray([p.coords for p in self.points])
        le = np.ones((self.n, self.n), dtype=bool)
        for d in range(coords.shape[1]):
            col = coords[:, d]
            le &= col[:, None] <= col[None, :]
        np.fill_diagonal(le, False)
        return le

    def is_chain(self) -> bool:
        """True when the points are totally ordered."""
        dom = self.dominance_matrix()
        return bool(np.all(dom | dom.T | np.eye(self.n, dtype=bool)))

    def chain_order(self) -> np.ndarray:
        """Indices sorted in increasing order along a chain poset."""
        coords = np.asarray([p.coords for p in self.points])
        return np.lexsort(coords.T[::-1])


def build_poset(points: Iterable) -> DesignPoset:
    """Construct the dominance poset over distinct design points.

    Edges are the transitive reduction of strict componentwise dominance;
    1-D inputs produce consecutive chain edges directly.

    Raises
    ------
    DuplicateDesignPoint
        when two points share coordinates.
    DimensionMismatch
        when points have differing dimensions.
    """
    pts = tuple(as_point(p) for p in points)
    if not pts:
        return DesignPoset(points=(), edges=())
    m = pts[0].dim
    for p in pts:
        if p.dim != m:
            raise DimensionMismatch(
                f"point {p.coords} has dimension {p.dim}, expected {m}"
            )
    seen: dict[tuple, int] = {}
    for i, p in enumerate(pts):
        if p.coords in seen:
            raise DuplicateDesignPoint(
                f"points {seen[p.coords]} and {i} share coordinates {p.coords}"
            )
        seen[p.coords] = i

    if m == 1:
        order = sorted(range(len(pts)), key=lambda i: pts[i].coords[0])
        edges = tuple(
            (order[a], order[a + 1]) for a in range(len(order) - 1)
        )
        return DesignPoset(points=pts, edges=edges)

    coords = np.asarray([p.coords for p in pts])
    n = len(pts)
    le = np.ones((n, n), dtype=bool)
    for d in range(m):
        col = coords[:, d]
        le &= col[:, None] <= col[None, :]
    np.fill_diagonal(le, False)
    # dominance is already transitively closed; the reduction removes any
    # pair connected through an intermediate point
    through = (le.astype(np.uint8) @ le.astype(np.uint8)) > 0
    red = le & ~through
    ii, jj = np.nonzero(red)
    edges = tuple(zip(ii.tolist(), jj.tolist()))
    return DesignPoset(points=pts, edges=edges)


def union_poset(point_groups: Sequence[Iterable]) -> DesignPoset:
    """Poset over the distinct points appearing in any of the groups."""
    seen: dict[tuple, DesignPoint] = {}
    for group in point_groups:
        for p in group:
            dp = as_point(p)
            seen.setdefault(dp.coords, dp)
    return build_poset(list(seen.values()))


def reachability(poset: DesignPoset) -> np.ndarray:
    """Boolean (n, n) reachability closure of the stored edges."""
    n = poset.n
    adj = np.zeros((n, n), dtype=bool)
    for i, j in poset.edges:
        adj[i, j] = True
    reach = adj.copy()
    while True:
        nxt = reach | ((reach.astype(np.uint8) @ adj.astype(np.uint8)) > 0)
        if np.array_equal(nxt, reach):
            return reach
        reach = nxt
