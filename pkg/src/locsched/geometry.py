"""Workspace geometry: obstacle/target shapes, collision and membership queries.

All point queries are vectorized over a leading batch axis; a single state is
the degenerate batch of one. Collision semantics: the robot footprint placed at
the query position (and heading, for rectangular footprints) must not touch any
obstacle nor leave the workspace bounds. Target membership is evaluated at the
footprint center.

Resolution guarantee: callers check collisions at every integration sub-step,
so a moving robot cannot pass through an obstacle thicker than v_max*dt
without at least one sub-step sample registering the hit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle [xmin, xmax] x [ymin, ymax]."""

    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self):
        if not (self.xmax >= self.xmin and self.ymax >= self.ymin):
            raise InvalidInputError(f"degenerate rectangle {self}")

    def contains(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        return (
            (pts[:, 0] >= self.xmin)
            & (pts[:, 0] <= self.xmax)
            & (pts[:, 1] >= self.ymin)
            & (pts[:, 1] <= self.ymax)
        )

    def distance(self, pts: np.ndarray) -> np.ndarray:
        """Euclidean distance from points to the rectangle (0 inside)."""
        pts = np.atleast_2d(pts)
        dx = np.maximum(np.maximum(self.xmin - pts[:, 0], pts[:, 0] - self.xmax), 0.0)
        dy = np.maximum(np.maximum(self.ymin - pts[:, 1], pts[:, 1] - self.ymax), 0.0)
        return np.hypot(dx, dy)

    @property
    def center(self) -> np.ndarray:
        return np.array([(self.xmin + self.xmax) / 2.0, (self.ymin + self.ymax) / 2.0])

    def corners(self) -> np.ndarray:
        return np.array(
            [
                [self.xmin, self.ymin],
                [self.xmax, self.ymin],
                [self.xmax, self.ymax],
                [self.xmin, self.ymax],
            ]
        )


@dataclass(frozen=True)
class Circle:
    cx: float
    cy: float
    r: float

    def __post_init__(self):
        if self.r < 0:
            raise InvalidInputError("negative circle radius")

    def contains(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        return (pts[:, 0] - self.cx) ** 2 + (pts[:, 1] - self.cy) ** 2 <= self.r**2

    def distance(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        d = np.hypot(pts[:, 0] - self.cx, pts[:, 1] - self.cy) - self.r
        return np.maximum(d, 0.0)

    @property
    def center(self) -> np.ndarray:
        return np.array([self.cx, self.cy])


Shape = Rect | Circle


@dataclass(frozen=True)
class Footprint:
    """Robot body: point, disc of given radius, or heading-aligned rectangle."""

    kind: str = "point"  # point | disc | rectangle
    radius: float = 0.0
    width: float = 0.0  # along heading
    height: float = 0.0  # across heading

    def __post_init__(self):
        if self.kind not in ("point", "disc", "rectangle"):
            raise InvalidInputError(f"unknown footprint kind {self.kind!r}")
        if min(self.radius, self.width, self.height) < 0:
            raise InvalidInputError("negative footprint extent")

    @property
    def reach(self) -> float:
        """Farthest distance from center to any body point."""
        if self.kind == "point":
            return 0.0
        if self.kind == "disc":
            return self.radius
        return float(np.hypot(self.width, self.height) / 2.0)


@dataclass(frozen=True)
class Workspace:
    bounds: Rect
    obstacles: tuple[Shape, ...]
    target: Shape

    def validate(self) -> None:
        """Target must be obstacle-free and every shape inside the bounds."""
        for ob in self.obstacles:
            if _shapes_intersect(self.target, ob):
                raise InvalidInputError("target region intersects an obstacle")
        for shp in (*self.obstacles, self.target):
            if not _shape_within(shp, self.bounds):
                raise InvalidInputError("shape extends outside workspace bounds")


class CollisionChecker:
    """Precompiled point/disc collision test for one workspace + footprint.

    Obstacle bounds are stacked into arrays (rectangles inflated by the disc
    radius via the exact point-rectangle distance), so a batch query costs a
    handful of vectorized comparisons regardless of obstacle count. Rectangle
    footprints fall back to the generic separating-axis test.
    """

    def __init__(self, workspace: Workspace, footprint: Footprint | None = None):
        self.workspace = workspace
        self.footprint = footprint or Footprint()
        self.generic = self.footprint.kind == "rectangle"
        r = self.footprint.reach
        b = workspace.bounds
        self.bxmin, self.bxmax = b.xmin + r, b.xmax - r
        self.bymin, self.bymax = b.ymin + r, b.ymax - r
        rects = [ob for ob in workspace.obstacles if isinstance(ob, Rect)]
        circ = [ob for ob in workspace.obstacles if isinstance(ob, Circle)]
        self.r = r
        self.rect = (
            np.array([[ob.xmin, ob.ymin, ob.xmax, ob.ymax] for ob in rects]) if rects else None
        )
        self.circ = (
            np.array([[ob.cx, ob.cy, (ob.r + r) ** 2] for ob in circ]) if circ else None
        )

    def __call__(self, pts: np.ndarray, headings: np.ndarray | None = None) -> np.ndarray:
        if self.generic:
            return in_collision(pts, self.workspace, self.footprint, headings)
        x, y = pts[:, 0], pts[:, 1]
        out = (x < self.bxmin) | (x > self.bxmax) | (y < self.bymin) | (y > self.bymax)
        if self.rect is not None:
            dx = np.maximum(np.maximum(self.rect[:, 0][None] - x[:, None], x[:, None] - self.rect[:, 2][None]), 0.0)
            dy = np.maximum(np.maximum(self.rect[:, 1][None] - y[:, None], y[:, None] - self.rect[:, 3][None]), 0.0)
            if self.r > 0:
                out |= (dx * dx + dy * dy <= self.r * self.r).any(axis=1)
            else:
                out |= ((dx == 0.0) & (dy == 0.0)).any(axis=1)
        if self.circ is not None:
            d2 = (x[:, None] - self.circ[:, 0][None]) ** 2 + (y[:, None] - self.circ[:, 1][None]) ** 2
            out |= (d2 <= self.circ[:, 2][None]).any(axis=1)
        if not np.isfinite(pts).all():
            out |= ~np.isfinite(pts).all(axis=1)
        return out


def in_collision(
    positions: np.ndarray,
    workspace: Workspace,
    footprint: Footprint | None = None,
    headings: np.ndarray | None = None,
) -> np.ndarray:
    """True where the footprint at each position hits an obstacle or exits bounds."""
    footprint = footprint or Footprint()
    pts = np.atleast_2d(np.asarray(positions, dtype=float))
    if pts.shape[1] != 2:
        raise InvalidInputError(f"positions must be (B,2), got {pts.shape}")
    if not np.isfinite(pts).all():
        return np.ones(len(pts), dtype=bool)

    if footprint.kind == "rectangle":
        if headings is None:
            raise InvalidInputError("rectangle footprint requires headings")
        hit = ~_rect_body_in_bounds(pts, np.atleast_1d(headings), footprint, self_bounds=workspace.bounds)
        for ob in workspace.obstacles:
            hit |= _rect_body_hits(pts, np.atleast_1d(headings), footprint, ob)
        return hit

    r = footprint.reach
    b = workspace.bounds
    out = (
        (pts[:, 0] < b.xmin + r)
        | (pts[:, 0] > b.xmax - r)
        | (pts[:, 1] < b.ymin + r)
        | (pts[:, 1] > b.ymax - r)
    )
    for ob in workspace.obstacles:
        out |= ob.distance(pts) <= r if r > 0 else ob.contains(pts)
    return out


def in_target(positions: np.ndarray, workspace: Workspace) -> np.ndarray:
    """Closed-region membership of the footprint center in the target."""
    pts = np.atleast_2d(np.asarray(positions, dtype=float))
    inside = workspace.target.contains(pts)
    return inside & workspace.bounds.contains(pts)


def _shape_within(shape: Shape, bounds: Rect) -> bool:
    if isinstance(shape, Rect):
        return (
            shape.xmin >= bounds.xmin
            and shape.xmax <= bounds.xmax
            and shape.ymin >= bounds.ymin
            and shape.ymax <= bounds.ymax
        )
    return (
        shape.cx - shape.r >= bounds.xmin
        and shape.cx + shape.r <= bounds.xmax
        and shape.cy - shape.r >= bounds.ymin
        and shape.cy + shape.r <= bounds.ymax
    )


def _shapes_intersect(a: Shape, b: Shape) -> bool:
    if isinstance(a, Rect) and isinstance(b, Rect):
        return not (a.xmax < b.xmin or b.xmax < a.xmin or a.ymax < b.ymin or b.ymax < a.ymin)
    if isinstance(a, Circle) and isinstance(b, Circle):
        return np.hypot(a.cx - b.cx, a.cy - b.cy) <= a.r + b.r
    circ, rect = (a, b) if isinstance(a, Circle) else (b, a)
    return rect.distance(np.array([[circ.cx, circ.cy]]))[0] <= circ.r


# Oriented-rectangle footprint vs. axis-aligned shapes (separating axes).


def _rect_body_corners(pts: np.ndarray, headings: np.ndarray, fp: Footprint) -> np.ndarray:
    hw, hh = fp.width / 2.0, fp.height / 2.0
    c, s = np.cos(headings), np.sin(headings)
    local = np.array([[hw, hh], [hw, -hh], [-hw, -hh], [-hw, hh]])  # (4,2)
    rot = np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)  # (B,2,2)
    return pts[:, None, :] + np.einsum("bij,kj->bki", rot, local)  # (B,4,2)


def _rect_body_in_bounds(pts, headings, fp, self_bounds: Rect) -> np.ndarray:
    corners = _rect_body_corners(pts, headings, fp)
    ok = (
        (corners[..., 0] >= self_bounds.xmin)
        & (corners[..., 0] <= self_bounds.xmax)
        & (corners[..., 1] >= self_bounds.ymin)
        & (corners[..., 1] <= self_bounds.ymax)
    )
    return ok.all(axis=1)


def _rect_body_hits(pts, headings, fp, ob: Shape) -> np.ndarray:
    corners = _rect_body_corners(pts, headings, fp)  # (B,4,2)
    if isinstance(ob, Circle):
        # Circle center expressed in body frame; point-rectangle distance test.
        c, s = np.cos(headings), np.sin(headings)
        rel = np.stack([ob.cx - pts[:, 0], ob.cy - pts[:, 1]], -1)
        lx = c * rel[:, 0] + s * rel[:, 1]
        ly = -s * rel[:, 0] + c * rel[:, 1]
        dx = np.maximum(np.abs(lx) - fp.width / 2.0, 0.0)
        dy = np.maximum(np.abs(ly) - fp.height / 2.0, 0.0)
        return np.hypot(dx, dy) <= ob.r
    # SAT with the two world axes and the two body axes.
    obc = ob.corners()  # (4,2)
    sep = np.zeros(len(pts), dtype=bool)
    sep |= corners[..., 0].max(1) < ob.xmin
    sep |= corners[..., 0].min(1) > ob.xmax
    sep |= corners[..., 1].max(1) < ob.ymin
    sep |= corners[..., 1].min(1) > ob.ymax
    for axis_idx in range(2):
        c, s = np.cos(headings), np.sin(headings)
        axis = np.stack([c, s], -1) if axis_idx == 0 else np.stack([-s, c], -1)  # (B,2)
        own = np.einsum("bki,bi->bk", corners, axis)
        other = np.einsum("kj,bj->bk", obc, axis)
        sep |= own.max(1) < other.min(1)
        sep |= own.min(1) > other.max(1)
    return ~sep
