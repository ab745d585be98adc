from __future__ import annotations

import numpy as np
import pytest

from locsched import geometry as G
from locsched.errors import InvalidInputError

WS = G.Workspace(
    bounds=G.Rect(0, 0, 10, 10),
    obstacles=(G.Rect(4, 4, 6, 6), G.Circle(8, 2, 1.0)),
    target=G.Rect(8, 8, 9.5, 9.5),
)


def test_point_at_obstacle_centroid_collides():
    assert G.in_collision(np.array([[5.0, 5.0]]), WS)[0]
    assert G.in_collision(np.array([[8.0, 2.0]]), WS)[0]


def test_point_in_empty_workspace_free():
    ws = G.Workspace(G.Rect(0, 0, 10, 10), (), G.Rect(8, 8, 9, 9))
    assert not G.in_collision(np.array([[5.0, 5.0]]), ws)[0]


def test_disc_near_rectangle_edge():
    # Closed-form point-rectangle distance oracle: a 0.4 m disc whose center
    # sits 0.39 m from the edge overlaps; at 0.41 m it does not.
    fp = G.Footprint(kind="disc", radius=0.4)
    rect = WS.obstacles[0]
    center = np.array([[rect.xmin - 0.39, 5.0]])
    assert rect.distance(center)[0] == pytest.approx(0.39, abs=1e-12)
    assert G.in_collision(center, WS, fp)[0]
    assert not G.in_collision(np.array([[rect.xmin - 0.41, 5.0]]), WS, fp)[0]


def test_footprint_leaving_bounds_collides():
    fp = G.Footprint(kind="disc", radius=0.3)
    assert G.in_collision(np.array([[0.2, 5.0]]), WS, fp)[0]
    assert not G.in_collision(np.array([[0.4, 5.0]]), WS, fp)[0]


def test_in_target_membership():
    assert G.in_target(np.array([WS.target.center]), WS)[0]
    assert not G.in_target(np.array([[11.0, 11.0]]), WS)[0]
    # boundary belongs to the closed region
    assert G.in_target(np.array([[8.0, 8.0]]), WS)[0]


def test_collision_monotone_in_radius():
    rng = np.random.default_rng(0)
    pts = rng.uniform(0, 10, size=(500, 2))
    prev = np.zeros(len(pts), dtype=bool)
    for r in (0.0, 0.1, 0.3, 0.6, 1.0):
        cur = G.in_collision(pts, WS, G.Footprint(kind="disc", radius=r))
        assert (prev <= cur).all()  # collision at smaller radius implies at larger
        prev = cur


def _segment_rect_chord(p0, p1, rect):
    """Liang-Barsky clip: length of the segment inside an axis-aligned rect."""
    d = p1 - p0
    t0, t1 = 0.0, 1.0
    for ax, lo, hi in ((0, rect.xmin, rect.xmax), (1, rect.ymin, rect.ymax)):
        if abs(d[ax]) < 1e-15:
            if p0[ax] < lo or p0[ax] > hi:
                return 0.0
            continue
        ta, tb = (lo - p0[ax]) / d[ax], (hi - p0[ax]) / d[ax]
        ta, tb = min(ta, tb), max(ta, tb)
        t0, t1 = max(t0, ta), min(t1, tb)
        if t0 > t1:
            return 0.0
    return float(np.linalg.norm(d) * (t1 - t0))


def test_substep_sampling_resolution_guarantee():
    # Sampling a segment at spacing h cannot miss an obstacle crossing whose
    # chord is longer than h; verified against analytic clipping on 1000
    # random segments.
    rng = np.random.default_rng(1)
    rect = G.Rect(4, 4, 6, 6)
    ws = G.Workspace(G.Rect(0, 0, 10, 10), (rect,), G.Rect(8, 8, 9, 9))
    h = 0.5 * 0.05  # v_max * dt
    for _ in range(1000):
        p0, p1 = rng.uniform(0, 10, 2), rng.uniform(0, 10, 2)
        chord = _segment_rect_chord(p0, p1, rect)
        n = max(2, int(np.ceil(np.linalg.norm(p1 - p0) / h)) + 1)
        ts = np.linspace(0, 1, n)
        samples = p0[None, :] + ts[:, None] * (p1 - p0)[None, :]
        hit = G.in_collision(samples, ws).any()
        if chord > h:
            assert hit, f"missed crossing with chord {chord:.3f} > {h}"


def test_collision_checker_matches_generic():
    rng = np.random.default_rng(2)
    pts = rng.uniform(-1, 11, size=(2000, 2))
    for fp in (G.Footprint(), G.Footprint(kind="disc", radius=0.35)):
        fast = G.CollisionChecker(WS, fp)(pts)
        slow = G.in_collision(pts, WS, fp)
        assert (fast == slow).all()


def test_rectangle_footprint_heading_dependence():
    fp = G.Footprint(kind="rectangle", width=1.2, height=0.2)
    pos = np.array([[3.2, 5.0]])  # 0.8 m left of the rect obstacle
    aligned = G.in_collision(pos, WS, fp, headings=np.array([0.0]))  # long axis toward it
    crossed = G.in_collision(pos, WS, fp, headings=np.array([np.pi / 2]))
    assert not aligned[0] and not crossed[0]
    closer = np.array([[3.5, 5.0]])
    assert G.in_collision(closer, WS, fp, headings=np.array([0.0]))[0]
    assert not G.in_collision(closer, WS, fp, headings=np.array([np.pi / 2]))[0]


def test_workspace_validation():
    with pytest.raises(InvalidInputError):
        G.Workspace(G.Rect(0, 0, 10, 10), (G.Rect(7, 7, 9, 9),), G.Rect(8, 8, 9.5, 9.5)).validate()
    with pytest.raises(InvalidInputError):
        G.Workspace(G.Rect(0, 0, 10, 10), (G.Circle(9.9, 5, 1.0),), G.Rect(1, 1, 2, 2)).validate()
    WS.validate()


def test_shape_invariants():
    with pytest.raises(InvalidInputError):
        G.Rect(5, 5, 4, 6)
    with pytest.raises(InvalidInputError):
        G.Circle(0, 0, -1)
    with pytest.raises(InvalidInputError):
        G.Footprint(kind="blob")
