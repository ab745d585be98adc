"""Multi-objective solver over belief MDPs.

The achievable set of objective vectors (over randomized policies) is the
convex hull of the deterministic-policy values, because the model is a finite
DAG. Its non-dominated surface is approximated from both sides:

* inner bound — convex hull of the value vectors returned by weighted
  scalarization (each an exact optimum of a deterministic policy),
* outer bound — intersection of the supporting halfspaces those same queries
  establish.

For two or three objectives the facet of the inner hull with the largest
inner/outer gap picks the next scalarization weight (sandwich refinement);
with four objectives a fixed low-discrepancy weight grid is queried instead
and the gap is probed on a second grid. Objectives are internally negated as
needed so everything is maximized, and normalized per-objective so the gap is
unit-free.

Point-targeted synthesis solves the occupation-measure linear program: one
flow-conservation row per transient state, bound rows for the requested
objective values, free objectives optimized lexicographically. The randomized
policy is read off the optimal occupation measure.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import HalfspaceIntersection, QhullError

from . import mdp as M
from .errors import InvalidInputError, UnachievablePointError, UnsupportedStructureError
from .simplex import solve_lp
from .util import provenance

VALUE_TOL = 1e-9
TIE_TOL = 1e-12


@dataclass
class FrontVertex:
    values: dict[str, float]  # all evaluated quantities (reach probs + cost entries)
    policy: M.Policy
    weights: list[float]  # scalarization weights that produced / certify the vertex

    def vector(self, objectives) -> np.ndarray:
        return np.array([self.values[o.name] for o in objectives])


@dataclass
class ParetoFront:
    objectives: list[M.Objective]
    vertices: list[FrontVertex]
    facets: list[tuple[list[float], float]]  # (weights, supported value) in normalized signed space
    refinement_gap: float
    scales: np.ndarray
    baselines: dict[str, dict[str, float]] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def vertex_matrix(self) -> np.ndarray:
        return np.array([v.vector(self.objectives) for v in self.vertices])


@dataclass(frozen=True)
class TargetPoint:
    """Requested bounds per objective: >= for maximized, <= for minimized."""

    bounds: tuple[tuple[str, str, float], ...]  # (objective name, op, value)

    def __post_init__(self):
        if not self.bounds:
            raise InvalidInputError("a target point needs at least one bound")


def parse_point(text: str, objectives: list[M.Objective]) -> TargetPoint:
    """Parse bound expressions like ``"ptarg>=0.99,pcoll<=0.01"``."""
    names = {o.name: o for o in objectives}
    bounds = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        m = re.fullmatch(r"([a-z_]+)\s*(>=|<=)\s*([-+0-9.eE]+)", part)
        if not m:
            raise InvalidInputError(f"cannot parse bound expression {part!r}")
        name, op, val = m.group(1), m.group(2), float(m.group(3))
        if name not in names:
            raise InvalidInputError(f"unknown objective {name!r} in point selector")
        expected = ">=" if names[name].sense == "max" else "<="
        if op != expected:
            raise InvalidInputError(
                f"objective {name} is {names[name].sense}imized; use {expected!r}"
            )
        bounds.append((name, op, val))
    return TargetPoint(tuple(bounds))


# -- scalarization -----------------------------------------------------------


def scalarize_solve(mdp: M.BeliefMdp, objectives: list[M.Objective], weights) -> tuple[M.Policy, np.ndarray]:
    """Optimal deterministic policy for one nonnegative weight vector.

    Maximizes sum_k w_k * sign_k * objective_k by backward dynamic programming
    over the DAG; ties go to the lowest action index. Returns the policy and
    its full objective vector in natural signs.
    """
    w = np.asarray(weights, dtype=float)
    if len(w) != len(objectives) or (w < -1e-15).any():
        raise InvalidInputError("weights must be nonnegative, one per objective")
    if abs(w.sum() - 1.0) > 1e-9:
        raise InvalidInputError("weights must sum to one")
    signs = np.array([o.sign for o in objectives])

    n_obj = len(objectives)
    values = np.zeros((mdp.n_states, n_obj))
    for k, obj in enumerate(objectives):
        if obj.kind == "reach":
            values[mdp.role_index(obj.key), k] = 1.0

    order = mdp.topological_order()  # raises UnsupportedStructureError on cycles
    pick: dict[int, int] = {}
    for s in reversed(order):
        best_a, best_scalar, best_vec = -1, -np.inf, None
        for a in range(len(mdp.actions[s])):
            vec = np.zeros(n_obj)
            for k, obj in enumerate(objectives):
                if obj.kind == "cost":
                    vec[k] = mdp.costs[s][a][obj.key]
            for t, p in mdp.transitions[s][a].items():
                vec += p * values[t]
            scalar = float(w @ (signs * vec))
            if best_a < 0 or scalar > best_scalar + TIE_TOL * (1.0 + abs(best_scalar)):
                best_a, best_scalar, best_vec = a, scalar, vec
        pick[s] = best_a
        values[s] = best_vec

    policy = M.deterministic_policy(mdp, pick)
    return policy, values[mdp.initial].copy()


def _evaluate_vertex(mdp, objectives, policy, weights) -> FrontVertex:
    vals = M.evaluate_all(mdp, policy)
    return FrontVertex(values=vals, policy=policy, weights=[float(x) for x in weights])


# -- weight grids ------------------------------------------------------------


def weight_grid(k: int, n: int, salt: int = 0) -> np.ndarray:
    """Deterministic low-discrepancy weights on the (k-1)-simplex.

    A Kronecker sequence driven by the generalized golden ratio is pushed
    through the exponential-spacing map, which spreads points evenly over the
    simplex; the result is a fixed, well-covering scalarization grid.
    """
    phi = _generalized_golden(k)
    alpha = np.array([math.pow(1.0 / phi, i + 1) for i in range(k)])
    idx = np.arange(1, n + 1)[:, None] + salt * n
    u = np.mod(0.5 + idx * alpha[None, :], 1.0)
    u = np.clip(u, 1e-12, 1 - 1e-12)
    e = -np.log(u)
    return e / e.sum(axis=1, keepdims=True)


def _generalized_golden(d: int) -> float:
    x = 2.0
    for _ in range(64):
        x = (1.0 + x) ** (1.0 / (d + 1))
    return x


# -- front computation -------------------------------------------------------


def compute_front(
    mdp: M.BeliefMdp,
    objectives: list[M.Objective],
    gap_tol: float = 1e-6,
    max_queries: int = 256,
    grid_size: int = 512,
) -> ParetoFront:
    """Convex Pareto front with per-vertex optimal deterministic policies.

    Vertices are exact scalarization optima; ``refinement_gap`` reports how far
    the outer bound can still exceed the inner hull (normalized units).
    """
    k = len(objectives)
    if not 2 <= k <= 4:
        raise InvalidInputError("front computation supports 2 to 4 objectives")
    signs = np.array([o.sign for o in objectives])

    points: list[np.ndarray] = []  # natural-sign objective vectors
    vertices_by_key: dict[tuple, FrontVertex] = {}
    outer_w: list[np.ndarray] = []  # normalized signed space
    outer_h: list[float] = []
    queried: set[tuple] = set()
    scales = np.ones(k)

    def to_signed(vec: np.ndarray) -> np.ndarray:
        return signs * vec / scales

    def query(w_signed: np.ndarray) -> None:
        w_signed = np.maximum(w_signed, 0.0)
        if w_signed.sum() <= 0:
            return
        w_signed = w_signed / w_signed.sum()
        key = tuple(np.round(w_signed, 12))
        if key in queried:
            return
        queried.add(key)
        nat = w_signed / scales
        nat = nat / nat.sum()
        policy, vec = scalarize_solve(mdp, objectives, nat)
        pkey = tuple(np.round(vec, 10))
        if pkey not in vertices_by_key:
            vertices_by_key[pkey] = _evaluate_vertex(mdp, objectives, policy, nat)
            points.append(vec)
        outer_w.append(w_signed)
        outer_h.append(float(w_signed @ to_signed(vec)))

    for k0 in range(k):
        query(np.eye(k)[k0])
    query(np.full(k, 1.0 / k))

    # Normalize objective scales from the initial spread, then rebuild the
    # outer supports in the normalized space. Zero-spread objectives fall back
    # to a magnitude-based scale so coordinates stay O(1).
    pts = np.array(points)
    spread = pts.max(axis=0) - pts.min(axis=0)
    scales = np.where(spread > 1e-12, spread, np.maximum(1.0, np.abs(pts).max(axis=0)))
    initial_ws, queried = list(outer_w), set()
    outer_w, outer_h, points, vertices_by_key = [], [], [], {}
    for w0 in initial_ws:
        query(w0)

    gap = math.inf
    if k <= 3:
        # Vertex-driven sandwich: find the outer-polytope vertex farthest above
        # the inner hull in support-function terms and query its direction.
        while len(queried) < max_queries:
            gap, w_next = _sandwich_gap(points, to_signed, outer_w, outer_h)
            if gap <= gap_tol or w_next is None:
                break
            before = len(queried)
            query(w_next)
            if len(queried) == before:  # direction already explored; numerical residue
                break
        gap, _ = _sandwich_gap(points, to_signed, outer_w, outer_h)
    else:
        # Four objectives: fixed weight grid, gap probed on a second grid.
        for w0 in weight_grid(k, grid_size):
            if len(queried) >= max(max_queries, grid_size + k + 1):
                break
            query(w0)
        gap = _grid_gap(points, to_signed, outer_w, outer_h, k)

    vertex_ids = _nondominated_vertex_ids(np.array([to_signed(p) for p in points]))
    vertices = [vertices_by_key[tuple(np.round(points[i], 10))] for i in vertex_ids]
    facet_list = [([float(x) for x in w], float(h)) for w, h in zip(outer_w, outer_h)]
    return ParetoFront(
        objectives=objectives,
        vertices=vertices,
        facets=facet_list,
        refinement_gap=float(max(gap, 0.0)),
        scales=scales,
        meta={"queries": len(queried)},
    )


def _sandwich_gap(points, to_signed, outer_w, outer_h):
    """Certified max gap between outer bound and inner hull over all weights.

    max_w [h_outer(w) - h_inner(w)] equals the maximum over outer-polytope
    vertices v of max_{w in simplex} (w.v - max_i w.p_i); the inner problem is
    a small LP because its objective is concave piecewise-linear in w. Returns
    (gap, argmax weight direction).
    """
    z = np.array([to_signed(p) for p in points])
    verts = _outer_vertices(z, outer_w, outer_h)
    if verts is None:
        return math.inf, None
    best_gap, best_w = 0.0, None
    for v in verts:
        gap, w = _vertex_gap(v, z)
        if gap > best_gap:
            best_gap, best_w = gap, w
    return best_gap, best_w


def _outer_vertices(z: np.ndarray, outer_w, outer_h) -> np.ndarray | None:
    """Vertices of the outer polytope, boxed from below (the irrelevant side)."""
    k = z.shape[1]
    span = max(1.0, float(z.max() - z.min()))
    low = z.min(axis=0) - 2.0 * span
    rows = [np.concatenate([w, [-h]]) for w, h in zip(outer_w, outer_h)]
    rows += [np.concatenate([-np.eye(k)[i], [low[i]]]) for i in range(k)]
    interior = 0.5 * (low + z.min(axis=0))
    try:
        hsi = HalfspaceIntersection(np.array(rows), interior)
    except QhullError:
        return None
    return np.unique(np.round(hsi.intersections, 10), axis=0)


def _vertex_gap(v: np.ndarray, z: np.ndarray) -> tuple[float, np.ndarray | None]:
    """LP: max_{w in simplex} w.v - max_i w.z_i (concave piecewise-linear)."""
    k = len(v)
    n = len(z)
    # vars: w (k), t+ , t-  with t = t+ - t-; constraints: w.z_i - t <= 0; sum w = 1
    c = np.concatenate([-v, [1.0, -1.0]])
    a_ub = np.hstack([z, -np.ones((n, 1)), np.ones((n, 1))])
    b_ub = np.zeros(n)
    a_eq = np.concatenate([np.ones(k), [0.0, 0.0]])[None, :]
    res = solve_lp(c, a_eq=a_eq, b_eq=np.array([1.0]), a_ub=a_ub, b_ub=b_ub)
    if res.status != "optimal":
        return 0.0, None
    return -res.objective, res.x[:k]


def _nondominated_vertex_ids(z: np.ndarray) -> list[int]:
    """Points not weakly dominated by any convex combination of the others.

    This is exactly the vertex set of the non-dominated surface: interior
    points of a facet equal a combination of their neighbours and drop out.
    """
    n, k = z.shape
    if n == 1:
        return [0]
    ids = []
    for i in range(n):
        others = np.delete(z, i, axis=0)
        # feasibility: lambda >= 0, slack >= 0, sum lambda = 1,
        # others^T lambda - slack = z_i  (mixture componentwise >= z_i)
        a_eq = np.zeros((k + 1, (n - 1) + k))
        a_eq[:k, : n - 1] = others.T
        a_eq[:k, n - 1 :] = -np.eye(k)
        a_eq[k, : n - 1] = 1.0
        b_eq = np.concatenate([z[i] - 1e-9, [1.0]])
        res = solve_lp(np.zeros((n - 1) + k), a_eq=a_eq, b_eq=b_eq)
        if res.status != "optimal":
            ids.append(i)
    return ids


def _outer_support(w: np.ndarray, outer_w: list[np.ndarray], outer_h: list[float]) -> float:
    """Support of the outer polytope via the dual LP min h'lam, W'lam = w, lam >= 0."""
    wq = np.array(outer_w).T  # (k, q)
    res = solve_lp(np.array(outer_h), a_eq=wq, b_eq=w)
    if res.status != "optimal":
        return math.inf
    return res.objective


def _grid_gap(points, to_signed, outer_w, outer_h, k: int, probes: int = 128) -> float:
    z = [to_signed(p) for p in points]
    worst = 0.0
    for w in weight_grid(k, probes, salt=7):
        h_in = max(float(w @ p) for p in z)
        h_out = _outer_support(w, outer_w, outer_h)
        if math.isfinite(h_out):
            worst = max(worst, h_out - h_in)
    return worst


def _certified_vertex_keys(points, to_signed, outer_w) -> list[tuple]:
    """Points that strictly win some queried direction are hull vertices."""
    z = [to_signed(p) for p in points]
    keys = []
    for w in outer_w:
        scores = np.array([float(w @ p) for p in z])
        order = np.argsort(-scores)
        if len(scores) == 1 or scores[order[0]] > scores[order[1]] + 1e-12:
            keys.append(tuple(np.round(points[order[0]], 10)))
    out, seen = [], set()
    for key in keys:
        if key not in seen:
            seen.add(key)
            out.append(key)
    return out


# -- point-targeted synthesis ------------------------------------------------


def synthesize_policy(
    mdp: M.BeliefMdp,
    objectives: list[M.Objective],
    point: TargetPoint,
    front: ParetoFront | None = None,
) -> tuple[M.Policy, np.ndarray]:
    """Randomized policy meeting the bounds, free objectives optimized last.

    Solves the occupation-measure LP; on infeasible bounds raises
    ``UnachievablePointError`` carrying the Euclidean projection of the
    request onto the front (when a front is supplied).
    """
    transient = [s for s in range(mdp.n_states) if not mdp.is_absorbing(s)]
    pos = {s: i for i, s in enumerate(transient)}
    pairs = [(s, a) for s in transient for a in range(len(mdp.actions[s]))]
    col = {sa: i for i, sa in enumerate(pairs)}
    n_var = len(pairs)

    a_eq = np.zeros((len(transient), n_var))
    b_eq = np.zeros(len(transient))
    b_eq[pos[mdp.initial]] = 1.0
    for s, a in pairs:
        a_eq[pos[s], col[(s, a)]] += 1.0
        for t, p in mdp.transitions[s][a].items():
            if t in pos:
                a_eq[pos[t], col[(s, a)]] -= p

    def expr(obj: M.Objective) -> np.ndarray:
        row = np.zeros(n_var)
        if obj.kind == "reach":
            absorb = mdp.role_index(obj.key)
            for s, a in pairs:
                row[col[(s, a)]] = mdp.transitions[s][a].get(absorb, 0.0)
        else:
            for s, a in pairs:
                row[col[(s, a)]] = mdp.costs[s][a][obj.key]
        return row

    by_name = {o.name: o for o in objectives}
    a_ub_rows, b_ub = [], []
    bounded = set()
    for name, op, val in point.bounds:
        row = expr(by_name[name])
        bounded.add(name)
        if op == ">=":
            a_ub_rows.append(-row)
            b_ub.append(-val)
        else:
            a_ub_rows.append(row)
            b_ub.append(val)

    # Free objectives optimize in reverse listing order: resource objectives
    # (listed last) take priority once the requested performance bounds hold.
    free = [o for o in objectives if o.name not in bounded][::-1]
    levels: list[M.Objective | None] = list(free) if free else [None]
    y = None
    for obj in levels:
        cost = np.zeros(n_var) if obj is None else -obj.sign * expr(obj)
        res = solve_lp(
            cost,
            a_eq=a_eq,
            b_eq=b_eq,
            a_ub=np.array(a_ub_rows) if a_ub_rows else None,
            b_ub=np.array(b_ub) if b_ub else None,
        )
        if res.status != "optimal":
            raise UnachievablePointError(
                f"bounds {point.bounds} are not achievable", nearest=_project(point, front, objectives)
            )
        y = res.x
        if obj is not None:  # pin this level before optimizing the next
            a_ub_rows.append(cost)
            b_ub.append(float(cost @ y) + 1e-9)

    choices = {}
    for s in transient:
        mass = [y[col[(s, a)]] for a in range(len(mdp.actions[s]))]
        total = sum(mass)
        if total > 1e-12:
            choices[mdp.labels[s]] = {
                mdp.actions[s][a]: mass[a] / total for a in range(len(mass)) if mass[a] / total > 1e-15
            }
        else:
            choices[mdp.labels[s]] = {mdp.actions[s][0]: 1.0}
    policy = M.Policy(choices)
    achieved = M.evaluate_policy(mdp, policy, objectives)
    for name, op, val in point.bounds:
        got = achieved[[o.name for o in objectives].index(name)]
        if (op == ">=" and got < val - 1e-6) or (op == "<=" and got > val + 1e-6):
            raise UnachievablePointError(
                f"synthesized policy misses bound {name} {op} {val} (got {got})",
                nearest=_project(point, front, objectives),
            )
    return policy, achieved


def _project(point: TargetPoint, front: ParetoFront | None, objectives) -> np.ndarray | None:
    """Frank-Wolfe projection of the bound region onto the front polytope."""
    if front is None or not front.vertices:
        return None
    verts = front.vertex_matrix()
    names = [o.name for o in objectives]

    def grad(x):
        g = np.zeros(len(names))
        for name, op, val in point.bounds:
            k = names.index(name)
            viol = val - x[k] if op == ">=" else x[k] - val
            if viol > 0:
                g[k] += -2.0 * viol if op == ">=" else 2.0 * viol
        return g

    x = verts.mean(axis=0)
    for t in range(500):
        g = grad(x)
        s = verts[int(np.argmin(verts @ g))]
        x = x + 2.0 / (t + 2.0) * (s - x)
    return x


def enumerate_policies(mdp: M.BeliefMdp, objectives: list[M.Objective]):
    """All deterministic policies with their objective vectors (small MDPs only)."""
    transient = [s for s in range(mdp.n_states) if not mdp.is_absorbing(s)]
    counts = [len(mdp.actions[s]) for s in transient]
    total = 1
    for c in counts:
        total *= c
    if total > 200000:
        raise InvalidInputError(f"{total} deterministic policies is too many to enumerate")
    out = []
    for idx in range(total):
        pick, rem = {}, idx
        for s, c in zip(transient, counts):
            pick[s] = rem % c
            rem //= c
        policy = M.deterministic_policy(mdp, pick)
        out.append((policy, M.evaluate_policy(mdp, policy, objectives)))
    return out


def savings_report(front: ParetoFront, baseline: dict[str, float]) -> list[dict]:
    """Per-vertex values plus percentage savings on cost entries vs a baseline."""
    rows = []
    cost_keys = [k for k in ("energy", "energy_loc", "duration") if k in baseline]
    for idx, v in enumerate(front.vertices):
        row = {"vertex": idx, **{k: v.values[k] for k in v.values}}
        for key in cost_keys:
            base = baseline[key]
            row[f"saved_{key}_pct"] = (
                "" if base == 0 else 100.0 * (base - v.values[key]) / base
            )
        rows.append(row)
    return rows


# -- serialization -----------------------------------------------------------


def front_to_doc(front: ParetoFront, extra_meta: dict | None = None) -> dict:
    return {
        "format_version": 1,
        "kind": "pareto-front",
        "objectives": [{"name": o.name, "sense": o.sense} for o in front.objectives],
        "vertices": [
            {
                "values": {k: float(x) for k, x in v.values.items()},
                "policy": M.policy_to_doc(v.policy),
                "weights": v.weights,
            }
            for v in front.vertices
        ],
        "facets": [{"weights": w, "support": h} for w, h in front.facets],
        "refinement_gap": front.refinement_gap,
        "scales": front.scales.tolist(),
        "baselines": front.baselines,
        "meta": {**front.meta, **(extra_meta or {})},
    }


def front_from_doc(doc: dict, cost_names=("energy", "energy_loc", "duration")) -> ParetoFront:
    if doc.get("kind") != "pareto-front" or doc.get("format_version") != 1:
        raise InvalidInputError("not a pareto-front document (or unsupported version)")
    objectives = M.build_objectives([o["name"] for o in doc["objectives"]], cost_names)
    vertices = [
        FrontVertex(
            values={k: float(v) for k, v in item["values"].items()},
            policy=M.policy_from_doc(item["policy"]),
            weights=[float(w) for w in item["weights"]],
        )
        for item in doc["vertices"]
    ]
    return ParetoFront(
        objectives=objectives,
        vertices=vertices,
        facets=[(list(map(float, f["weights"])), float(f["support"])) for f in doc["facets"]],
        refinement_gap=float(doc["refinement_gap"]),
        scales=np.asarray(doc["scales"], dtype=float),
        baselines={k: dict(v) for k, v in doc.get("baselines", {}).items()},
        meta=dict(doc.get("meta", {})),
    )
