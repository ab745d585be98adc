"""Finite abstraction of the continuous mission as a belief MDP.

Nodes ``(i, j)`` carry the collision-free belief at waypoint ``i`` given the
most recent localization fix happened at waypoint ``j``. Beliefs are particle
clouds of (true state, filter estimate) pairs with one shared filter
covariance, propagated through the closed loop by :mod:`locsched.closedloop`.
Mass that collides en route is shed to the absorbing collision state and the
survivors are renormalized, so each transition row stays a probability
distribution by construction.

Arrival with localization on is history-free: the belief is resampled from
the steady-state waypoint distribution restricted to free space. That is what
collapses the exponential action-history tree to the quadratic node grid.

Composite boot actions span several segments: full-off propagation (with the
boot energy surcharge) through the segments that the boot time covers, then a
tail segment in which localization comes up mid-flight and the segment ends on
the convergence trigger.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import mdp as M
from .closedloop import run_segment
from .errors import AbstractionTimeoutError, ControlTimeoutError, InvalidInputError
from .geometry import in_collision, in_target
from .scenario import COST_NAMES, Scenario
from .util import TOOL_VERSION, provenance, rng_stream

_STREAM_OFF, _STREAM_ON, _STREAM_SBO, _STREAM_SNAP = 0, 1, 2, 3


@dataclass
class ParticleBelief:
    """Weighted particle cloud over (true state, estimate) with shared covariance."""

    x: np.ndarray  # (P, n)
    xhat: np.ndarray  # (P, n)
    cov: np.ndarray  # (n, n)
    weights: np.ndarray  # (P,) positive, summing to 1
    survival_mass: float = 1.0

    def __len__(self) -> int:
        return len(self.x)


@dataclass
class SegmentOutcome:
    belief: ParticleBelief | None  # survivors, renormalized; None when all mass collided
    p_collide: float
    cost: np.ndarray  # (3,) expected (energy, energy_loc, duration) per entering unit mass
    duration: float  # expected seconds spent in the segment


def state_count(n_segments: int) -> int:
    """Node-grid size plus the three absorbing outcomes."""
    return (n_segments + 2) * (n_segments + 1) // 2 + 3


def initial_belief(sc: Scenario, n_particles: int) -> ParticleBelief:
    """Exactly known start: all particles at the initial state, zero covariance."""
    n = sc.plant.n_x
    x = np.tile(sc.initial_state, (n_particles, 1))
    return ParticleBelief(
        x=x,
        xhat=x.copy(),
        cov=np.zeros((n, n)),
        weights=np.full(n_particles, 1.0 / n_particles),
    )


def snap_belief(sc: Scenario, law, rng: np.random.Generator, n_particles: int, survival_mass: float = 1.0) -> ParticleBelief:
    """Steady-state arrival belief: truth ~ N(waypoint state, Qss) in free space."""
    n = sc.plant.n_x
    chol = np.linalg.cholesky(law.qss + 1e-15 * np.eye(n))
    samples = np.empty((0, n))
    for _ in range(200):
        draw = law.target_state + rng.standard_normal((max(n_particles, 64), n)) @ chol.T
        heads = draw[:, 3] if sc.plant.kind == "unicycle2" and sc.footprint.kind == "rectangle" else None
        ok = ~in_collision(draw[:, :2], sc.workspace, sc.footprint, heads)
        samples = np.vstack([samples, draw[ok]])
        if len(samples) >= n_particles:
            break
    else:
        raise InvalidInputError(
            f"steady-state belief at waypoint {law.index} has negligible free-space mass"
        )
    x = samples[:n_particles]
    return ParticleBelief(
        x=x,
        xhat=np.tile(law.target_state, (n_particles, 1)),
        cov=law.qss.copy(),
        weights=np.full(n_particles, 1.0 / n_particles),
        survival_mass=survival_mass,
    )


def propagate_segment(
    belief: ParticleBelief,
    law,
    locmode: str,
    sc: Scenario,
    rng: np.random.Generator,
    boot_remaining: float = 0.0,
) -> SegmentOutcome:
    """Push a belief through one closed-loop segment under a localization mode.

    ``locmode`` is "off", "boot", "on", or "boot_tail" (with ``boot_remaining``
    seconds of booting left). Collided particles keep the cost they accrued up
    to the collision sub-step; expected cost and duration average over all
    entering mass.
    """
    if belief is None or len(belief) == 0:
        raise InvalidInputError("cannot propagate an empty belief")
    try:
        res = run_segment(
            belief.x,
            belief.xhat,
            belief.cov,
            law,
            sc,
            locmode,
            rng,
            boot_remaining=boot_remaining,
            weights=belief.weights,
        )
    except ControlTimeoutError as exc:
        raise AbstractionTimeoutError(str(exc)) from exc

    w = belief.weights
    p_surv = 1.0 if not res.collided.any() else min(float(w[~res.collided].sum()), 1.0)
    cost = (w[:, None] * res.costs).sum(axis=0)
    duration = float(w @ res.t_end)
    if p_surv <= 0.0:
        return SegmentOutcome(belief=None, p_collide=1.0, cost=cost, duration=duration)
    keep = ~res.collided
    nxt = ParticleBelief(
        x=res.x[keep],
        xhat=res.xhat[keep],
        cov=res.cov,
        weights=w[keep] / p_surv,
        survival_mass=belief.survival_mass * p_surv,
    )
    return SegmentOutcome(belief=nxt, p_collide=1.0 - p_surv, cost=cost, duration=duration)


def expected_segment_cost(belief, law, locmode, sc, rng, boot_remaining=0.0) -> np.ndarray:
    """Expected (energy, energy_loc, duration) of one segment from a belief."""
    return propagate_segment(belief, law, locmode, sc, rng, boot_remaining).cost


def boot_completion_index(durations, i: int, t_boot: float, n_segments: int):
    """Smallest m with the cumulative nominal time of segments i+1..m exceeding t_boot.

    Returns (m, remaining boot time inside segment m), or None when the boot
    cannot complete strictly before the end of the trajectory.
    """
    acc = 0.0
    for m in range(i + 1, n_segments + 1):
        nxt = acc + durations[m - 1]
        if nxt > t_boot + 1e-12:
            return m, t_boot - acc
        acc = nxt
    return None


def build_mdp(sc: Scenario, particles_per_node: int = 2000, rng_seed: int = 0, threads: int = 1) -> M.BeliefMdp:
    """Construct the belief MDP for a scenario.

    Deterministic for fixed (scenario, particle count, seed): every belief node
    and edge draws from its own keyed RNG stream, so the per-chain work can be
    farmed out to threads without affecting the result.
    """
    laws = sc.control_laws()
    n_seg = sc.n_segments
    durations = [law.delta_t for law in laws]
    boot_rate = sc.boot.rate

    beliefs: dict[tuple[int, int], ParticleBelief | None] = {}
    off_edges: dict[tuple[int, int], SegmentOutcome] = {}

    def run_chain(j: int) -> None:
        """Snap (or initial) belief at (j, j), then the all-off chain to level N."""
        if j == 0:
            bel = initial_belief(sc, particles_per_node)
        else:
            bel = snap_belief(sc, laws[j - 1], rng_stream(rng_seed, j, j, _STREAM_SNAP), particles_per_node)
        beliefs[(j, j)] = bel
        for i in range(j, n_seg):
            if bel is None:
                break
            out = propagate_segment(bel, laws[i], "off", sc, rng_stream(rng_seed, i, j, _STREAM_OFF))
            off_edges[(i, j)] = out
            bel = out.belief
            beliefs[(i + 1, j)] = bel

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run_chain, range(n_seg + 1)))
    else:
        for j in range(n_seg + 1):
            run_chain(j)

    on_edges: dict[int, SegmentOutcome] = {}
    for i in range(n_seg):
        bel = beliefs.get((i, i))
        if bel is None:
            continue
        on_edges[i] = propagate_segment(bel, laws[i], "on", sc, rng_stream(rng_seed, i, i, _STREAM_ON))

    # Composite boot actions: reuse the stored off-chain edges, then a fresh tail.
    sbo_edges: dict[tuple[int, int], tuple[float, np.ndarray, int, float]] = {}
    for i in range(n_seg):
        comp = boot_completion_index(durations, i, sc.boot.t_boot, n_seg)
        if comp is None:
            continue
        m, tail_remaining = comp
        for j in range(i):
            if beliefs.get((i, j)) is None:
                continue
            surv = 1.0
            cost = np.zeros(3)
            for k in range(i, m - 1):
                edge = off_edges[(k, j)]
                boosted = edge.cost + np.array([boot_rate * edge.duration, boot_rate * edge.duration, 0.0])
                cost += surv * boosted
                surv *= 1.0 - edge.p_collide
                if surv <= 0.0:
                    break
            if surv > 0.0:
                tail_from = beliefs[(m - 1, j)]
                tail = propagate_segment(
                    tail_from, laws[m - 1], "boot_tail", sc,
                    rng_stream(rng_seed, i, j, _STREAM_SBO), boot_remaining=tail_remaining,
                )
                cost += surv * tail.cost
                surv *= 1.0 - tail.p_collide
            sbo_edges[(i, j)] = (surv, cost, m, tail_remaining)

    return _assemble(sc, particles_per_node, rng_seed, laws, beliefs, off_edges, on_edges, sbo_edges)


def _assemble(sc, particles_per_node, rng_seed, laws, beliefs, off_edges, on_edges, sbo_edges) -> M.BeliefMdp:
    n_seg = sc.n_segments
    live_nodes = [(i, j) for i in range(n_seg + 1) for j in range(i + 1) if beliefs.get((i, j)) is not None]

    labels = [f"s{i}_{j}" for i, j in live_nodes]
    roles: list[tuple] = [("node", i, j) for i, j in live_nodes]
    for role in (M.ROLE_COLL, M.ROLE_TARG, M.ROLE_FREE):
        labels.append(role)
        roles.append((role,))
    index = {lbl: k for k, lbl in enumerate(labels)}
    coll, targ, free = index[M.ROLE_COLL], index[M.ROLE_TARG], index[M.ROLE_FREE]

    actions: list[list[str]] = []
    transitions: list[list[dict[int, float]]] = []
    costs: list[list[np.ndarray]] = []
    sbo_completion: dict[int, tuple[int, float]] = {}

    def row(p_fail: float, nxt: int) -> dict[int, float]:
        if p_fail >= 1.0:
            return {coll: 1.0}
        if p_fail <= 0.0:
            return {nxt: 1.0}
        return {nxt: 1.0 - p_fail, coll: p_fail}

    for k, (i, j) in enumerate(live_nodes):
        acts, trans, cvecs = [], [], []
        if i < n_seg:
            out = off_edges[(i, j)]
            acts.append(M.A_OFF)
            trans.append(row(out.p_collide, index.get(f"s{i + 1}_{j}", coll)))
            cvecs.append(out.cost)
            if j == i and i in on_edges:
                out = on_edges[i]
                acts.append(M.A_ON)
                trans.append(row(out.p_collide, index.get(f"s{i + 1}_{i + 1}", coll)))
                cvecs.append(out.cost)
            if (i, j) in sbo_edges:
                surv, cost, m, tail_remaining = sbo_edges[(i, j)]
                acts.append(M.A_SBO)
                trans.append(row(1.0 - surv, index.get(f"s{m}_{m}", coll)))
                cvecs.append(cost)
                sbo_completion[k] = (m, tail_remaining)
        else:
            bel = beliefs[(i, j)]
            pt = float(bel.weights[in_target(bel.x[:, :2], sc.workspace)].sum())
            acts.append(M.A_FIN)
            if pt <= 0.0:
                trans.append({free: 1.0})
            elif pt >= 1.0:
                trans.append({targ: 1.0})
            else:
                trans.append({targ: pt, free: 1.0 - pt})
            cvecs.append(np.zeros(3))
        actions.append(acts)
        transitions.append(trans)
        costs.append(cvecs)

    for absorbing in (coll, targ, free):
        actions.append([M.A_STAY])
        transitions.append([{absorbing: 1.0}])
        costs.append([np.zeros(3)])

    out = M.BeliefMdp(
        labels=labels,
        roles=roles,
        initial=index["s0_0"],
        actions=actions,
        transitions=transitions,
        costs=costs,
        cost_names=COST_NAMES,
        durations=[float(d) for d in [law.delta_t for law in laws]],
        n_segments=n_seg,
        sbo_completion=sbo_completion,
        meta={
            "scenario": sc.name,
            "scenario_hash": sc.source_hash,
            "objectives": list(sc.objectives),
            "t_boot": sc.boot.t_boot,
            "e_boot": sc.boot.e_boot,
            "p_on": sc.power.p_on,
            "p_base": sc.power.p_base,
            "waypoints": sc.waypoints.tolist(),
            "provenance": provenance(
                seed=rng_seed,
                params={"particles_per_node": particles_per_node},
                inputs={"scenario": sc.source_hash} if sc.source_hash else None,
            ),
        },
    )
    out.validate()
    return out
