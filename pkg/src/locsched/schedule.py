"""Localization schedules: MDP policies turned into executable on/off plans.

A schedule assigns each belief node a distribution over {off, on, sbo}; the
composite boot action expands at execution time into a start signal, booting
through whole segments, and localization coming up partway through the
completion segment. Feasibility of a timed action trace is checked against
the rules the decision granularity imposes: starts only from off, boots only
following a start, boot windows covering exactly the boot time, and on only
after boot completion (or from the initially-on state).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import mdp as M
from .abstraction import boot_completion_index
from .errors import InvalidInputError, ScheduleDomainError
from .util import dump_json, load_json

NodeId = tuple[int, int]


@dataclass
class Schedule:
    nodes: dict[NodeId, dict[str, float]]  # (i, j) -> {action: prob}
    boot: dict[NodeId, tuple[int, float]]  # (i, j) -> (completion segment m, offset s)
    durations: list[float]
    t_boot: float
    meta: dict = field(default_factory=dict)

    @property
    def n_segments(self) -> int:
        return len(self.durations)


def policy_to_schedule(policy: M.Policy, mdp: M.BeliefMdp) -> Schedule:
    """Restrict a policy to the belief nodes and recompute boot metadata.

    The completion index of each composite boot action is re-derived from the
    nominal durations (smallest m whose cumulative time exceeds the boot time),
    so the schedule stays executable even without the original MDP.
    """
    nodes: dict[NodeId, dict[str, float]] = {}
    boot: dict[NodeId, tuple[int, float]] = {}
    for s in range(mdp.n_states):
        role = mdp.roles[s]
        if role[0] != "node" or role[1] >= mdp.n_segments:
            continue
        i, j = role[1], role[2]
        dist = policy.distribution(mdp, s)
        out = {}
        for a, p in zip(mdp.actions[s], dist):
            if p > 0 and a in (M.A_OFF, M.A_ON, M.A_SBO):
                out[a] = float(p)
        total = sum(out.values())
        if total <= 0:
            raise InvalidInputError(f"policy at node ({i},{j}) has no schedulable action")
        nodes[(i, j)] = {a: p / total for a, p in out.items()}
        if M.A_SBO in out:
            comp = boot_completion_index(mdp.durations, i, float(mdp.meta.get("t_boot", 0.0)), mdp.n_segments)
            if comp is None:
                raise InvalidInputError(f"boot from node ({i},{j}) cannot complete")
            boot[(i, j)] = comp
    return Schedule(
        nodes=nodes,
        boot=boot,
        durations=list(mdp.durations),
        t_boot=float(mdp.meta.get("t_boot", 0.0)),
        meta={"mdp_scenario": mdp.meta.get("scenario"), "scenario_hash": mdp.meta.get("scenario_hash")},
    )


def schedule_lookup(schedule: Schedule, node: NodeId, rng: np.random.Generator) -> str:
    """Sample the localization action at a belief node."""
    dist = schedule.nodes.get(tuple(node))
    if dist is None:
        raise ScheduleDomainError(f"schedule has no entry for node {node}")
    names = sorted(dist)
    probs = np.array([dist[a] for a in names])
    return names[int(rng.choice(len(names), p=probs / probs.sum()))]


# -- timed traces and feasibility ---------------------------------------------


def simulate_trace(schedule: Schedule, rng: np.random.Generator) -> list[tuple[float, str]]:
    """One sampled mission plan as decision-instant (time, action) entries.

    Times are nominal: every segment is booked at its nominal duration, which
    is exact for the time-triggered (off/boot) segments that boot-window
    feasibility depends on.
    """
    out: list[tuple[float, str]] = []
    t = 0.0
    i, j = 0, 0
    n = schedule.n_segments
    while i < n:
        action = schedule_lookup(schedule, (i, j), rng)
        if action == M.A_OFF:
            out.append((t, "off"))
            t += schedule.durations[i]
            i, j = i + 1, j
        elif action == M.A_ON:
            out.append((t, "on"))
            t += schedule.durations[i]
            i = j = i + 1
        else:
            m, _off = schedule.boot[(i, j)]
            out.append((t, "start"))
            t += schedule.durations[i]
            for k in range(i + 1, m):
                out.append((t, "boot"))
                t += schedule.durations[k]
            # localization is up when segment m ends; next decision happens
            # at the diagonal node (m, m)
            i = j = m
    return out


def check_feasibility(trace: list[tuple[float, str]], t_boot: float, total_time: float | None = None) -> list[str]:
    """All rule violations of a timed action trace (empty list means feasible)."""
    if not trace:
        return ["trace is empty"]
    violations = []
    times = [t for t, _ in trace]
    acts = [a for _, a in trace]
    end_time = total_time if total_time is not None else times[-1] + t_boot + 1.0

    if acts[0] not in ("on", "off"):
        violations.append(f"first action must be on or off, got {acts[0]}")
    for k in range(1, len(acts)):
        prev, cur = acts[k - 1], acts[k]
        if cur == "start" and prev != "off":
            violations.append(f"start at t={times[k]:g} not immediately preceded by off")
        if cur == "boot" and prev not in ("start", "boot"):
            violations.append(f"boot at t={times[k]:g} not preceded by start or boot")
        if cur == "on" and prev not in ("boot", "on"):
            # a start one decision earlier is fine if booting finished within
            # that single segment
            if prev == "start" and times[k] - times[k - 1] >= t_boot - 1e-9:
                pass
            else:
                violations.append(f"on at t={times[k]:g} not preceded by boot or on")
    for k, (t_i, act) in enumerate(trace):
        if act != "start":
            continue
        if t_i + t_boot >= end_time - 1e-9:
            violations.append(f"boot started at t={t_i:g} cannot complete before t={end_time:g}")
        for idx in range(k + 1, len(trace)):
            if times[idx] - t_i < t_boot - 1e-9:
                if acts[idx] != "boot":
                    violations.append(
                        f"boot window after start at t={t_i:g} interrupted by {acts[idx]} at t={times[idx]:g}"
                    )
            else:
                break
    return violations


# -- serialization -------------------------------------------------------------


def schedule_to_doc(schedule: Schedule) -> dict:
    return {
        "format_version": 1,
        "kind": "localization-schedule",
        "nodes": {f"{i},{j}": dist for (i, j), dist in sorted(schedule.nodes.items())},
        "boot": {f"{i},{j}": [m, off] for (i, j), (m, off) in sorted(schedule.boot.items())},
        "durations": schedule.durations,
        "t_boot": schedule.t_boot,
        "meta": schedule.meta,
    }


def schedule_from_doc(doc: dict) -> Schedule:
    if doc.get("kind") != "localization-schedule" or doc.get("format_version") != 1:
        raise InvalidInputError("not a localization-schedule document (or unsupported version)")

    def key(s: str) -> NodeId:
        i, j = s.split(",")
        return int(i), int(j)

    return Schedule(
        nodes={key(s): {a: float(p) for a, p in d.items()} for s, d in doc["nodes"].items()},
        boot={key(s): (int(m), float(off)) for s, (m, off) in doc["boot"].items()},
        durations=[float(d) for d in doc["durations"]],
        t_boot=float(doc["t_boot"]),
        meta=dict(doc.get("meta", {})),
    )


def save_schedule(schedule: Schedule, path) -> None:
    dump_json(schedule_to_doc(schedule), path)


def load_schedule(path) -> Schedule:
    return schedule_from_doc(load_json(path))
