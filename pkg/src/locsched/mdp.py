"""Finite MDP with vector-valued costs: data model, exact evaluation, sampling.

States are belief nodes ``(i, j)`` (waypoint index, last-localization index)
plus three absorbing outcomes (collision, target, free space). The transition
structure produced by the abstraction is a DAG over the nodes with absorbing
self-loops, so policies are evaluated exactly by one backward substitution in
topological order; no fixed-point iteration is involved.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, InvalidPolicyError, StructureError, UnsupportedStructureError
from .util import dump_json, load_json, provenance

A_OFF, A_ON, A_SBO, A_FIN, A_STAY = "off", "on", "sbo", "fin", "stay"
ROLE_COLL, ROLE_TARG, ROLE_FREE = "coll", "targ", "free"

PROB_TOL = 1e-12


@dataclass(frozen=True)
class Objective:
    """One optimization objective over the MDP."""

    name: str
    kind: str  # "reach" | "cost"
    sense: str  # "max" | "min"
    key: str | int  # absorbing role for reach, cost-vector index for cost

    @property
    def sign(self) -> float:
        """+1 for maximized objectives, -1 for minimized (all-maximize orientation)."""
        return 1.0 if self.sense == "max" else -1.0


def build_objectives(names, cost_names) -> list[Objective]:
    """Map objective names (ptarg, pcoll, energy, duration) onto the MDP."""
    objs = []
    for name in names:
        if name == "ptarg":
            objs.append(Objective("ptarg", "reach", "max", ROLE_TARG))
        elif name == "pcoll":
            objs.append(Objective("pcoll", "reach", "min", ROLE_COLL))
        elif name in cost_names:
            objs.append(Objective(name, "cost", "min", list(cost_names).index(name)))
        else:
            raise InvalidInputError(f"unknown objective {name!r} for cost entries {cost_names}")
    if len(objs) < 2:
        raise InvalidInputError("at least two objectives are required")
    if len(objs) > 4:
        raise InvalidInputError("at most four objectives are supported")
    return objs


@dataclass
class BeliefMdp:
    labels: list[str]
    roles: list[tuple]  # ("node", i, j) or ("coll",)/("targ",)/("free",)
    initial: int
    actions: list[list[str]]
    transitions: list[list[dict[int, float]]]
    costs: list[list[np.ndarray]]
    cost_names: tuple[str, ...]
    durations: list[float]  # nominal segment durations, seconds
    n_segments: int
    sbo_completion: dict[int, tuple[int, float]] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @property
    def n_states(self) -> int:
        return len(self.labels)

    def role_index(self, role: str) -> int:
        for k, r in enumerate(self.roles):
            if r[0] == role:
                return k
        raise InvalidInputError(f"no state with role {role!r}")

    def node_index(self, i: int, j: int) -> int:
        try:
            return self.labels.index(f"s{i}_{j}")
        except ValueError as exc:
            raise InvalidInputError(f"no node ({i},{j})") from exc

    def is_absorbing(self, s: int) -> bool:
        return self.roles[s][0] != "node"

    def state_action_pairs(self) -> int:
        return sum(len(acts) for acts in self.actions)

    def validate(self) -> None:
        for s in range(self.n_states):
            if not self.actions[s]:
                raise InvalidInputError(f"state {self.labels[s]} has no actions")
            for a, _name in enumerate(self.actions[s]):
                row = self.transitions[s][a]
                total = sum(row.values())
                if abs(total - 1.0) > PROB_TOL:
                    raise InvalidInputError(
                        f"transition row {self.labels[s]}/{self.actions[s][a]} sums to {total!r}"
                    )
                if (self.costs[s][a] < 0).any():
                    raise InvalidInputError(f"negative cost at {self.labels[s]}/{self.actions[s][a]}")
            if self.is_absorbing(s):
                if self.actions[s] != [A_STAY] or self.transitions[s][0] != {s: 1.0}:
                    raise InvalidInputError(f"absorbing state {self.labels[s]} must self-loop")
                if self.costs[s][0].any():
                    raise InvalidInputError(f"absorbing state {self.labels[s]} must be zero-cost")
        self.topological_order()

    def topological_order(self) -> list[int]:
        """Non-absorbing states in dependency order (raises on cycles)."""
        indeg = np.zeros(self.n_states, dtype=int)
        succ: list[set[int]] = [set() for _ in range(self.n_states)]
        for s in range(self.n_states):
            if self.is_absorbing(s):
                continue
            for row in self.transitions[s]:
                for t in row:
                    if not self.is_absorbing(t) and t not in succ[s]:
                        succ[s].add(t)
                        indeg[t] += 1
        frontier = sorted(
            s for s in range(self.n_states) if not self.is_absorbing(s) and indeg[s] == 0
        )
        order: list[int] = []
        while frontier:
            s = frontier.pop(0)
            order.append(s)
            for t in sorted(succ[s]):
                indeg[t] -= 1
                if indeg[t] == 0:
                    frontier.append(t)
            frontier.sort()
        if len(order) != sum(1 for s in range(self.n_states) if not self.is_absorbing(s)):
            raise UnsupportedStructureError("decision model is not acyclic")
        return order


@dataclass
class Policy:
    """Per-state distribution over that state's actions, keyed by action name."""

    choices: dict[str, dict[str, float]]  # state label -> {action: prob}

    def distribution(self, mdp: BeliefMdp, s: int) -> list[float]:
        label = mdp.labels[s]
        avail = mdp.actions[s]
        dist = self.choices.get(label)
        if dist is None:
            if mdp.is_absorbing(s):
                return [1.0]
            raise InvalidPolicyError(f"policy has no choice for state {label}")
        probs = [0.0] * len(avail)
        for name, p in dist.items():
            if p < 0:
                raise InvalidPolicyError(f"negative probability at {label}/{name}")
            if p == 0.0:
                continue
            if name not in avail:
                raise InvalidPolicyError(f"action {name!r} not available at {label}")
            probs[avail.index(name)] = float(p)
        total = sum(probs)
        if abs(total - 1.0) > 1e-9:
            raise InvalidPolicyError(f"distribution at {label} sums to {total}")
        return [p / total for p in probs]


def deterministic_policy(mdp: BeliefMdp, pick: dict[int, int]) -> Policy:
    """Policy from a state-index -> action-index map (absorbing states implicit)."""
    choices = {}
    for s, a in pick.items():
        choices[mdp.labels[s]] = {mdp.actions[s][a]: 1.0}
    return Policy(choices)


def baseline_policy(mdp: BeliefMdp, which: str) -> Policy:
    """The always-on / always-off localization baselines.

    "on" keeps to the diagonal nodes choosing the on action; off-diagonal
    nodes (unreachable under it) fall back to their first action.
    """
    if which not in ("on", "off"):
        raise InvalidInputError(f"baseline must be 'on' or 'off', got {which!r}")
    pick = {}
    for s in range(mdp.n_states):
        if mdp.is_absorbing(s):
            continue
        names = mdp.actions[s]
        if which == "on" and A_ON in names:
            pick[s] = names.index(A_ON)
        elif A_OFF in names:
            pick[s] = names.index(A_OFF)
        else:
            pick[s] = 0
    return deterministic_policy(mdp, pick)


def evaluate_all(mdp: BeliefMdp, policy: Policy) -> dict[str, float]:
    """Reach probabilities and expected totals for every cost entry.

    Exact backward substitution along the topological order of the DAG.
    """
    n_cost = len(mdp.cost_names)
    n_val = 3 + n_cost  # targ, coll, free reach + cost totals
    values = np.zeros((mdp.n_states, n_val))
    for role, slot in ((ROLE_TARG, 0), (ROLE_COLL, 1), (ROLE_FREE, 2)):
        values[mdp.role_index(role), slot] = 1.0

    order = mdp.topological_order()
    for s in reversed(order):
        dist = policy.distribution(mdp, s)
        acc = np.zeros(n_val)
        for a, pa in enumerate(dist):
            if pa == 0.0:
                continue
            contrib = np.zeros(n_val)
            contrib[3:] = mdp.costs[s][a]
            for t, p in mdp.transitions[s][a].items():
                contrib += p * values[t]
            acc += pa * contrib
        values[s] = acc

    v0 = values[mdp.initial]
    out = {"ptarg": float(v0[0]), "pcoll": float(v0[1]), "pfree": float(v0[2])}
    for k, name in enumerate(mdp.cost_names):
        out[name] = float(v0[3 + k])
    return out


def evaluate_policy(mdp: BeliefMdp, policy: Policy, objectives: list[Objective]) -> np.ndarray:
    """Objective vector (natural signs) for a policy at the initial state."""
    all_vals = evaluate_all(mdp, policy)
    out = []
    for obj in objectives:
        if obj.kind == "reach":
            out.append(all_vals["ptarg" if obj.key == ROLE_TARG else "pcoll"])
        else:
            out.append(all_vals[mdp.cost_names[obj.key]])
    return np.array(out)


def simulate_chain(mdp: BeliefMdp, policy: Policy, rng: np.random.Generator):
    """Sample one path to absorption: (absorbing role, cost vector, action path)."""
    s = mdp.initial
    costs = np.zeros(len(mdp.cost_names))
    path: list[tuple[str, str]] = []
    for _ in range(mdp.n_states + 1):
        if mdp.is_absorbing(s):
            return mdp.roles[s][0], costs, path
        dist = policy.distribution(mdp, s)
        a = int(rng.choice(len(dist), p=dist))
        costs += mdp.costs[s][a]
        path.append((mdp.labels[s], mdp.actions[s][a]))
        row = mdp.transitions[s][a]
        nxt = list(row.keys())
        s = int(rng.choice(nxt, p=np.array([row[t] for t in nxt])))
    raise StructureError("chain walk exceeded the state count; model is not a DAG")


# -- serialization -----------------------------------------------------------


def mdp_to_doc(mdp: BeliefMdp) -> dict:
    return {
        "format_version": 1,
        "kind": "belief-mdp",
        "labels": mdp.labels,
        "roles": [list(r) for r in mdp.roles],
        "initial": mdp.initial,
        "actions": mdp.actions,
        "transitions": [
            [{str(t): p for t, p in row.items()} for row in rows] for rows in mdp.transitions
        ],
        "costs": [[c.tolist() for c in rows] for rows in mdp.costs],
        "cost_names": list(mdp.cost_names),
        "durations": list(mdp.durations),
        "n_segments": mdp.n_segments,
        "sbo_completion": {str(s): [m, off] for s, (m, off) in mdp.sbo_completion.items()},
        "meta": mdp.meta,
    }


def mdp_from_doc(doc: dict) -> BeliefMdp:
    if doc.get("kind") != "belief-mdp" or doc.get("format_version") != 1:
        raise InvalidInputError("not a belief-mdp document (or unsupported version)")
    mdp = BeliefMdp(
        labels=list(doc["labels"]),
        roles=[tuple(r) for r in doc["roles"]],
        initial=int(doc["initial"]),
        actions=[list(a) for a in doc["actions"]],
        transitions=[
            [{int(t): float(p) for t, p in row.items()} for row in rows]
            for rows in doc["transitions"]
        ],
        costs=[[np.asarray(c, dtype=float) for c in rows] for rows in doc["costs"]],
        cost_names=tuple(doc["cost_names"]),
        durations=[float(d) for d in doc["durations"]],
        n_segments=int(doc["n_segments"]),
        sbo_completion={int(s): (int(m), float(off)) for s, (m, off) in doc["sbo_completion"].items()},
        meta=dict(doc.get("meta", {})),
    )
    mdp.validate()
    return mdp


def save_mdp(mdp: BeliefMdp, path) -> None:
    dump_json(mdp_to_doc(mdp), path)


def load_mdp(path) -> BeliefMdp:
    return mdp_from_doc(load_json(path))


def policy_to_doc(policy: Policy) -> dict:
    return {"choices": {s: dict(d) for s, d in sorted(policy.choices.items())}}


def policy_from_doc(doc: dict) -> Policy:
    return Policy({s: {a: float(p) for a, p in d.items()} for s, d in doc["choices"].items()})
