from __future__ import annotations

import numpy as np
import pytest

from locsched.abstraction import build_mdp
from locsched.scenario import scenario_from_dict


def tiny_scenario_dict(**overrides):
    """Small 3-waypoint unicycle scenario that builds in a couple of seconds."""
    doc = {
        "name": "tiny",
        "dynamics": {"kind": "unicycle2", "sigma_w": 0.01, "dt": 0.05},
        "sensors": {"sigma_od": 0.2, "sigma_lo": 0.03, "odometry_rate": 20.0,
                    "localization_rate": 16.0},
        "workspace": {
            "bounds": [0, 0, 10, 10],
            "obstacles": [{"type": "rect", "xmin": 4.0, "ymin": 0.0, "xmax": 5.0, "ymax": 4.3}],
            "target": {"type": "rect", "xmin": 6.3, "ymin": 4.8, "xmax": 7.3, "ymax": 5.8},
        },
        "initial_state": [1.0, 5.0, 0.0, 0.0],
        "waypoints": [[3.0, 5.0], [5.0, 5.2], [6.8, 5.3]],
        "boot": {"t_boot": 5.0, "e_boot": 40.0},
        "power": {"p_on": 8.0, "p_base": 42.0},
        "objectives": ["ptarg", "pcoll", "energy"],
        "controller": {
            "eps_mean": 0.03,
            "reach_radius": 0.2,
            "saturation": {"speed": 0.5, "accel": 1.0, "turn_rate": 2.0},
        },
    }
    doc.update(overrides)
    return doc


@pytest.fixture(scope="session")
def tiny_scenario():
    return scenario_from_dict(tiny_scenario_dict())


@pytest.fixture(scope="session")
def tiny_mdp(tiny_scenario):
    return build_mdp(tiny_scenario, particles_per_node=400, rng_seed=7)


def random_dag_mdp(rng, n_nodes=5, max_actions=2, n_cost_used=1):
    """Random layered DAG over node states plus the three absorbing outcomes."""
    from locsched import mdp as M

    labels = [f"s{i}" for i in range(n_nodes)] + ["coll", "targ", "free"]
    roles = [("node", 0, i) for i in range(n_nodes)] + [("coll",), ("targ",), ("free",)]
    coll, targ, free = n_nodes, n_nodes + 1, n_nodes + 2
    actions, transitions, costs = [], [], []
    for s in range(n_nodes):
        na = int(rng.integers(1, max_actions + 1))
        acts, trans, cvs = [], [], []
        for a in range(na):
            succs = list(range(s + 1, n_nodes))
            n_succ = min(len(succs), int(rng.integers(0, 3)))
            chosen = list(rng.choice(succs, size=n_succ, replace=False)) if n_succ else []
            chosen += [int(rng.choice([coll, targ, free]))]
            probs = rng.dirichlet(np.ones(len(chosen)))
            row: dict[int, float] = {}
            for t, p in zip(chosen, probs):
                row[int(t)] = row.get(int(t), 0.0) + float(p)
            total = sum(row.values())
            row = {t: p / total for t, p in row.items()}
            first = next(iter(row))
            row[first] += 1.0 - sum(row.values())
            acts.append(f"a{a}")
            trans.append(row)
            cv = np.zeros(3)
            for k in range(n_cost_used):
                cv[k] = float(rng.uniform(0.0, 10.0))
            cvs.append(cv)
        actions.append(acts)
        transitions.append(trans)
        costs.append(cvs)
    for ab in (coll, targ, free):
        actions.append(["stay"])
        transitions.append([{ab: 1.0}])
        costs.append([np.zeros(3)])
    mdp = M.BeliefMdp(
        labels, roles, 0, actions, transitions, costs,
        ("energy", "energy_loc", "duration"), [1.0], 1,
    )
    mdp.validate()
    return mdp
