from __future__ import annotations

import numpy as np
import pytest

from locsched import abstraction as A
from locsched import mdp as M
from locsched.scenario import scenario_from_dict
from locsched.util import rng_stream

from conftest import tiny_scenario_dict


def test_state_count_formula():
    assert A.state_count(1) == 6
    assert A.state_count(3) == 13
    assert A.state_count(26) == 381


def test_boot_completion_smallest_index():
    # durations 2,2,2 with t_boot 5: from node 0 boot spans segments 1..3
    assert A.boot_completion_index([2.0, 2.0, 2.0], 0, 5.0, 3) == (3, 1.0)
    # cannot complete from node 1 (remaining 4 < 5)
    assert A.boot_completion_index([2.0, 2.0, 2.0], 1, 5.0, 3) is None
    # exact completion at the trajectory end counts as uncompletable
    assert A.boot_completion_index([2.0, 3.0], 0, 5.0, 2) is None
    # boot shorter than the next segment completes inside it
    assert A.boot_completion_index([2.0, 2.0], 0, 1.5, 2) == (1, 1.5)


def test_propagate_no_obstacles_never_collides():
    doc = tiny_scenario_dict()
    doc["workspace"]["obstacles"] = []
    sc = scenario_from_dict(doc)
    bel = A.initial_belief(sc, 300)
    out = A.propagate_segment(bel, sc.control_laws()[0], "off", sc, rng_stream(0, 1))
    assert out.p_collide == 0.0
    assert len(out.belief) == 300
    assert out.belief.weights.sum() == pytest.approx(1.0, abs=1e-12)


def test_propagate_belief_inside_obstacle_all_collide():
    sc = scenario_from_dict(tiny_scenario_dict())
    bel = A.initial_belief(sc, 100)
    bel.x[:, :2] = [4.5, 2.0]  # inside the obstacle
    out = A.propagate_segment(bel, sc.control_laws()[0], "off", sc, rng_stream(0, 2))
    assert out.p_collide == 1.0
    assert out.belief is None


def test_propagate_collision_probability_vs_high_resolution_oracle():
    # Corridor-style segment: 2000-particle estimate within 3-sigma binomial
    # of a 1e5-particle run of the same propagation.
    doc = tiny_scenario_dict()
    doc["workspace"]["obstacles"] = [{"type": "rect", "xmin": 2.0, "ymin": 5.04, "xmax": 2.8, "ymax": 6.0}]
    sc = scenario_from_dict(doc)
    law = sc.control_laws()[0]

    def run(n, key):
        bel = A.initial_belief(sc, n)
        return A.propagate_segment(bel, law, "off", sc, rng_stream(0, key)).p_collide

    p_ref = run(100_000, 11)
    assert 0.005 < p_ref < 0.6, f"oracle probability {p_ref} out of informative range"
    p_est = run(2000, 12)
    sigma = np.sqrt(p_ref * (1 - p_ref) / 2000)
    assert abs(p_est - p_ref) < 3 * sigma + 0.005


def test_snap_belief_respects_free_space():
    from locsched.geometry import in_collision

    doc = tiny_scenario_dict()
    # obstacle grazing the second waypoint's steady-state cloud
    doc["workspace"]["obstacles"] = [{"type": "rect", "xmin": 5.01, "ymin": 4.0, "xmax": 6.0, "ymax": 5.19}]
    sc = scenario_from_dict(doc)
    law = sc.control_laws()[1]
    bel = A.snap_belief(sc, law, rng_stream(0, 3), 2000)
    assert not in_collision(bel.x[:, :2], sc.workspace, sc.footprint).any()
    assert np.allclose(bel.xhat, law.target_state)
    assert (bel.cov == law.qss).all()


def test_build_tiny_mdp_structure(tiny_mdp, tiny_scenario):
    assert tiny_mdp.n_states == A.state_count(3)
    # transition rows are distributions and the graph is a DAG
    tiny_mdp.validate()
    # triangular reachability: from (i, j), off goes to (i+1, j), on to
    # (i+1, i+1), composite boot to (m, m)
    for s in range(tiny_mdp.n_states):
        role = tiny_mdp.roles[s]
        if role[0] != "node" or role[1] >= tiny_mdp.n_segments:
            continue
        i, j = role[1], role[2]
        for a, name in enumerate(tiny_mdp.actions[s]):
            for t in tiny_mdp.transitions[s][a]:
                trole = tiny_mdp.roles[t]
                if trole[0] != "node":
                    continue
                if name == M.A_OFF:
                    assert (trole[1], trole[2]) == (i + 1, j)
                elif name == M.A_ON:
                    assert (trole[1], trole[2]) == (i + 1, i + 1)
                elif name == M.A_SBO:
                    m, _ = tiny_mdp.sbo_completion[s]
                    assert (trole[1], trole[2]) == (m, m)


def test_action_availability(tiny_mdp):
    for s in range(tiny_mdp.n_states):
        role = tiny_mdp.roles[s]
        if role[0] != "node":
            continue
        i, j = role[1], role[2]
        names = tiny_mdp.actions[s]
        if i == tiny_mdp.n_segments:
            assert names == [M.A_FIN]
        elif i == j:
            assert names == [M.A_OFF, M.A_ON]
        else:
            assert names[0] == M.A_OFF and M.A_ON not in names


def test_build_determinism_and_thread_independence(tiny_scenario):
    doc1 = M.mdp_to_doc(A.build_mdp(tiny_scenario, particles_per_node=150, rng_seed=5))
    doc2 = M.mdp_to_doc(A.build_mdp(tiny_scenario, particles_per_node=150, rng_seed=5))
    doc3 = M.mdp_to_doc(A.build_mdp(tiny_scenario, particles_per_node=150, rng_seed=5, threads=3))
    assert doc1 == doc2 == doc3
    doc4 = M.mdp_to_doc(A.build_mdp(tiny_scenario, particles_per_node=150, rng_seed=6))
    assert doc4 != doc1


def test_segment_cost_examples():
    # off for one second costs the base power; on adds the module power; boot
    # draws the boot energy over the boot time.
    doc = tiny_scenario_dict()
    doc["workspace"]["obstacles"] = []
    doc["dynamics"]["sigma_w"] = 0.0
    sc = scenario_from_dict(doc)
    law = sc.control_laws()[0]
    law.delta_t = 1.0
    bel = A.initial_belief(sc, 50)
    out_off = A.propagate_segment(bel, law, "off", sc, rng_stream(0, 4))
    assert out_off.cost[0] == pytest.approx(42.0, abs=1e-9)
    assert out_off.cost[1] == pytest.approx(0.0, abs=1e-12)
    assert out_off.duration == pytest.approx(1.0, abs=1e-12)
    bel = A.initial_belief(sc, 50)
    out_boot = A.propagate_segment(bel, law, "boot", sc, rng_stream(0, 5))
    assert out_boot.cost[0] == pytest.approx(50.0, abs=1e-9)  # 42 + 40/5
    assert out_boot.cost[1] == pytest.approx(8.0, abs=1e-9)


def test_costs_nonnegative_and_rows_normalized(tiny_mdp):
    for s in range(tiny_mdp.n_states):
        for a in range(len(tiny_mdp.actions[s])):
            assert (tiny_mdp.costs[s][a] >= 0).all()
            assert sum(tiny_mdp.transitions[s][a].values()) == pytest.approx(1.0, abs=1e-12)


def test_more_noise_does_not_reduce_collision():
    # Scaling the process noise covariance by 4 never decreases the off-mode
    # collision probability (checked statistically on pinched segments).
    base = tiny_scenario_dict()
    base["workspace"]["obstacles"] = [{"type": "rect", "xmin": 2.0, "ymin": 5.05, "xmax": 2.8, "ymax": 6.0}]
    rng_keys = range(6)
    lo = scenario_from_dict(base)
    hi_doc = tiny_scenario_dict()
    hi_doc["workspace"]["obstacles"] = base["workspace"]["obstacles"]
    hi_doc["dynamics"]["sigma_w"] = 0.02  # Q scaled by 4
    hi = scenario_from_dict(hi_doc)
    p_lo = np.mean([
        A.propagate_segment(A.initial_belief(lo, 4000), lo.control_laws()[0], "off", lo, rng_stream(0, k)).p_collide
        for k in rng_keys
    ])
    p_hi = np.mean([
        A.propagate_segment(A.initial_belief(hi, 4000), hi.control_laws()[0], "off", hi, rng_stream(1, k)).p_collide
        for k in rng_keys
    ])
    sigma = np.sqrt(max(p_lo, p_hi) / (4000 * len(list(rng_keys))))
    assert p_hi >= p_lo - 3 * sigma


def test_sbo_cost_includes_boot_energy(tiny_mdp):
    # Composite boot actions must charge the boot rate on top of base power.
    found = 0
    for s, (m, off) in tiny_mdp.sbo_completion.items():
        a = tiny_mdp.actions[s].index(M.A_SBO)
        cost = tiny_mdp.costs[s][a]
        # at least the full boot energy, plus module power for the on-tail
        assert cost[1] >= tiny_mdp.meta["e_boot"] - 1e-6
        assert cost[1] <= tiny_mdp.meta["e_boot"] + 8.0 * cost[2]
        found += 1
    assert found >= 1


def test_empty_belief_propagation_rejected(tiny_scenario):
    with pytest.raises(Exception):
        A.propagate_segment(None, tiny_scenario.control_laws()[0], "off", tiny_scenario, rng_stream(0, 9))
