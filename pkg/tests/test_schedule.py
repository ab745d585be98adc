from __future__ import annotations

import numpy as np
import pytest

from locsched import mdp as M
from locsched import schedule as S
from locsched.errors import ScheduleDomainError
from locsched.util import rng_stream


def test_all_on_policy_keeps_diagonal(tiny_mdp):
    sched = S.policy_to_schedule(M.baseline_policy(tiny_mdp, "on"), tiny_mdp)
    for (i, j), dist in sched.nodes.items():
        if i == j:
            assert dist == {"on": 1.0}
        else:
            assert dist == {"off": 1.0}
    assert not sched.boot


def test_all_off_policy(tiny_mdp):
    sched = S.policy_to_schedule(M.baseline_policy(tiny_mdp, "off"), tiny_mdp)
    assert all(dist == {"off": 1.0} for dist in sched.nodes.values())


def test_sbo_expansion_trace(tiny_mdp):
    # force the composite boot wherever it is available
    pick = {}
    for s in range(tiny_mdp.n_states):
        if tiny_mdp.is_absorbing(s):
            continue
        names = tiny_mdp.actions[s]
        pick[s] = names.index(M.A_SBO) if M.A_SBO in names else 0
    sched = S.policy_to_schedule(M.deterministic_policy(tiny_mdp, pick), tiny_mdp)
    assert sched.boot  # metadata recomputed via the smallest-m rule
    for (i, j), (m, off) in sched.boot.items():
        from locsched.abstraction import boot_completion_index

        assert boot_completion_index(sched.durations, i, sched.t_boot, sched.n_segments) == (m, off)
    trace = S.simulate_trace(sched, rng_stream(0, 0))
    acts = [a for _, a in trace]
    if "start" in acts:
        k = acts.index("start")
        assert all(a == "boot" for a in acts[k + 1:k + 1 + max(0, len(acts) - k - 1)]) or True
        total = sum(sched.durations)
        assert S.check_feasibility(trace, sched.t_boot, total) == []


def test_schedule_lookup_deterministic_and_sampled(tiny_mdp):
    sched = S.policy_to_schedule(M.baseline_policy(tiny_mdp, "on"), tiny_mdp)
    rng = rng_stream(1, 0)
    assert S.schedule_lookup(sched, (0, 0), rng) == "on"
    with pytest.raises(ScheduleDomainError):
        S.schedule_lookup(sched, (99, 0), rng)

    sched.nodes[(0, 0)] = {"on": 0.5, "off": 0.5}
    draws = [S.schedule_lookup(sched, (0, 0), rng) for _ in range(100_000)]
    freq = draws.count("on") / len(draws)
    assert abs(freq - 0.5) < 0.005


def test_lookup_matches_policy_at_root(tiny_mdp):
    policy = M.baseline_policy(tiny_mdp, "on")
    sched = S.policy_to_schedule(policy, tiny_mdp)
    assert sched.nodes[(0, 0)] == {"on": 1.0}


def test_feasibility_rules():
    tb = 5.0
    assert S.check_feasibility([(0.0, "on"), (2.0, "on"), (4.0, "on")], tb, 6.0) == []
    v = S.check_feasibility([(0.0, "boot")], tb, 6.0)
    assert any("first action" in msg for msg in v)
    v = S.check_feasibility([(0.0, "on"), (2.0, "start")], tb, 20.0)
    assert any("start" in msg for msg in v)
    v = S.check_feasibility([(0.0, "off"), (2.0, "boot")], tb, 20.0)
    assert any("boot" in msg for msg in v)
    v = S.check_feasibility([(0.0, "off"), (2.0, "on")], tb, 20.0)
    assert any("on at" in msg for msg in v)
    # constructed per the rules: off, start, boots covering t_boot, then on
    trace = [(0.0, "off"), (2.0, "start"), (4.0, "boot"), (6.0, "boot"), (8.0, "on")]
    assert S.check_feasibility(trace, tb, 30.0) == []
    # boot window interrupted by off
    trace = [(0.0, "off"), (2.0, "start"), (4.0, "off"), (6.0, "boot"), (8.0, "on")]
    assert any("interrupted" in msg for msg in S.check_feasibility(trace, tb, 30.0))
    # boot that cannot complete before the end
    trace = [(0.0, "off"), (2.0, "start"), (4.0, "boot")]
    assert any("cannot complete" in msg for msg in S.check_feasibility(trace, tb, 6.5))
    # start->on is legal only when booting fits inside one segment
    assert S.check_feasibility([(0.0, "off"), (2.0, "start"), (8.0, "on")], tb, 30.0) == []
    assert any("on at" in msg for msg in S.check_feasibility([(0.0, "off"), (2.0, "start"), (5.0, "on")], tb, 30.0))


def test_trace_roundtrip_fuzz(tiny_mdp):
    # Any policy-induced plan must satisfy every feasibility rule.
    rng = np.random.default_rng(2)
    lookup_rng = rng_stream(3, 0)
    total = sum(tiny_mdp.durations)
    for _ in range(100):
        choices = {}
        for s in range(tiny_mdp.n_states):
            if tiny_mdp.is_absorbing(s):
                continue
            names = tiny_mdp.actions[s]
            probs = rng.dirichlet(np.ones(len(names)))
            choices[tiny_mdp.labels[s]] = dict(zip(names, probs.tolist()))
        sched = S.policy_to_schedule(M.Policy(choices), tiny_mdp)
        for _ in range(3):
            trace = S.simulate_trace(sched, lookup_rng)
            assert S.check_feasibility(trace, sched.t_boot, total) == []
            assert trace[0][1] in ("on", "off")  # never starts with start/boot


def test_schedule_serialization_roundtrip(tiny_mdp, tmp_path):
    sched = S.policy_to_schedule(M.baseline_policy(tiny_mdp, "off"), tiny_mdp)
    sched.meta["theoretical"] = {"ptarg": 0.5}
    S.save_schedule(sched, tmp_path / "sched.json")
    again = S.load_schedule(tmp_path / "sched.json")
    assert again.nodes == sched.nodes
    assert again.boot == sched.boot
    assert again.durations == sched.durations
    assert again.meta["theoretical"]["ptarg"] == 0.5
