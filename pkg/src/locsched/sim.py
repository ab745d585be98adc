"""Monte Carlo validation of localization schedules on the continuous system.

Missions advance in lockstep through the waypoint segments: every run samples
its schedule action at the segment boundary (composite boot actions commit the
following segments up to their completion), and runs sharing a segment mode
are stepped together through the vectorized closed loop with per-run filter
covariances. Empirical outcome frequencies and mean costs are compared against
the exact values the decision model predicts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import mdp as M
from .closedloop import run_segment
from .errors import InvalidInputError, ScheduleDomainError
from .geometry import in_target
from .scenario import COST_NAMES, Scenario
from .schedule import Schedule
from .util import kahan_mean, rng_stream

OUTCOMES = ("target", "collision", "free")
TRACE_COLUMNS_BASE = ("t",)
MAX_TRACE_POINTS = 2000


@dataclass
class RunRecord:
    outcome: str
    costs: np.ndarray  # (energy, energy_loc, duration)
    trace: list[tuple]  # (t, x..., xhat..., cov_trace, loc_status)


@dataclass
class ValidationReport:
    runs: int
    empirical: dict[str, float]
    ci_halfwidth: dict[str, float]  # 95% normal-approximation half-widths
    theoretical: dict[str, float]
    deviation: dict[str, float]

    def to_doc(self) -> dict:
        return {
            "format_version": 1,
            "kind": "validation-report",
            "runs": self.runs,
            "empirical": self.empirical,
            "ci_halfwidth_95": self.ci_halfwidth,
            "theoretical": self.theoretical,
            "deviation": self.deviation,
        }


def run_batch(
    sc: Scenario,
    schedule: Schedule,
    runs: int,
    seed: int,
    trace_runs: int = 0,
    presample: bool = False,
):
    """Simulate ``runs`` missions; returns (outcomes, costs, traces).

    ``presample`` draws one deterministic action per node per run up front
    (reproducible demo plans) instead of sampling at node entry.
    """
    if schedule.n_segments != sc.n_segments:
        raise InvalidInputError(
            f"schedule covers {schedule.n_segments} segments, scenario has {sc.n_segments}"
        )
    laws = sc.control_laws()
    n = sc.plant.n_x
    rng = rng_stream(seed, 9)

    x = np.tile(sc.initial_state, (runs, 1))
    xhat = x.copy()
    cov = np.zeros((runs, n, n))
    alive = np.ones(runs, dtype=bool)
    outcome = np.full(runs, -1, dtype=int)  # index into OUTCOMES
    costs = np.zeros((runs, 3))
    t_abs = np.zeros(runs)
    j_idx = np.zeros(runs, dtype=int)
    sbo_m = np.full(runs, -1, dtype=int)
    sbo_trem = np.zeros(runs)
    traces: list[list[tuple]] = [[] for _ in range(min(trace_runs, runs))]

    pre_table: dict[tuple[int, int], np.ndarray] | None = None
    if presample:
        pre_table = {}
        for (i, j), dist in sorted(schedule.nodes.items()):
            names = sorted(dist)
            p = np.array([dist[a] for a in names])
            draws = rng.choice(len(names), size=runs, p=p / p.sum())
            pre_table[(i, j)] = np.array([names[d] for d in draws])

    for seg in range(1, sc.n_segments + 1):
        if not alive.any():
            break
        i_dec = seg - 1
        modes = np.full(runs, "", dtype=object)
        trems = np.zeros(runs)

        committed = alive & (sbo_m >= seg)
        modes[committed & (sbo_m > seg)] = "boot"
        tail = committed & (sbo_m == seg)
        modes[tail] = "boot_tail"
        trems[tail] = sbo_trem[tail]

        to_sample = alive & ~committed
        for j in sorted(set(j_idx[to_sample].tolist())):
            sel = np.flatnonzero(to_sample & (j_idx == j))
            node = (i_dec, int(j))
            if node not in schedule.nodes:
                raise ScheduleDomainError(f"schedule has no entry for node {node}")
            if pre_table is not None:
                acts = pre_table[node][sel]
            else:
                dist = schedule.nodes[node]
                names = sorted(dist)
                p = np.array([dist[a] for a in names])
                draws = rng.choice(len(names), size=len(sel), p=p / p.sum())
                acts = np.array([names[d] for d in draws])
            for k, r in enumerate(sel):
                act = acts[k]
                if act == M.A_OFF:
                    modes[r] = "off"
                elif act == M.A_ON:
                    modes[r] = "on"
                else:
                    m, trem = schedule.boot[node]
                    sbo_m[r], sbo_trem[r] = m, trem
                    modes[r] = "boot_tail" if m == seg else "boot"
                    trems[r] = trem if m == seg else 0.0

        groups: dict[tuple[str, float], np.ndarray] = {}
        for key in sorted(set((str(modes[r]), round(float(trems[r]), 9)) for r in np.flatnonzero(alive))):
            sel = np.flatnonzero(alive & (modes == key[0]) & (np.round(trems, 9) == key[1]))
            groups[key] = sel

        for (mode, trem), sel in groups.items():
            recorder = _make_recorder(sel, t_abs[sel].copy(), traces, trace_runs)
            res = run_segment(
                x[sel], xhat[sel], cov[sel], laws[i_dec], sc, mode, rng,
                boot_remaining=trem, recorder=recorder,
            )
            x[sel], xhat[sel], cov[sel] = res.x, res.xhat, res.cov
            costs[sel] += res.costs
            t_abs[sel] += res.t_end
            died = sel[res.collided]
            outcome[died] = OUTCOMES.index("collision")
            alive[died] = False
            if mode == "on":
                j_idx[sel] = seg
            elif mode == "boot_tail":
                j_idx[sel] = seg
                sbo_m[sel] = -1

    survivors = np.flatnonzero(alive)
    if len(survivors):
        hit = in_target(x[survivors, :2], sc.workspace)
        outcome[survivors[hit]] = OUTCOMES.index("target")
        outcome[survivors[~hit]] = OUTCOMES.index("free")

    outcomes = np.array([OUTCOMES[o] for o in outcome])
    return outcomes, costs, [_decimate(rows) for rows in traces]


def _make_recorder(sel: np.ndarray, t0: np.ndarray, traces, trace_runs: int):
    keep = [(k, int(r)) for k, r in enumerate(sel) if r < trace_runs]
    if not keep:
        return None

    def record(t_local, xb, xhatb, covtr, phase, stepped):
        for k, r in keep:
            if stepped[k]:
                traces[r].append((t0[k] + t_local, *xb[k], *xhatb[k], float(covtr[k]), phase))

    return record


def _decimate(rows: list[tuple], max_points: int = MAX_TRACE_POINTS) -> list[tuple]:
    if len(rows) <= max_points:
        return rows
    idx = np.linspace(0, len(rows) - 1, max_points).astype(int)
    return [rows[i] for i in idx]


def simulate_mission(sc: Scenario, schedule: Schedule, rng_seed: int) -> RunRecord:
    """One mission with a full (decimated) trace; deterministic in the seed."""
    outcomes, costs, traces = run_batch(sc, schedule, runs=1, seed=rng_seed, trace_runs=1)
    return RunRecord(outcome=str(outcomes[0]), costs=costs[0], trace=traces[0])


def validate(
    sc: Scenario,
    schedule: Schedule,
    theoretical: dict[str, float],
    runs: int,
    seed: int,
) -> ValidationReport:
    """Empirical outcome/cost statistics vs the decision model's predictions.

    Confidence half-widths use the normal approximation at 95%; cost means use
    compensated summation so aggregation order cannot perturb results.
    """
    if runs < 100:
        raise InvalidInputError("validation needs at least 100 runs")
    outcomes, costs, _ = run_batch(sc, schedule, runs=runs, seed=seed)
    empirical: dict[str, float] = {}
    ci: dict[str, float] = {}
    for name, out in (("ptarg", "target"), ("pcoll", "collision"), ("pfree", "free")):
        p = float(np.count_nonzero(outcomes == out)) / runs
        empirical[name] = p
        ci[name] = 1.96 * math.sqrt(p * (1.0 - p) / runs)
    for k, name in enumerate(COST_NAMES):
        vals = costs[:, k]
        mean = kahan_mean(vals)
        empirical[name] = mean
        ci[name] = 1.96 * float(np.std(vals, ddof=1)) / math.sqrt(runs) if runs > 1 else 0.0
    deviation = {
        key: abs(empirical[key] - theoretical[key]) for key in theoretical if key in empirical
    }
    return ValidationReport(
        runs=runs,
        empirical=empirical,
        ci_halfwidth=ci,
        theoretical={k: float(v) for k, v in theoretical.items()},
        deviation=deviation,
    )
