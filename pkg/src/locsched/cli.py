"""Command-line front end for the scheduling pipeline.

Subcommands mirror the pipeline stages: ``abstract`` builds the decision
model from a scenario, ``pareto`` computes the trade-off front, ``synthesize``
turns a selected point into a localization schedule, ``simulate`` validates a
schedule by Monte Carlo, and ``report`` tabulates savings against a baseline.
All diagnostics go to stderr; data lands only in the requested output files,
each of which embeds the tool version, input hashes, seeds, and parameters.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import mdp as M
from . import pareto as P
from .abstraction import build_mdp
from .errors import InvalidInputError, LocschedError
from .scenario import load_scenario
from .schedule import Schedule, policy_to_schedule, save_schedule, load_schedule, schedule_to_doc
from .sim import run_batch, validate
from .util import dump_json, file_sha256, load_json, provenance, write_csv, fmt_float

logger = logging.getLogger("locsched")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except LocschedError as exc:
        logger.error("%s", exc)
        return 1
    except OSError as exc:
        logger.error("%s", exc)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="locsched", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("abstract", help="build the belief decision model from a scenario")
    p.add_argument("--scenario", required=True)
    p.add_argument("--particles", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_abstract)

    p = sub.add_parser("pareto", help="compute the trade-off front of a decision model")
    p.add_argument("--mdp", required=True)
    p.add_argument("--objectives", default=None, help="comma list, e.g. ptarg,pcoll,energy")
    p.add_argument("--gap-tol", type=float, default=1e-6)
    p.add_argument("--max-queries", type=int, default=256)
    p.add_argument("--out", required=True, help="front JSON path; CSV written alongside")
    p.add_argument("--plot", default=None, help="optional figure path (svg/png)")
    p.set_defaults(func=cmd_pareto)

    p = sub.add_parser("synthesize", help="schedule for a chosen front point")
    p.add_argument("--mdp", required=True)
    p.add_argument("--front", required=True)
    p.add_argument("--point", required=True, help="vertex index or bounds like 'ptarg>=0.99,pcoll<=0.01'")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("simulate", help="Monte Carlo validation of a schedule")
    p.add_argument("--scenario", required=True)
    p.add_argument("--schedule", required=True)
    p.add_argument("--runs", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="report JSON path; traces CSV written alongside")
    p.add_argument("--svg", default=None, help="optional trajectory figure path")
    p.add_argument("--trace-runs", type=int, default=50)
    p.add_argument("--presample", action="store_true", help="draw one deterministic plan per run up front")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="savings table for a front against a baseline schedule")
    p.add_argument("--front", required=True)
    p.add_argument("--baseline", choices=("on", "off"), default="on")
    p.add_argument("--out", required=True)
    p.add_argument("--plot", default=None, help="optional figure path (svg/png)")
    p.set_defaults(func=cmd_report)
    return parser


def cmd_abstract(args) -> None:
    sc = load_scenario(args.scenario)
    logger.info("building decision model for %s (%d waypoints, %d particles)",
                sc.name, sc.n_segments, args.particles)
    mdp = build_mdp(sc, particles_per_node=args.particles, rng_seed=args.seed, threads=args.threads)
    M.save_mdp(mdp, args.out)
    logger.info("wrote %s: %d states, %d state-action pairs", args.out, mdp.n_states,
                mdp.state_action_pairs())


def cmd_pareto(args) -> None:
    mdp = M.load_mdp(args.mdp)
    names = (args.objectives.split(",") if args.objectives
             else list(mdp.meta.get("objectives", ["ptarg", "pcoll", "energy"])))
    objectives = M.build_objectives([n.strip() for n in names], mdp.cost_names)
    front = P.compute_front(mdp, objectives, gap_tol=args.gap_tol, max_queries=args.max_queries)
    front.baselines = {
        which: M.evaluate_all(mdp, M.baseline_policy(mdp, which)) for which in ("on", "off")
    }
    front.vertices.sort(key=lambda v: (-v.values.get("ptarg", 0.0), v.values.get("energy", 0.0)))
    prov = provenance(
        params={"objectives": [o.name for o in objectives], "gap_tol": args.gap_tol,
                "max_queries": args.max_queries},
        inputs={"mdp": file_sha256(args.mdp)},
    )
    out = Path(args.out)
    dump_json(P.front_to_doc(front, extra_meta={"provenance": prov}), out)
    _write_front_csv(front, out.with_suffix(".csv"), prov)
    if args.plot:
        from . import plots

        plots.plot_front(front, args.plot)
    logger.info("front: %d vertices, refinement gap %.3e, %d queries",
                len(front.vertices), front.refinement_gap, front.meta.get("queries", -1))


def _write_front_csv(front: P.ParetoFront, path: Path, prov: dict) -> None:
    value_keys = [o.name for o in front.objectives]
    for extra in ("energy_loc",):
        if extra not in value_keys and any(extra in v.values for v in front.vertices):
            value_keys.append(extra)
    base = front.baselines.get("on", {})
    cost_keys = [k for k in value_keys if k in ("energy", "energy_loc", "duration")]
    header = ["row", *value_keys, *[f"saved_{k}_pct" for k in cost_keys]]
    rows = []
    if base:
        rows.append(["baseline_on", *[base.get(k, "") for k in value_keys], *["" for _ in cost_keys]])
    for idx, v in enumerate(front.vertices):
        row = [str(idx), *[v.values.get(k, "") for k in value_keys]]
        for k in cost_keys:
            b = base.get(k)
            row.append("" if not b else fmt_float(100.0 * (b - v.values[k]) / b))
        rows.append(row)
    write_csv(path, header, rows, comment=f"locsched front, mdp {prov['input_hashes']['mdp'][:12]}")


def cmd_synthesize(args) -> None:
    mdp = M.load_mdp(args.mdp)
    front = P.front_from_doc(load_json(args.front), cost_names=mdp.cost_names)
    objectives = front.objectives
    selector = args.point.strip()
    if selector.isdigit():
        idx = int(selector)
        if idx >= len(front.vertices):
            raise InvalidInputError(f"front has {len(front.vertices)} vertices, no index {idx}")
        policy = front.vertices[idx].policy
        achieved = M.evaluate_all(mdp, policy)
    else:
        point = P.parse_point(selector, objectives)
        policy, _vec = P.synthesize_policy(mdp, objectives, point, front)
        achieved = M.evaluate_all(mdp, policy)
    schedule = policy_to_schedule(policy, mdp)
    schedule.meta.update(
        theoretical=achieved,
        selector=selector,
        provenance=provenance(inputs={"mdp": file_sha256(args.mdp), "front": file_sha256(args.front)},
                              params={"point": selector}),
    )
    save_schedule(schedule, args.out)
    logger.info("schedule written to %s (theoretical %s)", args.out,
                {k: round(v, 4) for k, v in achieved.items()})


def cmd_simulate(args) -> None:
    sc = load_scenario(args.scenario)
    schedule = load_schedule(args.schedule)
    expect = schedule.meta.get("scenario_hash")
    if expect and sc.source_hash and expect != sc.source_hash:
        raise InvalidInputError(
            "schedule was synthesized for a different scenario file (hash mismatch)"
        )
    theoretical = schedule.meta.get("theoretical", {})
    report = validate(sc, schedule, theoretical, runs=args.runs, seed=args.seed)
    _outcomes, _costs, traces = run_batch(
        sc, schedule, runs=min(args.trace_runs, args.runs), seed=args.seed,
        trace_runs=min(args.trace_runs, args.runs), presample=args.presample,
    )
    out = Path(args.out)
    doc = report.to_doc()
    doc["provenance"] = provenance(
        seed=args.seed,
        params={"runs": args.runs, "trace_runs": args.trace_runs, "presample": bool(args.presample)},
        inputs={"scenario": sc.source_hash, "schedule": file_sha256(args.schedule)},
    )
    dump_json(doc, out)
    _write_traces_csv(sc, traces, out.with_suffix("").as_posix() + "_traces.csv")
    if args.svg:
        from . import plots

        plots.plot_trajectories(sc, traces, args.svg)
    logger.info("validation: %s", {k: round(v, 4) for k, v in report.empirical.items()})


def _write_traces_csv(sc, traces, path) -> None:
    n = sc.plant.n_x
    state_cols = ["x", "y", "v", "heading"][:n] if sc.plant.kind == "unicycle2" else ["x", "y"]
    header = ["run", "t", *state_cols, *[f"est_{c}" for c in state_cols], "cov_trace", "loc_status"]
    rows = []
    for r, trace in enumerate(traces):
        for row in trace:
            rows.append([str(r), *row])
    write_csv(path, header, rows, comment=f"locsched traces, scenario {sc.name}")


def cmd_report(args) -> None:
    front = P.front_from_doc(load_json(args.front))
    if not front.vertices:
        raise InvalidInputError("front file contains no vertices")
    baseline = front.baselines.get(args.baseline)
    if not baseline:
        raise InvalidInputError(f"front file has no embedded '{args.baseline}' baseline")
    rows = P.savings_report(front, baseline)
    keys = list(rows[0].keys())
    write_csv(
        Path(args.out),
        keys,
        [[r[k] if isinstance(r[k], str) else r[k] for k in keys] for r in rows],
        comment=f"locsched savings vs baseline_{args.baseline}, front {file_sha256(args.front)[:12]}",
    )
    if args.plot:
        from . import plots

        plots.plot_savings(rows, args.plot)
    logger.info("savings table written to %s (%d vertices)", args.out, len(rows))


if __name__ == "__main__":
    sys.exit(main())
