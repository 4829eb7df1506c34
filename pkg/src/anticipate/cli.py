"""Command-line pipeline: validate, bounds, synth, check-edge, verify, plan,
simulate, grid, bench, make-game.

Exit codes: 0 success, 2 validation/consistency failure, 3 synthesis failure,
4 budget exceeded, 5 I/O or parse error. Diagnostics go to stderr; machine
output goes to files or stdout.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import bounds as bnd
from . import builders, figures, gameio, harness, planner, synthesis
from .consistency import (DELTA_STRICT, EdgeChecker, EdgeQuery, check_edge,
                          per_policy_margin)
from .game import GameFormatError, GameInstance, Observation, SwitchModel, validate
from .synthesis import IsmParseError

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_SYNTH_FAIL = 3
EXIT_BUDGET = 4
EXIT_IO = 5

BENCH_NAMES = ("rps", "rps-mem", "ant-avoid")


def _err(*args):
    print(*args, file=sys.stderr)


def _fmt_belief(b):
    return "(" + ", ".join(f"{x:.6g}" for x in b) + ")"


def _load_game(path) -> GameInstance:
    instance = gameio.load_game(path)
    report = validate(instance)
    for w in report.warnings:
        _err(f"warning: {w}")
    if not report.ok:
        for e in report.errors:
            _err(f"error: {e}")
        raise SystemExit(EXIT_VALIDATION)
    return instance


def _load_ism(path):
    with open(path) as fh:
        return synthesis.deserialize(fh.read())


def _resolve_switch(args, instance) -> GameInstance:
    """Apply --stay / --paper-eps / --switch overrides to the instance."""
    n = instance.n_policies
    stay = getattr(args, "stay", None)
    eps = getattr(args, "paper_eps", None)
    switch_file = getattr(args, "switch", None)
    if sum(x is not None for x in (stay, eps, switch_file)) > 1:
        _err("error: give at most one of --stay, --paper-eps, --switch")
        raise SystemExit(EXIT_IO)
    if eps is not None:
        stay = 1.0 - eps
        _err(f"mapping table epsilon {eps:g} -> stay probability {stay:g}")
    if stay is not None:
        return harness.with_switch(instance, builders.build_switch(n, stay))
    if switch_file is not None:
        with open(switch_file) as fh:
            matrix = np.array(json.load(fh), dtype=float)
        if matrix.shape != (n, n):
            _err(f"error: switch file is {matrix.shape}, expected ({n}, {n})")
            raise SystemExit(EXIT_IO)
        return harness.with_switch(instance, SwitchModel(matrix))
    return instance


def cmd_validate(args):
    try:
        instance = gameio.load_game(args.game)
    except GameFormatError as exc:
        print(f"violation: {exc}")
        return EXIT_VALIDATION
    report = validate(instance)
    for w in report.warnings:
        print(f"warning: {w}")
    if report.ok:
        size = instance.size_tuple()
        print(f"ok: {size[0]} states, {size[1]}x{size[2]} actions, "
              f"{size[3]} opponent policies")
        return EXIT_OK
    for e in report.errors:
        print(f"violation: {e}")
    return EXIT_VALIDATION


def cmd_bounds(args):
    instance = _load_game(args.game)
    report = bnd.bound_report(instance)
    guarantee = bnd.termination_guarantee(instance)
    names = instance.arena.state_names
    actions = instance.arena.p2_action_names
    print(f"t_star      = {report.t_star:.6g}")
    print(f"kappa_max   = {report.kappa_max:.6g}")
    print(f"termination guaranteed for every lambda: {guarantee.guaranteed}")
    header = f"{'observation':<24}{'alpha_max':>10}{'alpha_sum':>10}" \
             f"{'kappa':>10}{'contraction':>12}"
    print(header)
    for obs, a_max, a_sum, k, contr in report.rows:
        label = f"({names[obs.state]}, {actions[obs.p2_action]})"
        cell = f"{contr:>12.4f}" if contr is not None else f"{'n/a':>12}"
        print(f"{label:<24}{a_max:>10.4f}{a_sum:>10.4f}{k:>10.4f}{cell}")
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write("state,action,alpha_max,alpha_sum,kappa,contraction\n")
            for obs, a_max, a_sum, k, contr in report.rows:
                c = "" if contr is None else f"{contr!r}"
                fh.write(f"{names[obs.state]},{actions[obs.p2_action]},"
                         f"{a_max!r},{a_sum!r},{k!r},{c}\n")
        _err(f"wrote {args.csv}")
    return EXIT_OK


def _make_checker(args, n_policies) -> EdgeChecker:
    """Margin resolution: explicit value wins; 'auto' scales with the policy
    count; 0 (the synth default) means exact decisions."""
    if args.margin == "auto":
        delta = per_policy_margin(n_policies)
        _err(f"using consistency margin {delta:.4g} ({n_policies} policies)")
    else:
        delta = max(float(args.margin), DELTA_STRICT)
    return EdgeChecker(method=args.check_method, delta=delta)


def cmd_synth(args):
    instance = _resolve_switch(args, _load_game(args.game))
    checker = _make_checker(args, instance.n_policies)
    outcome = synthesis.synthesize(instance, args.lam,
                                   max_states=args.max_states,
                                   max_seconds=args.max_seconds,
                                   checker=checker)
    stats = outcome.stats
    if outcome.status == "failure":
        _err(f"synthesis FAILED after {stats.consistency_checks} checks "
             f"({stats.elapsed:.2f}s): the fresh edge below is inconsistent")
        _err(f"  source belief : {_fmt_belief(outcome.source_belief)}")
        _err(f"  observation   : ({outcome.observation.state}, "
             f"{outcome.observation.p2_action})")
        _err(f"  target belief : {_fmt_belief(outcome.attempted_target_belief)}")
        if outcome.witness is not None:
            _err(f"  witness       : {_fmt_belief(outcome.witness)}")
        return EXIT_SYNTH_FAIL
    if outcome.status == "budget":
        _err(f"budget exceeded: {stats.states} states, {stats.elapsed:.2f}s")
        return EXIT_BUDGET
    ism = outcome.ism
    with open(args.output, "w") as fh:
        fh.write(synthesis.serialize(ism))
    dot_path = args.dot or os.path.splitext(args.output)[0] + ".dot"
    with open(dot_path, "w") as fh:
        fh.write(synthesis.export_dot(ism, instance.arena.state_names,
                                      instance.arena.p2_action_names))
    print(f"machine: {ism.n_states} states, {ism.n_edges} edges "
          f"({stats.consistency_checks} consistency checks, "
          f"{stats.elapsed:.2f}s)")
    _err(f"wrote {args.output} and {dot_path}")
    return EXIT_OK


def cmd_check_edge(args):
    with open(args.query) as fh:
        doc = json.load(fh)
    obs = doc.get("observation", {"state": 0, "action": 0})
    q = EdgeQuery(
        source_belief=np.array(doc["source_belief"], dtype=float),
        target_belief=np.array(doc["target_belief"], dtype=float),
        observation=Observation(obs["state"], obs["action"]),
        lam=float(doc["lambda"]),
        alphas=np.array(doc["alphas"], dtype=float),
        switch=SwitchModel(np.array(doc["switch"], dtype=float)))
    verdict = check_edge(q, method=args.method)
    if verdict.consistent:
        print("consistent")
    else:
        print("refuted")
        print(f"witness       : {_fmt_belief(verdict.witness)}")
        print(f"pre_distance  : {verdict.pre_distance:.6g}")
        print(f"post_distance : {verdict.post_distance:.6g}")
    return EXIT_OK


def cmd_verify(args):
    instance = _load_game(args.game)
    ism = _load_ism(args.ism)
    checker = _make_checker(args, instance.n_policies)
    report = synthesis.verify_consistency(ism, instance, args.lam,
                                          num_sequences=args.sequences,
                                          max_len=args.max_len, seed=args.seed,
                                          checker=checker)
    print(f"edges checked        : {ism.n_edges}")
    print(f"inconsistent edges   : {len(report.inconsistent_edges)}")
    for m, obs, target, verdict in report.inconsistent_edges[:10]:
        print(f"  {m} --({obs.state},{obs.p2_action})--> {target}: "
              f"witness {_fmt_belief(verdict.witness)} "
              f"post={verdict.post_distance:.4f} > {args.lam}")
    print(f"sequences sampled    : {report.sequences}")
    print(f"max observed gap     : {report.max_observed_gap:.6g} (lambda={args.lam})")
    print(f"violations           : {report.violations}")
    return EXIT_OK if report.ok else EXIT_VALIDATION


def cmd_plan(args):
    instance = _load_game(args.game)
    ism = _load_ism(args.ism)
    mdp = planner.compose(instance, ism)
    policy, values = planner.policy_iteration(mdp, gamma=args.gamma)
    planner.save_policy(args.output, policy, values, args.gamma)
    v0 = values.values[mdp.initial]
    print(f"composed MDP: {mdp.n_states} states; value at start: {v0:.4f}")
    _err(f"wrote {args.output}")
    return EXIT_OK


def cmd_simulate(args):
    instance = _load_game(args.game)
    ism = _load_ism(args.ism)
    policy, _, _ = planner.load_policy(args.policy)
    if args.script:
        script = harness.load_script(args.script, instance)
        trace = harness.replay(instance, ism, policy, script,
                               horizon=args.horizon, seed=args.seed)
    else:
        if args.switch_actual:
            with open(args.switch_actual) as fh:
                t_actual = SwitchModel(np.array(json.load(fh), dtype=float))
        elif args.stay_actual is not None:
            t_actual = builders.build_switch(instance.n_policies, args.stay_actual)
        else:
            t_actual = instance.switch
        trace = harness.simulate(instance, ism, policy, t_actual,
                                 horizon=args.horizon, seed=args.seed)
    rep = harness.metrics(trace)
    print(f"steps        : {len(trace)}")
    print(f"r_avg        : {rep.r_avg:.6f}")
    print(f"ap_avg       : {rep.ap_avg:.6f}")
    print(f"policy_pred  : {rep.policy_pred:.6f}")
    if trace.resets:
        print(f"machine resets on off-model observations: {len(trace.resets)}")
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write("t,state,policy,a1,a2,reward,machine_state,action_prob\n")
            for t in range(len(trace)):
                fh.write(f"{t},{trace.states[t]},{trace.policy_indices[t]},"
                         f"{trace.p1_actions[t]},{trace.p2_actions[t]},"
                         f"{trace.rewards[t]!r},{trace.machine_states[t]},"
                         f"{trace.action_probs[t]!r}\n")
        _err(f"wrote {args.csv}")
    if args.figures:
        os.makedirs(args.figures, exist_ok=True)
        for path in figures.render_trace_figures(trace, args.figures):
            _err(f"wrote {path}")
    return EXIT_OK


def cmd_grid(args):
    instance = _load_game(args.game)
    rows = harness.run_grid(instance, args.lambdas, args.stays,
                            args.stays_actual, horizon=args.horizon,
                            seeds=args.seeds, gamma=args.gamma,
                            checker=_make_checker(args, instance.n_policies))
    os.makedirs(args.output, exist_ok=True)
    csv_path = os.path.join(args.output, "grid.csv")
    harness.write_grid_csv(rows, csv_path)
    _err(f"wrote {csv_path}")
    for path in figures.render_grid_figures(rows, args.output):
        _err(f"wrote {path}")
    for row in harness.aggregate_grid(rows):
        print(f"lambda={row['lambda']} stay={row['stay_design']} "
              f"actual={row['stay_actual']}: r_avg={row['r_avg_mean']:.4f}"
              f"+-{row['r_avg_stderr']:.4f} ap={row['ap_avg_mean']:.4f} "
              f"|M|={row['ism_states']}")
    return EXIT_OK


def _bench_instance(args) -> GameInstance:
    if args.name == "rps":
        instance = builders.build_rps()
    elif args.name == "rps-mem":
        instance = builders.build_rps_mem()
        if args.stay is None and args.paper_eps is None:
            _err("error: rps-mem needs --stay or --paper-eps for its switch model")
            raise SystemExit(EXIT_IO)
    else:
        instance = builders.build_anticipate_avoid(args.rooms)
        if args.stay is None and args.paper_eps is None:
            _err("error: ant-avoid needs --stay or --paper-eps for its switch model")
            raise SystemExit(EXIT_IO)
    return _resolve_switch(args, instance)


def cmd_bench(args):
    instance = _bench_instance(args)
    checker = _make_checker(args, instance.n_policies)
    t0 = time.perf_counter()
    outcome = synthesis.synthesize(instance, args.lam,
                                   max_states=args.max_states,
                                   max_seconds=args.max_seconds,
                                   checker=checker)
    synth_seconds = time.perf_counter() - t0
    if outcome.status == "failure":
        _err(f"synthesis FAILED in {synth_seconds:.2f}s at observation "
             f"({outcome.observation.state}, {outcome.observation.p2_action}) "
             f"from belief {_fmt_belief(outcome.source_belief)}")
        print(f"{args.name:<10} lambda={args.lam:<6} |M|=FAIL "
              f"synth={synth_seconds:.2f}s")
        return EXIT_SYNTH_FAIL
    if outcome.status == "budget":
        _err(f"budget exceeded after {synth_seconds:.2f}s "
             f"({outcome.stats.states} states)")
        return EXIT_BUDGET
    ism = outcome.ism
    t0 = time.perf_counter()
    mdp = planner.compose(instance, ism)
    planner.policy_iteration(mdp, gamma=args.gamma)
    pi_seconds = time.perf_counter() - t0
    print(f"{args.name:<10} lambda={args.lam:<6} |M|={ism.n_states:<6} "
          f"synth={synth_seconds:.2f}s |MDP|={mdp.n_states:<7} "
          f"pi={pi_seconds:.2f}s")
    return EXIT_OK


def cmd_make_game(args):
    if args.name == "rps":
        instance = builders.build_rps()
    elif args.name == "rps-mem":
        instance = builders.build_rps_mem(
            builders.build_switch(9, args.stay) if args.stay else None)
    else:
        instance = builders.build_anticipate_avoid(
            args.rooms,
            builders.build_switch(4, args.stay) if args.stay else None)
    if args.name == "rps" and args.stay:
        instance = harness.with_switch(instance,
                                       builders.build_switch(4, args.stay))
    gameio.save_game(instance, args.output)
    _err(f"wrote {args.output}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="anticipate",
        description="Belief-machine synthesis and planning against "
                    "policy-switching oblivious opponents.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_lambda(p):
        p.add_argument("--lambda", dest="lam", type=float, required=True,
                       help="consistency level (total-variation budget)")

    def add_budgets(p):
        p.add_argument("--max-states", type=int, default=100_000,
                       help="state budget for synthesis (default %(default)s)")
        p.add_argument("--max-seconds", type=float, default=3600.0,
                       help="time budget for synthesis (default %(default)s)")

    def add_check_method(p, margin_default):
        p.add_argument("--check-method", choices=("lp", "vertex"), default="lp",
                       help="consistency decision procedure (default %(default)s); "
                            "vertex is much faster for many policies")
        p.add_argument("--margin", default=margin_default,
                       help="refutation optima below this are treated as "
                            "numerical noise; 'auto' scales with the policy "
                            "count, 0 decides exactly (default %(default)s)")

    p = sub.add_parser("validate", help="check a game file's invariants")
    p.add_argument("game")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("bounds", help="print mixing/termination constants")
    p.add_argument("game")
    p.add_argument("--csv", help="also write the table as CSV")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("synth", help="synthesize a consistent belief machine")
    p.add_argument("game")
    add_lambda(p)
    p.add_argument("--stay", type=float, help="replace the game's switch "
                   "matrix by stay-probability mixing")
    p.add_argument("--paper-eps", type=float,
                   help="table epsilon, mapped to stay = 1 - eps")
    p.add_argument("--switch", help="replace the switch matrix from a JSON file")
    add_budgets(p)
    add_check_method(p, margin_default="0")
    p.add_argument("-o", "--output", required=True, help="machine output path")
    p.add_argument("--dot", help="DOT output path (default: alongside output)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("check-edge", help="decide consistency of one edge query")
    p.add_argument("query", help="JSON file with lambda, source_belief, "
                   "target_belief, alphas, switch, [observation]")
    p.add_argument("--method", choices=("lp", "vertex"), default="lp",
                   help="decision procedure (default %(default)s)")
    p.set_defaults(func=cmd_check_edge)

    p = sub.add_parser("verify", help="re-check a machine's consistency")
    p.add_argument("game")
    p.add_argument("ism")
    add_lambda(p)
    p.add_argument("--sequences", type=int, default=10_000,
                   help="Monte-Carlo sequences (default %(default)s)")
    p.add_argument("--max-len", type=int, default=50,
                   help="max sequence length (default %(default)s)")
    p.add_argument("--seed", type=int, default=0, help="default %(default)s")
    add_check_method(p, margin_default="0")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("plan", help="optimal policy on the composed MDP")
    p.add_argument("game")
    p.add_argument("ism")
    p.add_argument("--gamma", type=float, default=0.95,
                   help="discount factor (default %(default)s)")
    p.add_argument("-o", "--output", required=True, help="policy output path")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("simulate", help="play the policy against a switching opponent")
    p.add_argument("game")
    p.add_argument("ism")
    p.add_argument("policy")
    p.add_argument("--stay-actual", type=float,
                   help="actual opponent stay probability (default: design switch)")
    p.add_argument("--switch-actual", help="actual switch matrix JSON file")
    p.add_argument("--horizon", type=int, default=100_000,
                   help="steps to play (default %(default)s)")
    p.add_argument("--seed", type=int, default=0, help="default %(default)s")
    p.add_argument("--script", help="replay opponent actions from a script file")
    p.add_argument("--csv", help="write the step-by-step trace as CSV")
    p.add_argument("--figures", help="directory for trace figures")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("grid", help="experiment grid: CSV plus figures")
    p.add_argument("game")
    p.add_argument("--lambdas", type=float, nargs="+", required=True)
    p.add_argument("--stays", type=float, nargs="+", required=True)
    p.add_argument("--stays-actual", type=float, nargs="+", required=True)
    p.add_argument("--horizon", type=int, default=100_000,
                   help="steps per cell (default %(default)s)")
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2],
                   help="default %(default)s")
    p.add_argument("--gamma", type=float, default=0.95,
                   help="default %(default)s")
    add_check_method(p, margin_default="0")
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("bench", help="end-to-end pipeline on a built-in benchmark")
    p.add_argument("name", choices=BENCH_NAMES)
    add_lambda(p)
    p.add_argument("--stay", type=float, help="switch stay probability")
    p.add_argument("--paper-eps", type=float,
                   help="table epsilon, mapped to stay = 1 - eps")
    p.add_argument("--gamma", type=float, default=0.95,
                   help="default %(default)s")
    p.add_argument("--rooms", type=int, default=25,
                   help="ant-avoid ring size (default %(default)s)")
    add_budgets(p)
    add_check_method(p, margin_default="auto")
    p.set_defaults(func=cmd_bench, switch=None)

    p = sub.add_parser("make-game", help="write a built-in benchmark as a game file")
    p.add_argument("name", choices=BENCH_NAMES)
    p.add_argument("--stay", type=float, help="switch stay probability "
                   "(rps default: the built-in four-policy chain)")
    p.add_argument("--rooms", type=int, default=25,
                   help="ant-avoid ring size (default %(default)s)")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_make_game)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_IO
    except (GameFormatError, IsmParseError, harness.ReplayScriptError,
            json.JSONDecodeError) as exc:
        _err(f"error: {exc}")
        return EXIT_IO
    except (FileNotFoundError, PermissionError, IsADirectoryError) as exc:
        _err(f"error: {exc}")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
