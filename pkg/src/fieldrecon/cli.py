"""Command-line entry point.

Subcommands: field (generate/export), run (single strategy run), mc
(Monte-Carlo comparison), analyze (session logs), serve (game server),
replay (verify a recorded run). Exit codes: 0 success, 1 verification
failure, 2 usage error. Every produced file starts with its full
configuration so runs are reproducible from their outputs.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import analysis, charts, entropy, field as fieldmod, game, mc, strategy


def _strategy_from_spec(spec, budget, seed):
    """Parse 'topo:T=0.5' or 'nscan:n=5' into a StrategyConfig."""
    kind, _, rest = spec.partition(":")
    kwargs = {}
    if rest:
        key, _, value = rest.partition("=")
        kwargs = {key.lower(): float(value)}
    if kind == "topo":
        return strategy.StrategyConfig(
            kind="topo", t=kwargs.get("t", 0.5), budget=budget, seed=seed
        )
    if kind == "nscan":
        return strategy.StrategyConfig(
            kind="nscan", n=int(kwargs.get("n", 5)), budget=budget, seed=seed
        )
    raise argparse.ArgumentTypeError(f"unknown strategy spec {spec!r}")


def cmd_field(args):
    if args.field_cmd == "gen":
        f = fieldmod.make_field(args.n, args.d, args.seed)
        fieldmod.save_field(f, args.out)
        if args.json:
            fieldmod.write_field_json(f, args.json)
        print(f"wrote {args.out} (n={args.n} d={args.d} seed={args.seed})")
        return 0
    if args.field_cmd == "archive":
        archive = game.FieldArchive(n=args.n, base_seed=args.seed_base, count=args.count)
        archive.materialize(args.out, range(args.count))
        print(f"wrote {args.count} fields to {args.out}")
        return 0
    return 2


def _write_reports_csv(reports, path, header):
    with open(path, "w", newline="") as fh:
        fh.write("# " + json.dumps(header) + "\n")
        writer = csv.writer(fh)
        writer.writerow(["k", "h_data", "h_cond", "h_bar", "r_k", "log2_cells"])
        for r in reports:
            writer.writerow(
                [r.k, repr(float(r.h_data)), repr(float(r.h_cond)), repr(float(r.h_bar)), repr(float(r.r_k)), repr(float(r.log2_cells))]
            )


def cmd_run(args):
    cfg = _strategy_from_spec(args.strategy, args.budget, args.seed)
    f = fieldmod.load_field(args.field) if os.path.exists(args.field) else None
    if f is None:
        print(f"field archive {args.field} not found", file=sys.stderr)
        return 2
    from . import topology

    gt = topology.topology_partition(f)
    run = strategy.run_strategy(f, cfg, gt)
    strategy.trace_to_jsonl(run, args.out)
    if args.metrics:
        _write_reports_csv(run.reports, args.metrics, run.header)
    print(f"ran {cfg.label()} for {len(run.programs)} programs -> {args.out}")
    return 0


def cmd_mc(args):
    cfg_a = _strategy_from_spec(args.a, args.budget, args.seed)
    cfg_b = _strategy_from_spec(args.b, args.budget, args.seed)
    exp = mc.Experiment(
        strategies=(cfg_a, cfg_b),
        trials=args.trials,
        n=args.n,
        d=args.d,
        base_seed=args.seed,
        budget=args.budget,
    )
    stats = mc.run_experiment(exp, out_dir=args.out)
    report = mc.crossing_report(stats[cfg_b.label()], stats[cfg_a.label()], args.budget)
    with open(os.path.join(args.out, "crossing.json"), "w") as fh:
        json.dump(report, fh, indent=2)
    print(json.dumps(report, indent=2))
    return 0


def cmd_analyze(args):
    archive = game.FieldArchive.load(args.archive)
    logs = []
    for name in sorted(os.listdir(args.logs)):
        if name.endswith(".json"):
            logs.append(game.load_session_log(os.path.join(args.logs, name)))
    if not logs:
        print("no session logs found", file=sys.stderr)
        return 2
    estimates = []
    curves = {}
    for log_dict in logs:
        records, games = analysis.replay_player(log_dict, archive)
        try:
            est = analysis.estimate_beta_from_records(records, player=log_dict["player"])
        except analysis.AnalysisError as err:
            print(f"skipping {log_dict['player']}: {err}", file=sys.stderr)
            continue
        estimates.append(est)
        curves[est.player] = games
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "betas.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["player", "beta", "beta_d025", "beta_d05", "iso_clicks", "loglik"])
        for est in estimates:
            writer.writerow(
                [
                    est.player,
                    repr(est.beta_hat),
                    repr(est.beta_by_d.get(0.25, float("nan"))),
                    repr(est.beta_by_d.get(0.5, float("nan"))),
                    est.n_iso_clicks,
                    repr(est.loglik),
                ]
            )
    charts.histogram(
        {"players": [e.beta_hat for e in estimates]},
        "preference exponent estimates",
        "beta",
        os.path.join(args.out, "betas.svg"),
    )
    if args.curves and len(estimates) >= 3:
        groups = analysis.group_and_curve(estimates, curves)
        for label, gc in groups.items():
            steps = np.arange(1, gc.duration + 1)
            charts.line_chart(
                [
                    ("normalized info", steps, gc.mean_info),
                    ("H(V_k)", steps, gc.mean_h_data),
                    ("uniformity gap", steps, gc.mean_gap),
                ],
                f"{label} tercile (duration {gc.duration})",
                "click",
                "bits",
                os.path.join(args.out, f"curves_{label}.svg"),
            )
    print(f"analyzed {len(estimates)} players -> {args.out}")
    return 0


def cmd_serve(args):
    import uvicorn

    from . import server

    archive = game.FieldArchive.load(args.archive)
    app = server.create_app(
        archive,
        log_dir=args.log_dir,
        duration=args.session_seconds,
        cors=args.cors.split(",") if args.cors else None,
    )
    if args.log_dir:
        restored = server.restore_sessions(app, args.log_dir)
        if restored:
            print(f"restored {restored} finished sessions")
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def cmd_replay(args):
    header, programs = strategy.trace_from_jsonl(args.trace)
    params = header["field"]
    f = fieldmod.make_field(params["n"], params["d"], params["seed"])
    from . import topology

    gt = topology.topology_partition(f)
    try:
        run = strategy.replay_trace(f, header, programs, gt=gt)
    except strategy.ReplayMismatch as err:
        print(f"FAIL {err}", file=sys.stderr)
        return 1
    h_cond = np.array([r.h_cond for r in run.reports])
    failures = []
    if np.any(np.diff(h_cond) > 1e-9):
        failures.append("H(M|V_k) increased during replay")
    for prog, report in zip(run.programs, run.reports[1:]):
        if prog["kind"] == "gradient" and report.r_k > 1e-12:
            failures.append(f"gradient program {prog['k']} consumed the bound")
    if args.out:
        _write_reports_csv(run.reports, args.out, header)
    violations = [v for v in run.partition.violations if "chi" in v]
    if violations and header.get("kind") == "topo":
        failures.extend(violations)
    if failures:
        for f_ in failures:
            print(f"FAIL {f_}", file=sys.stderr)
        return 1
    print(f"replay verified: {len(run.programs)} programs, final H(M|V_k) = {h_cond[-1]:.4f}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="fieldrecon")
    sub = p.add_subparsers(dest="cmd", required=True)

    f = sub.add_parser("field", help="generate fields")
    fsub = f.add_subparsers(dest="field_cmd", required=True)
    g = fsub.add_parser("gen")
    g.add_argument("--n", type=int, default=128)
    g.add_argument("--d", type=float, default=0.25)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--json")
    a = fsub.add_parser("archive")
    a.add_argument("--n", type=int, default=128)
    a.add_argument("--seed-base", type=int, default=9000)
    a.add_argument("--count", type=int, default=16)
    a.add_argument("--out", required=True)

    r = sub.add_parser("run", help="run one strategy")
    r.add_argument("--strategy", default="topo:T=0.5")
    r.add_argument("--budget", type=int, default=200)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--field", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--metrics")

    m = sub.add_parser("mc", help="Monte-Carlo comparison")
    m.add_argument("--a", default="topo:T=0.5")
    m.add_argument("--b", default="topo:T=2")
    m.add_argument("--trials", type=int, default=100)
    m.add_argument("--n", type=int, default=128)
    m.add_argument("--d", type=float, default=0.25)
    m.add_argument("--budget", type=int, default=200)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--out", required=True)

    an = sub.add_parser("analyze", help="analyze session logs")
    an.add_argument("--logs", required=True)
    an.add_argument("--archive", required=True)
    an.add_argument("--out", required=True)
    an.add_argument("--curves", action="store_true")

    s = sub.add_parser("serve", help="run the game server")
    s.add_argument("--archive", required=True)
    s.add_argument("--log-dir", default=None)
    s.add_argument("--host", default=os.environ.get("HOST", "127.0.0.1"))
    s.add_argument("--port", type=int, default=int(os.environ.get("PORT", "8000")))
    s.add_argument("--session-seconds", type=float, default=game.SESSION_SECONDS)
    s.add_argument("--cors", default=os.environ.get("CORS_ORIGINS", ""))

    rp = sub.add_parser("replay", help="verify a recorded run")
    rp.add_argument("--trace", required=True)
    rp.add_argument("--out")
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return 2 if err.code not in (0, None) else 0
    handlers = {
        "field": cmd_field,
        "run": cmd_run,
        "mc": cmd_mc,
        "analyze": cmd_analyze,
        "serve": cmd_serve,
        "replay": cmd_replay,
    }
    return handlers[args.cmd](args)


if __name__ == "__main__":
    sys.exit(main())
