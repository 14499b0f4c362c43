"""Command line entry point: ``sensorgame <subcommand> <config> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from sensorgame import game as gm
from sensorgame import oracle
from sensorgame.config import load_config
from sensorgame.errors import ConfigError, SensorGameError
from sensorgame.simulator import emit_results, monte_carlo, summarize


def _dump(obj, as_json: bool, text: str) -> None:
    if as_json:
        print(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable))
    else:
        print(text)


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"not serializable: {type(o)}")


def _game(cfg, constrained: bool) -> gm.GameSpec:
    if constrained and cfg.energy_caps is None:
        raise ConfigError("energy_caps: --constrained needs caps in the configuration")
    return cfg.build_game(constrained=constrained)


def cmd_steady_state(args) -> None:
    cfg = load_config(args.config)
    game = cfg.build_game(constrained=False)
    rows = []
    lines = []
    for i, f in enumerate(game.filters):
        rows.append({"sensor": i + 1, "p_bar": f.p_bar.tolist(), "trace": f.trace, "residual": f.residual, "iterations": f.iterations})
        lines.append(f"sensor {i + 1}: Tr(P_bar)={f.trace:.12g} residual={f.residual:.2e} iterations={f.iterations}")
        lines.append("  P_bar = " + np.array2string(f.p_bar, precision=12))
    _dump({"sensors": rows}, args.json, "\n".join(lines))


def _profile_rows(profile: gm.MixedProfile, game: gm.GameSpec):
    return [
        {"sensor": i + 1, "levels": game.action_sets[i].tolist(), "probabilities": s.tolist()}
        for i, s in enumerate(profile.strategies)
    ]


def cmd_equilibrium(args) -> None:
    cfg = load_config(args.config)
    game = _game(cfg, args.constrained)
    if args.kind == "ne":
        profile = gm.ne_constrained(game) if args.constrained else gm.ne_unconstrained(game)
        rows = _profile_rows(profile, game)
        out = {"kind": "ne", "constrained": args.constrained, "profile": rows, "expected_power": profile.expected_power(game).tolist()}
        text = "\n".join(
            f"sensor {r['sensor']}: " + ", ".join(f"s({e:g})={p:g}" for e, p in zip(r["levels"], r["probabilities"])) for r in rows
        )
    elif args.constrained:
        sol = gm.ce_constrained(game)
        out = {
            "kind": "ce",
            "constrained": True,
            "alpha": list(sol.policy.alpha),
            "beta": list(sol.policy.beta),
            "alpha_unclamped": sol.alpha_unclamped,
            "branch": sol.branch,
            "d": sol.d,
            "expected_power": sol.expected_power.tolist(),
        }
        text = (
            f"correlation policy (branch {sol.branch}, d={sol.d:g}): alpha={sol.policy.alpha[0]:g} "
            f"(unclamped {sol.alpha_unclamped:g}), beta={sol.policy.beta[0]:g}\n"
            f"expected power per sensor: {sol.expected_power.tolist()}"
        )
    else:
        dist = gm.ce_unconstrained(game)
        support = [{"action": list(game.powers(a)), "probability": p} for a, p in dist.support()]
        out = {"kind": "ce", "constrained": False, "support": support}
        text = "\n".join(f"P{tuple(s['action'])} = {s['probability']:g}" for s in support)
    _dump(out, args.json, text)


def cmd_verify(args) -> None:
    cfg = load_config(args.config)
    game = _game(cfg, args.constrained)
    reports = {}
    if args.kind == "ne":
        profile = gm.ne_constrained(game) if args.constrained else gm.ne_unconstrained(game)
        reports["closed_form_ne"] = oracle.check_ne(profile, game, tol=args.tol).to_dict()
    else:
        if args.constrained:
            dists = {"closed_form_ce": gm.policy_joint_distribution(gm.ce_constrained(game).policy, game)}
            for spec in cfg.policies:
                if spec.kind == "ce_override":
                    pol = gm.CorrelationPolicy.uniform(game.n_players, spec.alpha, spec.beta)
                    dists[f"override_{spec.name}"] = gm.policy_joint_distribution(pol, game)
        else:
            dists = {"closed_form_ce": gm.ce_unconstrained(game)}
        for name, dist in dists.items():
            rep = oracle.check_ce(dist, game, tol=args.tol).to_dict()
            rep["expected_utility"] = gm.expected_utilities(dist, game).tolist()
            reports[name] = rep
        if args.constrained:
            ne_dist = gm.product_distribution(gm.ne_constrained(game))
            reports["constrained_ne_expected_utility"] = gm.expected_utilities(ne_dist, game).tolist()
    if args.lp:
        floor = None
        if args.constrained:
            floor = gm.expected_utilities(gm.product_distribution(gm.ne_constrained(game)), game)
        res = oracle.solve_ce_lp(game, caps=args.constrained, utility_floor=floor)
        reports["lp"] = {
            "support": [{"action": list(game.powers(a)), "probability": p} for a, p in res.distribution.support()],
            "objective": res.objective,
            "exact": res.exact,
            "certificate": res.certificate,
            "expected_utility": gm.expected_utilities(res.distribution, game).tolist(),
            "check_ce": oracle.check_ce(res.distribution, game, tol=args.tol).to_dict(),
        }
    ok = all(r.get("is_equilibrium", True) for r in reports.values() if isinstance(r, dict))
    if args.lp:
        ok = ok and reports["lp"]["check_ce"]["is_equilibrium"]
    lines = []
    for name, rep in reports.items():
        if isinstance(rep, dict) and "max_gain" in rep:
            lines.append(f"{name}: max deviation gain {rep['max_gain']:.3e} -> {'PASS' if rep['is_equilibrium'] else 'FAIL'}")
        elif isinstance(rep, dict) and "min_slack" in rep:
            lines.append(f"{name}: min slack {rep['min_slack']:.3e} -> {'PASS' if rep['is_equilibrium'] else 'FAIL'}")
            if "unused_cap_gain" in rep:
                lines.append(f"  gain available from unused cap: {rep['unused_cap_gain']}")
        elif name == "lp":
            lines.append(f"lp: objective {rep['objective']:.12g}, exact={rep['exact']}, support={rep['support']}")
            lines.append(f"  certificate max residual {rep['certificate']['max']:.2e}; check_ce min slack {rep['check_ce']['min_slack']:.3e}")
        else:
            lines.append(f"{name}: {rep}")
    _dump({"passed": ok, "reports": reports}, args.json, "\n".join(lines))
    if not ok:
        raise SystemExit(1)


def cmd_simulate(args) -> None:
    cfg = load_config(args.config)
    cfg = cfg.with_overrides(runs=args.runs, seed=args.seed, horizon=args.horizon)
    if args.full_state:
        cfg = cfg.with_overrides(full_state_sim=True)
    agg = monte_carlo(cfg, workers=args.workers)
    paths = emit_results(agg, args.out)
    summary = summarize(agg)
    lines = [f"wrote {p}" for p in paths]
    for name, block in summary["gaps"].items():
        lines.append(f"{name}: terminal gap {np.round(block['gap'], 6).tolist()} (z {np.round(block['z'], 2).tolist()})")
    print("\n".join(lines))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sensorgame", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("steady-state", help="print steady-state local filter covariances")
    p.add_argument("config")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_steady_state)

    for name, func, helptext in (
        ("equilibrium", cmd_equilibrium, "print closed-form equilibria"),
        ("verify", cmd_verify, "check equilibria with the independent oracle"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("config")
        p.add_argument("--kind", choices=("ne", "ce"), required=True)
        p.add_argument("--constrained", action="store_true", help="apply the configured energy caps")
        p.add_argument("--json", action="store_true")
        if name == "verify":
            p.add_argument("--lp", action="store_true", help="also solve the CE linear program")
            p.add_argument("--tol", type=float, default=1e-9)
        p.set_defaults(func=func)

    p = sub.add_parser("simulate", help="Monte Carlo comparison of the configured policies")
    p.add_argument("config")
    p.add_argument("--runs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--horizon", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--full-state", action="store_true")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except SensorGameError as exc:
        print(f"error [{type(exc).__name__}]: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
