"""Command-line front end.

Verbs:

* ``simulate``   run one environment's episodes, write records + log
* ``estimate``   full campaign (or re-estimate from --records) + all outputs
* ``oracle``     brute-force reference accident rate
* ``replicate``  seeded replication study
* ``report``     pretty-print a summary.json

Exit codes: 0 success, 2 configuration error, 3 oracle budget exceeded.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from typing import Optional

from . import __version__
from .config import CampaignConfig, ConfigError, load_config
from .harness import (
    CampaignResult,
    build_summary,
    emit_outputs,
    estimate_from_records,
    load_campaign_records,
    run_campaign,
    run_replications,
    sample_env,
    write_critical_log,
    write_records,
)
from .oracle import BudgetExceeded, brute_force_mu

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BUDGET = 3


def _load_base_config(args) -> CampaignConfig:
    cfg = load_config(args.config) if args.config else CampaignConfig()
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "workers", None) is not None:
        overrides["workers"] = args.workers
    if getattr(args, "gamma", None) is not None:
        overrides["gamma"] = args.gamma
    if getattr(args, "rhw_threshold", None) is not None:
        overrides["rhw_threshold"] = args.rhw_threshold
    if getattr(args, "replications", None) is not None:
        overrides["replications"] = args.replications
    if getattr(args, "env", None) is not None:
        overrides["environment"] = args.env
    if getattr(args, "episodes", None) is not None:
        env = overrides.get("environment", cfg.environment)
        if env in ("nde", "both"):
            overrides["episodes_nde"] = args.episodes
        if env in ("nade", "both"):
            overrides["episodes_nade"] = args.episodes
    cfg = dataclasses.replace(cfg, **overrides)
    cfg.validate()
    return cfg


def _fmt(x: Optional[float]) -> str:
    if x is None:
        return "-"
    if isinstance(x, float):
        return f"{x:.6g}"
    return str(x)


def _print_methods(methods: dict) -> None:
    if not methods:
        return
    print(f"{'method':<8}{'n':>10}{'mu':>14}{'rhw':>12}{'tests':>10}")
    for name in ("nde", "nade", "atscv"):
        if name not in methods:
            continue
        m = methods[name]
        print(f"{name:<8}{m['n']:>10}{_fmt(m['mu']):>14}"
              f"{_fmt(m['rhw']):>12}{_fmt(m['tests_to_threshold']):>10}")


def _cmd_simulate(args) -> int:
    cfg = _load_base_config(args)
    env = args.env or "nde"
    cfg = dataclasses.replace(cfg, environment=env)
    cfg.validate()
    records = sample_env(cfg, env)
    os.makedirs(args.out, exist_ok=True)
    write_records(os.path.join(args.out, "records.csv"), records)
    write_critical_log(os.path.join(args.out, "critical_log.csv"),
                       records if env == "nade" else [],
                       len(cfg.scenario.surrogates))
    accidents = sum(r.accident for r in records)
    print(f"{env}: {len(records)} episodes, {accidents} accidents "
          f"-> {args.out}/records.csv")
    return EXIT_OK


def _cmd_estimate(args) -> int:
    cfg = _load_base_config(args)
    if args.records:
        result = estimate_from_records(cfg, load_campaign_records(args.records))
    else:
        result = run_campaign(cfg)
    emit_outputs(result, args.out)
    summary = build_summary(result)
    if summary["oracle_mu"] is not None:
        print(f"oracle_mu {summary['oracle_mu']!r}")
    _print_methods(summary["methods"])
    acc = summary["acceleration"]
    print(f"acceleration nde/nade {_fmt(acc['nde_over_nade'])}, "
          f"nade/atscv {_fmt(acc['nade_over_atscv'])}")
    print(f"outputs -> {args.out}")
    return EXIT_OK


def _cmd_oracle(args) -> int:
    cfg = _load_base_config(args)
    mu = brute_force_mu(cfg.scenario, cfg.oracle_bins, cfg.oracle_budget)
    print(f"oracle_mu {mu!r}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, "oracle.json")
        with open(path, "w") as fh:
            json.dump({"version": __version__, "oracle_mu": mu,
                       "bins": cfg.oracle_bins, "budget": cfg.oracle_budget},
                      fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"outputs -> {path}")
    return EXIT_OK


def _cmd_replicate(args) -> int:
    cfg = _load_base_config(args)
    rows = run_replications(cfg)
    result = CampaignResult(config=cfg, records={}, methods={},
                            replication_rows=rows)
    emit_outputs(result, args.out)
    summary = build_summary(result)
    agg = summary["aggregates"]
    print(f"{len(rows)} replications")
    for key in ("median_nde_tests", "median_nade_tests", "median_atscv_tests",
                "median_accel_nde_nade", "median_accel_nade_atscv"):
        print(f"  {key}: {_fmt(agg[key])}")
    if agg["atscv_nade_comparable"]:
        print(f"  atscv faster than nade: {agg['atscv_faster_than_nade']}"
              f"/{agg['atscv_nade_comparable']}")
    print(f"outputs -> {args.out}")
    return EXIT_OK


def _cmd_report(args) -> int:
    path = os.path.join(args.out, "summary.json")
    with open(path) as fh:
        summary = json.load(fh)
    print(f"campaign summary (version {summary.get('version', '?')})")
    if summary.get("oracle_mu") is not None:
        print(f"oracle_mu: {_fmt(summary['oracle_mu'])}")
    _print_methods(summary.get("methods", {}))
    acc = summary.get("acceleration", {})
    if acc:
        print(f"acceleration nde/nade {_fmt(acc.get('nde_over_nade'))}, "
              f"nade/atscv {_fmt(acc.get('nade_over_atscv'))}")
    agg = summary.get("aggregates")
    if agg:
        print("replication aggregates:")
        for key, value in sorted(agg.items()):
            print(f"  {key}: {_fmt(value)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="overtake-eval",
        description="Rare-event evaluation of an automated vehicle in a "
                    "two-lane overtaking scenario.")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p, out_default="out"):
        p.add_argument("--config", help="INI configuration file")
        p.add_argument("--seed", type=int, help="root seed override")
        p.add_argument("--out", default=out_default, help="output directory")
        p.add_argument("--workers", type=int, help="worker process count")

    p = sub.add_parser("simulate", help="run one environment's episodes")
    common(p)
    p.add_argument("--episodes", type=int, help="episode budget override")
    p.add_argument("--env", choices=["nde", "nade"], default="nde")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("estimate",
                       help="run a campaign (or re-estimate --records) "
                            "and write all outputs")
    common(p)
    p.add_argument("--episodes", type=int, help="episode budget override")
    p.add_argument("--env", choices=["nde", "nade"],
                   help="restrict to one environment")
    p.add_argument("--records", help="directory with records.csv to re-estimate")
    p.add_argument("--gamma", type=float, help="confidence complement")
    p.add_argument("--rhw-threshold", dest="rhw_threshold", type=float,
                   help="stopping threshold for the relative half-width")
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("oracle", help="brute-force reference accident rate")
    common(p, out_default=None)
    p.set_defaults(func=_cmd_oracle)

    p = sub.add_parser("replicate", help="seeded replication study")
    common(p)
    p.add_argument("--episodes", type=int, help="episode budget override")
    p.add_argument("--env", choices=["nde", "nade"],
                   help="restrict to one environment")
    p.add_argument("--replications", type=int, help="replication count")
    p.add_argument("--gamma", type=float, help="confidence complement")
    p.add_argument("--rhw-threshold", dest="rhw_threshold", type=float,
                   help="stopping threshold for the relative half-width")
    p.set_defaults(func=_cmd_replicate)

    p = sub.add_parser("report", help="pretty-print a summary.json")
    p.add_argument("--out", default="out", help="directory with summary.json")
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetExceeded as exc:
        print(f"oracle budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
