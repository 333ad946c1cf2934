"""Campaign orchestration: run seeded campaigns, estimate, and write outputs.

A campaign samples the configured environments, runs every applicable
estimator, attempts the brute-force reference value when its budget guard
permits, and emits a fixed set of files:

* ``records.csv``          one row per episode (id, seed, env, accident, l, w)
* ``critical_log.csv``     sidecar with one row per logged critical moment
* ``convergence_<m>.csv``  per-prefix (n, mu, rhw) for each method
* ``adjusted_points.csv``  unadjusted vs regression-adjusted value per record
* ``summary.json``         estimates, stopping counts, acceleration factors
* ``replications.csv``     per-replication table (replication studies only)

Episodes fan out to a worker pool in contiguous index chunks; every record is
a pure function of (root seed, environment, index), so output bytes do not
depend on the worker count.  The worker count is deliberately left out of the
summary's config echo for the same reason.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import multiprocessing
import os
import statistics
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from . import __version__
from .config import CampaignConfig
from .criticality import CriticalityEvaluator
from .estimators import (
    Estimate,
    GroupedRegression,
    ZeroEstimate,
    atscv_adjusted,
    convergence_series,
    estimate_atscv,
    estimate_nade,
    estimate_nde,
    fit_atscv,
    rhw,
    tests_to_threshold,
)
from .oracle import BudgetExceeded, brute_force_mu
from .sampling import (
    CriticalMoment,
    TestRecord,
    sample_nade_batch,
    sample_nde_batch,
)

METHODS = ("nde", "nade", "atscv")


@dataclass
class MethodResult:
    estimate: Estimate
    rhw: Optional[float]
    tests_to_threshold: Optional[int]


@dataclass
class CampaignResult:
    config: CampaignConfig
    records: Dict[str, List[TestRecord]]
    methods: Dict[str, MethodResult]
    groups: Optional[List[GroupedRegression]] = None
    oracle_mu: Optional[float] = None
    acceleration: Dict[str, Optional[float]] = field(default_factory=dict)
    replication_rows: List[dict] = field(default_factory=list)


# ---------------------------------------------------------------------------
# sampling fan-out


def _chunk_bounds(n: int, parts: int) -> List[Tuple[int, int]]:
    base, rem = divmod(n, parts)
    bounds = []
    start = 0
    for i in range(parts):
        count = base + (1 if i < rem else 0)
        if count:
            bounds.append((start, count))
        start += count
    return bounds


def _nde_chunk(args):
    root, sc, start, count = args
    return sample_nde_batch(root, sc, count, start=start)


def _nade_chunk(args):
    root, sc, start, count, cap = args
    return sample_nade_batch(root, sc, count, start=start,
                             max_control_steps=cap)


def sample_env(cfg: CampaignConfig, env: str) -> List[TestRecord]:
    n = cfg.episodes_nde if env == "nde" else cfg.episodes_nade
    sc = cfg.scenario
    if n == 0:
        return []
    if cfg.workers <= 1 or n < 2 * cfg.workers:
        if env == "nde":
            return sample_nde_batch(cfg.seed, sc, n)
        return sample_nade_batch(cfg.seed, sc, n,
                                 max_control_steps=cfg.max_control_steps)
    if env == "nde":
        args = [(cfg.seed, sc, start, count)
                for start, count in _chunk_bounds(n, cfg.workers)]
        worker = _nde_chunk
    else:
        args = [(cfg.seed, sc, start, count, cfg.max_control_steps)
                for start, count in _chunk_bounds(n, cfg.workers)]
        worker = _nade_chunk
    with multiprocessing.Pool(cfg.workers) as pool:
        parts = pool.map(worker, args)
    return [r for part in parts for r in part]


# ---------------------------------------------------------------------------
# campaigns


def _safe_rhw(est: Estimate, gamma: float) -> Optional[float]:
    try:
        return rhw(est, gamma)
    except ZeroEstimate:
        return None


def _method_results(cfg: CampaignConfig, records: Dict[str, List[TestRecord]]):
    methods: Dict[str, MethodResult] = {}
    groups = None
    if records.get("nde"):
        est = estimate_nde(records["nde"])
        methods["nde"] = MethodResult(
            est, _safe_rhw(est, cfg.gamma),
            tests_to_threshold(records["nde"], cfg.rhw_threshold, cfg.gamma,
                               "nde", cfg.confirm_window))
    if records.get("nade"):
        nade_recs = records["nade"]
        est = estimate_nade(nade_recs, cfg.max_control_steps)
        methods["nade"] = MethodResult(
            est, _safe_rhw(est, cfg.gamma),
            tests_to_threshold(nade_recs, cfg.rhw_threshold, cfg.gamma,
                               "nade", cfg.confirm_window,
                               cfg.max_control_steps))
        est = estimate_atscv(nade_recs, cfg)
        methods["atscv"] = MethodResult(
            est, _safe_rhw(est, cfg.gamma),
            tests_to_threshold(nade_recs, cfg.rhw_threshold, cfg.gamma,
                               "atscv", cfg.confirm_window,
                               cfg.max_control_steps))
        groups = fit_atscv(nade_recs, cfg.max_control_steps)
    return methods, groups


def _ratio(a: Optional[int], b: Optional[int]) -> Optional[float]:
    if a is None or b is None or b == 0:
        return None
    return a / b


def _acceleration(methods: Dict[str, MethodResult]) -> Dict[str, Optional[float]]:
    t = {m: methods[m].tests_to_threshold if m in methods else None
         for m in METHODS}
    return {
        "nde_over_nade": _ratio(t["nde"], t["nade"]),
        "nade_over_atscv": _ratio(t["nade"], t["atscv"]),
    }


def _attempt_oracle(cfg: CampaignConfig) -> Optional[float]:
    try:
        return brute_force_mu(cfg.scenario, cfg.oracle_bins, cfg.oracle_budget)
    except BudgetExceeded:
        return None


def run_campaign(cfg: CampaignConfig) -> CampaignResult:
    """Sample the configured environments, estimate, and collect results."""
    cfg.validate()
    records: Dict[str, List[TestRecord]] = {}
    if cfg.environment in ("nde", "both") and cfg.episodes_nde > 0:
        records["nde"] = sample_env(cfg, "nde")
    if cfg.environment in ("nade", "both") and cfg.episodes_nade > 0:
        records["nade"] = sample_env(cfg, "nade")
    methods, groups = _method_results(cfg, records)
    return CampaignResult(
        config=cfg,
        records=records,
        methods=methods,
        groups=groups,
        oracle_mu=_attempt_oracle(cfg),
        acceleration=_acceleration(methods),
    )


def estimate_from_records(cfg: CampaignConfig,
                          records: Dict[str, List[TestRecord]]) -> CampaignResult:
    """Re-run the estimators over previously emitted records."""
    methods, groups = _method_results(cfg, records)
    return CampaignResult(config=cfg, records=records, methods=methods,
                          groups=groups, oracle_mu=None,
                          acceleration=_acceleration(methods))


# ---------------------------------------------------------------------------
# replication studies


def _run_one_replication(cfg: CampaignConfig, rep: int,
                         evaluator: Optional[CriticalityEvaluator]) -> dict:
    sc = cfg.scenario
    seed = cfg.seed + rep
    row: Dict[str, object] = {"replication": rep, "seed": seed}
    for m in METHODS:
        row[f"{m}_mu"] = None
        row[f"{m}_rhw"] = None
        row[f"{m}_tests"] = None
    if cfg.environment in ("nde", "both") and cfg.episodes_nde > 0:
        recs = sample_nde_batch(seed, sc, cfg.episodes_nde)
        est = estimate_nde(recs)
        row["nde_mu"] = est.mu
        row["nde_rhw"] = _safe_rhw(est, cfg.gamma)
        row["nde_tests"] = tests_to_threshold(
            recs, cfg.rhw_threshold, cfg.gamma, "nde", cfg.confirm_window)
    if cfg.environment in ("nade", "both") and cfg.episodes_nade > 0:
        recs = sample_nade_batch(seed, sc, cfg.episodes_nade,
                                 evaluator=evaluator,
                                 max_control_steps=cfg.max_control_steps)
        est = estimate_nade(recs, cfg.max_control_steps)
        row["nade_mu"] = est.mu
        row["nade_rhw"] = _safe_rhw(est, cfg.gamma)
        row["nade_tests"] = tests_to_threshold(
            recs, cfg.rhw_threshold, cfg.gamma, "nade", cfg.confirm_window,
            cfg.max_control_steps)
        est = estimate_atscv(recs, cfg)
        row["atscv_mu"] = est.mu
        row["atscv_rhw"] = _safe_rhw(est, cfg.gamma)
        row["atscv_tests"] = tests_to_threshold(
            recs, cfg.rhw_threshold, cfg.gamma, "atscv", cfg.confirm_window,
            cfg.max_control_steps)
    row["accel_nde_nade"] = _ratio(row["nde_tests"], row["nade_tests"])
    row["accel_nade_atscv"] = _ratio(row["nade_tests"], row["atscv_tests"])
    return row


def _replication_chunk(args) -> List[dict]:
    cfg, reps = args
    evaluator = None
    if cfg.environment in ("nade", "both") and cfg.episodes_nade > 0:
        evaluator = CriticalityEvaluator(cfg.scenario)
    return [_run_one_replication(cfg, rep, evaluator) for rep in reps]


def run_replications(cfg: CampaignConfig) -> List[dict]:
    """One campaign per replication, seeded root+1 ... root+R."""
    cfg.validate()
    reps = list(range(1, cfg.replications + 1))
    if cfg.workers <= 1 or len(reps) == 1:
        return _replication_chunk((cfg, reps))
    chunks = [reps[start:start + count]
              for start, count in _chunk_bounds(len(reps), cfg.workers)]
    with multiprocessing.Pool(cfg.workers) as pool:
        parts = pool.map(_replication_chunk, [(cfg, c) for c in chunks])
    return [row for part in parts for row in part]


def _aggregate_replications(rows: List[dict]) -> dict:
    def median_of(key):
        vals = [r[key] for r in rows if r[key] is not None]
        return statistics.median(vals) if vals else None

    pairs = [(r["atscv_tests"], r["nade_tests"]) for r in rows
             if r["atscv_tests"] is not None and r["nade_tests"] is not None]
    return {
        "replications": len(rows),
        "median_nde_tests": median_of("nde_tests"),
        "median_nade_tests": median_of("nade_tests"),
        "median_atscv_tests": median_of("atscv_tests"),
        "median_accel_nde_nade": median_of("accel_nde_nade"),
        "median_accel_nade_atscv": median_of("accel_nade_atscv"),
        "atscv_faster_than_nade": sum(1 for a, b in pairs if a < b),
        "atscv_nade_comparable": len(pairs),
    }


# ---------------------------------------------------------------------------
# file emission


RECORD_COLUMNS = ["id", "seed", "env", "accident", "l", "w"]
ADJUSTED_COLUMNS = ["id", "l", "unadjusted", "adjusted"]
CONVERGENCE_COLUMNS = ["n", "mu", "rhw"]
REPLICATION_COLUMNS = [
    "replication", "seed",
    "nde_mu", "nde_rhw", "nde_tests",
    "nade_mu", "nade_rhw", "nade_tests",
    "atscv_mu", "atscv_rhw", "atscv_tests",
    "accel_nde_nade", "accel_nade_atscv",
]


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def _cell(value) -> str:
    return "" if value is None else str(value)


def _log_columns(panel_size: int) -> List[str]:
    return ["record_id", "moment", "p", "q_alpha"] + [
        f"q_{j + 1}" for j in range(panel_size)]


def write_records(path: str, records: Sequence[TestRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(RECORD_COLUMNS)
        for r in records:
            w.writerow([r.index, r.seed, r.env, r.accident,
                        r.control_steps, repr(r.weight)])


def write_critical_log(path: str, records: Sequence[TestRecord],
                       panel_size: int) -> None:
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(_log_columns(panel_size))
        for r in records:
            for k, m in enumerate(r.critical_log):
                w.writerow([r.index, k, repr(m.p), repr(m.q_alpha)]
                           + [repr(q) for q in m.q])


def write_convergence(path: str, table) -> None:
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(CONVERGENCE_COLUMNS)
        for n, mu, r in table:
            w.writerow([int(n), repr(float(mu)), repr(float(r))])


def write_adjusted_points(path: str, records: Sequence[TestRecord],
                          groups: Optional[Sequence[GroupedRegression]]) -> None:
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(ADJUSTED_COLUMNS)
        if not records or groups is None:
            return
        adjusted = atscv_adjusted(records, groups)
        for i, r in enumerate(records):
            w.writerow([r.index, r.control_steps,
                        repr(r.accident * r.weight), repr(float(adjusted[i]))])


def write_replications(path: str, rows: List[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(REPLICATION_COLUMNS)
        for row in rows:
            w.writerow([_cell(row.get(col)) for col in REPLICATION_COLUMNS])


def config_echo(cfg: CampaignConfig) -> dict:
    """Config as a JSON-safe dict; the worker count is execution detail and
    deliberately excluded so summaries are invariant to it."""
    echo = dataclasses.asdict(cfg)
    echo.pop("workers", None)
    return echo


def build_summary(result: CampaignResult) -> dict:
    methods = {}
    for name, mr in result.methods.items():
        methods[name] = {
            "n": mr.estimate.n,
            "mu": mr.estimate.mu,
            "variance": mr.estimate.variance,
            "rhw": mr.rhw,
            "tests_to_threshold": mr.tests_to_threshold,
            "per_group": [[l, c] for l, c in mr.estimate.per_group],
        }
    summary = {
        "version": __version__,
        "config": config_echo(result.config),
        "oracle_mu": result.oracle_mu,
        "methods": methods,
        "acceleration": result.acceleration,
    }
    if result.replication_rows:
        summary["replications"] = result.replication_rows
        summary["aggregates"] = _aggregate_replications(result.replication_rows)
    return summary


def emit_outputs(result: CampaignResult, out_dir: str) -> List[str]:
    """Write the full output file set; returns the manifest of paths."""
    os.makedirs(out_dir, exist_ok=True)
    cfg = result.config
    all_records = list(result.records.get("nde", [])) + \
        list(result.records.get("nade", []))
    manifest = []

    path = os.path.join(out_dir, "records.csv")
    write_records(path, all_records)
    manifest.append(path)

    path = os.path.join(out_dir, "critical_log.csv")
    write_critical_log(path, result.records.get("nade", []),
                       len(cfg.scenario.surrogates))
    manifest.append(path)

    for method in METHODS:
        path = os.path.join(out_dir, f"convergence_{method}.csv")
        source = result.records.get("nde" if method == "nde" else "nade", [])
        if method in result.methods and source:
            table = convergence_series(source, cfg.gamma, method,
                                       cfg.max_control_steps)
        else:
            table = []
        write_convergence(path, table)
        manifest.append(path)

    path = os.path.join(out_dir, "adjusted_points.csv")
    write_adjusted_points(path, result.records.get("nade", []), result.groups)
    manifest.append(path)

    if result.replication_rows:
        path = os.path.join(out_dir, "replications.csv")
        write_replications(path, result.replication_rows)
        manifest.append(path)

    path = os.path.join(out_dir, "summary.json")
    with open(path, "w") as fh:
        json.dump(build_summary(result), fh, indent=2, sort_keys=True)
        fh.write("\n")
    manifest.append(path)
    return manifest


# ---------------------------------------------------------------------------
# loading emitted records back


def read_records(path: str) -> List[TestRecord]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(TestRecord(
                index=int(row["id"]), seed=int(row["seed"]), env=row["env"],
                accident=int(row["accident"]), weight=float(row["w"])))
    return out


def read_critical_log(path: str) -> Dict[int, List[CriticalMoment]]:
    logs: Dict[int, List[Tuple[int, CriticalMoment]]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return {}
        q_cols = [i for i, name in enumerate(header) if name.startswith("q_")
                  and name != "q_alpha"]
        for row in reader:
            rid = int(row[0])
            moment = CriticalMoment(
                p=float(row[2]), q_alpha=float(row[3]),
                q=tuple(float(row[i]) for i in q_cols))
            logs.setdefault(rid, []).append((int(row[1]), moment))
    return {rid: [m for _, m in sorted(entries, key=lambda t: t[0])]
            for rid, entries in logs.items()}


def load_campaign_records(out_dir: str) -> Dict[str, List[TestRecord]]:
    """Rebuild the per-environment record lists from an output directory."""
    records = read_records(os.path.join(out_dir, "records.csv"))
    log_path = os.path.join(out_dir, "critical_log.csv")
    logs = read_critical_log(log_path) if os.path.exists(log_path) else {}
    by_env: Dict[str, List[TestRecord]] = {}
    for r in records:
        if r.env == "nade" and r.index in logs:
            r = dataclasses.replace(r, critical_log=tuple(logs[r.index]))
        by_env.setdefault(r.env, []).append(r)
    return by_env


# ---------------------------------------------------------------------------
# summary schema


_METHOD_SCHEMA = {
    "type": "object",
    "required": ["n", "mu", "variance", "rhw", "tests_to_threshold"],
    "properties": {
        "n": {"type": "integer", "minimum": 0},
        "mu": {"type": "number"},
        "variance": {"type": "number", "minimum": 0},
        "rhw": {"type": ["number", "null"]},
        "tests_to_threshold": {"type": ["integer", "null"]},
        "per_group": {
            "type": "array",
            "items": {
                "type": "array",
                "items": [{"type": "integer"}, {"type": "number"}],
                "minItems": 2,
                "maxItems": 2,
            },
        },
    },
}

SUMMARY_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["version", "config", "methods", "acceleration"],
    "properties": {
        "version": {"type": "string"},
        "config": {"type": "object"},
        "oracle_mu": {"type": ["number", "null"]},
        "methods": {
            "type": "object",
            "additionalProperties": _METHOD_SCHEMA,
        },
        "acceleration": {
            "type": "object",
            "properties": {
                "nde_over_nade": {"type": ["number", "null"]},
                "nade_over_atscv": {"type": ["number", "null"]},
            },
        },
        "replications": {"type": "array", "items": {"type": "object"}},
        "aggregates": {"type": "object"},
    },
}
