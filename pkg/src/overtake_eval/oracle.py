"""Brute-force reference value for the accident rate.

The naturalistic process has exactly two sources of randomness: the initial
BV-LV range and the per-step binary cut-in decision.  Everything between
cut-in decisions is deterministic, so the accident rate conditional on the
initial range is a finite sum over cut-in times:

    mu(r) = sum_k  prod_{k' < k} (1 - p_R(s_k')) * p_R(s_k) * crash(s_k)

where ``crash`` deterministically resolves a cut-in at step k against the
vehicle under test with the remaining step budget.  The initial range is
integrated by midpoint quadrature over equal-width bins, which is the sole
approximation; the quoted value is exact up to that binning.
"""

from __future__ import annotations

from typing import List, Tuple

from .models import idm_follower, mobil_right_lc_prob, idm_accel
from .scenario import Phase, ScenarioState, check_termination, cutin_outcome, step_raw

__all__ = ["BudgetExceeded", "brute_force_mu", "conditional_mu", "bin_midpoints"]


class BudgetExceeded(RuntimeError):
    """The enumeration would exceed the configured leaf-evaluation budget."""


def bin_midpoints(low: float, high: float, bins: int) -> List[float]:
    width = (high - low) / bins
    return [low + (b + 0.5) * width for b in range(bins)]


def conditional_mu(r1: float, cfg) -> float:
    """Accident probability given the initial range, by exact enumeration
    of the cut-in time along the deterministic no-cut-in trajectory."""
    init = cfg.init
    s = ScenarioState(v_bv=init.v_bv, r1=r1, r1_dot=init.r1_dot,
                      r2=init.r2, r2_dot=init.r2_dot,
                      phase=Phase.BEFORE_CUT_IN)
    follower = idm_follower(cfg.av_idm)
    mu = 0.0
    survive = 1.0
    k = 0
    while check_termination(s, k, cfg) is None:
        p_r = mobil_right_lc_prob(s, cfg.mobil, cfg.bv_idm, cfg.vehicle_length)
        if p_r > 0.0:
            crashed = cutin_outcome(s.v_bv, s.r1, s.r1_dot, s.r2, s.r2_dot,
                                    follower, cfg, cfg.max_steps - k)
            if crashed:
                mu += survive * p_r
            survive *= 1.0 - p_r
        a_bv = idm_accel(s.v_bv, s.r1 - cfg.vehicle_length, -s.r1_dot,
                         cfg.bv_idm)
        raw = step_raw(s.v_bv, s.r1, s.r1_dot, s.r2, s.r2_dot,
                       a_bv, 0.0, cfg.dt)
        s = ScenarioState(*raw, phase=Phase.BEFORE_CUT_IN)
        k += 1
    return mu


def brute_force_mu(cfg, bins: int = 64, budget: int = 10_000_000) -> float:
    """Reference accident rate: midpoint quadrature of ``conditional_mu``
    over the initial-range distribution.

    Raises BudgetExceeded before doing any work if ``bins`` trajectories of
    up to ``max_steps + 1`` states would exceed the leaf budget.
    """
    leaves = bins * (cfg.max_steps + 1)
    if leaves > budget:
        raise BudgetExceeded(
            f"{bins} bins x {cfg.max_steps + 1} states = {leaves} leaf "
            f"evaluations exceeds the budget of {budget}")
    mids = bin_midpoints(cfg.init.r1_low, cfg.init.r1_high, bins)
    return sum(conditional_mu(r, cfg) for r in mids) / bins
