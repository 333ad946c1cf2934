"""Episode generation for the naturalistic and accelerated environments.

Both samplers roll the two-phase scenario forward from a random initial gap.
The naturalistic sampler draws every background-vehicle action from the
behavior model.  The accelerated sampler consults the criticality evaluator
at each pre-cut-in step: at critical moments it draws from the mixture
importance distribution instead, logs the densities needed by the estimators,
and accumulates the likelihood-ratio weight; everywhere else it behaves
exactly like the naturalistic sampler.

Episodes are deterministic functions of ``(root seed, environment, index)``;
the per-episode seed is derived through a counter-based spawn so campaigns
are invariant to worker count and scheduling order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .criticality import CriticalityEvaluator
from .models import ZeroDensity, idm_follower, nde_action_dist
from .scenario import (
    Action,
    Phase,
    ScenarioState,
    Termination,
    check_termination,
    cutin_outcome,
    step_raw,
)

ENV_NDE = "nde"
ENV_NADE = "nade"
_ENV_CODES = {ENV_NDE: 0, ENV_NADE: 1}


@dataclass(frozen=True)
class CriticalMoment:
    """One logged critical moment: densities evaluated at the chosen action."""

    p: float
    q_alpha: float
    q: Tuple[float, ...]
    step: Optional[int] = None
    action: Optional[Action] = None


@dataclass(frozen=True)
class TestRecord:
    """One complete test episode and everything the estimators need from it."""

    __test__ = False  # keep pytest from collecting this as a test class

    index: int
    seed: int
    env: str
    accident: int
    weight: float
    critical_log: Tuple[CriticalMoment, ...] = ()

    @property
    def control_steps(self) -> int:
        return len(self.critical_log)

    def recomputed_weight(self) -> float:
        w = 1.0
        for m in self.critical_log:
            w *= m.p / m.q_alpha
        return w


def episode_seed(root_seed: int, env: str, index: int) -> int:
    """Per-episode seed from a counter-based derivation; order-independent."""
    ss = np.random.SeedSequence((root_seed, _ENV_CODES[env], index))
    return int(ss.generate_state(1, np.uint64)[0])


def sample_initial_state(rng: np.random.Generator, cfg) -> ScenarioState:
    """Initial reduced state; only the BV-LV range is random."""
    init = cfg.init
    return ScenarioState(
        v_bv=init.v_bv,
        r1=rng.uniform(init.r1_low, init.r1_high),
        r1_dot=init.r1_dot,
        r2=init.r2,
        r2_dot=init.r2_dot,
        phase=Phase.BEFORE_CUT_IN,
    )


def _advance(s: ScenarioState, a_bv: float, cfg) -> ScenarioState:
    raw = step_raw(s.v_bv, s.r1, s.r1_dot, s.r2, s.r2_dot, a_bv, 0.0, cfg.dt)
    return ScenarioState(*raw, phase=Phase.BEFORE_CUT_IN)


def _resolve_cutin(s: ScenarioState, step_index: int, cfg) -> int:
    """Deterministic post-cut-in outcome within the remaining step budget."""
    crashed = cutin_outcome(
        s.v_bv, s.r1, s.r1_dot, s.r2, s.r2_dot,
        idm_follower(cfg.av_idm), cfg, cfg.max_steps - step_index,
    )
    return 1 if crashed else 0


def sample_nde_episode(rng: np.random.Generator, cfg,
                       index: int = 0, seed: int = 0) -> TestRecord:
    """Roll one naturalistic episode: every BV action drawn from the behavior
    model, follower control engaged after the cut-in."""
    s = sample_initial_state(rng, cfg)
    k = 0
    accident = 0
    while True:
        if check_termination(s, k, cfg) is not None:
            break
        a = nde_action_dist(s, cfg).sample(rng)
        if a.is_lane_change():
            accident = _resolve_cutin(s, k, cfg)
            break
        s = _advance(s, a.a, cfg)
        k += 1
    return TestRecord(index=index, seed=seed, env=ENV_NDE,
                      accident=accident, weight=1.0)


def sample_nade_episode(rng: np.random.Generator, cfg,
                        evaluator: Optional[CriticalityEvaluator] = None,
                        max_control_steps: int = 10,
                        index: int = 0, seed: int = 0) -> TestRecord:
    """Roll one accelerated episode.

    At critical moments (some surrogate sees positive criticality) the action
    comes from the mixture importance distribution and the densities at the
    chosen action are logged; the likelihood-ratio weight accumulates one
    p/q_alpha factor per logged moment.  After ``max_control_steps`` logged
    moments the sampler reverts to the naturalistic law, which caps the log
    length without affecting unbiasedness.
    """
    if evaluator is None:
        evaluator = CriticalityEvaluator(cfg)
    s = sample_initial_state(rng, cfg)
    k = 0
    accident = 0
    weight = 1.0
    log: List[CriticalMoment] = []
    while True:
        if check_termination(s, k, cfg) is not None:
            break
        prof = evaluator.profile(s)
        if prof.is_critical and len(log) < max_control_steps:
            a = prof.importance().sample(rng)
            p_a, q_a, q_js = prof.components(a)
            if q_a <= 0.0:
                raise ZeroDensity(
                    "drawn action has zero mixture density; the importance "
                    "distribution lost absolute continuity")
            weight *= p_a / q_a
            log.append(CriticalMoment(p=p_a, q_alpha=q_a, q=q_js,
                                      step=k, action=a))
        else:
            a = prof.naturalistic().sample(rng)
        if a.is_lane_change():
            accident = _resolve_cutin(s, k, cfg)
            break
        s = _advance(s, a.a, cfg)
        k += 1
    return TestRecord(index=index, seed=seed, env=ENV_NADE,
                      accident=accident, weight=weight,
                      critical_log=tuple(log))


def sample_nde_batch(root_seed: int, cfg, n: int, start: int = 0) -> List[TestRecord]:
    out = []
    for i in range(start, start + n):
        seed = episode_seed(root_seed, ENV_NDE, i)
        rng = np.random.default_rng(seed)
        out.append(sample_nde_episode(rng, cfg, index=i, seed=seed))
    return out


def sample_nade_batch(root_seed: int, cfg, n: int, start: int = 0,
                      evaluator: Optional[CriticalityEvaluator] = None,
                      max_control_steps: int = 10) -> List[TestRecord]:
    if evaluator is None:
        evaluator = CriticalityEvaluator(cfg)
    out = []
    for i in range(start, start + n):
        seed = episode_seed(root_seed, ENV_NADE, i)
        rng = np.random.default_rng(seed)
        out.append(sample_nade_episode(rng, cfg, evaluator=evaluator,
                                       max_control_steps=max_control_steps,
                                       index=i, seed=seed))
    return out
