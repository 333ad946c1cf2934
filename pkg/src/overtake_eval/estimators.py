"""Accident-rate estimators and the stopping-rule machinery.

Three estimators share one grouped code path:

* the naturalistic estimator averages raw accident indicators;
* the accelerated estimator averages weighted indicators, grouped by the
  number of logged control moments;
* the regression-adjusted estimator additionally fits, per group, a linear
  model of the weighted indicators on products of per-surrogate density
  ratios, which leaves the point estimate untouched (the design is centered)
  but shrinks the residual variance.

Groups are indexed by the control-moment count ``l``; records beyond the
configured cap land in a single overflow group that is never adjusted.  The
group-``l`` design matrix has ``(J-1)^l`` columns for a panel of J surrogate
models; nothing anywhere allocates the exponential full-product structure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import norm

from .sampling import TestRecord

__all__ = [
    "EmptyInput",
    "EmptyGroup",
    "ZeroEstimate",
    "GroupedRegression",
    "Estimate",
    "build_group",
    "mlr_fit",
    "fit_atscv",
    "estimate_nde",
    "estimate_nade",
    "estimate_atscv",
    "atscv_adjusted",
    "rhw",
    "convergence_series",
    "tests_to_threshold",
]

RANK_TOLERANCE = 1e-10


class EmptyInput(ValueError):
    """No records to estimate from."""


class EmptyGroup(ValueError):
    """A regression group with no members cannot be fitted."""


class ZeroEstimate(ValueError):
    """Relative half-width is undefined for a zero point estimate."""


# ---------------------------------------------------------------------------
# groups and regression


@dataclass
class GroupedRegression:
    """One group's responses and centered control design.

    ``members`` holds positions into the source record sequence so adjusted
    values can be scattered back in input order.  ``beta`` and ``eta`` are
    populated by :func:`mlr_fit`.
    """

    exposures: int
    members: np.ndarray
    Y: np.ndarray
    Z: np.ndarray
    column_means: np.ndarray
    beta: Optional[np.ndarray] = None
    eta: Optional[float] = None

    @property
    def count(self) -> int:
        return len(self.Y)

    def residuals(self) -> np.ndarray:
        return self.Y - self.eta - self.Z @ self.beta

    def adjusted(self) -> np.ndarray:
        """Per-record adjusted values: fitted intercept plus residual."""
        return self.eta + self.residuals()

    def residual_variance(self) -> float:
        if self.count < 2:
            return 0.0
        r = self.residuals()
        return float(r @ r) / (self.count - 1)


def _response(record: TestRecord) -> float:
    return record.accident * record.weight


def control_row(record: TestRecord) -> np.ndarray:
    """Control features for one record: the outer product, over its logged
    moments, of the first J-1 per-surrogate density ratios q_j/q_alpha."""
    row = np.ones(1)
    for m in record.critical_log:
        u = np.asarray(m.q[:-1], dtype=float) / m.q_alpha
        row = np.outer(row, u).ravel()
    return row


def build_group(records: Sequence[TestRecord], l: int) -> GroupedRegression:
    """Collect the group with exactly ``l`` control moments and center its
    design columns.  ``l = 0`` yields a zero-column design."""
    members = [i for i, r in enumerate(records) if r.control_steps == l]
    Y = np.array([_response(records[i]) for i in members], dtype=float)
    if l == 0 or not members:
        width = 0
        Z = np.zeros((len(members), 0))
        means = np.zeros(0)
    else:
        rows = [control_row(records[i]) for i in members]
        Z = np.vstack(rows)
        means = Z.mean(axis=0)
        Z = Z - means
    return GroupedRegression(exposures=l, members=np.asarray(members, dtype=int),
                             Y=Y, Z=Z, column_means=means)


def _build_overflow(records: Sequence[TestRecord], cap: int) -> GroupedRegression:
    members = [i for i, r in enumerate(records) if r.control_steps > cap]
    Y = np.array([_response(records[i]) for i in members], dtype=float)
    return GroupedRegression(exposures=cap + 1,
                             members=np.asarray(members, dtype=int),
                             Y=Y, Z=np.zeros((len(members), 0)),
                             column_means=np.zeros(0))


def mlr_fit(g: GroupedRegression) -> Tuple[np.ndarray, float]:
    """Least squares of Y on the centered design, with intercept.

    Centering decouples the intercept, so ``eta`` is the plain group mean.
    Rank deficiency resolves to the minimum-norm solution; groups too small
    to support the fit fall back to a zero coefficient vector.
    """
    m = g.count
    if m == 0:
        raise EmptyGroup("cannot fit an empty group")
    eta = float(np.mean(g.Y))
    width = g.Z.shape[1]
    if width == 0 or m <= width + 1:
        beta = np.zeros(width)
    else:
        beta, _, _, _ = np.linalg.lstsq(g.Z, g.Y - eta, rcond=RANK_TOLERANCE)
    g.beta = beta
    g.eta = eta
    return beta, eta


def _fit_mean_only(g: GroupedRegression) -> None:
    if g.count == 0:
        raise EmptyGroup("cannot fit an empty group")
    g.eta = float(np.mean(g.Y))
    g.beta = np.zeros(g.Z.shape[1])


def fit_atscv(records: Sequence[TestRecord], max_control_steps: int = 10,
              force_zero_beta: bool = False) -> List[GroupedRegression]:
    """Group records by control-moment count and fit each group.

    Groups beyond ``max_control_steps`` are merged into one unadjusted
    overflow group, labeled ``max_control_steps + 1``.
    """
    if not records:
        raise EmptyInput("no records")
    cap = max_control_steps
    labels = sorted({min(r.control_steps, cap + 1) for r in records})
    groups = []
    for lab in labels:
        g = _build_overflow(records, cap) if lab > cap else build_group(records, lab)
        if force_zero_beta or lab > cap:
            _fit_mean_only(g)
        else:
            mlr_fit(g)
        groups.append(g)
    return groups


# ---------------------------------------------------------------------------
# estimates


@dataclass(frozen=True)
class Estimate:
    """Point estimate with its variance and per-group decomposition."""

    method: str
    mu: float
    variance: float
    n: int
    per_group: Tuple[Tuple[int, float], ...] = ()


def _require_env(records: Sequence[TestRecord], env: str) -> None:
    if not records:
        raise EmptyInput("no records")
    for r in records:
        if r.env != env:
            raise ValueError(f"expected {env!r} records, found {r.env!r}")


def _grouped_point(groups: Sequence[GroupedRegression], n: int):
    mu = 0.0
    per_group = []
    for g in groups:
        contribution = g.count * g.eta / n
        per_group.append((g.exposures, contribution))
        mu += contribution
    return mu, tuple(per_group)


def _sample_variance(y: np.ndarray) -> float:
    if len(y) < 2:
        return 0.0
    d = y - y.mean()
    return float(d @ d) / (len(y) - 1)


def estimate_nde(records: Sequence[TestRecord]) -> Estimate:
    """Mean accident indicator; variance is the sample variance over n."""
    _require_env(records, "nde")
    n = len(records)
    groups = fit_atscv(records, force_zero_beta=True)
    mu, per_group = _grouped_point(groups, n)
    y = np.array([float(r.accident) for r in records])
    return Estimate(method="nde", mu=mu, variance=_sample_variance(y) / n,
                    n=n, per_group=per_group)


def estimate_nade(records: Sequence[TestRecord],
                  max_control_steps: int = 10) -> Estimate:
    """Mean weighted indicator; variance is the pooled sample variance
    of the weighted indicators over n."""
    _require_env(records, "nade")
    n = len(records)
    groups = fit_atscv(records, max_control_steps, force_zero_beta=True)
    mu, per_group = _grouped_point(groups, n)
    y = np.array([_response(r) for r in records])
    return Estimate(method="nade", mu=mu, variance=_sample_variance(y) / n,
                    n=n, per_group=per_group)


def estimate_atscv(records: Sequence[TestRecord], cfg=None,
                   force_zero_beta: bool = False,
                   max_control_steps: Optional[int] = None) -> Estimate:
    """Regression-adjusted estimate over the same grouped decomposition.

    The point estimate coincides with the unadjusted grouped mean (centered
    designs leave the intercept alone); the variance is the group-size
    weighted residual variance, which is where the adjustment pays off.
    """
    if max_control_steps is None:
        max_control_steps = getattr(cfg, "max_control_steps", 10)
    _require_env(records, "nade")
    n = len(records)
    groups = fit_atscv(records, max_control_steps, force_zero_beta)
    mu, per_group = _grouped_point(groups, n)
    variance = sum(g.count * g.residual_variance() for g in groups) / n ** 2
    return Estimate(method="atscv", mu=mu, variance=variance,
                    n=n, per_group=per_group)


def atscv_adjusted(records: Sequence[TestRecord],
                   groups: Sequence[GroupedRegression]) -> np.ndarray:
    """Adjusted values scattered back into record order."""
    out = np.empty(len(records))
    for g in groups:
        out[g.members] = g.adjusted()
    return out


def rhw(e: Estimate, gamma: float = 0.1) -> float:
    """Relative half-width of the two-sided confidence interval."""
    if e.mu <= 0.0:
        raise ZeroEstimate("relative half-width is undefined when the "
                           "point estimate is zero")
    z = float(norm.ppf(1.0 - gamma / 2.0))
    return z * float(np.sqrt(e.variance)) / e.mu


# ---------------------------------------------------------------------------
# per-prefix convergence


def _pooled_rhw_series(y: np.ndarray, z: float):
    n = np.arange(1, len(y) + 1, dtype=float)
    s = np.cumsum(y)
    ss = np.cumsum(y * y)
    mu = s / n
    with np.errstate(divide="ignore", invalid="ignore"):
        s2 = (ss - s * s / n) / (n - 1.0)
    s2 = np.where(n >= 2.0, np.maximum(s2, 0.0), 0.0)
    var = s2 / n
    with np.errstate(divide="ignore", invalid="ignore"):
        r = z * np.sqrt(var) / mu
    return mu, np.where(mu > 0.0, r, np.inf)


class _RunningGroup:
    """Grows one group's rows and refits it after every arrival."""

    __slots__ = ("label", "fit", "width", "ys", "rows")

    def __init__(self, label: int, fit: bool):
        self.label = label
        self.fit = fit
        self.width = None
        self.ys: List[float] = []
        self.rows: List[np.ndarray] = []

    def add(self, y: float, row: Optional[np.ndarray]) -> float:
        """Insert one record; return the new ``count * residual variance``."""
        self.ys.append(y)
        m = len(self.ys)
        yv = np.asarray(self.ys)
        eta = float(np.mean(yv))
        if self.fit:
            self.rows.append(row)
            if self.width is None:
                self.width = len(row)
        if m < 2:
            return 0.0
        if self.fit and self.width > 0 and m > self.width + 1:
            Z = np.vstack(self.rows)
            Zc = Z - Z.mean(axis=0)
            beta, _, _, _ = np.linalg.lstsq(Zc, yv - eta, rcond=RANK_TOLERANCE)
            resid = yv - eta - Zc @ beta
        else:
            resid = yv - eta
        return m * float(resid @ resid) / (m - 1)


def _atscv_rhw_iter(records: Sequence[TestRecord], z: float,
                    cap: int) -> Iterator[Tuple[float, float]]:
    """Yield ``(prefix mean, prefix relative half-width)`` one arrival at a
    time, refitting only the group the newest record lands in.

    Lazy on purpose: a consumer that stops at the first sustained threshold
    crossing never pays for fits beyond it.
    """
    groups: Dict[int, _RunningGroup] = {}
    contrib: Dict[int, float] = {}
    total = 0.0
    s = 0.0
    for i, r in enumerate(records):
        y = _response(r)
        s += y
        mu = s / (i + 1)
        l = r.control_steps
        label = l if l <= cap else cap + 1
        grp = groups.get(label)
        if grp is None:
            grp = _RunningGroup(label, fit=(0 < label <= cap))
            groups[label] = grp
        row = control_row(r) if grp.fit else None
        fresh = grp.add(y, row)
        total += fresh - contrib.get(label, 0.0)
        contrib[label] = fresh
        var = max(total, 0.0) / (i + 1) ** 2
        if mu > 0.0:
            yield mu, z * math.sqrt(var) / mu
        else:
            yield mu, math.inf


def _atscv_rhw_series(records: Sequence[TestRecord], z: float, cap: int):
    pairs = list(_atscv_rhw_iter(records, z, cap))
    mu = np.array([p[0] for p in pairs])
    return mu, np.array([p[1] for p in pairs])


def _rhw_series(records: Sequence[TestRecord], gamma: float, method: str,
                max_control_steps: int):
    z = float(norm.ppf(1.0 - gamma / 2.0))
    if method == "nde":
        return _pooled_rhw_series(
            np.array([float(r.accident) for r in records]), z)
    if method == "nade":
        return _pooled_rhw_series(
            np.array([_response(r) for r in records]), z)
    if method == "atscv":
        return _atscv_rhw_series(records, z, max_control_steps)
    raise ValueError(f"unknown method {method!r}")


def convergence_series(records: Sequence[TestRecord], gamma: float,
                       method: str, max_control_steps: int = 10) -> np.ndarray:
    """Per-prefix table ``(n, point estimate, relative half-width)``."""
    if not records:
        return np.zeros((0, 3))
    mu, r = _rhw_series(records, gamma, method, max_control_steps)
    n = np.arange(1, len(records) + 1, dtype=float)
    return np.column_stack([n, mu, r])


def tests_to_threshold(records: Sequence[TestRecord], threshold: float,
                       gamma: float = 0.1, method: str = "nade",
                       confirm_window: int = 50,
                       max_control_steps: int = 10) -> Optional[int]:
    """Smallest prefix length whose relative half-width stays at or below
    ``threshold`` for ``confirm_window`` consecutive prefixes.

    Returns None when no fully observed window qualifies.
    """
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    if not records:
        return None
    if method == "atscv":
        z = float(norm.ppf(1.0 - gamma / 2.0))
        source: Iterator[float] = (
            r for _, r in _atscv_rhw_iter(records, z, max_control_steps))
    else:
        _, series = _rhw_series(records, gamma, method, max_control_steps)
        source = iter(series)
    run = 0
    for i, value in enumerate(source):
        run = run + 1 if value <= threshold else 0
        if run == confirm_window:
            return i - confirm_window + 2
    return None
