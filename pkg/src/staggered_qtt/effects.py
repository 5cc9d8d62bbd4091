"""Cohort-time quantile treatment effects, their aggregations and a copula diagnostic."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.stats import kendalltau

from .counterfactual import UNCONDITIONAL, CounterfactualCdf, estimate
from .edf import Edf
from .errors import (
    EmptySurface,
    InsufficientPrePeriods,
    NoFeasibleCohort,
    PeriodOutOfRange,
    TauOutOfRange,
    UnknownGroup,
)
from .panel import NEVER_TREATED, BalancedPanel, RepeatedCrossSection

SCHEMA_VERSION = 1
DEFAULT_TAUS = tuple(round(0.05 * k, 2) for k in range(1, 20))

EVENT_TIME = "event"
OVERALL = "overall"
CUSTOM = "custom"


def _check_grid(taus):
    taus = tuple(float(t) for t in taus)
    if not taus:
        raise TauOutOfRange("empty quantile grid")
    for t in taus:
        if not 0.0 < t < 1.0:
            raise TauOutOfRange(f"quantile level {t} outside (0, 1)")
    return taus


@dataclass
class QttSurface:
    """QTT estimates keyed by ``(r, t, tau)``.

    Attributes
    ----------
    entries : dict
        ``(r, t, tau) -> estimate``.
    sizes : dict
        ``(r, t) -> (n_treated, n_control)``.
    counterfactuals : dict
        ``(r, t) -> CounterfactualCdf``, kept for diagnostics and ATT.
    """

    anticipation: int
    taus: tuple
    method: str = UNCONDITIONAL
    entries: dict = field(default_factory=dict)
    sizes: dict = field(default_factory=dict)
    counterfactuals: dict = field(default_factory=dict, repr=False)
    att: dict = field(default_factory=dict)

    @property
    def pairs(self):
        return sorted(self.sizes)

    def get(self, r, t, tau):
        return self.entries[(int(r), int(t), float(tau))]

    def curve(self, r, t):
        return np.array([self.get(r, t, tau) for tau in self.taus])

    def add(self, r, t, values, n_treated, n_control, cf=None, att=None):
        if t < r - self.anticipation:
            raise PeriodOutOfRange(f"QTT needs t >= r - rho, got r={r}, t={t}")
        for tau, v in zip(self.taus, np.atleast_1d(values)):
            self.entries[(int(r), int(t), tau)] = float(v)
        self.sizes[(int(r), int(t))] = (int(n_treated), int(n_control))
        if cf is not None:
            self.counterfactuals[(int(r), int(t))] = cf
        if att is not None:
            self.att[(int(r), int(t))] = float(att)

    def to_rows(self):
        return [(r, t, tau, self.entries[(r, t, tau)]) for r, t in self.pairs for tau in self.taus]

    def to_csv(self, handle=None):
        return _write_rows(("r", "t", "tau", "estimate"), self.to_rows(), handle)

    def to_dict(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "method": self.method,
            "anticipation": self.anticipation,
            "taus": list(self.taus),
            "entries": [{"r": r, "t": t, "tau": tau, "estimate": v} for r, t, tau, v in self.to_rows()],
            "sizes": [{"r": r, "t": t, "n_treated": a, "n_control": b}
                      for (r, t), (a, b) in sorted(self.sizes.items())],
            "att": [{"r": r, "t": t, "estimate": v} for (r, t), v in sorted(self.att.items())],
        }


@dataclass
class Aggregation:
    """Weighted combination of QTT curves.

    ``values`` maps ``(index, tau)`` to the aggregate, where ``index`` is
    the exposure length for event-time aggregation and ``"overall"``
    otherwise. ``weights`` maps each index to its ``{(r, t): weight}``.
    """

    kind: str
    taus: tuple
    values: dict = field(default_factory=dict)
    weights: dict = field(default_factory=dict)
    note: str = ""

    def curve(self, index):
        return np.array([self.values[(index, tau)] for tau in self.taus])

    def to_rows(self):
        return [(idx, tau, self.values[(idx, tau)]) for idx in self.weights for tau in self.taus]

    def to_csv(self, handle=None):
        return _write_rows(("kind", "index", "tau", "estimate"),
                           [(self.kind, i, tau, v) for i, tau, v in self.to_rows()], handle)

    def to_dict(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": self.kind,
            "note": self.note,
            "taus": list(self.taus),
            "values": [{"index": i, "tau": tau, "estimate": v} for i, tau, v in self.to_rows()],
            "weights": {str(i): [{"r": r, "t": t, "weight": w} for (r, t), w in sorted(ws.items())]
                        for i, ws in self.weights.items()},
        }


def _write_rows(header, rows, handle):
    buf = handle if handle is not None else io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    return None if handle is not None else buf.getvalue()


def qtt_from_counterfactual(treated_sample, cf: CounterfactualCdf, taus):
    """``F_treated^{-1}(tau) - F_cf^{-1}(tau)`` for each level in ``taus``."""
    taus = np.asarray(_check_grid(taus))
    return np.asarray(Edf(treated_sample).quantile(taus)) - np.asarray(cf.quantile(taus))


def qtt(panel: BalancedPanel, r: int, t: int, anticipation: int = 0, taus=DEFAULT_TAUS,
        method: str = UNCONDITIONAL, **kwargs) -> QttSurface:
    """QTT curve for one ``(r, t)`` pair, returned as a one-pair surface."""
    taus = _check_grid(taus)
    cf = estimate(panel, r, t, anticipation, method, **kwargs)
    treated = panel.slice(r, t)
    values = np.asarray(Edf(treated).quantile(np.asarray(taus))) - np.asarray(cf.quantile(np.asarray(taus)))
    surface = QttSurface(int(anticipation), taus, method)
    surface.add(r, t, values, cf.n_treated, cf.n_control, cf, Edf(treated).mean() - cf.mean())
    return surface


def qtt_surface(panel, anticipation: int = 0, taus=DEFAULT_TAUS,
                method: str = UNCONDITIONAL, pairs=None, **kwargs) -> QttSurface:
    """QTT curves for every estimable ``(r, t)`` with ``t >= r`` (or the given ``pairs``).

    ``panel`` may also be a :class:`RepeatedCrossSection` when ``method``
    is ``"rcs"``; treated quantiles then come from the period-``t`` draws.

    Pairs whose base period ``r - rho - 1`` falls before the first period
    are skipped when ``pairs`` is not given.
    """
    taus = _check_grid(taus)
    surface = QttSurface(int(anticipation), taus, method)
    if pairs is None:
        pairs = [(r, t) for r in panel.cohorts for t in panel.periods
                 if t >= r and r - anticipation - 1 >= panel.first_period]
        if isinstance(panel, RepeatedCrossSection):
            pairs = [(r, t) for r, t in pairs if r - anticipation - 1 in panel.periods]
    grid = np.asarray(taus)
    for r, t in pairs:
        cf = estimate(panel, r, t, anticipation, method, **kwargs)
        treated = Edf(panel.slice(r, t))
        surface.add(r, t, np.asarray(treated.quantile(grid)) - np.asarray(cf.quantile(grid)),
                    cf.n_treated, cf.n_control, cf, treated.mean() - cf.mean())
    if not surface.sizes:
        raise EmptySurface("no estimable (r, t) pair")
    return surface


def cohort_shares(panel: BalancedPanel) -> dict:
    """Sample share of each cohort among ever-treated units, ``r -> P(d_r = 1)``.

    Only the relative sizes enter the aggregations, which renormalize
    over their feasible cohorts.
    """
    sizes = {r: c for r, c in panel.cohort_sizes.items() if r != NEVER_TREATED}
    total = sum(sizes.values())
    return {int(r): c / total for r, c in sorted(sizes.items())}


def aggregate_event_time(surface: QttSurface, shares: Mapping[int, float],
                         exposures: Optional[Sequence[int]] = None,
                         last_period: Optional[int] = None) -> Aggregation:
    """Average of ``QTT_{r, r+e}`` over cohorts observed ``e`` periods after adoption.

    Cohort weights are ``P(d_r = 1 | r + e <= T)``, i.e. the shares
    renormalized over the feasible cohorts.
    """
    if not surface.sizes:
        raise EmptySurface("surface has no entries")
    last = max(t for _, t in surface.pairs) if last_period is None else int(last_period)
    cohorts = sorted({r for r, _ in surface.pairs})
    if exposures is None:
        exposures = sorted({t - r for r, t in surface.pairs if t >= r})
    agg = Aggregation(EVENT_TIME, surface.taus,
                      note="cohort shares renormalized over cohorts with r + e <= T")
    for e in exposures:
        feasible = [r for r in cohorts if r + e <= last and (r, r + e) in surface.sizes
                    and shares.get(r, 0.0) > 0]
        if not feasible:
            raise NoFeasibleCohort(f"no cohort is observed {e} periods after adoption")
        total = sum(shares[r] for r in feasible)
        weights = {(r, r + e): shares[r] / total for r in feasible}
        _fill(agg, int(e), weights, surface)
    return agg


def aggregate_overall(surface: QttSurface, shares: Mapping[int, float]) -> Aggregation:
    """Share-weighted average over all post-treatment ``(r, t)``, normalized by kappa."""
    raw = {(r, t): shares.get(r, 0.0) for r, t in surface.pairs if t >= r}
    kappa = sum(raw.values())
    if not raw or kappa <= 0:
        raise EmptySurface("no post-treatment (r, t) pair with positive weight")
    agg = Aggregation(OVERALL, surface.taus, note=f"kappa={kappa!r}")
    _fill(agg, OVERALL, {k: w / kappa for k, w in raw.items()}, surface)
    return agg


def aggregate_custom(surface: QttSurface, weights: Mapping[tuple, float],
                     index="custom") -> Aggregation:
    """User weights ``w(r, t)``, normalized to sum to one."""
    total = float(sum(weights.values()))
    if not weights or total <= 0:
        raise EmptySurface("custom weights must be nonempty with positive sum")
    missing = [k for k in weights if tuple(k) not in surface.sizes]
    if missing:
        raise UnknownGroup(f"surface has no entries for {missing}")
    agg = Aggregation(CUSTOM, surface.taus)
    _fill(agg, index, {tuple(k): w / total for k, w in weights.items()}, surface)
    return agg


def _fill(agg, index, weights, surface):
    agg.weights[index] = weights
    for tau in surface.taus:
        agg.values[(index, tau)] = float(sum(w * surface.get(r, t, tau) for (r, t), w in weights.items()))


@dataclass(frozen=True)
class KendallDiagnostic:
    """Kendall tau-b between ``Y_{s-1}`` and ``Y_s - Y_{s-1}`` per group and period."""

    cohort: int
    periods: tuple
    treated: tuple
    never_treated: tuple

    def to_dict(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "cohort": self.cohort,
            "rows": [{"s": s, "treated": a, "never_treated": b}
                     for s, a, b in zip(self.periods, self.treated, self.never_treated)],
        }


def _tau_b(x, y):
    if x.size < 2:
        return float("nan")
    return float(kendalltau(x, y, variant="b").statistic)


def kendall_tau_diagnostic(panel: BalancedPanel, r: int, periods=None,
                           anticipation: int = 0) -> KendallDiagnostic:
    """Copula-invariance check comparing rank dependence across groups.

    By default ``s`` runs over the pre-treatment periods
    ``first_period + 1 .. r - rho - 1``; other periods may be requested.
    """
    if r not in panel.cohorts:
        raise UnknownGroup(f"cohort {r} not present")
    if periods is None:
        periods = list(range(panel.first_period + 1, r - anticipation))
    periods = [int(s) for s in periods]
    if not periods:
        raise InsufficientPrePeriods(
            f"cohort {r} has fewer than two pre-treatment periods")
    tr, nv = [], []
    for s in periods:
        if s - 1 < panel.first_period or s > panel.last_period:
            raise PeriodOutOfRange(f"period {s} has no lag inside the panel")
        for group, out in ((r, tr), (NEVER_TREATED, nv)):
            prev = panel.slice(group, s - 1)
            out.append(_tau_b(prev, panel.slice(group, s) - prev))
    return KendallDiagnostic(int(r), tuple(periods), tuple(tr), tuple(nv))


def to_json(obj) -> str:
    return json.dumps(obj.to_dict(), indent=2, sort_keys=True)


__all__ = [
    "CUSTOM",
    "DEFAULT_TAUS",
    "EVENT_TIME",
    "OVERALL",
    "Aggregation",
    "KendallDiagnostic",
    "QttSurface",
    "aggregate_custom",
    "aggregate_event_time",
    "aggregate_overall",
    "cohort_shares",
    "kendall_tau_diagnostic",
    "qtt",
    "qtt_from_counterfactual",
    "qtt_surface",
    "to_json",
]
