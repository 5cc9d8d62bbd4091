"""Estimators of the untreated-outcome distribution of a treated cohort.

Every estimator builds a set of thresholds, one per never-treated unit,

    threshold_i = Delta_i + adj_i,

where ``Delta_i`` is the unit's long difference between the base period
``r - rho - 1`` and ``t`` and ``adj_i`` maps the unit's base-period outcome
to the same rank in the treated cohort's base-period distribution. The
counterfactual CDF is the (possibly weighted) empirical CDF of those
thresholds, stored exactly as a step function.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .edf import Edf, WeightedEdf, rank_transform
from .errors import (
    BasePeriodOutOfRange,
    EmptyCell,
    EmptyGroup,
    MissingCovariates,
    MissingPeriodSample,
    NonDiscreteCovariate,
    PeriodOutOfRange,
)
from .panel import NEVER_TREATED, BalancedPanel, RepeatedCrossSection
from .propensity import DEFAULT_TRIM, PropensityModel, fit_logit, ipw_weights

UNCONDITIONAL = "unconditional"
IPW = "ipw"
CONDITIONAL = "conditional"
RCS = "rcs"
METHODS = (UNCONDITIONAL, IPW, CONDITIONAL, RCS)
MAX_DISCRETE_VALUES = 50


@dataclass(frozen=True)
class CovariateCell:
    value: tuple
    n_treated: int
    n_control: int
    weight: float


@dataclass(frozen=True, eq=False)
class CounterfactualCdf:
    """Estimated CDF of ``Y_t(0)`` for cohort ``cohort``, as an exact step function."""

    cohort: int
    period: int
    anticipation: int
    method: str
    dist: object
    n_treated: int
    n_control: int
    cells: tuple = ()
    propensity: Optional[PropensityModel] = None

    @property
    def base_period(self):
        return self.cohort - self.anticipation - 1

    @property
    def points(self):
        """Sorted distinct jump points."""
        return self.dist.jump_points

    @property
    def values(self):
        """CDF evaluated at :attr:`points`."""
        return np.asarray(self.dist.cdf_at(self.points), dtype=float)

    def cdf(self, y):
        return self.dist.cdf_at(y)

    def quantile(self, tau):
        return self.dist.quantile(tau)

    def mean(self):
        """``integral_0^1 F^{-1}(u) du``, exact for a step function."""
        return self.dist.mean()


def base_period(first_period, cohort, period, anticipation):
    """Validate ``(r, t, rho)`` and return the base period ``r - rho - 1``."""
    if anticipation < 0 or int(anticipation) != anticipation:
        raise ValueError("anticipation must be a nonnegative integer")
    base = int(cohort) - int(anticipation) - 1
    if base < first_period:
        raise BasePeriodOutOfRange(
            f"base period r-rho-1={base} precedes the first sample period {first_period}")
    if period < cohort - anticipation:
        raise PeriodOutOfRange(f"period {period} precedes r-rho={cohort - anticipation}")
    return base


def _groups(panel, cohort):
    treated = panel.cohort == cohort
    control = panel.cohort == NEVER_TREATED
    if not treated.any():
        raise EmptyGroup(f"cohort {cohort} has no units")
    if not control.any():
        raise EmptyGroup("no never-treated units")
    return treated, control


def _pieces(panel, cohort, period, anticipation):
    base = base_period(panel.first_period, cohort, period, anticipation)
    b, t = panel.column(base), panel.column(period)
    treated, control = _groups(panel, cohort)
    y_tr_base = panel.outcomes[treated, b]
    y_c_base = panel.outcomes[control, b]
    delta = panel.outcomes[control, t] - y_c_base
    return treated, control, y_tr_base, y_c_base, delta


def estimate_unconditional(panel: BalancedPanel, cohort: int, period: int,
                           anticipation: int = 0) -> CounterfactualCdf:
    """Counterfactual CDF when parallel trends and copula invariance hold unconditionally."""
    treated, control, y_tr_base, y_c_base, delta = _pieces(panel, cohort, period, anticipation)
    adj = rank_transform(Edf(y_tr_base), Edf(y_c_base), y_c_base)
    return CounterfactualCdf(int(cohort), int(period), int(anticipation), UNCONDITIONAL,
                             Edf(delta + adj), int(treated.sum()), int(control.sum()))


def estimate_ipw(panel: BalancedPanel, cohort: int, period: int, anticipation: int = 0,
                 model: Optional[PropensityModel] = None,
                 trim: float = DEFAULT_TRIM) -> CounterfactualCdf:
    """Counterfactual CDF with the change distribution reweighted by propensity odds.

    Each never-treated long difference is moved to its rank in the
    odds-weighted distribution of long differences before thresholding.
    A logit is fitted on the panel when ``model`` is not given.
    """
    treated, control, y_tr_base, y_c_base, delta = _pieces(panel, cohort, period, anticipation)
    if model is None:
        model = fit_logit(panel, cohort, trim=trim)
    weights = ipw_weights(model, panel)
    delta_edf = Edf(delta)
    delta_tr = rank_transform(WeightedEdf(delta, weights), delta_edf, delta)
    adj = rank_transform(Edf(y_tr_base), Edf(y_c_base), y_c_base)
    return CounterfactualCdf(int(cohort), int(period), int(anticipation), IPW,
                             Edf(delta_tr + adj), int(treated.sum()), int(control.sum()),
                             propensity=model)


def discrete_cells(covariates, max_values=MAX_DISCRETE_VALUES):
    """Integer cell labels for each row of a discrete covariate matrix."""
    values, labels = np.unique(np.asarray(covariates, dtype=float), axis=0, return_inverse=True)
    if values.shape[0] > max_values:
        raise NonDiscreteCovariate(
            f"{values.shape[0]} distinct covariate values exceed the cap of {max_values}")
    return values, labels.ravel()


def estimate_conditional_discrete(panel: BalancedPanel, cohort: int, period: int,
                                  anticipation: int = 0,
                                  max_values: int = MAX_DISCRETE_VALUES) -> CounterfactualCdf:
    """Counterfactual CDF built cell by cell over a discrete covariate.

    Within each covariate cell the base-period adjustment uses cell-local
    EDFs; cell CDFs are then averaged with the treated cohort's cell
    shares as weights.
    """
    if not panel.has_covariates:
        raise MissingCovariates("conditional estimation needs covariates")
    base = base_period(panel.first_period, cohort, period, anticipation)
    b, t = panel.column(base), panel.column(period)
    treated, control = _groups(panel, cohort)
    keep = treated | control
    values, labels = discrete_cells(panel.covariates[keep], max_values)
    is_tr = treated[keep]
    y_base = panel.outcomes[keep, b]
    y_t = panel.outcomes[keep, t]
    n_r = int(is_tr.sum())

    thresholds, masses, cells = [], [], []
    for cell in range(values.shape[0]):
        in_cell = labels == cell
        tr_cell = in_cell & is_tr
        c_cell = in_cell & ~is_tr
        n_rx, n_0x = int(tr_cell.sum()), int(c_cell.sum())
        if n_rx == 0:
            continue
        if n_0x == 0:
            raise EmptyCell(f"covariate cell {tuple(values[cell])} has treated but no never-treated units")
        yc_base = y_base[c_cell]
        adj = rank_transform(Edf(y_base[tr_cell]), Edf(yc_base), yc_base)
        thresholds.append(y_t[c_cell] - yc_base + adj)
        masses.append(np.full(n_0x, n_rx / (n_r * n_0x)))
        cells.append(CovariateCell(tuple(float(v) for v in values[cell]), n_rx, n_0x, n_rx / n_r))
    dist = WeightedEdf(np.concatenate(thresholds), np.concatenate(masses))
    return CounterfactualCdf(int(cohort), int(period), int(anticipation), CONDITIONAL, dist,
                             n_r, int(sum(c.n_control for c in cells)), tuple(cells))


def estimate_repeated_cross_section(rcs: RepeatedCrossSection, cohort: int, period: int,
                                    anticipation: int = 0) -> CounterfactualCdf:
    """Counterfactual CDF from pooled cross sections under rank invariance.

    Long differences are imputed for never-treated base-period draws by
    matching ranks between the base-period and period-``t`` never-treated
    samples.
    """
    base = base_period(min(rcs.periods), cohort, period, anticipation)
    if base not in rcs.periods or int(period) not in rcs.periods:
        raise MissingPeriodSample(f"cross sections for periods {base} and {period} are required")
    yc_base = rcs.sample(NEVER_TREATED, base)
    yc_t = rcs.sample(NEVER_TREATED, period)
    y_tr_base = rcs.sample(cohort, base)
    ref = Edf(yc_base)
    delta_tilde = Edf(yc_t).quantile_at_count(ref.counts(yc_base), ref.n) - yc_base
    adj = rank_transform(Edf(y_tr_base), ref, yc_base)
    return CounterfactualCdf(int(cohort), int(period), int(anticipation), RCS,
                             Edf(delta_tilde + adj), int(y_tr_base.size), int(yc_base.size))


def estimate(data, cohort, period, anticipation=0, method=UNCONDITIONAL, **kwargs):
    """Dispatch on ``method`` (one of :data:`METHODS`)."""
    if method == UNCONDITIONAL:
        return estimate_unconditional(data, cohort, period, anticipation)
    if method == IPW:
        return estimate_ipw(data, cohort, period, anticipation, **kwargs)
    if method == CONDITIONAL:
        return estimate_conditional_discrete(data, cohort, period, anticipation, **kwargs)
    if method == RCS:
        if isinstance(data, BalancedPanel):
            data = RepeatedCrossSection.from_panel(data)
        return estimate_repeated_cross_section(data, cohort, period, anticipation)
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")


def att_from_cdf(cf: CounterfactualCdf, treated: Edf) -> float:
    """ATT as the treated mean minus the integrated counterfactual quantile function."""
    return treated.mean() - cf.mean()


__all__ = [
    "CONDITIONAL",
    "IPW",
    "METHODS",
    "RCS",
    "UNCONDITIONAL",
    "CounterfactualCdf",
    "CovariateCell",
    "att_from_cdf",
    "base_period",
    "discrete_cells",
    "estimate",
    "estimate_conditional_discrete",
    "estimate_ipw",
    "estimate_repeated_cross_section",
    "estimate_unconditional",
]
