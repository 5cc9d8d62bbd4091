"""Staggered-adoption panel data: ingestion, validation and group slices."""

from __future__ import annotations

import io
import warnings
from dataclasses import dataclass, field
from os import PathLike
from typing import Optional, Union

import numpy as np
import pandas as pd

from .errors import (
    MissingCovariates,
    MissingPeriodSample,
    NoNeverTreated,
    PanelError,
    PeriodOutOfRange,
    TreatedInFirstPeriod,
    TreatmentReversal,
    UnbalancedPanel,
    UnknownGroup,
)

NEVER_TREATED = 0
NEVER_TOKENS = ("", "never")

Source = Union[str, PathLike, bytes, io.IOBase]


@dataclass(frozen=True)
class Schema:
    """Column names of a long-format input file."""

    unit: str = "unit"
    time: str = "period"
    outcome: str = "y"
    first_treated: Optional[str] = "first_treated"
    treatment: Optional[str] = None
    covariates: tuple = ()


@dataclass(frozen=True, eq=False)
class BalancedPanel:
    """Unit-by-period outcome matrix for a staggered design.

    ``cohort[i]`` is the first treated period of unit ``i`` or
    :data:`NEVER_TREATED`. Treatment status ``D_it = 1{t >= cohort[i]}`` is
    derived, never stored. Units are kept sorted by id so that resampling
    schemes defined on positions are invariant to input row order.
    """

    units: np.ndarray
    periods: np.ndarray
    outcomes: np.ndarray
    cohort: np.ndarray
    covariates: Optional[np.ndarray] = None
    covariate_names: tuple = ()
    dropped_always_treated: int = field(default=0, compare=False)

    @classmethod
    def from_arrays(cls, outcomes, cohort, covariates=None, periods=None, units=None,
                    covariate_names=None):
        """Validate raw arrays and build a panel.

        Parameters
        ----------
        outcomes : array_like, shape (n, T)
        cohort : array_like of int, shape (n,)
            First treated period, or ``NEVER_TREATED`` (0).
        covariates : array_like, shape (n,) or (n, k), optional
        periods : array_like of int, optional
            Consecutive period labels; defaults to ``1..T``.
        units : array_like, optional
            Unit ids; defaults to ``0..n-1``.
        """
        outcomes = np.array(outcomes, dtype=float, ndmin=2)
        n, T = outcomes.shape
        periods = np.arange(1, T + 1) if periods is None else np.asarray(periods, dtype=np.int64)
        units = np.arange(n) if units is None else np.asarray(units)
        cohort = np.asarray(cohort, dtype=np.int64)
        if covariates is not None:
            covariates = np.asarray(covariates, dtype=float)
            if covariates.ndim == 1:
                covariates = covariates[:, None]
            if covariate_names is None:
                covariate_names = tuple(f"x{j + 1}" for j in range(covariates.shape[1]))
        if periods.size != T or cohort.size != n or units.size != n:
            raise UnbalancedPanel("array shapes do not describe a balanced panel")
        if not np.all(np.isfinite(outcomes)):
            raise UnbalancedPanel("outcome matrix contains missing values")
        if covariates is not None and (covariates.shape[0] != n or not np.all(np.isfinite(covariates))):
            raise MissingCovariates("covariate matrix is missing values or has the wrong length")
        order = np.argsort(units, kind="stable")
        return _finalize(units[order], periods, outcomes[order], cohort[order],
                         None if covariates is None else covariates[order],
                         tuple(covariate_names or ()))

    # -- basic shape -----------------------------------------------------
    @property
    def n_units(self):
        return int(self.outcomes.shape[0])

    @property
    def n_periods(self):
        return int(self.outcomes.shape[1])

    @property
    def first_period(self):
        return int(self.periods[0])

    @property
    def last_period(self):
        return int(self.periods[-1])

    @property
    def cohorts(self):
        """Sorted first-treatment periods present in the panel."""
        c = np.unique(self.cohort)
        return tuple(int(r) for r in c[c != NEVER_TREATED])

    @property
    def q(self):
        """First period in which any unit is treated."""
        return min(self.cohorts) if self.cohorts else None

    @property
    def never_treated_count(self):
        return int(np.count_nonzero(self.cohort == NEVER_TREATED))

    @property
    def cohort_sizes(self):
        return {r: int(np.count_nonzero(self.cohort == r)) for r in self.cohorts}

    @property
    def ever_treated(self):
        """Per-unit indicator ``max_r d_{i,r}``; metadata only."""
        return self.cohort != NEVER_TREATED

    @property
    def has_covariates(self):
        return self.covariates is not None and self.covariates.shape[1] > 0

    def treatment_matrix(self):
        """Derived ``D_it`` indicators, shape (n, T)."""
        r = np.where(self.cohort == NEVER_TREATED, np.iinfo(np.int64).max, self.cohort)
        return (self.periods[None, :] >= r[:, None]).astype(np.int8)

    # -- access ----------------------------------------------------------
    def column(self, period):
        period = int(period)
        if period < self.first_period or period > self.last_period:
            raise PeriodOutOfRange(
                f"period {period} outside {self.first_period}..{self.last_period}")
        return period - self.first_period

    def group_mask(self, group):
        group = int(group)
        mask = self.cohort == group
        if not mask.any():
            label = "never-treated" if group == NEVER_TREATED else f"cohort {group}"
            raise UnknownGroup(f"no units in {label}")
        return mask

    def slice(self, group, period):
        """Outcomes of every unit in ``group`` at ``period``, in unit order."""
        return self.outcomes[self.group_mask(group), self.column(period)]

    def long_difference(self, group, start, end):
        """Per-unit ``Y_end - Y_start`` for units in ``group``."""
        if not start < end:
            raise PeriodOutOfRange(f"degenerate window: start={start} must precede end={end}")
        mask = self.group_mask(group)
        return self.outcomes[mask, self.column(end)] - self.outcomes[mask, self.column(start)]

    def group_covariates(self, group):
        if not self.has_covariates:
            raise MissingCovariates("panel has no covariates")
        return self.covariates[self.group_mask(group)]

    def take(self, indices):
        """Panel made of the given unit positions (repeats allowed), unvalidated."""
        indices = np.asarray(indices, dtype=np.int64)
        return BalancedPanel(
            units=self.units[indices],
            periods=self.periods,
            outcomes=self.outcomes[indices],
            cohort=self.cohort[indices],
            covariates=None if self.covariates is None else self.covariates[indices],
            covariate_names=self.covariate_names,
        )

    def with_outcomes(self, outcomes):
        """Same design with a replaced outcome matrix."""
        outcomes = np.asarray(outcomes, dtype=float)
        if outcomes.shape != self.outcomes.shape:
            raise UnbalancedPanel("replacement outcome matrix has the wrong shape")
        return BalancedPanel(self.units, self.periods, outcomes, self.cohort,
                             self.covariates, self.covariate_names, self.dropped_always_treated)

    # -- serialization ---------------------------------------------------
    def to_frame(self, schema: Schema = Schema()):
        """Long-format frame; covariates are repeated on every row."""
        n, T = self.outcomes.shape
        first = schema.first_treated or "first_treated"
        data = {
            schema.unit: np.repeat(self.units, T),
            schema.time: np.tile(self.periods, n),
            schema.outcome: self.outcomes.ravel(),
            first: np.repeat(
                np.where(self.cohort == NEVER_TREATED, "never", self.cohort.astype(str)), T),
        }
        names = schema.covariates or self.covariate_names
        if self.has_covariates:
            for j, name in enumerate(names):
                data[name] = np.repeat(self.covariates[:, j], T)
        return pd.DataFrame(data)

    def to_csv(self, path_or_buf=None, schema: Schema = Schema(), sep=","):
        return self.to_frame(schema).to_csv(path_or_buf, index=False, sep=sep, float_format="%.17g")

    def summary(self):
        return {
            "n_units": self.n_units,
            "periods": [int(p) for p in self.periods],
            "q": self.q,
            "cohort_sizes": {str(k): v for k, v in self.cohort_sizes.items()},
            "never_treated": self.never_treated_count,
            "covariates": list(self.covariate_names),
            "dropped_always_treated": self.dropped_always_treated,
        }


def _finalize(units, periods, outcomes, cohort, covariates, covariate_names):
    """Structural checks shared by every constructor."""
    if periods.size < 2:
        raise PeriodOutOfRange("a staggered design needs at least two periods")
    if np.any(np.diff(periods) != 1):
        raise UnbalancedPanel("periods must be consecutive integers")
    if periods[0] < 1:
        raise PeriodOutOfRange("period labels must be positive integers")
    treated = cohort != NEVER_TREATED
    if np.any(cohort[treated] > periods[-1]):
        raise PanelError("first-treatment period lies after the last sample period")
    always = treated & (cohort <= periods[0])
    dropped = int(np.count_nonzero(always))
    if dropped:
        if dropped == cohort.size:
            raise TreatedInFirstPeriod("every unit is treated in the first period")
        warnings.warn(f"dropping {dropped} always-treated unit(s) treated in the first period",
                      stacklevel=3)
        keep = ~always
        units, outcomes, cohort = units[keep], outcomes[keep], cohort[keep]
        if covariates is not None:
            covariates = covariates[keep]
    if not np.any(cohort == NEVER_TREATED):
        raise NoNeverTreated("the comparison group of never-treated units is empty")
    for arr in (units, periods, outcomes, cohort) + ((covariates,) if covariates is not None else ()):
        arr.setflags(write=False)
    return BalancedPanel(units, periods, outcomes, cohort, covariates, covariate_names, dropped)


def _read_frame(source, sep):
    if isinstance(source, pd.DataFrame):
        return source.copy()
    if isinstance(source, bytes):
        source = io.BytesIO(source)
    return pd.read_csv(source, sep=sep, dtype=str, keep_default_na=False)


def _parse_first_treated(values):
    out = np.empty(len(values), dtype=np.int64)
    for i, v in enumerate(values):
        s = str(v).strip()
        if s.lower() in NEVER_TOKENS or s.lower() == "nan":
            out[i] = NEVER_TREATED
            continue
        try:
            f = float(s)
        except ValueError:
            raise PanelError(f"cannot parse first-treatment value {v!r}") from None
        if f != int(f):
            raise PanelError(f"first-treatment value {v!r} is not an integer period")
        out[i] = int(f)
    return out


def _numeric(frame, col, what):
    # Python's float() rounds correctly, so printed doubles read back exactly
    try:
        vals = frame[col].astype(str).str.strip().replace("", "nan").astype(float)
    except (ValueError, TypeError):
        raise PanelError(f"{what} column {col!r} is not numeric") from None
    return vals.to_numpy(dtype=float)


def load_panel(source: Source, schema: Schema = Schema(), sep: str = ",") -> BalancedPanel:
    """Parse a long-format table into a validated :class:`BalancedPanel`.

    Parameters
    ----------
    source : path, bytes, file object or DataFrame
        Delimited text with a header row.
    schema : Schema
        Column mapping. Cohorts come from ``first_treated`` (empty or
        ``never`` marks never-treated units) or, when that is ``None``,
        from a per-period binary ``treatment`` column.
    sep : str
        Field delimiter.

    Raises
    ------
    UnbalancedPanel, TreatmentReversal, NoNeverTreated, TreatedInFirstPeriod,
    MissingCovariates, PanelError
    """
    frame = _read_frame(source, sep)
    needed = [schema.unit, schema.time, schema.outcome]
    if schema.first_treated is None and schema.treatment is None:
        raise PanelError("schema needs a first-treatment or a treatment column")
    for col in needed + [c for c in (schema.first_treated, schema.treatment) if c] + list(schema.covariates):
        if col not in frame.columns:
            if col in schema.covariates:
                raise MissingCovariates(f"covariate column {col!r} not found")
            raise PanelError(f"column {col!r} not found in input")
    if frame.empty:
        raise UnbalancedPanel("input has no rows")

    time = _numeric(frame, schema.time, "period")
    if np.any(~np.isfinite(time)) or np.any(time != np.round(time)):
        raise PanelError("period column must hold integers")
    frame = frame.assign(_t=time.astype(np.int64), _y=_numeric(frame, schema.outcome, "outcome"))
    if frame.duplicated([schema.unit, "_t"]).any():
        raise UnbalancedPanel("duplicate (unit, period) rows")

    periods = np.sort(frame["_t"].unique())
    if periods.size and np.any(np.diff(periods) != 1):
        raise UnbalancedPanel("periods must be consecutive integers")
    wide = frame.pivot(index=schema.unit, columns="_t", values="_y").reindex(columns=periods)
    if wide.isna().to_numpy().any():
        raise UnbalancedPanel("panel has missing (unit, period) cells")
    units = wide.index.to_numpy()
    frame = frame.sort_values([schema.unit, "_t"], kind="stable")

    cohort = None
    if schema.treatment is not None:
        d = _numeric(frame, schema.treatment, "treatment")
        if not np.all(np.isin(d, (0.0, 1.0))):
            raise PanelError("treatment column must be binary")
        dmat = d.reshape(len(units), len(periods))
        if np.any(np.diff(dmat, axis=1) < 0):
            raise TreatmentReversal("treatment switches off after switching on")
        has = dmat.any(axis=1)
        cohort_d = np.where(has, periods[np.argmax(dmat, axis=1)], NEVER_TREATED)
        cohort = cohort_d
    if schema.first_treated is not None:
        parsed = pd.Series(_parse_first_treated(frame[schema.first_treated].tolist()),
                           index=frame.index)
        spread = parsed.groupby(frame[schema.unit], sort=True).agg(["min", "max"])
        if (spread["min"] != spread["max"]).any():
            raise PanelError("first-treatment period varies within a unit")
        cohort_f = spread["min"].to_numpy()
        if cohort is not None and not np.array_equal(cohort, cohort_f):
            raise PanelError("treatment column disagrees with first-treatment column")
        cohort = cohort_f

    covariates = None
    if schema.covariates:
        first_rows = frame[frame["_t"] == periods[0]].set_index(schema.unit).reindex(units)
        cols = []
        for c in schema.covariates:
            vals = _numeric(first_rows, c, "covariate")
            if np.any(~np.isfinite(vals)):
                raise MissingCovariates(f"covariate {c!r} missing at the first period")
            cols.append(vals)
        covariates = np.column_stack(cols)

    return _finalize(units, periods.astype(np.int64), wide.to_numpy(dtype=float),
                     cohort.astype(np.int64), covariates, tuple(schema.covariates))


def slice_group(panel: BalancedPanel, group: int, period: int) -> np.ndarray:
    """Outcomes of ``group`` (a cohort or ``NEVER_TREATED``) at ``period``."""
    return panel.slice(group, period)


def long_difference(panel: BalancedPanel, group: int, start: int, end: int) -> np.ndarray:
    """Per-unit long difference ``Y_end - Y_start`` for ``group``."""
    return panel.long_difference(group, start, end)


@dataclass(frozen=True, eq=False)
class RepeatedCrossSection:
    """Pooled cross sections; each row is one individual observed once.

    Cohort labels and covariates are attributes of the sampled individual
    and do not depend on the period in which it is observed.
    """

    period: np.ndarray
    cohort: np.ndarray
    outcome: np.ndarray
    covariates: Optional[np.ndarray] = None
    covariate_names: tuple = ()

    def __post_init__(self):
        if not (self.period.shape == self.cohort.shape == self.outcome.shape):
            raise PanelError("cross-section columns have different lengths")
        if not np.all(np.isfinite(self.outcome)):
            raise PanelError("cross-section outcomes contain missing values")

    @classmethod
    def from_panel(cls, panel: BalancedPanel):
        """Treat every unit-period cell of a panel as a separate draw."""
        n, T = panel.outcomes.shape
        cov = None if panel.covariates is None else np.repeat(panel.covariates, T, axis=0)
        return cls(np.tile(panel.periods, n), np.repeat(panel.cohort, T),
                   panel.outcomes.ravel().copy(), cov, panel.covariate_names)

    @property
    def periods(self):
        return tuple(int(p) for p in np.unique(self.period))

    @property
    def first_period(self):
        return int(self.period.min())

    @property
    def cohorts(self):
        c = np.unique(self.cohort)
        return tuple(int(r) for r in c[c != NEVER_TREATED])

    @property
    def cohort_sizes(self):
        """Observation counts per cohort over all periods."""
        return {r: int(np.count_nonzero(self.cohort == r)) for r in self.cohorts}

    def slice(self, group, period):
        return self.sample(group, period)

    def sample(self, group, period):
        """Outcomes of ``group`` observed in ``period``."""
        mask = (self.cohort == int(group)) & (self.period == int(period))
        if not mask.any():
            label = "never-treated" if group == NEVER_TREATED else f"cohort {group}"
            raise MissingPeriodSample(f"no {label} observations in period {period}")
        return self.outcome[mask]


def load_cross_sections(source: Source, schema: Schema = Schema(), sep: str = ",") -> RepeatedCrossSection:
    """Parse pooled cross sections; the unit column is ignored if present."""
    frame = _read_frame(source, sep)
    for col in (schema.time, schema.outcome, schema.first_treated):
        if col is None or col not in frame.columns:
            raise PanelError(f"column {col!r} not found in input")
    time = _numeric(frame, schema.time, "period")
    y = _numeric(frame, schema.outcome, "outcome")
    if np.any(~np.isfinite(time)) or np.any(~np.isfinite(y)):
        raise PanelError("period and outcome must be present on every row")
    cohort = _parse_first_treated(frame[schema.first_treated].tolist())
    treated = cohort != NEVER_TREATED
    if np.any(cohort[treated] <= time.min()):
        raise TreatedInFirstPeriod("a cohort is treated in the first sampled period")
    if not np.any(~treated):
        raise NoNeverTreated("no never-treated observations")
    cov = None
    if schema.covariates:
        cov = np.column_stack([_numeric(frame, c, "covariate") for c in schema.covariates])
    return RepeatedCrossSection(time.astype(np.int64), cohort, y, cov, tuple(schema.covariates))


__all__ = [
    "NEVER_TREATED",
    "BalancedPanel",
    "RepeatedCrossSection",
    "Schema",
    "load_cross_sections",
    "load_panel",
    "long_difference",
    "slice_group",
]
