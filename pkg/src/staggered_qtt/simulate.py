"""Data-generating processes, population quantiles and the Monte Carlo harness.

Untreated outcomes follow a two-way fixed-effects model

    Y_it(0) = alpha_t + eta_i + X_it + u_it

with cohort-dependent unobserved heterogeneity ``eta``. ``X_it`` is redrawn
every period; cohort membership depends on the baseline draw ``X_i1``
through a multinomial logit, so conditioning on the baseline covariate
restores parallel trends in distribution.

Random streams come from Philox, a counter-based generator, keyed by
``(seed, replication)`` so replications never share state and can run in
any order.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from statistics import NormalDist
from typing import Sequence

import numpy as np

from .counterfactual import IPW, UNCONDITIONAL, estimate
from .edf import Edf
from .errors import InvalidSpec, QttError
from .panel import NEVER_TREATED, BalancedPanel
from .parallel import parallel_map

SCHEMA_VERSION = 1
TRENDS = ("linear", "quadratic")
ORACLE_DRAWS = 1_000_000
_STD_NORMAL = NormalDist()


def replicate_rng(seed, *keys):
    """Independent Philox stream for ``(seed, *keys)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, keys)])))


@dataclass(frozen=True)
class DgpSpec:
    """Design of one simulated panel.

    Parameters
    ----------
    dgp : int
        1 (no covariates), 2 (covariate-driven selection), 3 (quantile
        regression with chi-square terms), 4 (trend violation of size
        ``epsilon_bar``) or 5 (copula violation of size ``rho_bar``).
    n : int
        Number of units.
    T : int
        Number of periods; cohorts are ``2..T``.
    trend : {"linear", "quadratic"}
        ``alpha_t = t`` or ``t + t**2``.
    effect : float
        Additive treatment effect on post-treatment outcomes of treated units.
    """

    dgp: int
    n: int
    T: int = 4
    epsilon_bar: float = 0.0
    rho_bar: float = 0.0
    trend: str = "linear"
    effect: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.dgp not in (1, 2, 3, 4, 5):
            raise InvalidSpec(f"unknown DGP {self.dgp}; expected 1..5")
        if self.T < 2:
            raise InvalidSpec("T must be at least 2")
        if self.n < 2 * self.T:
            raise InvalidSpec(f"n={self.n} is below 2T={2 * self.T}")
        if self.epsilon_bar < 0 or self.rho_bar < 0 or self.rho_bar >= 1:
            raise InvalidSpec("need epsilon_bar >= 0 and 0 <= rho_bar < 1")
        if self.trend not in TRENDS:
            raise InvalidSpec(f"trend must be one of {TRENDS}")
        if self.seed < 0:
            raise InvalidSpec("seed must be nonnegative")
        if self.dgp == 5:
            for r in range(2, self.T + 1):
                try:
                    np.linalg.cholesky(_dgp5_cov(self.T, r, self.rho_bar))
                except np.linalg.LinAlgError:
                    raise InvalidSpec(f"rho_bar={self.rho_bar} gives a non-positive-definite "
                                      f"covariance for T={self.T}") from None

    @property
    def cohorts(self):
        return tuple(range(2, self.T + 1))

    @property
    def has_covariates(self):
        return self.dgp != 1


def cohort_gammas(dgp, T):
    """Logit slopes of the cohort-membership model, indexed like ``2..T``."""
    r = np.arange(2, T + 1, dtype=float)
    return r / (4.0 * T) if dgp == 3 else 0.5 * r / T


def cohort_probabilities(dgp, T, x):
    """Membership probabilities, columns ``[never, 2, ..., T]``."""
    x = np.asarray(x, dtype=float)
    if dgp == 1:
        return np.full((x.size, T), 1.0 / T)
    expo = np.exp(np.outer(x, cohort_gammas(dgp, T)))
    full = np.column_stack([np.ones(x.size), expo])
    return full / full.sum(axis=1, keepdims=True)


def trend_values(spec: DgpSpec, periods):
    t = np.asarray(periods, dtype=float)
    return t + t ** 2 if spec.trend == "quadratic" else t


def _dgp5_cov(T, cohort, rho_bar):
    """Covariance of ``(eta, u_1, ..., u_T)``; ``cohort=0`` for never-treated."""
    cov = np.full((T + 1, T + 1), 0.5)
    np.fill_diagonal(cov, 1.0)
    cov[0, 1:] = 0.0
    if cohort != NEVER_TREATED:
        post = np.arange(1, T + 1) >= cohort
        cov[0, 1:][post] = rho_bar
    cov[1:, 0] = cov[0, 1:]
    return cov


def generate(spec: DgpSpec, rng=None) -> BalancedPanel:
    """Draw one balanced panel from ``spec``.

    The stored covariate is the baseline draw ``X_i1``. Raises
    :class:`~staggered_qtt.errors.NoNeverTreated` if no unit ends up in the
    comparison group.
    """
    rng = replicate_rng(spec.seed) if rng is None else rng
    n, T = spec.n, spec.T
    periods = np.arange(1, T + 1)

    if spec.dgp == 3:
        x = rng.chisquare(1.0, size=(n, T)) / 8.0
    elif spec.dgp == 1:
        x = np.zeros((n, T))
    else:
        x = rng.standard_normal((n, T))
    probs = cohort_probabilities(spec.dgp, T, x[:, 0])
    draw = rng.random(n)
    choice = (draw[:, None] > np.cumsum(probs, axis=1)).sum(axis=1)
    choice = np.minimum(choice, T - 1)
    # choice 0 is never-treated, choice k is cohort k + 1
    cohort = np.where(choice == 0, NEVER_TREATED, choice + 1).astype(np.int64)
    treated = cohort != NEVER_TREATED
    level = cohort.astype(float)  # eta location: r for cohort r, 0 for never-treated

    if spec.dgp == 5:
        z = rng.standard_normal((n, T + 1))
        eta = np.empty(n)
        u = np.empty((n, T))
        for g in np.unique(cohort):
            rows = cohort == g
            chol = np.linalg.cholesky(_dgp5_cov(T, int(g), spec.rho_bar))
            draws = z[rows] @ chol.T
            eta[rows] = level[rows] + draws[:, 0]
            u[rows] = draws[:, 1:]
    else:
        if spec.dgp == 3:
            eta = level + rng.chisquare(1.0, size=n)
        else:
            eta = level + rng.standard_normal(n)
        u = rng.standard_normal((n, T))

    alpha = np.broadcast_to(trend_values(spec, periods), (n, T)).copy()
    if spec.dgp == 4:
        alpha[treated] *= 1.0 + spec.epsilon_bar

    if spec.dgp == 1:
        y = alpha + eta[:, None] + u
    elif spec.dgp == 3:
        y = alpha + eta[:, None] + x + (1.0 + x) * u
    else:
        y = alpha + eta[:, None] + x + u

    if spec.effect:
        post = treated[:, None] & (periods[None, :] >= cohort[:, None])
        y = y + spec.effect * post

    covariates = None if spec.dgp == 1 else x[:, 0]
    return BalancedPanel.from_arrays(y, cohort, covariates=covariates,
                                     covariate_names=None if spec.dgp == 1 else ("x",))


@lru_cache(maxsize=64)
def _dgp3_oracle_sample(cohort, period, trend):
    rng = replicate_rng(20240101, cohort, period)
    n = ORACLE_DRAWS
    t = float(period)
    alpha = t + t * t if trend == "quadratic" else t
    x = rng.chisquare(1.0, size=n) / 8.0
    eta = cohort + rng.chisquare(1.0, size=n)
    u = rng.standard_normal(n)
    return Edf(alpha + eta + x + (1.0 + x) * u)


def population_quantile(spec: DgpSpec, cohort: int, period: int, tau: float) -> float:
    """True ``tau``-quantile of ``Y_t(0)`` for cohort ``cohort``.

    Closed form for DGPs 1, 2, 4 and 5; DGP 3 uses the sample quantile of
    one million simulated draws, cached per ``(cohort, period, trend)``.
    """
    if not 0.0 < tau < 1.0:
        raise ValueError("tau must lie in (0, 1)")
    if cohort not in spec.cohorts:
        raise ValueError(f"cohort {cohort} not in {spec.cohorts}")
    if spec.dgp == 3:
        return _dgp3_oracle_sample(int(cohort), int(period), spec.trend).quantile(tau)
    alpha = float(trend_values(spec, [period])[0])
    z = _STD_NORMAL.inv_cdf(tau)
    if spec.dgp == 1:
        sd = math.sqrt(2.0)
    elif spec.dgp == 5:
        sd = math.sqrt(3.0 + (2.0 * spec.rho_bar if period >= cohort else 0.0))
    else:
        sd = math.sqrt(3.0)
    if spec.dgp == 4:
        alpha *= 1.0 + spec.epsilon_bar
    return alpha + cohort + sd * z


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------

COUNTERFACTUAL = "counterfactual_quantile"
QTT = "qtt"


@dataclass(frozen=True)
class McRow:
    dgp: int
    method: str
    n: int
    r: int
    t: int
    tau: float
    truth: float
    bias: float
    rmse: float
    mean: float
    mc_se: float
    valid: int
    failures: int


@dataclass
class McReport:
    """Bias and RMSE of simulated estimates against population truth."""

    spec: DgpSpec
    reps: int
    estimand: str
    rows: list = field(default_factory=list)
    failures: int = 0
    estimates: dict = field(default_factory=dict, repr=False)

    CSV_COLUMNS = ("dgp", "method", "n", "r", "t", "tau", "truth", "bias", "rmse",
                   "T", "epsilon_bar", "rho_bar", "trend", "estimand", "mean", "mc_se",
                   "valid", "failures")

    def row(self, method, r, t, tau):
        for row in self.rows:
            if row.method == method and row.r == r and row.t == t and math.isclose(row.tau, tau):
                return row
        raise KeyError((method, r, t, tau))

    def metadata(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "spec": asdict(self.spec),
            "reps": self.reps,
            "estimand": self.estimand,
            "failed_replications": self.failures,
        }

    def csv_rows(self):
        s = self.spec
        for row in self.rows:
            yield [row.dgp, row.method, row.n, row.r, row.t, _fmt(row.tau), _fmt(row.truth),
                   _fmt(row.bias), _fmt(row.rmse), s.T, _fmt(s.epsilon_bar), _fmt(s.rho_bar),
                   s.trend, self.estimand, _fmt(row.mean), _fmt(row.mc_se), row.valid,
                   row.failures]


def _fmt(x):
    return repr(float(x))


def write_mc_csv(reports: Sequence[McReport], handle=None):
    """Table-layout CSV for one or more reports; returns the text if no handle."""
    buf = handle if handle is not None else io.StringIO()
    buf.write(f"# schema_version: {SCHEMA_VERSION}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(McReport.CSV_COLUMNS)
    for rep in reports:
        writer.writerows(rep.csv_rows())
    return None if handle is not None else buf.getvalue()


def _replicate(spec, k, methods, targets, taus, anticipation, estimand):
    out = np.full((len(methods), len(targets), len(taus)), np.nan)
    try:
        panel = generate(spec, replicate_rng(spec.seed, k))
    except QttError:
        return out, True
    failed = False
    for m, method in enumerate(methods):
        for j, (r, t) in enumerate(targets):
            try:
                cf = estimate(panel, r, t, anticipation, method)
                q = np.asarray(cf.quantile(taus), dtype=float)
                if estimand == QTT:
                    q = Edf(panel.slice(r, t)).quantile(taus) - q
                out[m, j] = q
            except QttError:
                failed = True
    return out, failed


def run_monte_carlo(spec: DgpSpec, reps: int, taus=(0.25, 0.5, 0.75),
                    methods=(UNCONDITIONAL,), targets=((2, 2),), threads: int = 1,
                    anticipation: int = 0, estimand: str = COUNTERFACTUAL,
                    keep_estimates: bool = False) -> McReport:
    """Simulate ``reps`` panels and summarize estimator accuracy.

    Replications where a group is empty or a logit fails are counted in
    ``failures`` and left out of the affected cells. Results depend only on
    ``(spec, reps)``: every replication draws from its own keyed stream and
    summaries are computed in replication order, so ``threads`` never
    changes the output.
    """
    if reps < 1:
        raise InvalidSpec("reps must be at least 1")
    if estimand not in (COUNTERFACTUAL, QTT):
        raise ValueError(f"unknown estimand {estimand!r}")
    taus = tuple(float(t) for t in taus)
    methods = tuple(methods)
    targets = tuple((int(r), int(t)) for r, t in targets)
    if spec.dgp == 1 and IPW in methods:
        raise InvalidSpec("DGP 1 has no covariates for the IPW estimator")

    def work(k):
        return _replicate(spec, k, methods, targets, taus, anticipation, estimand)

    results = parallel_map(work, range(reps), threads)
    est = np.stack([r[0] for r in results])
    n_failed = sum(1 for r in results if r[1])

    report = McReport(spec, reps, estimand, failures=n_failed)
    for m, method in enumerate(methods):
        for j, (r, t) in enumerate(targets):
            for i, tau in enumerate(taus):
                vals = est[:, m, j, i]
                vals = vals[np.isfinite(vals)]
                truth = population_quantile(spec, r, t, tau) if estimand == COUNTERFACTUAL else spec.effect
                if vals.size:
                    err = vals - truth
                    bias = float(err.mean())
                    rmse = float(np.sqrt(np.mean(err ** 2)))
                    mean = float(vals.mean())
                    se = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else float("nan")
                else:
                    bias = rmse = mean = se = float("nan")
                report.rows.append(McRow(spec.dgp, method, spec.n, r, t, tau, float(truth), bias,
                                         rmse, mean, se, int(vals.size), reps - int(vals.size)))
                if keep_estimates:
                    report.estimates[(method, r, t, tau)] = vals
    return report


def rmse_scaling_check(spec: DgpSpec, tau: float = 0.5, reps: int = 2000,
                       method: str = UNCONDITIONAL, target=(2, 2), threads: int = 1) -> float:
    """``RMSE(n=1000) / RMSE(n=100)``; about ``1/sqrt(10)`` for a root-n estimator."""
    rmses = []
    for n in (100, 1000):
        rep = run_monte_carlo(replace(spec, n=n), reps, taus=(tau,), methods=(method,),
                              targets=(target,), threads=threads)
        rmses.append(rep.rows[0].rmse)
    return rmses[1] / rmses[0]


# ---------------------------------------------------------------------------
# presets reproducing the reference simulation tables
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TableRun:
    spec: DgpSpec
    methods: tuple
    targets: tuple = ((2, 2),)
    taus: tuple = (0.25, 0.5, 0.75)


def _all_targets(T):
    return tuple((r, t) for r in range(2, T + 1) for t in range(r, T + 1))


def paper_table(name: str, seed: int = 0, effect: float = 0.0) -> list:
    """Runs making up one reference table: ``"1"``-``"4"``, ``"C1"``-``"C4"``."""
    both = (UNCONDITIONAL, IPW)
    name = str(name).upper()
    runs = []
    if name in ("1", "2"):
        T = 4 if name == "1" else 10
        for n in (100, 1000):
            runs.append(TableRun(DgpSpec(1, n, T, seed=seed, effect=effect), (UNCONDITIONAL,)))
            runs.append(TableRun(DgpSpec(2, n, T, seed=seed, effect=effect), both))
            runs.append(TableRun(DgpSpec(3, n, T, seed=seed, effect=effect), both))
    elif name == "3":
        for eps in (0.0, 0.05, 0.10, 0.50):
            runs.append(TableRun(DgpSpec(4, 1000, 4, epsilon_bar=eps, seed=seed, effect=effect), both))
    elif name == "4":
        for rho in (0.0, 0.05, 0.10, 0.50):
            runs.append(TableRun(DgpSpec(5, 1000, 4, rho_bar=rho, seed=seed, effect=effect), both))
    elif name in ("C1", "C2", "C3"):
        dgp = int(name[1])
        methods = (UNCONDITIONAL,) if dgp == 1 else both
        for n in (100, 1000):
            runs.append(TableRun(DgpSpec(dgp, n, 4, seed=seed, effect=effect), methods,
                                 _all_targets(4), (0.5,)))
    elif name == "C4":
        for n in (100, 1000):
            runs.append(TableRun(DgpSpec(2, n, 4, trend="quadratic", seed=seed, effect=effect), both))
    else:
        raise InvalidSpec(f"unknown table {name!r}")
    return runs


def mc_metadata_json(reports, extra=None):
    payload = {"schema_version": SCHEMA_VERSION, "runs": [r.metadata() for r in reports]}
    if extra:
        payload.update(extra)
    return json.dumps(payload, indent=2, sort_keys=True)


__all__ = [
    "COUNTERFACTUAL",
    "QTT",
    "DgpSpec",
    "McReport",
    "McRow",
    "TableRun",
    "cohort_probabilities",
    "generate",
    "mc_metadata_json",
    "paper_table",
    "population_quantile",
    "replicate_rng",
    "rmse_scaling_check",
    "run_monte_carlo",
    "write_mc_csv",
]
