"""Bootstrap uniform bands for QTT curves and stochastic-dominance statistics.

Both procedures resample whole units with replacement, keeping each
unit's time series intact. Replicate ``b`` draws from its own Philox
stream keyed by ``(seed, b)``, so results do not depend on how
replicates are scheduled across threads.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

from .counterfactual import UNCONDITIONAL, CounterfactualCdf, estimate
from .edf import Edf
from .errors import (
    DegenerateBootstrap,
    EmptyCell,
    EmptyGroup,
    InvalidSpec,
    PerfectSeparation,
    ResampleGroupCollapse,
    TauOutOfRange,
    UnknownGroup,
)
from .panel import BalancedPanel
from .parallel import parallel_map
from .simulate import replicate_rng

SCHEMA_VERSION = 1
NORMAL_IQR = NormalDist().inv_cdf(0.75) - NormalDist().inv_cdf(0.25)
MIN_REPLICATES = 100
BAND_TAU_MIN = 0.05
DOMINANCE_LEVEL = 0.90

# errors that mean "this resample lost a group", not "the request is invalid"
_COLLAPSE = (EmptyGroup, EmptyCell, PerfectSeparation, UnknownGroup)


def _check_b(B):
    if int(B) != B or B < MIN_REPLICATES:
        raise InvalidSpec(f"need at least {MIN_REPLICATES} bootstrap replicates, got {B}")
    return int(B)


def resample_replicates(panel: BalancedPanel, statistic, B: int, seed: int, threads: int = 1):
    """Evaluate ``statistic`` on ``B`` unit-level resamples of ``panel``.

    A resample on which ``statistic`` fails because a group is empty is
    redrawn from the same stream. More than ``10 * B`` redraws in total
    raise :class:`ResampleGroupCollapse`.

    Returns
    -------
    list
        ``statistic`` values in replicate order.
    int
        Number of redraws.
    """
    n = panel.n_units
    limit = 10 * B

    def one(b):
        rng = replicate_rng(seed, b)
        redraws = 0
        while True:
            idx = rng.integers(0, n, size=n)
            try:
                return statistic(panel.take(idx)), redraws
            except _COLLAPSE:
                redraws += 1
                if redraws > limit:
                    raise ResampleGroupCollapse(
                        "resamples keep losing the cohort or the never-treated group") from None

    out = parallel_map(one, range(B), threads)
    redraws = sum(r for _, r in out)
    if redraws > limit:
        raise ResampleGroupCollapse(f"{redraws} redraws exceed the cap of {limit}")
    return [v for v, _ in out], redraws


@dataclass(frozen=True)
class BootstrapBand:
    """Uniform band ``center +/- c * sigma`` over a quantile grid.

    ``sigma`` is the bootstrap interquartile range divided by the
    standard-normal IQR; the root-n factor cancels between the sup
    statistic and the band half-width and is therefore left implicit.
    """

    cohort: int
    period: int
    anticipation: int
    method: str
    taus: tuple
    estimate: np.ndarray
    center: np.ndarray
    sigma: np.ndarray
    critical_value: float
    lower: np.ndarray
    upper: np.ndarray
    B: int
    alpha: float
    seed: int
    n: int
    redraws: int = 0

    def covers(self, values):
        values = np.asarray(values, dtype=float)
        return bool(np.all((self.lower <= values) & (values <= self.upper)))

    def to_dict(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "r": self.cohort,
            "t": self.period,
            "anticipation": self.anticipation,
            "method": self.method,
            "B": self.B,
            "alpha": self.alpha,
            "seed": self.seed,
            "n": self.n,
            "redraws": self.redraws,
            "critical_value": self.critical_value,
            "rows": [
                {"tau": tau, "estimate": float(e), "center": float(c), "sigma": float(s),
                 "lower": float(lo), "upper": float(hi)}
                for tau, e, c, s, lo, hi in zip(self.taus, self.estimate, self.center,
                                                 self.sigma, self.lower, self.upper)
            ],
        }


def _qtt_curve(panel, r, t, anticipation, taus, method, kwargs):
    cf = estimate(panel, r, t, anticipation, method, **kwargs)
    return np.asarray(Edf(panel.slice(r, t)).quantile(taus)) - np.asarray(cf.quantile(taus))


def bootstrap_band(panel: BalancedPanel, r: int, t: int, anticipation: int = 0,
                   taus=(0.25, 0.5, 0.75), method: str = UNCONDITIONAL, B: int = 999,
                   alpha: float = 0.05, seed: int = 0, threads: int = 1,
                   **kwargs) -> BootstrapBand:
    """Empirical-bootstrap uniform confidence band for ``QTT_{r,t}(tau)``.

    For each resample ``b`` the curve ``QTT^b`` is recomputed and
    ``I^b = max_tau |QTT^b - QTT| / sigma(tau)``; the critical value is
    the ``1 - alpha`` quantile of ``{I^b}``. The band is centred at the
    bootstrap mean of ``QTT^b``.

    Raises
    ------
    InvalidSpec
        ``B < 100`` or ``alpha`` outside ``(0, 0.5)``.
    TauOutOfRange
        A grid point outside ``[0.05, 0.95]``.
    DegenerateBootstrap
        All resampled QTTs coincide at some ``tau``.
    """
    B = _check_b(B)
    if not 0.0 < alpha < 0.5:
        raise InvalidSpec("alpha must lie in (0, 0.5)")
    taus = tuple(float(x) for x in taus)
    grid = np.asarray(taus)
    if grid.size == 0 or np.any(grid < BAND_TAU_MIN - 1e-12) or np.any(grid > 1 - BAND_TAU_MIN + 1e-12):
        raise TauOutOfRange(f"band grid must lie within [{BAND_TAU_MIN}, {1 - BAND_TAU_MIN}]")

    point = _qtt_curve(panel, r, t, anticipation, grid, method, kwargs)
    draws, redraws = resample_replicates(
        panel, lambda p: _qtt_curve(p, r, t, anticipation, grid, method, kwargs), B, seed, threads)
    draws = np.vstack(draws)

    srt = np.sort(draws, axis=0)
    lo_idx = math.ceil(0.25 * B) - 1
    hi_idx = math.ceil(0.75 * B) - 1
    sigma = (srt[hi_idx] - srt[lo_idx]) / NORMAL_IQR
    if np.any(sigma <= 0):
        bad = [taus[i] for i in np.flatnonzero(sigma <= 0)]
        raise DegenerateBootstrap(f"bootstrap QTTs have zero spread at tau={bad}")
    sup = np.max(np.abs(draws - point) / sigma, axis=1)
    crit = float(Edf(sup).quantile(1.0 - alpha))
    center = draws.mean(axis=0)
    half = crit * sigma
    return BootstrapBand(int(r), int(t), int(anticipation), method, taus, point, center, sigma,
                         crit, center - half, center + half, B, float(alpha), int(seed),
                         panel.n_units, redraws)


# ---------------------------------------------------------------------------
# stochastic dominance
# ---------------------------------------------------------------------------

TREATED = "treated"
COUNTERFACTUAL = "counterfactual"


@dataclass(frozen=True)
class SdTestResult:
    """Kolmogorov-Smirnov-type dominance statistics and bootstrap frequencies.

    ``direction`` names the distribution that may dominate: ``"treated"``
    when ``F_treated`` lies below the counterfactual CDF.
    """

    d: float
    s: float
    direction: str
    s_direction: str
    d_plus: float
    d_minus: float
    s_plus: float
    s_minus: float
    scale: float
    p_d: float = float("nan")
    p_s: float = float("nan")
    B: int = 0
    seed: int | None = None

    @property
    def first_order(self):
        """Dominance declared by the bootstrap rule at the 0.90 threshold."""
        return bool(self.d <= 0 and self.p_d >= DOMINANCE_LEVEL)

    @property
    def second_order(self):
        return bool(self.s <= 0 and self.p_s >= DOMINANCE_LEVEL)

    def to_dict(self):
        out = {k: getattr(self, k) for k in (
            "d", "s", "direction", "s_direction", "d_plus", "d_minus", "s_plus", "s_minus",
            "scale", "p_d", "p_s", "B", "seed")}
        out = {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in out.items()}
        out["first_order_dominance"] = self.first_order
        out["second_order_dominance"] = self.second_order
        out["schema_version"] = SCHEMA_VERSION
        return out


def sd_statistics(treated: Edf, cf: CounterfactualCdf, n_treated: int | None = None,
                  n_control: int | None = None) -> SdTestResult:
    """Directed sup distances between the treated and counterfactual CDFs.

    ``D+ = max(F_tr - F_cf)`` and ``D- = max(F_cf - F_tr)`` over the pooled
    jump points; ``d = scale * min(D+, D-)``. The ``s`` statistic applies
    the same construction to the running integrals of ``F_tr - F_cf``,
    which are exact for step functions.
    """
    n_treated = treated.n if n_treated is None else int(n_treated)
    n_control = cf.n_control if n_control is None else int(n_control)
    scale = math.sqrt(n_treated * n_control / (n_treated + n_control))
    grid = np.union1d(treated.jump_points, cf.points)
    diff = np.asarray(treated.cdf_at(grid)) - np.asarray(cf.cdf(grid))
    d_plus = max(0.0, float(diff.max()))
    d_minus = max(0.0, float((-diff).max()))
    # integral of the step difference up to each grid point
    running = np.concatenate(([0.0], np.cumsum(diff[:-1] * np.diff(grid))))
    s_plus = max(0.0, float(running.max()))
    s_minus = max(0.0, float((-running).max()))
    return SdTestResult(
        d=scale * min(d_plus, d_minus),
        s=scale * min(s_plus, s_minus),
        direction=TREATED if d_plus <= d_minus else COUNTERFACTUAL,
        s_direction=TREATED if s_plus <= s_minus else COUNTERFACTUAL,
        d_plus=d_plus, d_minus=d_minus, s_plus=s_plus, s_minus=s_minus, scale=scale)


def _sd_point(panel, r, t, anticipation, method, kwargs):
    cf = estimate(panel, r, t, anticipation, method, **kwargs)
    return sd_statistics(Edf(panel.slice(r, t)), cf, cf.n_treated, cf.n_control)


def sd_pair_bootstrap(panel: BalancedPanel, r: int, t: int, anticipation: int = 0,
                      method: str = UNCONDITIONAL, B: int = 999, seed: int = 0,
                      threads: int = 1, **kwargs) -> SdTestResult:
    """Point statistics plus pair-bootstrap frequencies ``P(d^b <= 0)`` and ``P(s^b <= 0)``."""
    B = _check_b(B)
    point = _sd_point(panel, r, t, anticipation, method, kwargs)
    stats, _ = resample_replicates(
        panel, lambda p: _sd_point(p, r, t, anticipation, method, kwargs), B, seed, threads)
    p_d = sum(1 for st in stats if st.d <= 0) / B
    p_s = sum(1 for st in stats if st.s <= 0) / B
    return SdTestResult(point.d, point.s, point.direction, point.s_direction, point.d_plus,
                        point.d_minus, point.s_plus, point.s_minus, point.scale, p_d, p_s,
                        B, int(seed))


def to_json(obj) -> str:
    return json.dumps(obj.to_dict(), indent=2, sort_keys=True)


__all__ = [
    "NORMAL_IQR",
    "BootstrapBand",
    "SdTestResult",
    "bootstrap_band",
    "resample_replicates",
    "sd_pair_bootstrap",
    "sd_statistics",
    "to_json",
]
