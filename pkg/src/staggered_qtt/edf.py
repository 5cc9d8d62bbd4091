"""Empirical distribution functions and generalized-inverse quantiles.

All quantiles use the left-continuous inverse

    F^{-1}(tau) = inf{y : F(y) >= tau},

which for an unweighted sample of size n is the ceil(n * tau)-th order
statistic. No interpolation is performed anywhere.
"""

from __future__ import annotations

import numpy as np

from .errors import EmptyGroup, TauOutOfRange, ZeroTotalWeight

# Relative slack used when a float tau lands on a jump of the step function.
_RANK_TOL = 1e-9
_WEIGHT_TOL = 1e-10


def _check_tau(tau):
    tau = np.asarray(tau, dtype=float)
    if np.any(~(tau > 0.0)) or np.any(tau > 1.0):
        raise TauOutOfRange(f"tau must lie in (0, 1], got {tau}")
    return tau


def ceil_rank(n, tau):
    """Return ``ceil(n * tau)`` clipped to ``[1, n]``.

    Products that sit within floating-point noise of an integer are
    rounded to that integer, so ``ceil_rank(3, 2/3) == 2``.
    """
    x = n * np.asarray(tau, dtype=float)
    nearest = np.rint(x)
    k = np.where(np.abs(x - nearest) <= _RANK_TOL * np.maximum(1.0, x), nearest, np.ceil(x))
    return np.clip(k.astype(np.int64), 1, n)


class Edf:
    """Right-continuous empirical CDF of a finite sample.

    Parameters
    ----------
    sample : array_like
        One-dimensional sample with at least one element. Ties are kept.
    """

    __slots__ = ("sample", "n")

    def __init__(self, sample):
        arr = np.sort(np.asarray(sample, dtype=float).ravel())
        if arr.size == 0:
            raise EmptyGroup("cannot build an EDF from an empty sample")
        arr.setflags(write=False)
        self.sample = arr
        self.n = int(arr.size)

    def __len__(self):
        return self.n

    def __repr__(self):
        return f"Edf(n={self.n}, min={self.sample[0]:.6g}, max={self.sample[-1]:.6g})"

    def counts(self, y):
        """Number of sample points ``<= y`` (vectorized)."""
        return np.searchsorted(self.sample, y, side="right")

    def cdf_at(self, y):
        """Exact count ratio ``#{x_i <= y} / n``."""
        out = self.counts(y) / self.n
        return float(out) if np.ndim(out) == 0 else out

    def quantile(self, tau):
        """Generalized inverse ``inf{y : F(y) >= tau}`` for ``0 < tau <= 1``."""
        tau = _check_tau(tau)
        out = self.sample[ceil_rank(self.n, tau) - 1]
        return float(out) if np.ndim(out) == 0 else out

    def quantile_at_count(self, count, denom):
        """Quantile at the rational level ``count / denom`` using integer arithmetic.

        ``count`` values below one are clamped to one (the smallest
        attainable rank), so a zero CDF value maps to the sample minimum.
        """
        count = np.maximum(np.asarray(count, dtype=np.int64), 1)
        idx = (self.n * count + denom - 1) // denom
        return self.sample[np.clip(idx, 1, self.n) - 1]

    def mean(self):
        """Integral of the quantile function over (0, 1)."""
        return float(self.sample.mean())

    @property
    def jump_points(self):
        return np.unique(self.sample)


class WeightedEdf:
    """Step CDF ``sum_i w_i 1{x_i <= y} / sum_i w_i`` over weighted points.

    With unit weights every query agrees bit-for-bit with :class:`Edf`.
    """

    __slots__ = ("points", "weights", "cumulative", "total", "n")

    def __init__(self, points, weights):
        points = np.asarray(points, dtype=float).ravel()
        weights = np.asarray(weights, dtype=float).ravel()
        if points.shape != weights.shape:
            raise ValueError("points and weights must have the same length")
        if points.size == 0:
            raise EmptyGroup("cannot build a weighted CDF from an empty sample")
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise ValueError("weights must be finite and nonnegative")
        order = np.argsort(points, kind="stable")
        self.points = points[order]
        self.weights = weights[order]
        self.cumulative = np.cumsum(self.weights)
        self.total = float(self.cumulative[-1])
        if not self.total > 0:
            raise ZeroTotalWeight("weights sum to zero")
        self.n = int(points.size)

    def __len__(self):
        return self.n

    def __repr__(self):
        return f"WeightedEdf(n={self.n}, total={self.total:.6g})"

    def cdf_at(self, y):
        idx = np.searchsorted(self.points, y, side="right")
        cum = np.concatenate(([0.0], self.cumulative))
        out = cum[idx] / self.total
        return float(out) if np.ndim(out) == 0 else out

    def quantile(self, tau):
        tau = _check_tau(tau)
        threshold = tau * self.total * (1.0 - _WEIGHT_TOL)
        idx = np.searchsorted(self.cumulative, threshold, side="left")
        # first point carrying positive mass is the smallest attainable rank
        first = np.searchsorted(self.cumulative, 0.0, side="right")
        idx = np.clip(np.maximum(idx, first), 0, self.n - 1)
        out = self.points[idx]
        return float(out) if np.ndim(out) == 0 else out

    def quantile_at_count(self, count, denom):
        count = np.maximum(np.asarray(count, dtype=np.int64), 1)
        return self.quantile(np.minimum(count / denom, 1.0))

    def mean(self):
        return float(np.dot(self.points, self.weights) / self.total)

    @property
    def jump_points(self):
        return np.unique(self.points[self.weights > 0])


def weighted_cdf(points, weights):
    """Build a :class:`WeightedEdf`; raises ``ZeroTotalWeight`` if all weights vanish."""
    return WeightedEdf(points, weights)


def rank_transform(target, reference, values):
    """Map values through ``reference`` ranks into ``target`` quantiles.

    Computes ``target.quantile(reference.cdf_at(v))`` elementwise, with
    reference CDF values of zero clamped to ``1 / n_reference``. For an
    unweighted target the level is kept as an exact integer ratio, so a
    sample mapped onto itself is returned unchanged.

    Parameters
    ----------
    target : Edf or WeightedEdf
    reference : Edf
    values : array_like

    Returns
    -------
    numpy.ndarray
    """
    counts = reference.counts(np.asarray(values, dtype=float))
    return np.asarray(target.quantile_at_count(counts, reference.n), dtype=float)


def step_integral(points, masses):
    """Exact integral of a quantile function given its jump points and masses."""
    masses = np.asarray(masses, dtype=float)
    return float(np.dot(np.asarray(points, dtype=float), masses) / masses.sum())


__all__ = [
    "Edf",
    "WeightedEdf",
    "ceil_rank",
    "rank_transform",
    "step_integral",
    "weighted_cdf",
]
