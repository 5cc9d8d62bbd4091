"""Generalized propensity score for one cohort against the never-treated.

The score ``P(d_r = 1 | X, d_r + C = 1)`` is a binary logit fitted on the
subsample made of cohort ``r`` and the never-treated units, by Newton /
iteratively reweighted least squares.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import EmptyGroup, MissingCovariates, PerfectSeparation
from .panel import NEVER_TREATED, BalancedPanel

DEFAULT_TRIM = 0.001
RIDGE = 1e-8
_COND_LIMIT = 1e12
_SATURATED_INDEX = 35.0


@dataclass(frozen=True, eq=False)
class PropensityModel:
    """Fitted logit for cohort ``cohort``.

    ``fitted`` holds the trimmed probabilities of the estimation sample
    keyed by unit id; ``n_trimmed`` counts values moved to the bounds.
    """

    coefficients: np.ndarray
    cohort: int
    trim: float
    fitted: dict
    n_trimmed: int
    iterations: int
    cohort_share: float

    def linear_index(self, covariates):
        covariates = np.asarray(covariates, dtype=float)
        if covariates.ndim == 1:
            covariates = covariates[:, None]
        k = self.coefficients.size - 1
        if covariates.shape[1] < k:
            raise MissingCovariates(f"model needs {k} covariates, got {covariates.shape[1]}")
        return self.coefficients[0] + covariates[:, :k] @ self.coefficients[1:]

    def predict(self, covariates):
        """Trimmed probabilities in ``[trim, 1 - trim]``."""
        p = expit(self.linear_index(covariates))
        return np.clip(p, self.trim, 1.0 - self.trim)

    def to_dict(self):
        return {
            "cohort": self.cohort,
            "coefficients": [float(c) for c in self.coefficients],
            "trim": self.trim,
            "n_trimmed": self.n_trimmed,
            "iterations": self.iterations,
            "cohort_share": self.cohort_share,
        }


def _log_likelihood(eta, y):
    # log(1 + exp(eta)) computed stably
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def irls(X, y, max_iter=100, tol=1e-8):
    """Maximum-likelihood logit coefficients by Newton-Raphson.

    Stops once the largest absolute score component drops below ``tol``.
    A ``RIDGE`` term is added to the Hessian diagonal when it is close to
    singular, and steps are halved whenever the likelihood would fall.

    Returns
    -------
    beta : numpy.ndarray
    iterations : int

    Raises
    ------
    PerfectSeparation
        If the iterations fail to converge or the fitted index saturates,
        which happens when a covariate separates the two groups.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    beta = np.zeros(X.shape[1])
    eta = X @ beta
    ll = _log_likelihood(eta, y)
    for it in range(1, max_iter + 1):
        p = expit(eta)
        score = X.T @ (y - p)
        if np.max(np.abs(score)) < tol:
            break
        w = p * (1.0 - p)
        hess = X.T @ (w[:, None] * X)
        if not np.isfinite(hess).all() or np.linalg.cond(hess) > _COND_LIMIT:
            hess = hess + RIDGE * np.eye(hess.shape[0])
        try:
            step = np.linalg.solve(hess, score)
        except np.linalg.LinAlgError:
            raise PerfectSeparation("singular information matrix") from None
        for _ in range(30):
            cand = beta + step
            cand_eta = X @ cand
            cand_ll = _log_likelihood(cand_eta, y)
            if cand_ll >= ll - 1e-12 * abs(ll):
                break
            step = step / 2.0
        beta, eta, ll = cand, cand_eta, cand_ll
    else:
        raise PerfectSeparation(f"IRLS did not converge in {max_iter} iterations")
    p = expit(eta)
    if np.max(np.abs(eta)) > _SATURATED_INDEX or np.all(np.abs(y - p) < 1e-6):
        raise PerfectSeparation("fitted probabilities saturate; covariates separate the groups")
    return beta, it


def fit_logit(panel: BalancedPanel, cohort: int, trim: float = DEFAULT_TRIM,
              use_covariates: bool = True, max_iter: int = 100, tol: float = 1e-8) -> PropensityModel:
    """Fit ``P(d_r = 1 | X)`` on cohort ``cohort`` plus never-treated units.

    Parameters
    ----------
    panel : BalancedPanel
    cohort : int
    trim : float
        Fitted values are clipped to ``[trim, 1 - trim]``.
    use_covariates : bool
        ``False`` fits an intercept-only model (the cohort share).

    Raises
    ------
    MissingCovariates, EmptyGroup, PerfectSeparation
    """
    if not 0.0 < trim < 0.5:
        raise ValueError("trim must lie in (0, 0.5)")
    if use_covariates and not panel.has_covariates:
        raise MissingCovariates("IPW needs covariates but the panel has none")
    mask = (panel.cohort == cohort) | (panel.cohort == NEVER_TREATED)
    y = (panel.cohort[mask] == cohort).astype(float)
    if y.sum() == 0 or y.sum() == y.size:
        raise EmptyGroup(f"cohort {cohort} or the never-treated group is empty")
    cols = [np.ones(y.size)]
    if use_covariates:
        cols.append(panel.covariates[mask])
    X = np.column_stack(cols)
    beta, iterations = irls(X, y, max_iter=max_iter, tol=tol)
    raw = expit(X @ beta)
    fitted = np.clip(raw, trim, 1.0 - trim)
    n_trimmed = int(np.count_nonzero(fitted != raw))
    return PropensityModel(
        coefficients=beta,
        cohort=int(cohort),
        trim=float(trim),
        fitted=dict(zip(panel.units[mask].tolist(), fitted.tolist())),
        n_trimmed=n_trimmed,
        iterations=iterations,
        cohort_share=float(y.mean()),
    )


def ipw_weights(model: PropensityModel, panel: BalancedPanel) -> np.ndarray:
    """Raw odds weights ``p(x) / (1 - p(x))`` for the never-treated units.

    Normalization to unit mass happens in :func:`staggered_qtt.edf.weighted_cdf`;
    the constant ``1 / p_r`` factor cancels there and is not applied.
    """
    mask = panel.cohort == NEVER_TREATED
    if model.coefficients.size > 1:
        if not panel.has_covariates:
            raise MissingCovariates("panel has no covariates for the propensity model")
        p = model.predict(panel.covariates[mask])
    else:
        p = np.clip(np.full(int(mask.sum()), expit(model.coefficients[0])),
                    model.trim, 1.0 - model.trim)
    return p / (1.0 - p)


__all__ = ["DEFAULT_TRIM", "PropensityModel", "fit_logit", "ipw_weights", "irls"]
