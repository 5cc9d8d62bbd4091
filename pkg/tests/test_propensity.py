import numpy as np
import pytest

from staggered_qtt.errors import EmptyGroup, MissingCovariates, PerfectSeparation
from staggered_qtt.panel import BalancedPanel
from staggered_qtt.propensity import PropensityModel, fit_logit, ipw_weights, irls
from staggered_qtt.simulate import DgpSpec, generate


def _loglik(b0, b1, x, y):
    eta = b0 + b1 * x
    return np.sum(y * eta - np.logaddexp(0.0, eta), axis=-1)


def test_intercept_only_gives_cohort_share():
    p = BalancedPanel.from_arrays(np.zeros((7, 2)), [2, 2, 2, 0, 0, 0, 0], covariates=np.arange(7.0))
    m = fit_logit(p, 2, use_covariates=False)
    assert m.cohort_share == pytest.approx(3 / 7)
    for v in m.fitted.values():
        assert v == pytest.approx(3 / 7, abs=1e-10)


def test_slope_recovered_against_grid_search():
    panel = generate(DgpSpec(2, 10000, 4, seed=3))
    m = fit_logit(panel, 2)
    # binary logit of cohort 2 against never-treated has slope gamma_2 = 0.5 * 2 / 4
    assert m.coefficients[1] == pytest.approx(0.25, abs=0.05)

    mask = (panel.cohort == 2) | (panel.cohort == 0)
    x = panel.covariates[mask, 0]
    y = (panel.cohort[mask] == 2).astype(float)
    b0 = np.arange(-0.3, 0.3001, 0.005)
    b1 = np.arange(0.0, 0.5001, 0.005)
    grid = np.array([[_loglik(a, b, x, y) for b in b1] for a in b0])
    i, j = np.unravel_index(np.argmax(grid), grid.shape)
    assert m.coefficients[0] == pytest.approx(b0[i], abs=0.005)
    assert m.coefficients[1] == pytest.approx(b1[j], abs=0.005)
    assert _loglik(*m.coefficients, x, y) >= grid.max() - 1e-9


def test_perfect_separation():
    x = np.array([-3.0, -2.0, -1.0, 1.0, 2.0, 3.0])
    p = BalancedPanel.from_arrays(np.zeros((6, 2)), [0, 0, 0, 2, 2, 2], covariates=x)
    with pytest.raises(PerfectSeparation):
        fit_logit(p, 2)


def test_missing_covariates():
    p = BalancedPanel.from_arrays(np.zeros((2, 2)), [2, 0])
    with pytest.raises(MissingCovariates):
        fit_logit(p, 2)


def test_empty_cohort():
    p = BalancedPanel.from_arrays(np.zeros((3, 3)), [2, 0, 0], covariates=[1.0, 2.0, 3.0])
    with pytest.raises(EmptyGroup):
        fit_logit(p, 3)


def _model(beta, trim=0.001):
    return PropensityModel(np.asarray(beta, dtype=float), 2, trim, {}, 0, 0, 0.5)


def test_uniform_probabilities_give_unit_weights():
    p = BalancedPanel.from_arrays(np.zeros((4, 2)), [2, 0, 0, 0], covariates=[0.3, -1.0, 2.0, 5.0])
    np.testing.assert_allclose(ipw_weights(_model([0.0, 0.0]), p), 1.0)


def test_trimming_keeps_weights_finite():
    p = BalancedPanel.from_arrays(np.zeros((2, 2)), [2, 0], covariates=[0.0, 50.0])
    w = ipw_weights(_model([0.0, 1.0]), p)
    assert w[0] == pytest.approx(0.999 / 0.001)


def test_four_unit_hand_example():
    # p(x) = expit(x) at x = 0, log 3 for never-treated -> odds 1 and 3
    p = BalancedPanel.from_arrays(np.zeros((4, 2)), [2, 2, 0, 0],
                                  covariates=[1.0, -1.0, 0.0, np.log(3.0)])
    w = ipw_weights(_model([0.0, 1.0]), p)
    np.testing.assert_allclose(w, [1.0, 3.0])
    np.testing.assert_allclose(w / w.sum(), [0.25, 0.75])


def test_fitted_probabilities_inside_trim_bounds():
    panel = generate(DgpSpec(2, 400, 4, seed=9))
    m = fit_logit(panel, 3, trim=0.2)
    vals = np.array(list(m.fitted.values()))
    assert vals.min() >= 0.2 and vals.max() <= 0.8
    assert m.to_dict()["cohort"] == 3


def test_probability_increases_with_covariate_for_positive_slope():
    m = _model([0.1, 0.7])
    x = np.linspace(-3, 3, 50)
    assert np.all(np.diff(m.predict(x)) > 0)


def test_weights_permutation_equivariant():
    rng = np.random.default_rng(2)
    y = rng.normal(size=(8, 2))
    cohort = np.array([2, 0, 0, 2, 0, 0, 2, 0])
    x = rng.normal(size=8)
    perm = rng.permutation(8)
    a = BalancedPanel.from_arrays(y, cohort, covariates=x)
    b = BalancedPanel.from_arrays(y[perm], cohort[perm], covariates=x[perm], units=np.arange(8)[perm])
    np.testing.assert_array_equal(ipw_weights(fit_logit(a, 2), a), ipw_weights(fit_logit(b, 2), b))


def test_irls_matches_known_solution():
    # saturated two-group design: MLE reproduces group frequencies
    X = np.column_stack([np.ones(10), np.r_[np.zeros(4), np.ones(6)]])
    y = np.r_[1, 0, 0, 0, 1, 1, 1, 1, 0, 0].astype(float)
    beta, _ = irls(X, y)
    assert 1 / (1 + np.exp(-beta[0])) == pytest.approx(0.25, abs=1e-9)
    assert 1 / (1 + np.exp(-beta.sum())) == pytest.approx(4 / 6, abs=1e-9)
