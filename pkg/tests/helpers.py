"""Random micro-panels shared by the oracle and property tests."""

import numpy as np

from staggered_qtt.panel import NEVER_TREATED, BalancedPanel


def draw_values(rng, size, ties):
    if ties:
        return rng.integers(-3, 4, size=size).astype(float)
    return np.round(rng.normal(0.0, 2.0, size=size) * 8.0) / 8.0 + rng.uniform(0, 1e-3, size=size)


def micro_panel(rng, max_group=8, discrete_x=True, ties=None):
    """Panel with one cohort of interest, never-treated units and a target (r, t, rho).

    Returns
    -------
    panel, r, t, rho
    """
    T = int(rng.integers(2, 5))
    r = int(rng.integers(2, T + 1))
    rho = int(rng.integers(0, r - 1))
    t = int(rng.integers(r - rho, T + 1))
    n_tr = int(rng.integers(1, max_group + 1))
    n_c = int(rng.integers(1, max_group + 1))
    ties = bool(rng.integers(0, 2)) if ties is None else ties
    cohort = np.array([r] * n_tr + [NEVER_TREATED] * n_c)
    # a second cohort adds noise units that every estimator must ignore
    if T > 2 and rng.random() < 0.5:
        other = int(rng.choice([c for c in range(2, T + 1) if c != r] or [r]))
        if other != r:
            cohort = np.concatenate([cohort, np.full(int(rng.integers(1, 4)), other)])
    n = cohort.size
    y = draw_values(rng, (n, T), ties)
    if discrete_x:
        x = rng.integers(0, 3, size=n).astype(float)
        # make every treated cell visible among never-treated units
        c_idx = np.flatnonzero(cohort == NEVER_TREATED)
        for cell in np.unique(x[cohort == r]):
            if not np.any(x[c_idx] == cell):
                x[c_idx[int(rng.integers(0, c_idx.size))]] = cell
        for cell in np.unique(x[cohort == r]):
            if not np.any(x[c_idx] == cell):
                x[cohort == r] = x[c_idx[0]]
                break
    else:
        x = rng.normal(size=n)
    perm = rng.permutation(n)
    panel = BalancedPanel.from_arrays(y[perm], cohort[perm], covariates=x[perm],
                                      units=np.arange(n))
    return panel, r, t, rho
