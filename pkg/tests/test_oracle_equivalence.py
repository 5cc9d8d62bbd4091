import numpy as np
import pytest

from equivalence import compare_all
from helpers import micro_panel


@pytest.mark.parametrize("ties", [False, True])
def test_estimators_match_brute_force_sums(ties):
    rng = np.random.default_rng(11 + ties)
    for _ in range(150):
        panel, r, t, rho = micro_panel(rng, ties=ties)
        gaps = compare_all(panel, r, t, rho, rng)
        assert max(gaps.values()) <= 1e-12, gaps
