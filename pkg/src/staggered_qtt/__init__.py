"""Quantile treatment effects on the treated under staggered adoption."""

__version__ = "0.1.0"

from .counterfactual import (  # noqa: E402
    CONDITIONAL,
    IPW,
    METHODS,
    RCS,
    UNCONDITIONAL,
    CounterfactualCdf,
    att_from_cdf,
    estimate,
)
from .edf import Edf, WeightedEdf, rank_transform, weighted_cdf  # noqa: E402
from .effects import (  # noqa: E402
    QttSurface,
    aggregate_custom,
    aggregate_event_time,
    aggregate_overall,
    cohort_shares,
    kendall_tau_diagnostic,
    qtt,
    qtt_surface,
)
from .errors import QttError  # noqa: E402
from .inference import bootstrap_band, sd_pair_bootstrap, sd_statistics  # noqa: E402
from .panel import (  # noqa: E402
    NEVER_TREATED,
    BalancedPanel,
    RepeatedCrossSection,
    Schema,
    load_cross_sections,
    load_panel,
)
from .propensity import fit_logit  # noqa: E402
from .simulate import DgpSpec, generate, population_quantile, run_monte_carlo  # noqa: E402

__all__ = [
    "CONDITIONAL",
    "IPW",
    "METHODS",
    "NEVER_TREATED",
    "RCS",
    "UNCONDITIONAL",
    "BalancedPanel",
    "CounterfactualCdf",
    "DgpSpec",
    "Edf",
    "QttError",
    "QttSurface",
    "RepeatedCrossSection",
    "Schema",
    "WeightedEdf",
    "aggregate_custom",
    "aggregate_event_time",
    "aggregate_overall",
    "att_from_cdf",
    "bootstrap_band",
    "cohort_shares",
    "estimate",
    "fit_logit",
    "generate",
    "kendall_tau_diagnostic",
    "load_cross_sections",
    "load_panel",
    "population_quantile",
    "qtt",
    "qtt_surface",
    "rank_transform",
    "run_monte_carlo",
    "sd_pair_bootstrap",
    "sd_statistics",
    "weighted_cdf",
]
