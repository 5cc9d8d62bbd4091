"""Exception hierarchy.

Every error carries a stable ``code`` string so the command line can
report failures as machine-readable JSON.
"""


class QttError(Exception):
    """Base class for all validation and estimation errors."""

    code = "QttError"

    def to_dict(self):
        return {"error": self.code, "message": str(self)}


class PanelError(QttError):
    code = "PanelError"


class UnbalancedPanel(PanelError):
    code = "UnbalancedPanel"


class TreatmentReversal(PanelError):
    code = "TreatmentReversal"


class NoNeverTreated(PanelError):
    code = "NoNeverTreated"


class TreatedInFirstPeriod(PanelError):
    code = "TreatedInFirstPeriod"


class UnknownGroup(PanelError):
    code = "UnknownGroup"


class PeriodOutOfRange(PanelError):
    code = "PeriodOutOfRange"


class MissingCovariates(PanelError):
    code = "MissingCovariates"


class MissingPeriodSample(PanelError):
    code = "MissingPeriodSample"


class TauOutOfRange(QttError):
    code = "TauOutOfRange"


class ZeroTotalWeight(QttError):
    code = "ZeroTotalWeight"


class PerfectSeparation(QttError):
    code = "PerfectSeparation"


class EstimationError(QttError):
    code = "EstimationError"


class EmptyGroup(EstimationError):
    code = "EmptyGroup"


class BasePeriodOutOfRange(EstimationError):
    code = "BasePeriodOutOfRange"


class EmptyCell(EstimationError):
    code = "EmptyCell"


class NonDiscreteCovariate(EstimationError):
    code = "NonDiscreteCovariate"


class NoFeasibleCohort(QttError):
    code = "NoFeasibleCohort"


class EmptySurface(QttError):
    code = "EmptySurface"


class InsufficientPrePeriods(QttError):
    code = "InsufficientPrePeriods"


class DegenerateBootstrap(QttError):
    code = "DegenerateBootstrap"


class ResampleGroupCollapse(QttError):
    code = "ResampleGroupCollapse"


class InvalidSpec(QttError):
    code = "InvalidSpec"
