"""Exception types raised across the package."""


class CocycleLabError(Exception):
    pass


class RationalFrequency(CocycleLabError):
    """The continued-fraction expansion terminated: alpha is rational at working precision."""


class SearchBudgetExceeded(CocycleLabError):
    pass


class DegenerateCritical(CocycleLabError):
    """A critical point with vanishing second derivative."""


class NotAdmissible(CocycleLabError):
    pass


class InvalidSpec(CocycleLabError):
    pass


class NearConformal(CocycleLabError):
    """Singular values too close for the contraction direction to be meaningful."""


class BranchAmbiguity(CocycleLabError):
    pass


class NotType3(CocycleLabError):
    pass


class HypothesisFailed(CocycleLabError):
    pass


class SeparationTooSmall(CocycleLabError):
    pass
