"""Exception types shared across the package."""


class TlPricingError(Exception):
    """Base class for all library errors."""


class NonConcaveUtility(TlPricingError):
    """A solver requiring a strictly concave (closed-form) utility got something else."""


class NonLinearUtility(TlPricingError):
    """A linear-utility-only routine was called with a different utility kind."""


class InvalidOrigin(TlPricingError):
    """Requested (type, slot, location) origin is outside the scenario."""


class NoSignChange(TlPricingError):
    """Bisection bracket has no sign change even after expansion."""


class DomainError(TlPricingError):
    """An inverse-marginal-utility target fell outside the stated domain."""


class MissingSchedule(TlPricingError, KeyError):
    """Aggregation found no schedule for an origin with positive demand."""


class ToleranceNotMet(TlPricingError):
    """Penalty escalation exhausted its budget above the complementarity tolerance."""


class SolverError(TlPricingError):
    """An optimization run aborted (non-finite objective, internal failure)."""


class LpStall(TlPricingError):
    """Simplex exceeded its pivot budget, indicating a numerical stall."""


class DimensionGuard(TlPricingError):
    """Exhaustive grid search refused a search space that is too large."""
