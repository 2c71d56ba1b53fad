"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid model, experiment, or spec-file configuration."""


class DegenerateGapError(ValueError):
    """A user's reward row contains tied means, so no positive gap exists."""


class ProtocolViolationError(RuntimeError):
    """An agent acted outside the role the slot calendar assigns to it."""


class AssumptionViolationError(ConfigurationError):
    """A dynamic-scenario assumption was broken (e.g. two arrivals in one super-frame)."""


class ValidityError(ValueError):
    """Bound-formula parameters outside the domain where the bound holds."""


class EnumerationSizeError(ValueError):
    """Exhaustive enumeration was requested for an instance that is too large."""
