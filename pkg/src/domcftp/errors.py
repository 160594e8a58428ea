"""Exception types shared across the package."""


class DriftError(ValueError):
    """A drift-condition certificate cannot be produced or is invalid."""


class QueueError(ValueError):
    """Dominating-queue parameters are out of their admissible range."""


class CouplingError(ValueError):
    """Coupling or minorization contract violated."""


class DominationError(RuntimeError):
    """A tracked state exceeded the dominating value in standard mode."""


class LedgerConflictError(RuntimeError):
    """Attempt to overwrite an already-materialized path entry."""


class NoCoalescenceError(RuntimeError):
    """The tracked set failed to collapse within the step budget."""


class ConfigError(ValueError):
    """Malformed or contradictory run configuration."""
