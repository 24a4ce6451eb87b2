"""Exception types shared across the package."""


class PairingError(RuntimeError):
    """Regular-graph pairing failed to produce a simple graph within the retry limit."""


class BudgetError(RuntimeError):
    """An exhaustive scan or catalog would exceed its configured budget."""


class DivergenceError(RuntimeError):
    """A message update produced a non-finite value before clamping."""


class AllTrialsDivergedError(RuntimeError):
    """Every trial of an experiment failed to reach a BP fixed point."""
