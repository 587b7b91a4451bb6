"""
Exception hierarchy for the QAOA workbench.
The CLI maps these onto exit codes (configuration/usage -> 2).
"""


class WorkbenchError(Exception):
    """Base class for every error raised by the workbench."""


class ConfigurationError(WorkbenchError, ValueError):
    """Invalid sizes, ranges, names or schema in a configuration."""


class PhysicalityError(ConfigurationError):
    """Relaxation times that do not describe a physical channel."""


class BudgetError(ConfigurationError):
    """Evaluation budget too small for the requested optimizer."""


class UsageError(WorkbenchError, ValueError):
    """An API was called with arguments that violate its preconditions."""


class SimulationError(WorkbenchError, RuntimeError):
    """Internal numerical failure during simulation."""
