"""Exception hierarchy shared across the package."""


class MachnetError(Exception):
    """Base class for all machnet errors."""


class ParameterError(MachnetError, ValueError):
    """Machine parameters violate a structural requirement (PD inductances,
    positive resistances, reactance orderings, singular coordinate maps)."""


class GridError(MachnetError, ValueError):
    """Network topology or susceptance data is invalid."""


class OrderError(MachnetError, ValueError):
    """Operation not defined for the requested model order."""


class AssumptionError(MachnetError, ValueError):
    """A modelling assumption required by the requested operation fails
    (saliency, series-reactance matching, dissipation-matrix positivity)."""


class EquilibriumError(MachnetError, RuntimeError):
    """Equilibrium solve failed or was infeasible."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class SimulationError(MachnetError, RuntimeError):
    """Time integration aborted (step underflow, non-finite state)."""


class ScenarioError(MachnetError, ValueError):
    """Scenario file is malformed or internally inconsistent."""
