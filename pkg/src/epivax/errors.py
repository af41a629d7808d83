"""Exception types shared across the package."""


class EpivaxError(Exception):
    """Base class for all package errors."""


class ContractError(EpivaxError, ValueError):
    """A caller broke a documented precondition (shape, grid, bounds)."""


class ViabilityError(EpivaxError, ValueError):
    """Mosquito parameters admit no positive aquatic equilibrium."""


class IntegrationError(EpivaxError, RuntimeError):
    """Numerical integration produced an unusable state.

    ``t`` is the last time at which the state was still valid and
    ``component`` the offending index, when one can be singled out.
    """

    def __init__(self, message, t=None, component=None):
        super().__init__(message)
        self.t = t
        self.component = component
