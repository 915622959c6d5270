"""Exception types raised across the package."""


class KineticContinuaError(Exception):
    """Base class for all package errors."""


class NotPSD(KineticContinuaError, ValueError):
    pass


class NotSkew(KineticContinuaError, ValueError):
    pass


class DegenerateConfiguration(KineticContinuaError, ValueError):
    pass


class PreconditionViolated(KineticContinuaError, ValueError):
    pass


class DegenerateY(KineticContinuaError, RuntimeError):
    """Affine-rate equation has no solution because the inertia tensor is singular."""

    def __init__(self, message, cell=None):
        super().__init__(message)
        self.cell = cell


class BlowUp(KineticContinuaError, RuntimeError):
    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class ConfigError(KineticContinuaError, ValueError):
    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class AlphaZero(KineticContinuaError, ValueError):
    pass


class ShapeMismatch(KineticContinuaError, ValueError):
    pass


class QuadratureFailure(KineticContinuaError, RuntimeError):
    pass


class ZeroFerment(KineticContinuaError, ValueError):
    pass


class NotNormalizable(KineticContinuaError, ValueError):
    pass


class NoConvergence(KineticContinuaError, RuntimeError):
    pass


class InfeasibleTarget(KineticContinuaError, ValueError):
    pass
