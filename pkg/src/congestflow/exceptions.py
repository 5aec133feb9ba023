"""Error types raised across the package."""


class CongestFlowError(Exception):
    """Base class for all package errors."""


class GridMismatch(CongestFlowError, ValueError):
    pass


class NegativeDensity(CongestFlowError, ValueError):
    pass


class ZeroMass(CongestFlowError, ValueError):
    pass


class MassMismatch(CongestFlowError, ValueError):
    pass


class InvalidStep(CongestFlowError, ValueError):
    pass


class BadParameter(CongestFlowError, ValueError):
    pass


class OracleTooLarge(CongestFlowError, ValueError):
    pass


class NonpositiveSource(CongestFlowError, ValueError):
    pass


class InitialConditionViolated(CongestFlowError, ValueError):
    pass


class AssumptionViolated(CongestFlowError, ValueError):
    pass


class NoConvergence(CongestFlowError, RuntimeError):
    pass


class InversionFailure(CongestFlowError, RuntimeError):
    pass


class Infeasible(CongestFlowError, RuntimeError):
    pass


class NotConverged(CongestFlowError, RuntimeError):
    pass


class WrongPenalization(CongestFlowError, ValueError):
    pass


class TooShort(CongestFlowError, ValueError):
    pass


class OutOfRange(CongestFlowError, ValueError):
    pass


class NoFit(CongestFlowError, RuntimeError):
    pass


class PreconditionViolated(CongestFlowError, ValueError):
    pass


class ConfigError(CongestFlowError, ValueError):
    pass


class MissingArtifact(CongestFlowError, FileNotFoundError):
    pass
