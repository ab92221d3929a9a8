"""Exception types shared across the package."""


class AKBridgeError(Exception):
    """Base class for all package errors."""


class ConfigError(AKBridgeError, ValueError):
    pass


class PierTooClose(ConfigError):
    pass


class PositionOutOfDomain(ConfigError):
    pass


class SingularStiffness(AKBridgeError):
    pass


class SimulatorError(AKBridgeError):
    """A limit-state evaluation failed; ``x`` is the offending design point."""

    def __init__(self, x, cause):
        self.x = tuple(float(v) for v in x)
        self.cause = cause
        super().__init__(f"simulator failed at x={self.x}: {cause}")


class NumericalError(AKBridgeError):
    pass


class RankDeficientTrend(NumericalError):
    pass


class IllConditioned(NumericalError):
    pass


class PoolExhausted(AKBridgeError):
    pass


class ZeroReference(AKBridgeError, ValueError):
    pass


class MismatchedReference(AKBridgeError):
    pass
