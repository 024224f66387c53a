"""Exception hierarchy for the information-flow pricing library."""


class InfoFlowError(Exception):
    """Base class for every error raised by this package."""


class InvalidModel(InfoFlowError, ValueError):
    pass


class NegativeEffectiveRate(InfoFlowError, ValueError):
    pass


class BadInterval(InfoFlowError, ValueError):
    pass


class TimeAtOrPastHorizon(InfoFlowError, ValueError):
    pass


class StrikeOutOfRange(InfoFlowError, ValueError):
    pass


class NonPositiveFlowRate(InfoFlowError, ValueError):
    pass


class TargetOutOfRange(InfoFlowError, ValueError):
    pass


class NoConvergence(InfoFlowError, RuntimeError):
    pass


class QuadratureFailure(InfoFlowError, RuntimeError):
    pass


class TooFewPaths(InfoFlowError, ValueError):
    pass


class DegenerateSample(TooFewPaths):
    """Sub-ensemble has zero dispersion, so a moment ratio is undefined."""


class ConfigError(InfoFlowError, ValueError):
    pass
