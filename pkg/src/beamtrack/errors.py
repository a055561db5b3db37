class BeamTrackError(Exception):
    pass


class DomainError(BeamTrackError, ValueError):
    """Input outside the mathematical domain of an operation."""


class ShapeError(BeamTrackError, ValueError):
    """Non-conformable dimensions."""


class ConstructionError(BeamTrackError, ValueError):
    """Invalid scenario geometry or configuration."""


class NumericError(BeamTrackError, ArithmeticError):
    """NaN or Inf produced or consumed by a numeric kernel."""


class EncodingError(BeamTrackError, ValueError):
    """Scene cannot be encoded (e.g. a mandatory marker falls outside the grid)."""


class SimulationError(BeamTrackError, RuntimeError):
    """Episode cannot be simulated to the minimum length."""
