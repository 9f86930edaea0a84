"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Inconsistent dimensions, feature settings, or invalid run options."""


class DomainError(ValueError):
    """Input outside the mathematical domain of an operation."""


class TrainingError(RuntimeError):
    """Readout training failed (degenerate data or unusable control channel)."""


class EscapedStateError(RuntimeError):
    """A plant state is non-finite and cannot be iterated."""


class GenerationError(RuntimeError):
    """Dataset generation exhausted its retry budget."""


class ControlError(RuntimeError):
    """The control law cannot be evaluated (non-invertible effectiveness)."""
