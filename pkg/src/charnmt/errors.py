"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Operand shapes do not conform for an operation."""


class GradientError(RuntimeError):
    """Backward pass or gradient check could not be carried out."""


class VocabularyError(ValueError):
    """An id or character falls outside a vocabulary."""


class EmptyInputError(ValueError):
    """An encoder or scorer received an empty sequence or corpus."""


class ConfigError(ValueError):
    """Inconsistent configuration, paths, or checkpoint contents."""


class TrainingError(RuntimeError):
    """Training produced a non-finite loss."""
