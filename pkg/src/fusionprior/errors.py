"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Inputs have incompatible spatial or channel dimensions."""


class DegenerateInputError(ValueError):
    """Input carries no usable signal (e.g. a constant plane)."""


class NumericDivergenceError(FloatingPointError):
    """Optimization produced a non-finite loss."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration
