class ParameterError(ValueError):
    """Invalid argument to a simulator or analytics routine."""


class NumericalHealthWarning(RuntimeWarning):
    """A computed probability left [0, 1] by more than rounding noise."""
