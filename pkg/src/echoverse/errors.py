"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Shapes or lengths of the inputs do not agree."""


class BoundError(ValueError):
    """A value exceeds the declared uniform bound."""


class RefractoryError(ValueError):
    """Two spikes are closer than the refractory gap."""

    def __init__(self, first, second, delta):
        self.pair = (first, second)
        self.delta = delta
        super().__init__(
            f"spikes at {first!r} and {second!r} are {second - first:.6g} apart, "
            f"refractory gap is {delta!r}"
        )


class StateError(ValueError):
    """A Pauli vector does not describe a valid density operator."""


class DivergenceError(ArithmeticError):
    """A recurrence left its stability range."""
