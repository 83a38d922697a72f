"""Exception types shared across the package."""


class PoleOnGrid(ValueError):
    """A denominator vanishes (to within the floor) at a sampled frequency."""

    def __init__(self, omega, magnitude=None):
        self.omega = omega
        self.magnitude = magnitude
        msg = f"denominator magnitude below floor at omega={omega!r}"
        if magnitude is not None:
            msg += f" (|den|={magnitude:.3g})"
        super().__init__(msg)


class NotConverged(RuntimeError):
    def __init__(self, max_sweeps, residual):
        self.max_sweeps = max_sweeps
        self.residual = residual
        super().__init__(
            f"Laplace solver did not converge in {max_sweeps} sweeps "
            f"(residual {residual:.3e})"
        )


class OutOfBounds(ValueError):
    pass


class InvalidSector(ValueError):
    pass


class ImproperTransferFunction(ValueError):
    pass


class NonFiniteState(FloatingPointError):
    pass


class NumericalFailure(FloatingPointError):
    pass


class SchemaError(ValueError):
    """Configuration document failed validation; ``path`` names the key."""

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")
