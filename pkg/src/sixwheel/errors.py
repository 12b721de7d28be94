"""Exception types shared across the package."""


class SixwheelError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(SixwheelError):
    """A parameter violates its documented range or precondition."""


class OutOfBoundsError(SixwheelError):
    """A terrain query or obstacle footprint left the grid."""


class SimulationDivergedError(SixwheelError):
    """Solver produced a non-finite state."""

    def __init__(self, step_index: int, detail: str = ""):
        self.step_index = step_index
        msg = f"simulation diverged at step {step_index}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class NotReadyError(SixwheelError):
    """A query was made before the prerequisite step ran."""


class SpawnError(SixwheelError):
    """Vehicle could not be placed without initial penetration."""
