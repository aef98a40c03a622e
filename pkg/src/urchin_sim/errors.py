"""Exception types shared across the simulator."""


class SimulatorError(Exception):
    """Base class for all simulator-specific errors."""


class SaturationError(SimulatorError):
    """An actuator or planner hit a mechanical travel limit."""

    def __init__(self, message: str, spine_id: int | None = None):
        super().__init__(message)
        self.spine_id = spine_id


class PreconditionError(SimulatorError):
    """A planner was invoked from a state it is not defined for."""


class ScenarioError(SimulatorError):
    """Scenario file failed validation; carries field context."""

    def __init__(self, message: str, field: str | None = None):
        if field:
            message = f"{field}: {message}"
        super().__init__(message)
        self.field = field


class DivergenceError(SimulatorError):
    """The integrator produced a non-finite quantity."""

    def __init__(self, quantity: str):
        super().__init__(f"simulation diverged: non-finite {quantity}")
        self.quantity = quantity


class DecodeError(SimulatorError):
    """Inbound wire message failed schema validation."""

    def __init__(self, message: str, field: str | None = None):
        if field:
            message = f"{field}: {message}"
        super().__init__(message)
        self.field = field
