"""Exception types shared across the simulator."""


class SimulatorError(Exception):
    """Base class for all simulator errors."""


class MalformedDocument(SimulatorError):
    """Input document is not parseable or has the wrong format tag."""


class DuplicateId(SimulatorError):
    """Two nodes or edges declare the same id."""


class DanglingNodeReference(SimulatorError):
    """An edge references a node (or twin edge) that was never declared."""


class InvalidField(SimulatorError):
    """A field value violates its constraints.  Carries the offending path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class UnknownEdge(SimulatorError):
    """Edge id not present in the network."""


class OutOfRangeValue(SimulatorError):
    """A dynamic traffic value is outside its legal range."""


class NoRoute(SimulatorError):
    """Destination unreachable under the given snapshot and overlay."""


class NoCandidateVehicle(SimulatorError):
    """No idle, kind-compatible vehicle can serve the request."""


class UnknownRequest(SimulatorError):
    """Request id not present in the trace."""


class InvalidScenario(SimulatorError):
    """Scenario document failed validation.  Carries the offending path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class InvalidParameter(SimulatorError):
    """Bad argument to a generator or CLI entry point."""
