"""Exception hierarchy shared by all flutterlab modules."""


class FlutterLabError(Exception):
    """Base class for every error raised by the package."""


class ConfigurationError(FlutterLabError, ValueError):
    """Invalid numerical setup (grid size, parameter invariant, ...)."""


class DomainError(FlutterLabError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class AssemblyError(FlutterLabError):
    """The modal inertia matrix is singular or inconsistent with its inputs."""


class TopologyError(FlutterLabError):
    """The agent network cannot be built or balanced."""


class BracketError(FlutterLabError):
    """A root search was not given a sign change."""


class NumericalDivergenceError(FlutterLabError):
    """The integrator produced a non-finite state."""

    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step


class ValidationError(FlutterLabError, ValueError):
    """A run configuration violates the schema or an invariant.

    ``path`` names the offending field, e.g. ``"wing.x0"``.
    """

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
