"""Exception hierarchy. The CLI maps these onto exit codes."""


class LegibleTeamsError(Exception):
    """Base class for all package errors."""


class MembershipError(LegibleTeamsError, ValueError):
    pass


class SizeError(LegibleTeamsError, ValueError):
    pass


class StructuralError(LegibleTeamsError, ValueError):
    """Mismatched dimensions or a trajectory that does not follow the dynamics."""


class ConfigurationError(LegibleTeamsError, ValueError):
    pass


class NumericalError(LegibleTeamsError, ArithmeticError):
    pass


class InfeasibleError(LegibleTeamsError):
    """No allocation/trajectory can complete the task (unreachable target, horizon too short)."""


class ScenarioParseError(LegibleTeamsError, ValueError):
    """Malformed scenario or trajectory document. ``line`` is 1-based when known."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = path or "<input>"
        if line is not None:
            where = f"{where}:{line}"
        super().__init__(f"{where}: {message}")
        self.reason = message
