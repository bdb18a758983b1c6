"""Exception hierarchy shared by every package; the CLI maps these to exit codes."""


class BurstoptError(Exception):
    """Root of every error raised on purpose by this project."""

    exit_code = 3


class ValidationError(BurstoptError, ValueError):
    """Bad input: shapes, probabilities, parameter ranges."""

    exit_code = 2


class TraceFormatError(ValidationError):
    """A trace file that does not follow the CSV contract."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SolverGuardError(BurstoptError, RuntimeError):
    """A solver refused the instance (size guard, missing history)."""

    exit_code = 3


class InvariantError(BurstoptError, AssertionError):
    """An internal invariant was broken."""

    exit_code = 3
