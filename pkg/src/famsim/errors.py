"""Exception types shared across the simulator."""


class FamSimError(Exception):
    """Base class for all simulator errors."""


class ConfigError(FamSimError):
    """Invalid experiment configuration.

    Carries the list of offending fields so callers can report all
    problems at once instead of one per run.
    """

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class TraceFormatError(FamSimError):
    """Malformed trace file (includes the line number)."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class AddressFault(FamSimError):
    """Address outside the range valid for its address space."""


class BrokerError(FamSimError):
    """Allocation protocol violation (double release, exhaustion, ...)."""


class OutOfMemory(BrokerError):
    """Both memory zones exhausted while serving a node allocation."""


class SimulationProtocolError(FamSimError):
    """Internal invariant broken; indicates a simulator bug, not a modeled fault."""
