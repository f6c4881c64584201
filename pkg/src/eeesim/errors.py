"""Exception types shared across the simulator."""


class ConfigError(ValueError):
    """Invalid configuration, scenario, or generator parameters."""


class TraceError(ValueError):
    """Malformed or mis-ordered trace data.

    Carries the 1-based line number when the problem comes from a file.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class SimulationFault(RuntimeError):
    """Internal consistency violation detected while a simulation runs."""
