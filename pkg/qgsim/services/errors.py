class QGSimError(Exception):
    """Base class for every error the simulator raises on purpose."""


class ConfigError(QGSimError, ValueError):
    """Bad run description: unknown keys, unsupported domain, a >= 1, ..."""


class DataError(QGSimError, ValueError):
    """Non-finite samples or initial data outside the admissible set."""


class SolverError(QGSimError, RuntimeError):
    """A numerical solve could not produce an answer."""


class StepSizeError(QGSimError, RuntimeError):
    """The time step is too large for the current state; caller halves dt."""


class BlowUpError(QGSimError, RuntimeError):
    """The state stopped being finite."""
