class FogweaverError(Exception):
    """Base class for every error raised by the testbed."""


class ConfigError(FogweaverError):
    pass


class TopologyError(FogweaverError):
    pass


class ProblemError(FogweaverError):
    pass


class ConstraintViolation(FogweaverError):
    """Raised when a placement leaves an application without instances."""

    def __init__(self, message, apps=()):
        super().__init__(message)
        self.apps = list(apps)


class UnsatisfiableInstanceError(FogweaverError):
    pass


class SchemaError(FogweaverError):
    """Topic or payload does not match the scenario's topic design."""

    def __init__(self, message, missing=(), extra=()):
        super().__init__(message)
        self.missing = sorted(missing)
        self.extra = sorted(extra)


class ProtocolError(FogweaverError):
    """An actor received a message it cannot handle in its current state."""

    def __init__(self, message, trace=()):
        super().__init__(message)
        self.trace = list(trace)

    def __str__(self):
        base = super().__str__()
        if not self.trace:
            return base
        return base + "\nrecent messages:\n  " + "\n  ".join(self.trace)


class MixedInstanceError(FogweaverError):
    pass
