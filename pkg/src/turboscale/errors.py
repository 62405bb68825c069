"""Exception hierarchy shared by every turboscale module."""


class TurboScaleError(Exception):
    """Base class for all library errors."""


class SpecError(TurboScaleError, ValueError):
    """A processor spec or instance file failed validation."""

    def __init__(self, violations):
        self.violations = list(violations)
        lines = [f"{v.code}: {v.message}" for v in self.violations]
        super().__init__("invalid processor spec:\n  " + "\n  ".join(lines))


class VoltageUnavailable(TurboScaleError, ValueError):
    pass


class InfeasibleError(TurboScaleError):
    """The guaranteed-frequency floor of the active cores exceeds the budget."""


class OracleGuardError(TurboScaleError):
    pass


class LookupRowError(TurboScaleError, KeyError):
    def __str__(self):
        return self.args[0] if self.args else "no table row for active-core count"


class MeasurementError(TurboScaleError, ValueError):
    pass


class TraceError(TurboScaleError, ValueError):
    """Malformed trace input; ``problems`` holds ``(line_number, reason)`` pairs."""

    def __init__(self, problems):
        self.problems = list(problems)
        lines = [f"line {n}: {why}" if n else why for n, why in self.problems]
        super().__init__("; ".join(lines))


class SimulationError(TurboScaleError):
    def __init__(self, tick, cause):
        self.tick = tick
        self.cause = cause
        super().__init__(f"tick {tick}: {cause}")


class InvariantBreach(TurboScaleError, AssertionError):
    """An internal guarantee (e.g. budget safety) did not hold."""
