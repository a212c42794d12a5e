"""Exception hierarchy shared by all scheduler modules."""


class SchedulingError(Exception):
    """Base class for every error raised by iqps."""


class Infeasible(SchedulingError):
    """No schedule can meet the requested deadline."""


class TooManyTuples(SchedulingError):
    pass


class InsufficientSamples(SchedulingError):
    pass


class TooLarge(SchedulingError):
    """Instance exceeds the desk-scale limits of an exhaustive oracle."""


class UnsupportedModel(SchedulingError):
    pass


class CmaxTooSmall(SchedulingError):
    """Not even a single tuple can be processed within C_max."""


class InvalidPlan(SchedulingError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


class ConfigError(SchedulingError):
    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
