"""Exception hierarchy shared by all modules."""


class RecodingError(Exception):
    """Base class; the CLI reports the subclass name on failure."""


class InvalidModel(RecodingError, ValueError):
    pass


class NonErgodicModel(InvalidModel):
    pass


class InvalidDistribution(RecodingError, ValueError):
    pass


class InvalidField(RecodingError, ValueError):
    pass


class TableBudgetExceeded(RecodingError):
    pass


class HorizonExceeded(RecodingError):
    pass


class UnsupportedSimulationField(RecodingError):
    pass


class DegenerateChannel(RecodingError):
    pass


class OracleBudgetExceeded(RecodingError):
    pass


class ConfigError(RecodingError, ValueError):
    pass
