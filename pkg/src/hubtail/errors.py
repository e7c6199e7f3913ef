"""Exception hierarchy. The CLI maps these onto exit codes."""


class HubtailError(Exception):
    """Base class for computation errors (CLI exit code 2)."""


class IntegerRatioError(HubtailError):
    """Raised when a/mu is an integer, where the hub asymptotics are not available."""


class EtaInfiniteError(HubtailError):
    """Raised when no finite hub scale reaches the target."""


class UnsupportedDistributionError(HubtailError):
    pass


class ConfigurationError(HubtailError):
    pass


class BudgetExceededError(HubtailError):
    """Raised when an exact enumeration or pair loop would be too large."""


class BoundViolationError(HubtailError):
    pass
