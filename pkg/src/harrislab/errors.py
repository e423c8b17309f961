"""Exception types raised across the package."""


class HarrisLabError(Exception):
    """Base class for package errors."""


class InvalidArgumentError(HarrisLabError, ValueError):
    pass


class EmptyWindowError(InvalidArgumentError):
    pass


class EstimationImpossibleError(HarrisLabError):
    """Not enough usable data for an estimate; ``count`` says how much there was."""

    def __init__(self, message, count=0):
        super().__init__(message)
        self.count = count


class UndecidableError(HarrisLabError):
    """The finite region or window cannot decide the requested quantity.

    ``missing`` lists what would be needed (rows, boxes, ...).
    """

    def __init__(self, message, missing=()):
        super().__init__(message)
        self.missing = list(missing)


class BudgetExceededError(HarrisLabError):
    def __init__(self, message, required=None):
        super().__init__(message)
        self.required = required
