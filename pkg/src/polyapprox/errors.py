"""Exception hierarchy shared by the library and the CLI."""


class ContractViolation(ValueError):
    """A caller broke a documented precondition (bad dimension, bad parameter)."""


class InvalidBody(ValueError):
    """A body failed validation (non-positive curvature, origin not interior)."""

    def __init__(self, message, failures=()):
        super().__init__(message)
        self.failures = list(failures)


class NumericalFailure(RuntimeError):
    """A numerical routine could not deliver a trustworthy result."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class EnvelopeViolation(NumericalFailure):
    pass


class DegenerateHullError(NumericalFailure):
    pass


class StderrCapExceeded(NumericalFailure):
    pass
