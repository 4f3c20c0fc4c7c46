"""Exception types shared across the package."""


class OpenMASError(Exception):
    """Base class for all errors raised by openmas."""


class InvalidInputError(OpenMASError, ValueError):
    """An argument violates a documented precondition."""


class UnknownNodeError(InvalidInputError):
    """A node label is not part of the graph or vector it was looked up in."""


class HypothesisViolatedError(OpenMASError, ValueError):
    """A stability-radius formula was evaluated outside its hypotheses."""
