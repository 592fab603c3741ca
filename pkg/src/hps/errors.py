"""Exception types shared across the package."""


class HPSError(Exception):
    exit_code = 3


class InvalidInput(HPSError, ValueError):
    exit_code = 1


class DataFormatError(HPSError):
    exit_code = 2


class NoClassification(HPSError):
    exit_code = 3


class InvariantViolation(HPSError, AssertionError):
    exit_code = 3
