"""Exception hierarchy.

``DataError`` subclasses describe bad user input (CLI exit code 1);
``ContractViolation`` subclasses mean an internal invariant broke (exit code 2).
"""


class LVGError(Exception):
    pass


class DataError(LVGError):
    exit_code = 1


class ContractViolation(LVGError):
    exit_code = 2


# numerics
class NoSignChange(ContractViolation):
    pass


class MaxIterExceeded(ContractViolation):
    pass


class BracketNotFound(ContractViolation):
    pass


class OutOfBand(DataError):
    pass


# market data
class ParseError(DataError):
    def __init__(self, line, message):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.message = message


class DuplicateStrike(DataError):
    pass


class NegativeSpread(DataError):
    pass


class CurveUndefined(DataError):
    pass


class InfeasibleBounds(DataError):
    pass


class Infeasible(DataError):
    pass


# curves and models
class OutOfDomain(DataError):
    pass


class DegenerateBranch(ContractViolation):
    pass


class MatchFailure(ContractViolation):
    pass


class MonotonicityFailure(ContractViolation):
    pass


class DegenerateDensity(DataError):
    pass


class NestingViolation(DataError):
    pass


class SingularSystem(DataError):
    pass


class UnsupportedMaturity(DataError):
    pass
