"""Exception hierarchy.

ValidationError subclasses map to CLI exit code 2, BudgetError to exit
code 3.  Errors that carry a witness (a local obstruction, a divergent
Newton node list, ...) expose it as an attribute so reports can embed it.
"""


class NormcountError(Exception):
    pass


class ValidationError(NormcountError):
    pass


class BudgetError(NormcountError):
    pass


# field construction
class NotABasis(ValidationError):
    pass


class TauNotEmbedded(ValidationError):
    pass


class DeltaZero(ValidationError):
    pass


# local densities
class TooLarge(BudgetError):
    pass


class DeltaNotIntegralAtQ(ValidationError):
    pass


# weight function
class SingularCenter(ValidationError):
    pass


class NewtonDivergence(NormcountError):
    def __init__(self, msg, failed_frac=None):
        super().__init__(msg)
        self.failed_frac = failed_frac


# approximation / counting
class EmptyBox(ValidationError):
    pass


class BadCongruence(ValidationError):
    pass


class CenterOnNullcone(ValidationError):
    pass


class NotUnimodular(ValidationError):
    pass


class BothCoeffsZero(ValidationError):
    pass


class Budget(BudgetError):
    pass


# descent
class NotRepresentable(ValidationError):
    def __init__(self, msg, obstruction=None):
        super().__init__(msg)
        self.obstruction = obstruction  # place p where c is locally not a norm


class DegeneratePlace(ValidationError):
    pass


class NotSplit(ValidationError):
    pass


class NoModPSolution(ValidationError):
    pass


class SingularLift(ValidationError):
    pass


class TraceMismatch(ValidationError):
    pass


class WZero(ValidationError):
    pass
