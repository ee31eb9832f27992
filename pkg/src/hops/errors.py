"""Exception hierarchy for the hops engine."""


class HopsError(Exception):
    """Base class for all errors raised by this package."""


# --- dataset model ---

class ZeroRow(HopsError):
    def __init__(self, row: int):
        self.row = row
        super().__init__(f"row {row} has (near-)zero norm")


class DimensionMismatch(HopsError):
    pass


class InvalidParam(HopsError):
    pass


class InsufficientClassCount(HopsError):
    def __init__(self, cls: int, available: int):
        self.cls = cls
        self.available = available
        super().__init__(f"class {cls} has only {available} instances")


# --- binary dataset format ---

class FormatError(HopsError):
    pass


class BadMagic(FormatError):
    pass


class VersionUnsupported(FormatError):
    pass


class TruncatedFile(FormatError):
    pass


class ChecksumMismatch(FormatError):
    pass


# --- candidate-set corruption ---

class InvalidL(HopsError):
    pass


class EmptyClass(HopsError):
    def __init__(self, cls: int):
        self.cls = cls
        super().__init__(f"class {cls} has no instances")


class RateNotIntegral(HopsError):
    pass


class EmptyClassAfterDecay(HopsError):
    def __init__(self, cls: int):
        self.cls = cls
        super().__init__(f"class {cls} would keep zero instances")


# --- local neighborhood filter ---

class KTooLarge(HopsError):
    pass


class EmptyMultiset(HopsError):
    pass


# --- transport planner ---

class EmptyRow(HopsError):
    def __init__(self, row: int):
        self.row = row
        super().__init__(f"candidate row {row} is empty")


class ProbNotNormalized(HopsError):
    pass


class InfeasibleColumn(HopsError):
    def __init__(self, col: int):
        self.col = col
        super().__init__(f"column {col} has positive marginal but all-zero kernel entries")


class NonFiniteScaling(HopsError):
    pass


class SupportViolation(HopsError):
    pass


class TooLarge(HopsError):
    pass


class ZeroRowMass(HopsError):
    def __init__(self, row: int):
        self.row = row
        super().__init__(f"plan row {row} carries no mass")


# --- classifier head ---

class WeightViolation(HopsError):
    pass


class UnknownLoss(HopsError):
    pass


# --- trainer ---

class ConfigInvalid(HopsError):
    pass


class MissingLabels(HopsError):
    pass


class LengthMismatch(HopsError):
    pass
