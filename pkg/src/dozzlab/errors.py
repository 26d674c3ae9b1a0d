"""Exception hierarchy shared by every module.

Each class carries a short ``code`` that the CLI writes into structured
error records.
"""


class DozzLabError(Exception):
    code = "InternalError"


class InputError(DozzLabError, ValueError):
    code = "InputError"


class NonPositiveGamma(InputError):
    code = "NonPositiveGamma"


class NonPositiveMu(InputError):
    code = "NonPositiveMu"


class PoleAtNonpositiveInteger(InputError):
    code = "PoleAtNonpositiveInteger"


class QuadratureFailure(DozzLabError, ArithmeticError):
    code = "QuadratureFailure"


class ShiftPoleFailure(DozzLabError, ArithmeticError):
    code = "ShiftPoleFailure"


class PoleOfDozz(DozzLabError, ArithmeticError):
    code = "PoleOfDozz"


class PoleOfReflection(DozzLabError, ArithmeticError):
    code = "PoleOfReflection"


class PoleEncountered(DozzLabError, ArithmeticError):
    code = "PoleEncountered"


class GammaOutOfRange(InputError):
    code = "GammaOutOfRange"


class InadmissibleWeights(InputError):
    """Vertex weights violate the extended Seiberg bounds."""

    code = "InadmissibleWeights"


class GammaPole(InputError):
    code = "GammaPole"


class FactorizationFailure(DozzLabError, ArithmeticError):
    code = "FactorizationFailure"


class TooManyCells(InputError):
    code = "TooManyCells"


class InsertionMismatch(InputError):
    code = "InsertionMismatch"


class NonIntegrable(InputError):
    code = "NonIntegrable"


class AlphaOutOfRange(InputError):
    code = "AlphaOutOfRange"


class HorizonTooShort(InputError):
    code = "HorizonTooShort"


class StepTooCoarse(InputError):
    code = "StepTooCoarse"


class WindowEmpty(DozzLabError, ValueError):
    code = "WindowEmpty"


class DegenerateC(InputError):
    code = "DegenerateC"


class DomainExceeded(InputError):
    code = "DomainExceeded"


class IntegerDegeneracy(InputError):
    code = "IntegerDegeneracy"


class CentralChargeTooLarge(InputError):
    code = "CentralChargeTooLarge"


class NoRealSolution(InputError):
    code = "NoRealSolution"


class ParseError(InputError):
    code = "ParseError"


class ConflictError(InputError):
    code = "ConflictError"


class IoError(DozzLabError, OSError):
    code = "IoError"


class VarianceWarning(UserWarning):
    """Estimator variance is infinite in the continuum; point estimate only."""
