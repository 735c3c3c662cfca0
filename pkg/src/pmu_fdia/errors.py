"""Exception types raised across the toolkit.

Every failure mode that callers may want to tell apart has its own class.
All of them derive from :class:`FdiaError`, which is a ``ValueError``.
"""


class FdiaError(ValueError):
    pass


# grid case -----------------------------------------------------------------

class CaseError(FdiaError):
    pass


class CaseFormatError(CaseError):
    pass


class DuplicateBusError(CaseError):
    pass


class DanglingBranchError(CaseError):
    pass


class DisconnectedGridError(CaseError):
    pass


class NonPositiveReactanceError(CaseError):
    pass


class ReferenceBusError(CaseError):
    pass


class UnknownBusError(FdiaError, KeyError):
    pass


# simulation ----------------------------------------------------------------

class MissingDynamicsError(FdiaError):
    pass


class UnstableSystemError(FdiaError):
    pass


class StepSizeError(FdiaError):
    pass


# identification ------------------------------------------------------------

class TooFewSamplesError(FdiaError):
    pass


class SingularInputError(FdiaError):
    pass


class PrincipalLogError(FdiaError):
    """The principal matrix logarithm does not exist for the input."""


class ImaginaryResidueError(FdiaError):
    pass


class IdentificationError(FdiaError):
    pass


# attack / estimation -------------------------------------------------------

class InfeasibleTargetError(FdiaError):
    pass


class MissingParameterError(FdiaError):
    pass


class UnobservableError(FdiaError):
    pass
