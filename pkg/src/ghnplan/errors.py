"""Exception hierarchy shared across the package."""


class GHNError(Exception):
    """Base class for all errors raised by ghnplan."""


class ParseError(GHNError):
    """Malformed PDDL input."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)


class UnsupportedFeature(ParseError):
    """PDDL construct outside the supported STRIPS+typing subset."""


class ArityError(ParseError):
    """Predicate with an arity other than 1 or 2."""


class UnknownSymbol(ParseError):
    """Reference to an undeclared predicate, type, object or action."""


class NegativeGoal(ParseError):
    """Goal containing a negated atom."""


class NotApplicable(GHNError):
    """Action applied in a state that does not satisfy its precondition."""


class EmptyTrainingSet(GHNError):
    pass


class UnknownAction(GHNError):
    pass


class DimensionMismatch(GHNError):
    """Feature vector and model disagree on input size or vocabulary."""


class EmptyDataset(GHNError):
    pass


class CorruptModel(GHNError):
    pass


class VersionMismatch(GHNError):
    pass


class ReplayError(GHNError):
    """A stored trajectory does not replay through the simulator."""


class BootstrapFailure(GHNError):
    """Leapfrogging could not solve any problem of the first bin."""
