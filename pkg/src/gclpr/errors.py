"""Exception and warning types raised across the package."""


class GCLPRError(Exception):
    """Base class for all package errors."""


class NonFinite(GCLPRError, ValueError):
    pass


class Singular(GCLPRError, ArithmeticError):
    pass


class Degenerate(GCLPRError, ValueError):
    pass


class DimensionMismatch(GCLPRError, ValueError):
    pass


class UnknownNode(GCLPRError, KeyError):
    pass


class EmptyTrainingSet(GCLPRError, ValueError):
    pass


class ZeroContextMass(GCLPRError, ValueError):
    pass


class QuadratureUnderresolved(GCLPRError, ArithmeticError):
    pass


class TooFewRows(GCLPRError, ValueError):
    pass


class AllFitsFailed(GCLPRError, RuntimeError):
    pass


class DisconnectedRequested(GCLPRError, RuntimeError):
    pass


class ConfigInvalid(GCLPRError, ValueError):
    """Configuration rejected; ``problems`` lists every violation found."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class NoConvergence(UserWarning):
    """Iterative routine stopped at ``max_iter`` and returned its last iterate."""


class InsufficientSupport(UserWarning):
    """A local fit fell back to a lower degree or to an unweighted mean."""


class DegenerateWindow(UserWarning):
    """A density window had zero response range; its weight was set to 1."""
