"""Exception hierarchy for seglab."""


class SeglabError(Exception):
    """Base class for all seglab errors."""


class BallOutOfDomain(SeglabError):
    """A ball or circle does not fit inside the grid with the required margin."""


class DegenerateAverage(SeglabError):
    """The boundary average H vanished numerically at some radius."""

    def __init__(self, message, radius=None):
        super().__init__(message)
        self.radius = radius


class NonMonotone(SeglabError):
    """No admissible constant makes e^{Cr}(N(r)+1) nondecreasing."""


class InvalidConfiguration(SeglabError):
    """A configuration violates the segregated-configuration contract."""


class NoConvergence(SeglabError):
    def __init__(self, message, iterations=None, beta=None):
        super().__init__(message)
        self.iterations = iterations
        self.beta = beta


class Blowup(SeglabError):
    """Focusing runaway in the parabolic relaxation."""


class BadAssignment(SeglabError):
    """Adjacent prototype sectors were assigned the same component."""


class EmptyNodalSet(SeglabError):
    """No sign change of the dominance field anywhere on the grid."""


class TooCloseToSingular(SeglabError):
    pass


class NotTwoComponents(SeglabError):
    pass


class EmptyRegion(SeglabError):
    pass


class DegenerateSeed(SeglabError):
    """A relaxed partition component collapsed to zero mass."""


class ConfigInvalid(SeglabError):
    """Experiment configuration failed schema validation."""


class HeaderMismatch(SeglabError):
    pass
