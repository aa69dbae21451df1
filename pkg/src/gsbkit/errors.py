"""Exception types raised across the package."""

import numpy as np


class GridMismatchError(ValueError):
    """Arrays that should live on the same mode grid / Fock basis do not."""


class ClassificationConflictError(RuntimeError):
    """Declared tail exponents and the measured growth disagree (or the growth is inconclusive)."""


class BasisSizeError(ValueError):
    """Requested Fock basis exceeds the configured size cap."""


class AssumptionViolationError(ValueError):
    """Coupling matrices are not a commuting normal family with trivial joint kernel."""


class NearSpectrumError(ValueError):
    """Spectral parameter too close to the spectrum of the operator being inverted."""


class LadderError(ValueError):
    """A grid or cutoff ladder is too short, unordered, or not nested."""


class SingularFormulaError(np.linalg.LinAlgError):
    """The block matrix of the resolvent formula is numerically singular."""

    def __init__(self, message, condition_number):
        super().__init__(message)
        self.condition_number = condition_number
