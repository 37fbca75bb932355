"""Exception hierarchy shared by all modules."""


class HsawError(Exception):
    """Base class for numerical failures raised by this package."""


class PoleProximity(HsawError):
    """A series denominator came within 1e-10 of zero."""


class Divergence(HsawError):
    """A series could not reach its tolerance within ``max_terms``."""


class DenominatorCollapse(HsawError):
    """The coupling recursion hit ``|1 + beta_j| <= 1e-8``."""

    def __init__(self, msg, step=None):
        super().__init__(msg)
        self.step = step


class NoBracket(HsawError):
    """The initial bracket for the critical killing rate does not straddle."""


class NonConvergence(HsawError):
    """An iteration hit its cap before stabilising."""


class ZeroTrajectory(HsawError):
    """A shifted coupling vanished where a ratio is needed."""


class QuadratureStall(HsawError):
    """Node doubling failed to converge on the inversion contour."""


class DepthOverflow(HsawError):
    """A lattice site needed more digit positions than its capacity."""


class DegenerateWeights(HsawError):
    """Importance weights collapsed (effective sample size below 10)."""
