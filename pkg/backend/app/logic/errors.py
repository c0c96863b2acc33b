"""Exception hierarchy shared by the lattice, solver and experiment layers."""


class SlipLatticeError(Exception):
    """Base class for every error raised by this package."""


class DomainError(SlipLatticeError, ValueError):
    """Domain polygon is not convex, degenerate, or a point lies outside it."""


class EmptyComplexError(SlipLatticeError, ValueError):
    """No lattice triangle fits inside the domain."""


class ComplexValidationError(SlipLatticeError, ValueError):
    """The lattice complex is not edge-connected or not simply connected."""


class MissingBondError(SlipLatticeError, LookupError):
    """A bond or triangle was requested that the complex does not contain."""


class ChargedTriangleError(SlipLatticeError, ValueError):
    """A triangle with nonzero circulation appeared where a dislocation-free one was required."""

    def __init__(self, triangle, circulation=None):
        self.triangle = triangle
        self.circulation = circulation
        msg = f"Triangle {triangle} carries nonzero circulation"
        if circulation is not None:
            msg += f" {tuple(circulation)}"
        super().__init__(msg)


class LoopError(SlipLatticeError, ValueError):
    """A lattice loop is not closed or leaves the dislocation-free region."""


class AdmissibilityError(SlipLatticeError, ValueError):
    """A dislocation measure violates mild separation."""


class HalfLineObstructedError(SlipLatticeError, ValueError):
    """A cut half-line passes through another charged triangle."""


class CrossingOrientationError(SlipLatticeError, ValueError):
    """A lattice node lies on a cut half-line, so the crossing side is undefined."""


class SolverDidNotConverge(SlipLatticeError, RuntimeError):
    """Conjugate gradients hit its iteration cap.

    The best iterate seen so far is kept on the exception so that callers can
    still inspect or reuse it.
    """

    def __init__(self, best_iterate, relative_residual, iterations):
        self.best_iterate = best_iterate
        self.relative_residual = relative_residual
        self.iterations = iterations
        super().__init__(
            f"Maximum number of iterations exceeded. Number of iters: {iterations}. "
            f"relres = {relative_residual:e}"
        )


class FlatNormError(SlipLatticeError, ValueError):
    """Flat norm requested for a measure with atoms on or outside the boundary."""


class ConfigError(SlipLatticeError, ValueError):
    """Experiment configuration could not be read or validated."""
