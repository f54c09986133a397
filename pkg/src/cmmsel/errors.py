"""Exception types shared across the package."""


class CMMError(ValueError):
    """Base class for all domain errors raised by cmmsel."""


class UnboundedError(CMMError):
    """The half-plane intersection has a recession direction."""


class EmptyRegionError(CMMError):
    """The offsets admit no feasible point."""


class DegenerateAreaError(CMMError):
    """The feasible polygon has (numerically) zero area."""


class GapAtLeastPiError(CMMError):
    """A circular gap between consecutive angles is >= pi."""


class TooLargeError(CMMError):
    """Exhaustive enumeration would exceed the configured cap."""


class NoFeasibleSubsetError(CMMError):
    """Every candidate subset is unbounded."""


class UnequalVariancesError(CMMError):
    """An equal-variance solver was given heterogeneous variances."""


class AllSamplesInfeasibleError(CMMError):
    """A whole cross-entropy iteration produced only unbounded selections."""

    def __init__(self, iteration: int):
        super().__init__(f"all samples infeasible at iteration {iteration}")
        self.iteration = iteration
