"""Exception types shared across the package."""


class BarrierHMCError(Exception):
    """Base class for all package errors."""


class InputError(BarrierHMCError):
    """Malformed or out-of-range user input (dimensions, ranges, file contents)."""


class BoundaryError(BarrierHMCError):
    """A point or trajectory left the strict interior of the polytope."""


class NumericalError(BarrierHMCError):
    """A factorization or solve failed; the metric is numerically degenerate."""


class DivergenceError(BarrierHMCError):
    """Runaway trajectory; heuristic signal of an unbounded input body."""


class NoConvergence(BarrierHMCError):
    """An iterative routine exhausted its iteration budget."""


class SamplerError(BarrierHMCError):
    """Aggregated chain failure (e.g. excessive rejection rate)."""
