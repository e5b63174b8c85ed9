"""Exception hierarchy shared by all cvxorder modules."""

from __future__ import annotations


class CvxOrderError(Exception):
    """Base class for all package-specific errors."""


class NotFiniteSupport(CvxOrderError):
    """Raised when an exact enumeration is requested for a continuous law."""


class GrowthMismatch(CvxOrderError):
    """Integrand grows faster than the innovation law has moments for."""


class HypothesisUnverifiable(CvxOrderError):
    """Neither the partitioning nor the domination hypothesis is certified."""


class BackendUnavailable(CvxOrderError):
    """No exact backend applies (payoff not state-reducible and n too large)."""


class GridMismatch(CvxOrderError):
    """Payoff weights and path grid have incompatible lengths."""


class IndexOutOfRange(CvxOrderError, IndexError):
    """Stopping index outside 0..n."""


class OutOfRange(CvxOrderError, ValueError):
    """Evaluation time outside [0, T]."""


class DominationViolated(CvxOrderError):
    """A sampled integrand broke the declared pointwise inequality."""


class BoundsUncertified(CvxOrderError):
    """Coefficient descriptor carries no certified (lower, upper) bounds."""


class ParamOutOfRange(CvxOrderError, ValueError):
    """Parameter outside the admissible range of a counterexample."""


class ConfigError(CvxOrderError):
    """Invalid experiment configuration; message carries the field path."""


class OverflowDetected(CvxOrderError):
    """A log-space recursion still left the representable range."""
