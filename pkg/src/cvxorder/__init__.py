"""cvxorder: functional convex order engine for martingale dynamics.

Core layers: innovation laws (`noise`), exact expectation operators and value
recursions (`operators`), process simulators (`dynamics`), convex path
functionals (`payoffs`), Snell envelopes (`snell`), and the Monte-Carlo
experiment harness with CLI (`experiments`).
"""

from .coeffs import CoefficientFn, StepFn
from .convexfns import ScalarConvexFn
from .dynamics import GridSpec, Path
from .noise import InnovationSpec, JumpLaw, LevySpec
from .payoffs import BermudanPayoff, PayoffFunctional
from .rng import RngStream
from .valuefn import ValueFunction

__version__ = "0.1.0"

__all__ = [
    "CoefficientFn",
    "StepFn",
    "ScalarConvexFn",
    "GridSpec",
    "Path",
    "InnovationSpec",
    "JumpLaw",
    "LevySpec",
    "BermudanPayoff",
    "PayoffFunctional",
    "RngStream",
    "ValueFunction",
    "__version__",
]
