"""RHMC sampling of barrier Gibbs distributions over polytopes, and volume
estimation by Gaussian cooling on the log-barrier Hessian manifold."""

from .dynamics import PhasePoint, TrajectoryRecord, integrate
from .kernels import BACKEND as KERNEL_BACKEND
from .metric import GibbsTarget, point_state
from .polytope import Polytope, generate, load_polytope, save_polytope
from .sampler import SamplerConfig, run_chains, step_size

__all__ = [
    "Polytope",
    "generate",
    "load_polytope",
    "save_polytope",
    "GibbsTarget",
    "point_state",
    "PhasePoint",
    "TrajectoryRecord",
    "integrate",
    "SamplerConfig",
    "run_chains",
    "step_size",
    "KERNEL_BACKEND",
]

__version__ = "0.1.0"
