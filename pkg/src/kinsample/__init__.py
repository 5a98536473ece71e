"""Constrained conformational sampling of kinematic linkages."""

from .errors import KinsampleError, ModelError, NumericalDegeneracyError, ParseError, PreconditionError
from .linkage import Atom, KinematicLinkage, build_linkage, forward_kinematics, position_jacobian
from .nik import nik_perturb
from .planners import PlannerConfig, PlannerRun, binned_rrt, mcl_walk, poisson_explore, run_planner
from .space import ExplorationTree, Metric, MetricConfig
from .system import SamplingSystem

__version__ = "0.1.0"
