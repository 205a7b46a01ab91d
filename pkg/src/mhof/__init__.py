"""Multi-objective training with hierarchical multiplier feedback."""

from mhof._kernels import BACKEND
from mhof.controller import ControllerConfig, ControllerState
from mhof.core import (Archive, ObjectiveVector, RefPoint, dominates, ehv_of_archive, equivalent,
                       hypervolume, hypervolume_mc, pareto_filter)
from mhof.plant import OptimizerState, ProblemSpec, make_problem
from mhof.schemes import RunResult, SchemeConfig, grid_compare, run, select_model
from mhof.trace import EpochRecord, Trace

__version__ = "0.1.0"
