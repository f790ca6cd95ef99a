from .exceptions import (
    ConfigurationError,
    ConvergenceError,
    DivergenceError,
    NashlabError,
    NumericalError,
    UnsupportedOperationError,
)
from .game_model import Box, GameDefinition, build_game
from .graph import DualGraph, build_dual_graph, cycle_edges
from .operators import KktReport, StackedState, StepSizes, max_step_sizes
from .sampling import BatchSchedule, SampleStream, StepSchedule
from .solvers import Algorithm, RunRecord, RunRow, SolverConfig, compute_reference, run
