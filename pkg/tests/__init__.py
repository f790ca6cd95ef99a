from .game_model import GameModelTests
from .graph import DualGraphTests
from .operators import OperatorTests
from .sampling import ScheduleTests, SampleStreamTests, EstimationErrorTests
from .cournot import CournotTests
from .solvers import IterationTests, RunTests, NashRunTests
from .harness import ConfigTests, ExperimentTests, TuningTests, VerificationTests, CommandTests
from .api import ApiTests
from .acceptance import AcceptanceTests
