from .instance import Instance
from .referencesolution import ReferenceSolution
from .experiment import Experiment
from .run import Run
