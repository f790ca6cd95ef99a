from .instance import Instances
from .experiment import Experiments
from .run import Runs
