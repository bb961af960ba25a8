"""Adaptive constrained task-space control testbed.

Dual-quaternion kinematics over uncertain parameters, coupled QP control and
adaptation laws, distance-based velocity constraints, cutting-path
generation, and a closed-loop simulation harness.
"""

from .controller import AdaptiveController, ControlCycleOutput, ControllerGains, make_task_error
from .config import ScenarioConfig, default_scenario, load_robot, load_scenario
from .dqmath import DualQuaternion, Quaternion
from .geometry import Cylinder, PairSpec, Plane, Scene, Sphere
from .kinematics import KinematicModel, TaskVector, smallest_singular_value
from .pathgen import CuttingPath, CuttingSketch, builtin_sketches
from .qpsolver import QpProblem, QpSolution, QpSolver, assemble
from .simharness import RunRecord, accuracy, report, run_experiment

__version__ = "0.1.0"

__all__ = [
    "AdaptiveController",
    "ControlCycleOutput",
    "ControllerGains",
    "CuttingPath",
    "CuttingSketch",
    "Cylinder",
    "DualQuaternion",
    "KinematicModel",
    "PairSpec",
    "Plane",
    "QpProblem",
    "QpSolution",
    "QpSolver",
    "Quaternion",
    "RunRecord",
    "ScenarioConfig",
    "Scene",
    "Sphere",
    "TaskVector",
    "accuracy",
    "assemble",
    "builtin_sketches",
    "default_scenario",
    "load_robot",
    "load_scenario",
    "make_task_error",
    "report",
    "run_experiment",
    "smallest_singular_value",
]
