"""drivetune: multi-objective auto-tuning of drive current-loop PI gains."""

from .drive import PlantModel, SimulatedDrive, StubDrive, run_trial, simulate_trial
from .metrics import ObjectiveVector, evaluate_objectives
from .optimizers import SearchSpace, Study, TpeConfig, make_sampler
from .pareto import ParetoFront, hypervolume, hypervolume_trace
from .records import ParameterPoint, TrialRecord
from .runner import StudyConfig, aggregate, replay_log, run_study, sweep
from .selection import SelectionConstraints, SelectionWeights, select_controller
from .signals import ExcitationProfile, SignalTrace, tuning_profile, validation_profile

__all__ = [
    "ExcitationProfile",
    "ObjectiveVector",
    "ParameterPoint",
    "ParetoFront",
    "PlantModel",
    "SearchSpace",
    "SelectionConstraints",
    "SelectionWeights",
    "SignalTrace",
    "SimulatedDrive",
    "StubDrive",
    "Study",
    "StudyConfig",
    "TpeConfig",
    "TrialRecord",
    "aggregate",
    "evaluate_objectives",
    "hypervolume",
    "hypervolume_trace",
    "make_sampler",
    "replay_log",
    "run_study",
    "run_trial",
    "select_controller",
    "simulate_trial",
    "sweep",
    "tuning_profile",
    "validation_profile",
]
