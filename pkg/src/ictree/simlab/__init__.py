"""Simulation laboratory: designs, censoring schedules, metrics and experiment runner."""

from .censoring import (
    CalibrationError,
    CensoringMechanism,
    FixedGap,
    UniformGap,
    calibrate_censoring,
    censor_observation,
    censor_times,
    right_censoring_fraction,
)
from .designs import CANONICAL_TREE, GroundTruthTree, SimulatedDataset, TruthSplit, gen_dataset, get_design
from .distributions import Bathtub, EventDistribution, Exponential, LogNormal, Weibull, sample_event_time
from .experiments import ExperimentConfig, ExperimentResult, run_experiment
from .metrics import curve_l2, integrated_l2, signed_rank_test, structure_match, uniformity_test

__all__ = [
    "Bathtub", "CANONICAL_TREE", "CalibrationError", "CensoringMechanism", "EventDistribution",
    "ExperimentConfig", "ExperimentResult", "Exponential", "FixedGap", "GroundTruthTree", "LogNormal",
    "SimulatedDataset", "TruthSplit", "UniformGap", "Weibull", "calibrate_censoring", "censor_observation",
    "censor_times", "curve_l2", "gen_dataset", "get_design", "integrated_l2", "right_censoring_fraction",
    "run_experiment", "sample_event_time", "signed_rank_test", "structure_match", "uniformity_test",
]
