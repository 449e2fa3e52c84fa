"""Leverage-score active learning for single neuron models."""

from levneuron.fit import FitConfig, FitReport, QueryOracle, fit_active, relative_error
from levneuron.leverage import DesignMatrix, leverage_scores, sampling_plan, uniform_plan
from levneuron.neuron import NeuronSpec, make_spec, predict

__all__ = [
    "DesignMatrix",
    "FitConfig",
    "FitReport",
    "NeuronSpec",
    "QueryOracle",
    "fit_active",
    "leverage_scores",
    "make_spec",
    "predict",
    "relative_error",
    "sampling_plan",
    "uniform_plan",
]
