"""Causal impact of agents on a fusion center's decision under
synchronous and asynchronous participation."""
from __future__ import annotations

__version__ = "0.1.0"

from .analytics import (
    ImpactReport,
    causal_impact,
    impact_report,
    lambda_inf,
    lambda_inf_asymmetric,
    lambda_inf_symmetric,
    lambda_inf_synchronous,
    misinformation_threshold,
    predict,
)
from .beliefs import Belief, HypothesisSpace, LogBeliefRatioVector, from_lbr, map_estimate, normalize_log, to_lbr
from .config import ConfigError, ExperimentConfig, load_config, load_preset
from .harness import compare_to_theory, empirical_impact, run_ensemble, sweep
from .likelihoods import CategoricalModel, GaussianMeanModel, InformativenessMatrix, LikelihoodStreamSource
from .oracle import build_recursion, intervened_steady_state, reduce_for_intervention, symmetric_steady_state
from .protocol import AgentSpec, InterventionSpec, Mode, Scenario, run_trial
