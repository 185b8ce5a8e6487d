"""Spectral learning and decoding for HMMs with tree-structured hidden states."""

from .config import RunConfig
from .decoder import PosteriorTrace, constant_baseline, label_accuracy, posterior_decode
from .evaluation import (AlignmentResult, align, compare_models, consistency_curve, f1,
                         f1_report)
from .formats import read_model, read_observations, write_model, write_observations
from .learner import (DecompositionError, LearnerError, RankConditionError,
                      learn_observations, robust_tensor_power)
from .model import (CapExceeded, ModelError, RankReport, ThsHmmParams, TreeStructure,
                    check_rank_conditions, random_params, validate)
from .moments import EmpiricalMoments, PopulationMoments
from .recovery import LearnResult, learn
from .simulator import SequenceBatch, StateTrace, sample_long, sample_triples

__version__ = "0.1.0"

__all__ = [
    "RunConfig", "PosteriorTrace", "constant_baseline", "label_accuracy", "posterior_decode",
    "AlignmentResult", "align", "compare_models", "consistency_curve", "f1", "f1_report",
    "read_model", "read_observations", "write_model", "write_observations",
    "DecompositionError", "LearnerError", "RankConditionError", "learn_observations",
    "robust_tensor_power", "CapExceeded", "ModelError", "RankReport", "ThsHmmParams",
    "TreeStructure", "check_rank_conditions", "random_params", "validate",
    "EmpiricalMoments", "PopulationMoments", "LearnResult", "learn", "SequenceBatch",
    "StateTrace", "sample_long", "sample_triples",
]
