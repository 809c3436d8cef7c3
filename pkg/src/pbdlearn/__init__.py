"""Proper learning of Poisson binomial distributions."""

from .core import PbdModel, Pmf, SampleSet, canonicalize, mean, pmf_exact, sample, tv_distance, variance
from .learner import LearnConfig, LearnerExhausted, LearnReport, proper_learn
from .oracle import tv_exact

__all__ = [
    "PbdModel", "Pmf", "SampleSet", "canonicalize", "mean", "pmf_exact", "sample",
    "tv_distance", "variance", "LearnConfig", "LearnerExhausted", "LearnReport",
    "proper_learn", "tv_exact",
]
__version__ = "0.1.0"
